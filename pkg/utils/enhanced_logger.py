#!/usr/bin/env python3
"""
Enhanced Logging System for the Vocab Sniper pipeline
- Console output for humans
- Structured JSON file output (python-json-logger)
- Separate performance log for stage timings and epoch figures
"""

import logging
import os
import sys
import time
from collections import defaultdict
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, List, Optional

from pythonjsonlogger import jsonlogger


class PipelineMetrics:
    """Track stage timings and training progress for the run summary"""

    def __init__(self):
        self.start_time = time.time()
        self.stage_metrics = defaultdict(lambda: {
            'runs': 0,
            'total_seconds': 0.0,
            'last_seconds': 0.0,
        })
        self.epoch_metrics: List[Dict[str, Any]] = []

    def record_stage(self, stage: str, seconds: float):
        """Record one completed stage run"""
        entry = self.stage_metrics[stage]
        entry['runs'] += 1
        entry['total_seconds'] += seconds
        entry['last_seconds'] = seconds

    def record_epoch(self, epoch: int, loss: float, tokens_per_sec: float, avg_batch_vocab: float):
        """Record the figures of one training epoch"""
        self.epoch_metrics.append({
            'epoch': epoch,
            'loss': loss,
            'tokens_per_sec': tokens_per_sec,
            'avg_batch_vocab': avg_batch_vocab,
        })

    def get_summary(self) -> Dict[str, Any]:
        """Get run summary"""
        summary = {
            'uptime_seconds': round(time.time() - self.start_time, 3),
            'stages': {name: dict(values) for name, values in self.stage_metrics.items()},
        }
        if self.epoch_metrics:
            first = self.epoch_metrics[0]['loss']
            last = self.epoch_metrics[-1]['loss']
            summary['training'] = {
                'epochs': len(self.epoch_metrics),
                'first_loss': first,
                'last_loss': last,
                'loss_ratio': round(last / first, 4) if first > 0 else None,
            }
        return summary


class EnhancedLogger:
    """Process-wide logging setup with performance tracking"""

    def __init__(self, name: str = "VocabSniper", log_dir: str = "logs", level: int = logging.INFO):
        self.name = name
        self.log_dir = log_dir
        self.level = level
        self.metrics = PipelineMetrics()
        self.logger = None
        self.perf_logger = None
        self._setup_logging()

    def _setup_logging(self):
        """Attach console and JSON handlers to the root logger"""
        os.makedirs(self.log_dir, exist_ok=True)

        # Library modules log under their own __name__, so handlers sit on the root
        root = logging.getLogger()
        root.setLevel(self.level)
        for handler in list(root.handlers):
            if getattr(handler, '_vocab_sniper', False):
                root.removeHandler(handler)

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setFormatter(logging.Formatter(
            '%(asctime)s [%(levelname)s] %(name)s: %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        console_handler.setLevel(self.level)
        console_handler._vocab_sniper = True

        json_handler = RotatingFileHandler(
            os.path.join(self.log_dir, f'{self.name.lower()}_structured.log'),
            maxBytes=50*1024*1024,  # 50MB
            backupCount=5
        )
        json_handler.setFormatter(jsonlogger.JsonFormatter(
            '%(asctime)s %(levelname)s %(name)s %(message)s %(module)s %(funcName)s %(lineno)d'
        ))
        json_handler.setLevel(self.level)
        json_handler._vocab_sniper = True

        root.addHandler(console_handler)
        root.addHandler(json_handler)

        self.logger = logging.getLogger(self.name)

        perf_handler = RotatingFileHandler(
            os.path.join(self.log_dir, f'{self.name.lower()}_performance.log'),
            maxBytes=20*1024*1024,  # 20MB
            backupCount=3
        )
        perf_handler.setFormatter(logging.Formatter(
            '%(asctime)s [PERF] %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        self.perf_logger = logging.getLogger(f"{self.name}.performance")
        self.perf_logger.setLevel(logging.INFO)
        self.perf_logger.handlers.clear()
        self.perf_logger.addHandler(perf_handler)
        self.perf_logger.propagate = False

    @contextmanager
    def stage(self, stage: str, **context):
        """Time a pipeline stage and log its outcome"""
        self.logger.info(f"🚀 Stage {stage} started", extra={'stage': stage, 'event_type': 'stage_start', **context})
        started = time.perf_counter()
        try:
            yield
        except Exception as e:
            self.logger.error(f"❌ Stage {stage} failed: {e}",
                              extra={'stage': stage, 'event_type': 'stage_error', 'error_type': type(e).__name__})
            raise
        seconds = time.perf_counter() - started
        self.metrics.record_stage(stage, seconds)
        self.logger.info(f"✅ Stage {stage} finished in {seconds:.2f}s",
                         extra={'stage': stage, 'event_type': 'stage_end', 'seconds': seconds})
        self.perf_logger.info(f"stage={stage} seconds={seconds:.3f}")

    def log_epoch(self, epoch: int, loss: float, tokens_per_sec: float, avg_batch_vocab: float,
                  embedding_hash: Optional[str] = None):
        """Log one training epoch in the fixed training-log layout"""
        self.metrics.record_epoch(epoch, loss, tokens_per_sec, avg_batch_vocab)
        self.perf_logger.info(
            f"epoch {epoch} loss {loss:.6f} tokens/sec {tokens_per_sec:.1f} avg_batch_vocab {avg_batch_vocab:.1f}"
        )
        self.logger.info(
            f"🧠 epoch {epoch} loss {loss:.6f}",
            extra={'event_type': 'epoch', 'epoch': epoch, 'loss': loss,
                   'tokens_per_sec': tokens_per_sec, 'avg_batch_vocab': avg_batch_vocab,
                   'embedding_hash': embedding_hash}
        )

    def log_performance_summary(self):
        """Log run summary"""
        summary = self.metrics.get_summary()
        self.perf_logger.info(f"Run Summary - {summary}")
        return summary


# Global logger instance
enhanced_logger = None


def get_enhanced_logger(name: str = "VocabSniper", log_dir: Optional[str] = None) -> EnhancedLogger:
    """Get or create the global enhanced logger instance"""
    global enhanced_logger
    log_dir = log_dir or os.getenv('SNIPER_LOG_DIR', 'logs')
    if enhanced_logger is None or enhanced_logger.log_dir != log_dir:
        enhanced_logger = EnhancedLogger(name, log_dir)
    return enhanced_logger
