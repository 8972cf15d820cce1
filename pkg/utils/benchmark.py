"""
Output-layer and end-to-end training throughput for restricted vs full vocabularies.
"""

import logging
import time
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np
import pandas as pd
import psutil
from scipy.special import softmax
from scipy.stats import linregress

from utils.corpus import FIRST_WORD_ID, RESERVED_IDS, SentencePair
from utils.nmt_model import AttentionNMT, ModelDims
from utils.trainer import TrainConfig, train

logger = logging.getLogger(__name__)


@dataclass
class BenchConfig:
    tgt_vocab_size: int = 50000
    sizes: List[int] = field(default_factory=lambda: [500, 1000, 2000, 4000])
    train_sizes: List[int] = field(default_factory=lambda: [2000, 30000])
    d: int = 32
    runs: int = 5
    warmup: int = 1
    steps: int = 200
    train_pairs: int = 40
    seed: int = 1234
    dtype: str = 'float32'


@dataclass
class BenchReport:
    output_layer: pd.DataFrame
    training: pd.DataFrame
    r_squared: float
    rss_mb: float

    def to_text(self) -> str:
        return '\n'.join([
            'output layer (median seconds per step)',
            self.output_layer.to_string(index=False),
            '',
            'training throughput (median seconds per epoch)',
            self.training.to_string(index=False),
            '',
            f"linear fit R^2 (time vs |V_o|) = {self.r_squared:.4f}",
            f"rss_mb = {self.rss_mb:.1f}",
        ])


def _restricted_rows(rng: np.random.Generator, size: int, vocab_size: int) -> np.ndarray:
    if size >= vocab_size:
        return np.arange(vocab_size)
    words = rng.choice(np.arange(FIRST_WORD_ID, vocab_size), size=size - len(RESERVED_IDS), replace=False)
    return np.sort(np.concatenate([np.array(sorted(RESERVED_IDS)), words]))


def _median_step_seconds(model: AttentionNMT, rows: np.ndarray, o: np.ndarray, steps: int,
                         runs: int, warmup: int) -> float:
    timings = []
    for run in range(warmup + runs):
        started = time.perf_counter()
        for _ in range(steps):
            softmax(model.output_logits(o, rows))
        if run >= warmup:
            timings.append((time.perf_counter() - started) / steps)
    return float(np.median(timings))


def output_layer_timings(config: BenchConfig) -> pd.DataFrame:
    """Median per-step time of logits + softmax for each restricted size and for all of V_y"""
    rng = np.random.default_rng(config.seed)
    dims = ModelDims(FIRST_WORD_ID + 1, config.tgt_vocab_size, config.d, config.d, config.d, config.d, config.d)
    model = AttentionNMT.initialize(dims, seed=config.seed, dtype=np.dtype(config.dtype))
    o = rng.uniform(-1.0, 1.0, size=config.d).astype(config.dtype)

    full = _median_step_seconds(model, np.arange(config.tgt_vocab_size), o, config.steps, config.runs, config.warmup)
    rows = []
    for size in sorted(config.sizes):
        seconds = _median_step_seconds(model, _restricted_rows(rng, size, config.tgt_vocab_size), o,
                                       config.steps, config.runs, config.warmup)
        rows.append({'vocab_size': size, 'seconds_per_step': seconds, 'speedup_vs_full': full / seconds})
    rows.append({'vocab_size': config.tgt_vocab_size, 'seconds_per_step': full, 'speedup_vs_full': 1.0})
    return pd.DataFrame(rows)


def _median_epoch(pairs: List[SentencePair], words: int, train_config: TrainConfig, config: BenchConfig):
    """Median seconds and tokens/sec of one epoch, each run on a freshly initialized model"""
    seconds, throughput, batch_vocab = [], [], 0.0
    for run in range(config.warmup + config.runs):
        model = train_config.new_model(words, config.tgt_vocab_size)
        started = time.perf_counter()
        record = train(model, pairs, None, None, set(), train_config).history[-1]
        if run >= config.warmup:
            seconds.append(time.perf_counter() - started)
            throughput.append(record.tokens_per_sec)
            batch_vocab = record.avg_batch_vocab
    return float(np.median(seconds)), float(np.median(throughput)), batch_vocab


def training_throughput(config: BenchConfig) -> pd.DataFrame:
    """Tokens/sec of one training epoch per forced batch-vocabulary size, then with the full softmax"""
    rng = np.random.default_rng(config.seed)
    words = min(config.tgt_vocab_size, 1000)
    pairs = []
    for pair_id in range(config.train_pairs):
        length = int(rng.integers(4, 10))
        ids = tuple(int(i) for i in rng.integers(FIRST_WORD_ID, words, size=length))
        pairs.append(SentencePair(ids, ids, pair_id))

    base = TrainConfig(d_emb=config.d, d_h=config.d, d_s=config.d, d_o=config.d, d_att=config.d,
                       batch_size=config.train_pairs, epochs=1, seed=config.seed, dtype=config.dtype)
    settings = [replace(base, force_batch_vocab_size=size) for size in config.train_sizes]
    settings.append(replace(base, full_softmax=True))

    rows = []
    for train_config in settings:
        seconds, tokens_per_sec, batch_vocab = _median_epoch(pairs, words, train_config, config)
        rows.append({'batch_vocab': batch_vocab, 'full_softmax': train_config.full_softmax, 'seconds': seconds,
                     'tokens_per_sec': tokens_per_sec})
    frame = pd.DataFrame(rows)
    frame['slowdown_vs_smallest'] = frame['seconds'] / frame['seconds'].iloc[0]
    return frame


def run_benchmark(config: BenchConfig) -> BenchReport:
    output_layer = output_layer_timings(config)
    restricted = output_layer.iloc[:-1]
    if len(restricted) >= 2:
        r_squared = float(linregress(restricted['vocab_size'], restricted['seconds_per_step']).rvalue ** 2)
    else:
        r_squared = float('nan')
    training = training_throughput(config)
    rss_mb = psutil.Process().memory_info().rss / (1024 * 1024)
    logger.info(f"⏱️ Benchmark done: R^2 {r_squared:.4f}, RSS {rss_mb:.1f} MB")
    return BenchReport(output_layer, training, r_squared, rss_mb)
