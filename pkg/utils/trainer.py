"""
Mini-batch training over batch-level target vocabularies.
"""

import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Set

import numpy as np

from utils.adadelta import DEFAULT_EPSILON, DEFAULT_RHO, AdaDelta
from utils.corpus import DEFAULT_BATCH_SIZE, SentencePair, epoch_seed, make_batches
from utils.errors import TrainingDivergedError
from utils.lexicon import DEFAULT_TOP_N, WordDictionary
from utils.nmt_model import EMBEDDINGS, AttentionNMT, Gradients, ModelDims, save_checkpoint
from utils.phrase import DEFAULT_TOP_K, PhraseSetTable
from utils.target_vocab import VocabBuilder, build_batch_vocab, build_full_vocab, pad_batch_vocab

logger = logging.getLogger(__name__)

DTYPES = {'float64': np.float64, 'float32': np.float32}

# Schedule for corpora of a few hundred pairs, where batches of 80 give too few updates
TOY_BATCH_SIZE = 8
TOY_EPSILON = 1e-4


@dataclass
class TrainConfig:
    """Model sizes, optimizer constants and the training schedule"""
    d_emb: int = 64
    d_h: int = 64
    d_s: int = 64
    d_o: int = 64
    d_att: int = 64
    out_depth: int = 1
    rho: float = DEFAULT_RHO
    epsilon: float = DEFAULT_EPSILON
    lr: float = 1.0
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = 10
    seed: int = 1234
    freeze_embeddings_after: Optional[int] = None
    top_n_dict: int = DEFAULT_TOP_N
    top_k_phrase: int = DEFAULT_TOP_K
    full_softmax: bool = False
    force_batch_vocab_size: Optional[int] = None
    max_batches: Optional[int] = None
    dtype: str = 'float64'

    def __post_init__(self):
        for name in ('d_emb', 'd_h', 'd_s', 'd_o', 'd_att', 'out_depth', 'batch_size', 'epochs'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 < self.rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {self.rho}")
        if self.dtype not in DTYPES:
            raise ValueError(f"dtype must be one of {sorted(DTYPES)}, got {self.dtype}")

    @classmethod
    def for_toy_corpus(cls, **overrides) -> 'TrainConfig':
        values = dict(batch_size=TOY_BATCH_SIZE, epsilon=TOY_EPSILON)
        values.update(overrides)
        return cls(**values)

    def model_dims(self, src_vocab_size: int, tgt_vocab_size: int) -> ModelDims:
        return ModelDims(src_vocab_size, tgt_vocab_size, self.d_emb, self.d_h, self.d_s,
                         self.d_o, self.d_att, self.out_depth)

    def new_model(self, src_vocab_size: int, tgt_vocab_size: int) -> AttentionNMT:
        return AttentionNMT.initialize(self.model_dims(src_vocab_size, tgt_vocab_size),
                                       seed=self.seed, dtype=DTYPES[self.dtype])


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    tokens_per_sec: float
    avg_batch_vocab: float
    embedding_hash: str
    seconds: float

    def log_line(self) -> str:
        return (f"epoch {self.epoch} loss {self.loss:.6f} tokens/sec {self.tokens_per_sec:.1f} "
                f"avg_batch_vocab {self.avg_batch_vocab:.1f}")


@dataclass
class TrainResult:
    model: AttentionNMT
    history: List[EpochRecord] = field(default_factory=list)

    @property
    def losses(self) -> List[float]:
        return [record.loss for record in self.history]


def epoch_checkpoint_path(checkpoint_path: str, epoch: int) -> str:
    """model.ckpt -> model.epoch3.ckpt"""
    root, ext = os.path.splitext(checkpoint_path)
    return f"{root}.epoch{epoch}{ext or '.ckpt'}"


def _finite(grads: Gradients) -> bool:
    return all(np.all(np.isfinite(v)) for v in grads.dense.values()) and \
        all(np.all(np.isfinite(v)) for _, v in grads.sparse.values())


def train(model: AttentionNMT, pairs: Sequence[SentencePair], dictionary: Optional[WordDictionary],
          phrases: Optional[PhraseSetTable], common: Set[int], config: TrainConfig,
          train_log_path: Optional[str] = None, checkpoint_path: Optional[str] = None,
          checkpoint_meta: Optional[dict] = None, monitor=None, log_header: Optional[str] = None) -> TrainResult:
    """
    Train in place with AdaDelta, one update per mini-batch.

    Each batch is scored over the union of its sentences' training
    vocabularies (or all of V_y with full_softmax). `monitor` is an
    EnhancedLogger receiving the per-epoch figures.
    """
    if not pairs:
        raise ValueError("cannot train on an empty corpus")

    builder = VocabBuilder(dictionary, phrases, set(common), config.top_n_dict, config.top_k_phrase,
                           batch_size=config.batch_size)
    optimizer = AdaDelta(model.params, rho=config.rho, epsilon=config.epsilon, lr=config.lr)
    tgt_size = model.dims.tgt_vocab_size
    full_vocab = build_full_vocab(tgt_size) if config.full_softmax else None
    meta = checkpoint_meta or {}
    result = TrainResult(model)

    if train_log_path:
        with open(train_log_path, 'w', encoding='utf-8') as f:
            if log_header:
                f.write(log_header + '\n')

    mode = 'full softmax' if config.full_softmax else 'batch vocabularies'
    logger.info(f"🧠 Training on {len(pairs)} pairs for {config.epochs} epochs ({mode}, batch {config.batch_size})")

    for epoch in range(1, config.epochs + 1):
        frozen = EMBEDDINGS if (config.freeze_embeddings_after is not None
                                and epoch > config.freeze_embeddings_after) else ()
        batches = make_batches(pairs, config.batch_size, epoch_seed(config.seed, epoch))
        if config.max_batches is not None:
            batches = batches[:config.max_batches]

        started = time.perf_counter()
        total_loss = 0.0
        sentences = 0
        tokens = 0
        vocab_sizes = []

        for batch_number, batch in enumerate(batches, 1):
            if full_vocab is not None:
                batch_vocab = full_vocab
            else:
                batch_vocab = build_batch_vocab([builder.train_vocab(p) for p in batch], [p.pair_id for p in batch])
                if config.force_batch_vocab_size:
                    batch_vocab = pad_batch_vocab(batch_vocab, config.force_batch_vocab_size, tgt_size)
            vocab_sizes.append(len(batch_vocab))

            grads = Gradients()
            batch_loss = 0.0
            for pair in batch:
                loss, _ = model.loss_and_gradients(pair, batch_vocab, grads)
                batch_loss += loss
                tokens += len(pair.target) + 1

            if not math.isfinite(batch_loss) or not _finite(grads):
                raise TrainingDivergedError(epoch, batch_number, batch_loss)

            grads.scale(1.0 / len(batch))
            optimizer.step(grads, frozen)
            total_loss += batch_loss
            sentences += len(batch)

        seconds = time.perf_counter() - started
        record = EpochRecord(
            epoch=epoch,
            loss=total_loss / sentences,
            tokens_per_sec=tokens / seconds if seconds > 0 else float('inf'),
            avg_batch_vocab=float(np.mean(vocab_sizes)),
            embedding_hash=model.embedding_hash(),
            seconds=seconds,
        )
        result.history.append(record)

        if monitor is not None:
            monitor.log_epoch(record.epoch, record.loss, record.tokens_per_sec, record.avg_batch_vocab,
                              record.embedding_hash)
        else:
            logger.info(f"🧠 {record.log_line()}")
        if train_log_path:
            with open(train_log_path, 'a', encoding='utf-8') as f:
                f.write(record.log_line() + '\n')
        if checkpoint_path:
            save_checkpoint(epoch_checkpoint_path(checkpoint_path, epoch), model, asdict(config),
                            meta.get('vocab_hashes', {}), epoch, meta.get('config_hash', ''))

    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, asdict(config), meta.get('vocab_hashes', {}),
                        config.epochs, meta.get('config_hash', ''))
    logger.info(f"✅ Training finished: loss {result.history[0].loss:.4f} -> {result.history[-1].loss:.4f}")
    return result
