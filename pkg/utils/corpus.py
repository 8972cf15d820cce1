"""
Parallel corpus ingestion, vocabularies and mini-batch planning.

Input is pre-tokenized text: one sentence per line, tokens separated by spaces.
"""

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from utils.errors import CorpusError, DataContractError

logger = logging.getLogger(__name__)

UNK, BOS, EOS, PAD = 0, 1, 2, 3
RESERVED_TOKENS = ('<unk>', '<s>', '</s>', '<pad>')
RESERVED_IDS = frozenset((UNK, BOS, EOS, PAD))
FIRST_WORD_ID = len(RESERVED_TOKENS)

DEFAULT_MAX_LEN = 50
DEFAULT_BATCH_SIZE = 80


class Vocabulary:
    """
    Bidirectional token <-> id map.

    Ids 0..3 are the reserved symbols, corpus words follow in descending
    frequency with ties broken by first occurrence.
    """

    def __init__(self, tokens: Sequence[str], frequency: Dict[int, int] = None):
        if tuple(tokens[:FIRST_WORD_ID]) != RESERVED_TOKENS:
            raise DataContractError(
                f"vocabulary must start with {' '.join(RESERVED_TOKENS)}, got {' '.join(tokens[:FIRST_WORD_ID])}"
            )
        self.tokens: List[str] = list(tokens)
        self.index: Dict[str, int] = {}
        for i, token in enumerate(self.tokens):
            if token in self.index:
                raise DataContractError(f"duplicate vocabulary entry '{token}' at ids {self.index[token]} and {i}")
            self.index[token] = i
        self.frequency: Dict[int, int] = dict(frequency or {})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def encode(self, tokens: Iterable[str]) -> List[int]:
        return [self.index.get(token, UNK) for token in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.tokens[i] for i in ids]

    def save(self, path: str):
        with open(path, 'w', encoding='utf-8') as f:
            for token in self.tokens:
                f.write(token + '\n')

    @classmethod
    def load(cls, path: str) -> 'Vocabulary':
        with open(path, 'r', encoding='utf-8') as f:
            tokens = [line.rstrip('\n') for line in f]
        while tokens and tokens[-1] == '':
            tokens.pop()
        return cls(tokens)

    def content_hash(self) -> str:
        """sha256 of the vocabulary file bytes"""
        payload = ''.join(token + '\n' for token in self.tokens).encode('utf-8')
        return hashlib.sha256(payload).hexdigest()


@dataclass(frozen=True)
class TextPair:
    """A surviving line pair in surface form"""
    source: Tuple[str, ...]
    target: Tuple[str, ...]
    pair_id: int


@dataclass(frozen=True)
class SentencePair:
    """An encoded sentence pair"""
    source: Tuple[int, ...]
    target: Tuple[int, ...]
    pair_id: int


@dataclass
class BatchPlan:
    """Shuffled order of one epoch"""
    epoch_seed: int
    batch_size: int = DEFAULT_BATCH_SIZE
    order: List[int] = field(default_factory=list)


def _read_lines(path: str) -> List[str]:
    with open(path, 'r', encoding='utf-8') as f:
        return [line.rstrip('\n') for line in f]


def load_parallel(src_path: str, tgt_path: str, max_len: int = DEFAULT_MAX_LEN) -> Tuple[List[TextPair], int]:
    """
    Read a line-aligned parallel corpus.

    Returns the surviving pairs and the number of dropped pairs (either side
    empty or longer than max_len).
    """
    src_lines = _read_lines(src_path)
    tgt_lines = _read_lines(tgt_path)
    if len(src_lines) != len(tgt_lines):
        raise CorpusError(f"line count {len(src_lines)} != {len(tgt_lines)} ({src_path} vs {tgt_path})")

    pairs = []
    dropped = 0
    for pair_id, (src_line, tgt_line) in enumerate(zip(src_lines, tgt_lines)):
        source = tuple(src_line.split())
        target = tuple(tgt_line.split())
        if not source or not target or len(source) > max_len or len(target) > max_len:
            dropped += 1
            continue
        pairs.append(TextPair(source, target, pair_id))

    if dropped:
        logger.warning(f"⚠️ Dropped {dropped} of {len(src_lines)} pairs from {src_path} (empty or longer than {max_len})")
    logger.info(f"📊 Loaded {len(pairs)} sentence pairs from {src_path} / {tgt_path}")
    return pairs, dropped


def build_vocabulary(sentences: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Build a frequency-ordered vocabulary of at most max_size ids (reserved ids included)"""
    if max_size < FIRST_WORD_ID + 1:
        raise ValueError(f"max_size must be >= {FIRST_WORD_ID + 1}, got {max_size}")

    counts = Counter()
    first_seen: Dict[str, int] = {}
    for sentence in sentences:
        for token in sentence:
            counts[token] += 1
            if token not in first_seen:
                first_seen[token] = len(first_seen)

    ranked = sorted(
        (token for token in counts if token not in RESERVED_TOKENS),
        key=lambda token: (-counts[token], first_seen[token])
    )
    kept = ranked[:max_size - FIRST_WORD_ID]
    tokens = list(RESERVED_TOKENS) + kept
    frequency = {i: counts[token] for i, token in enumerate(tokens) if i >= FIRST_WORD_ID}
    for i in RESERVED_IDS:
        frequency[i] = 0

    if len(ranked) > len(kept):
        logger.info(f"Vocabulary capped at {max_size} ids, {len(ranked) - len(kept)} word types map to <unk>")
    return Vocabulary(tokens, frequency)


def encode_corpus(text_pairs: Iterable[TextPair], src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> List[SentencePair]:
    return [
        SentencePair(tuple(src_vocab.encode(p.source)), tuple(tgt_vocab.encode(p.target)), p.pair_id)
        for p in text_pairs
    ]


def top_common_words(vocab: Vocabulary, n: int) -> Set[int]:
    """V^T: the n most frequent target words plus the reserved ids"""
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    upper = min(FIRST_WORD_ID + n, len(vocab))
    return set(RESERVED_IDS) | set(range(FIRST_WORD_ID, upper))


def plan_epoch(num_pairs: int, batch_size: int, epoch_seed: int) -> BatchPlan:
    rng = np.random.default_rng(epoch_seed)
    order = [int(i) for i in rng.permutation(num_pairs)]
    return BatchPlan(epoch_seed=epoch_seed, batch_size=batch_size, order=order)


def make_batches(pairs: Sequence[SentencePair], b: int = DEFAULT_BATCH_SIZE, epoch_seed: int = 0) -> List[List[SentencePair]]:
    """Shuffle the pairs with epoch_seed and cut them into batches of b (last may be short)"""
    if b < 1:
        raise ValueError(f"batch size must be >= 1, got {b}")
    plan = plan_epoch(len(pairs), b, epoch_seed)
    return [
        [pairs[i] for i in plan.order[start:start + b]]
        for start in range(0, len(plan.order), b)
    ]


def epoch_seed(seed: int, epoch: int) -> int:
    """Seed for the shuffle of one epoch, derived from the run seed"""
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])
