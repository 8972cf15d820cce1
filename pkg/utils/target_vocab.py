"""
Sentence-level and batch-level target vocabularies.

V_x = V^D | V^P | V^T (| V^R when training), reserved ids always included.
Batch vocabularies are the union over the sentences of a mini-batch.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set

import numpy as np

from utils.corpus import DEFAULT_BATCH_SIZE, RESERVED_IDS, SentencePair
from utils.errors import DataContractError
from utils.lexicon import DEFAULT_TOP_N, WordDictionary, sentence_dict_vocab
from utils.phrase import DEFAULT_TOP_K, PhraseSetTable, sentence_phrase_vocab

logger = logging.getLogger(__name__)

TRAIN = 'train'
DECODE = 'decode'


class SentenceVocab:
    """Sorted restricted id set with global <-> local maps"""

    def __init__(self, ids: Iterable[int], provenance: Optional[Dict[int, str]] = None):
        self.global_ids = np.array(sorted(set(ids) | RESERVED_IDS), dtype=np.int64)
        self.local_of_global: Dict[int, int] = {int(g): k for k, g in enumerate(self.global_ids)}
        self.provenance: Dict[int, str] = provenance or {}

    def __len__(self):
        return len(self.global_ids)

    def __contains__(self, global_id: int) -> bool:
        return global_id in self.local_of_global

    def local(self, global_id: int) -> int:
        return self.local_of_global[global_id]

    def id_set(self) -> FrozenSet[int]:
        return frozenset(self.local_of_global)

    def dump_line(self, pair_id: int) -> str:
        return f"{pair_id} : {' '.join(str(int(g)) for g in self.global_ids)}"


class BatchVocab(SentenceVocab):
    """Union of the member sentence vocabularies"""

    def __init__(self, ids: Iterable[int], member_sentence_ids: Sequence[int] = (),
                 provenance: Optional[Dict[int, str]] = None):
        super().__init__(ids, provenance)
        self.member_sentence_ids = list(member_sentence_ids)


def _tagged(parts: Dict[str, Set[int]]) -> Dict[int, str]:
    provenance: Dict[int, str] = {}
    for tag in 'DPTR':
        for i in sorted(parts.get(tag, ())):
            provenance[i] = provenance.get(i, '') + tag
    return provenance


@dataclass
class VocabBuilder:
    """Ingredients and switches for building V_x"""
    dictionary: Optional[WordDictionary] = None
    phrases: Optional[PhraseSetTable] = None
    common: Set[int] = field(default_factory=set)
    top_n_dict: int = DEFAULT_TOP_N
    top_k_phrase: int = DEFAULT_TOP_K
    use_dict: bool = True
    use_phrases: bool = True
    use_common: bool = True
    batch_size: int = DEFAULT_BATCH_SIZE

    def parts(self, x: Sequence[int]) -> Dict[str, Set[int]]:
        parts = {}
        if self.use_dict and self.dictionary is not None:
            parts['D'] = sentence_dict_vocab(self.dictionary, x, self.top_n_dict)
        if self.use_phrases and self.phrases is not None:
            parts['P'] = sentence_phrase_vocab(self.phrases, x, self.top_k_phrase)
        if self.use_common:
            parts['T'] = set(self.common)
        return parts

    def train_vocab(self, pair: SentencePair) -> SentenceVocab:
        return build_train_vocab(pair.source, pair.target, self.dictionary, self.phrases, self.common,
                                 self.top_n_dict, self.top_k_phrase, builder=self)

    def decode_vocab(self, x: Sequence[int]) -> SentenceVocab:
        return build_decode_vocab(x, self.dictionary, self.phrases, self.common,
                                  self.top_n_dict, self.top_k_phrase, builder=self)


def build_train_vocab(x: Sequence[int], y: Sequence[int], dictionary: Optional[WordDictionary],
                      phrases: Optional[PhraseSetTable], common: Set[int],
                      top_n_dict: int = DEFAULT_TOP_N, top_k_phrase: int = DEFAULT_TOP_K,
                      builder: Optional[VocabBuilder] = None) -> SentenceVocab:
    """V^D | V^P | V^T | V^R"""
    if not y:
        raise DataContractError("training vocabulary needs a non-empty reference")
    builder = builder or VocabBuilder(dictionary, phrases, common, top_n_dict, top_k_phrase)
    parts = builder.parts(x)
    parts['R'] = set(y)
    return SentenceVocab(set().union(*parts.values()), _tagged(parts))


def build_decode_vocab(x: Sequence[int], dictionary: Optional[WordDictionary],
                       phrases: Optional[PhraseSetTable], common: Set[int],
                       top_n_dict: int = DEFAULT_TOP_N, top_k_phrase: int = DEFAULT_TOP_K,
                       builder: Optional[VocabBuilder] = None) -> SentenceVocab:
    """V^D | V^P | V^T, no reference term"""
    builder = builder or VocabBuilder(dictionary, phrases, common, top_n_dict, top_k_phrase)
    parts = builder.parts(x)
    return SentenceVocab(set().union(*parts.values()) if parts else set(), _tagged(parts))


def build_batch_vocab(vocabs: Sequence[SentenceVocab], member_sentence_ids: Sequence[int] = ()) -> BatchVocab:
    if not vocabs:
        raise DataContractError("cannot build a batch vocabulary from an empty batch")
    ids: Set[int] = set()
    provenance: Dict[int, str] = {}
    for vocab in vocabs:
        ids.update(int(g) for g in vocab.global_ids)
        for i, tags in vocab.provenance.items():
            known = provenance.get(i, '')
            provenance[i] = ''.join(t for t in 'DPTR' if t in known or t in tags)
    return BatchVocab(ids, member_sentence_ids, provenance)


def build_full_vocab(size: int) -> BatchVocab:
    """All of V_y, for the unrestricted baseline"""
    return BatchVocab(range(size))


def pad_batch_vocab(batch_vocab: BatchVocab, target_size: int, vocab_size: int) -> BatchVocab:
    """Grow a batch vocabulary to target_size ids with the lowest (most frequent) ids it lacks"""
    if len(batch_vocab) >= target_size:
        return batch_vocab
    ids = set(batch_vocab.id_set())
    for i in range(vocab_size):
        if len(ids) >= target_size:
            break
        ids.add(i)
    return BatchVocab(ids, batch_vocab.member_sentence_ids, batch_vocab.provenance)


@dataclass
class CoverageReport:
    word_level_ratio: float
    full_sentence_ratio: float
    avg_sentence_vocab: float
    avg_batch_vocab: float
    avg_reference_vocab: float

    def to_text(self) -> str:
        return '\n'.join(f"{key}={value:.6f}" for key, value in vars(self).items())


def coverage_stats(pairs: Sequence[SentencePair], builder: VocabBuilder, mode: str = TRAIN) -> CoverageReport:
    """Reference coverage and vocabulary sizes over a corpus, batches taken in corpus order"""
    if mode not in (TRAIN, DECODE):
        raise ValueError(f"mode must be '{TRAIN}' or '{DECODE}', got '{mode}'")
    if not pairs:
        return CoverageReport(0.0, 0.0, 0.0, 0.0, 0.0)

    covered = 0
    total = 0
    full_sentences = 0
    sentence_sizes = []
    reference_sizes = []
    batch_sizes = []
    current_batch: List[SentenceVocab] = []

    for pair in pairs:
        vocab = builder.train_vocab(pair) if mode == TRAIN else builder.decode_vocab(pair.source)
        hits = sum(1 for y in pair.target if y in vocab)
        covered += hits
        total += len(pair.target)
        full_sentences += hits == len(pair.target)
        sentence_sizes.append(len(vocab))
        reference_sizes.append(len(set(pair.target)))
        current_batch.append(vocab)
        if len(current_batch) == builder.batch_size:
            batch_sizes.append(len(build_batch_vocab(current_batch)))
            current_batch = []
    if current_batch:
        batch_sizes.append(len(build_batch_vocab(current_batch)))

    report = CoverageReport(
        word_level_ratio=covered / total if total else 0.0,
        full_sentence_ratio=full_sentences / len(pairs),
        avg_sentence_vocab=float(np.mean(sentence_sizes)),
        avg_batch_vocab=float(np.mean(batch_sizes)),
        avg_reference_vocab=float(np.mean(reference_sizes)),
    )
    logger.info(f"📊 Coverage ({mode}): word {report.word_level_ratio:.4f}, "
                f"sentence {report.full_sentence_ratio:.4f}, |V_x| {report.avg_sentence_vocab:.1f}")
    return report
