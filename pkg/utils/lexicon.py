"""
Word-to-word dictionary D(x) built from the translation table.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Set, Tuple

from utils.align import NULL, TTable
from utils.corpus import RESERVED_IDS, Vocabulary
from utils.errors import ArtifactError

logger = logging.getLogger(__name__)

DEFAULT_MAX_CANDIDATES = 50
DEFAULT_TOP_N = 10


@dataclass
class WordDictionary:
    """source id -> [(target id, probability)] sorted by descending probability"""
    entries: Dict[int, List[Tuple[int, float]]]
    max_candidates: int = DEFAULT_MAX_CANDIDATES
    min_prob: float = 0.0

    def candidates(self, source: int) -> List[Tuple[int, float]]:
        return self.entries.get(source, [])

    def top(self, source: int, n: int) -> List[int]:
        return [target for target, _ in self.entries.get(source, [])[:n]]

    def save(self, path: str, src_vocab: Vocabulary, tgt_vocab: Vocabulary, header: str = None):
        """Same TSV layout as the translation table"""
        with open(path, 'w', encoding='utf-8') as f:
            if header:
                f.write(header + '\n')
            for source in sorted(self.entries, key=lambda s: src_vocab.tokens[s]):
                for target, prob in self.entries[source]:
                    f.write(f"{src_vocab.tokens[source]}\t{tgt_vocab.tokens[target]}\t{prob:.12g}\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str], src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                   max_candidates: int = DEFAULT_MAX_CANDIDATES) -> 'WordDictionary':
        rows: Dict[int, Dict[int, float]] = defaultdict(dict)
        for number, line in enumerate(lines, 1):
            parts = line.rstrip('\n').split('\t')
            if len(parts) != 3:
                raise ArtifactError(f"dictionary line {number}: expected 3 tab-separated fields")
            source, target = src_vocab.lookup(parts[0]), tgt_vocab.lookup(parts[1])
            if source in RESERVED_IDS or target in RESERVED_IDS:
                continue
            rows[source][target] = float(parts[2])
        entries = {source: _ranked(row)[:max_candidates] for source, row in rows.items()}
        return cls(entries, max_candidates)


def _ranked(row: Dict[int, float]) -> List[Tuple[int, float]]:
    return sorted(row.items(), key=lambda item: (-item[1], item[0]))


def extract_dictionary(ttable: TTable, max_candidates: int = DEFAULT_MAX_CANDIDATES,
                       min_prob: float = 0.0) -> WordDictionary:
    """Filter, rank and truncate each source row of the table"""
    entries = {}
    for source, row in ttable.probs.items():
        if source == NULL or source in RESERVED_IDS:
            continue
        kept = {t: p for t, p in row.items() if p >= min_prob and t not in RESERVED_IDS}
        ranked = _ranked(kept)[:max_candidates]
        if ranked:
            entries[source] = ranked
    logger.info(f"📖 Dictionary extracted for {len(entries)} source words (max {max_candidates} candidates)")
    return WordDictionary(entries, max_candidates, min_prob)


def sentence_dict_vocab(dictionary: WordDictionary, x: Sequence[int], top_n: int = DEFAULT_TOP_N) -> Set[int]:
    """V^D: union of the top_n candidates of every distinct source word"""
    if top_n > dictionary.max_candidates:
        raise ValueError(f"top_n {top_n} exceeds the {dictionary.max_candidates} candidates stored per word")
    vocab: Set[int] = set()
    for source in set(x):
        vocab.update(dictionary.top(source, top_n))
    return vocab
