"""
Phrase library P(x_i..x_j): source phrases mapped to ranked target word sets.

Extraction follows the usual phrase-based recipe (consistent rectangles with
unaligned target boundary expansion); only the set of target words is kept.
Storage is a prefix tree over source ids so matching a sentence costs
O(l * L_src) probes regardless of table size.
"""

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from joblib import Parallel, delayed

from utils.align import AlignmentLinks
from utils.corpus import SentencePair, Vocabulary
from utils.errors import ArtifactError, DataContractError

logger = logging.getLogger(__name__)

DEFAULT_MAX_SRC = 4
DEFAULT_MAX_TGT = 4
DEFAULT_TOP_K = 10

TargetSet = Tuple[int, ...]
Candidate = Tuple[TargetSet, int]


@dataclass
class PhraseNode:
    children: Dict[int, 'PhraseNode'] = field(default_factory=dict)
    candidates: List[Candidate] = field(default_factory=list)


class PhraseSetTable:
    """Source phrase -> [(sorted target id tuple, count)] by descending count"""

    def __init__(self, max_src: int = DEFAULT_MAX_SRC, max_tgt: int = DEFAULT_MAX_TGT):
        self.max_src = max_src
        self.max_tgt = max_tgt
        self.root = PhraseNode()
        self._size = 0

    def __len__(self):
        return self._size

    @classmethod
    def from_counts(cls, counts: Dict[Tuple[int, ...], Counter], max_src: int = DEFAULT_MAX_SRC,
                    max_tgt: int = DEFAULT_MAX_TGT) -> 'PhraseSetTable':
        table = cls(max_src, max_tgt)
        for phrase in sorted(counts):
            table._insert(phrase, counts[phrase])
        return table

    def _insert(self, phrase: Tuple[int, ...], counter: Counter):
        if not 1 <= len(phrase) <= self.max_src:
            raise DataContractError(f"phrase length {len(phrase)} outside [1, {self.max_src}]")
        node = self.root
        for word in phrase:
            node = node.children.setdefault(word, PhraseNode())
        if not node.candidates:
            self._size += 1
        merged = Counter(dict(node.candidates))
        merged.update(counter)
        node.candidates = sorted(merged.items(), key=lambda item: (-item[1], item[0]))

    def lookup(self, phrase: Sequence[int]) -> List[Candidate]:
        node = self.root
        for word in phrase:
            node = node.children.get(word)
            if node is None:
                return []
        return node.candidates

    @property
    def entries(self) -> Dict[Tuple[int, ...], List[Candidate]]:
        result = {}
        stack = [((), self.root)]
        while stack:
            prefix, node = stack.pop()
            if node.candidates:
                result[prefix] = list(node.candidates)
            for word, child in node.children.items():
                stack.append((prefix + (word,), child))
        return result

    def save(self, path: str, src_vocab: Vocabulary, tgt_vocab: Vocabulary, header: str = None):
        """Lines `src tokens ||| tgt tokens sorted by id ||| count`"""
        with open(path, 'w', encoding='utf-8') as f:
            if header:
                f.write(header + '\n')
            for phrase, candidates in sorted(self.entries.items()):
                source = ' '.join(src_vocab.decode(phrase))
                for target_set, count in candidates:
                    f.write(f"{source} ||| {' '.join(tgt_vocab.decode(target_set))} ||| {count}\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str], src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                   max_src: int = DEFAULT_MAX_SRC, max_tgt: int = DEFAULT_MAX_TGT) -> 'PhraseSetTable':
        counts: Dict[Tuple[int, ...], Counter] = defaultdict(Counter)
        for number, line in enumerate(lines, 1):
            parts = [part.strip() for part in line.rstrip('\n').split('|||')]
            if len(parts) != 3:
                raise ArtifactError(f"phrase line {number}: expected `src ||| tgt ||| count`")
            phrase = tuple(src_vocab.encode(parts[0].split()))
            target_set = tuple(sorted(set(tgt_vocab.encode(parts[1].split()))))
            counts[phrase][target_set] += int(parts[2])
        return cls.from_counts(counts, max_src, max_tgt)


def _extract_pair(pair: SentencePair, alignment: AlignmentLinks, max_src: int, max_tgt: int,
                  counts: Dict[Tuple[int, ...], Counter]):
    l, m = len(pair.source), len(pair.target)
    for i, j in alignment.links:
        if not (0 <= i < l and 0 <= j < m):
            raise DataContractError(f"pair {pair.pair_id}: link {i}-{j} outside a {l}x{m} sentence pair")

    tgt_aligned_to: List[List[int]] = [[] for _ in range(m)]
    src_aligned_to: List[List[int]] = [[] for _ in range(l)]
    for i, j in alignment.links:
        tgt_aligned_to[j].append(i)
        src_aligned_to[i].append(j)

    for s1 in range(l):
        for s2 in range(s1, min(l, s1 + max_src)):
            linked = [j for i in range(s1, s2 + 1) for j in src_aligned_to[i]]
            if not linked:
                continue
            t1, t2 = min(linked), max(linked)
            if t2 - t1 + 1 > max_tgt:
                continue
            # no target word inside the span may link outside the source span
            if any(i < s1 or i > s2 for j in range(t1, t2 + 1) for i in tgt_aligned_to[j]):
                continue
            phrase = pair.source[s1:s2 + 1]
            start = t1
            while True:
                end = t2
                while True:
                    counts[phrase][tuple(sorted(set(pair.target[start:end + 1])))] += 1
                    end += 1
                    if end >= m or tgt_aligned_to[end] or end - start + 1 > max_tgt:
                        break
                start -= 1
                if start < 0 or tgt_aligned_to[start] or t2 - start + 1 > max_tgt:
                    break


def _extract_chunk(pairs: Sequence[SentencePair], alignments: Sequence[AlignmentLinks],
                   max_src: int, max_tgt: int) -> Dict[Tuple[int, ...], Counter]:
    counts: Dict[Tuple[int, ...], Counter] = defaultdict(Counter)
    for pair, alignment in zip(pairs, alignments):
        _extract_pair(pair, alignment, max_src, max_tgt, counts)
    return dict(counts)


def extract_phrases(pairs: Sequence[SentencePair], alignments: Sequence[AlignmentLinks],
                    max_src: int = DEFAULT_MAX_SRC, max_tgt: int = DEFAULT_MAX_TGT,
                    n_jobs: int = 1) -> PhraseSetTable:
    """Count every consistent phrase pair, collapsing target spans to word sets"""
    if len(pairs) != len(alignments):
        raise DataContractError(f"{len(pairs)} sentence pairs but {len(alignments)} alignments")

    if n_jobs == 1 or len(pairs) < 2:
        partials = [_extract_chunk(pairs, alignments, max_src, max_tgt)]
    else:
        workers = n_jobs if n_jobs > 0 else 8
        size = max(1, math.ceil(len(pairs) / workers))
        partials = Parallel(n_jobs=n_jobs)(
            delayed(_extract_chunk)(pairs[i:i + size], alignments[i:i + size], max_src, max_tgt)
            for i in range(0, len(pairs), size)
        )

    counts: Dict[Tuple[int, ...], Counter] = defaultdict(Counter)
    for partial in partials:
        for phrase, counter in partial.items():
            counts[phrase].update(counter)

    table = PhraseSetTable.from_counts(counts, max_src, max_tgt)
    logger.info(f"📚 Extracted {len(table)} source phrases from {len(pairs)} aligned pairs")
    return table


def match_subsequences(x: Sequence[int], table: PhraseSetTable) -> List[Tuple[Tuple[int, int], List[Candidate]]]:
    """Every span (start, end exclusive) of x up to max_src long that the table knows"""
    matches = []
    for start in range(len(x)):
        node = table.root
        for end in range(start, min(len(x), start + table.max_src)):
            node = node.children.get(x[end])
            if node is None:
                break
            if node.candidates:
                matches.append(((start, end + 1), node.candidates))
    return matches


def sentence_phrase_vocab(table: PhraseSetTable, x: Sequence[int], top_k: int = DEFAULT_TOP_K) -> Set[int]:
    """V^P: union of the target sets of the top_k candidates of every matched span"""
    vocab: Set[int] = set()
    for _, candidates in match_subsequences(x, table):
        for target_set, _ in candidates[:top_k]:
            vocab.update(target_set)
    return vocab
