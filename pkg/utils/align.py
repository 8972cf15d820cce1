"""
IBM Model 1 word alignment with grow-diag-final-and symmetrization.

The translation table t(target | source) is trained with EM in either
direction. A NULL word sits on the conditioning side only. Viterbi links
are symmetrized with the standard grow-diag-final-and heuristic.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Sequence, Set, Tuple

from joblib import Parallel, delayed

from utils.corpus import SentencePair, Vocabulary
from utils.errors import ArtifactError, DataContractError

logger = logging.getLogger(__name__)

NULL = -1
NULL_TOKEN = 'NULL'
SRC2TGT = 'src2tgt'
TGT2SRC = 'tgt2src'
SMOOTHING_FLOOR = 1e-12
DEFAULT_EM_ITERATIONS = 5

NEIGHBORS = ((-1, 0), (0, -1), (1, 0), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass
class TTable:
    """Sparse t(target | source) table; probs[source][target]"""
    probs: Dict[int, Dict[int, float]]
    direction: str = SRC2TGT
    log_likelihoods: List[float] = field(default_factory=list)

    def prob(self, source: int, target: int) -> float:
        return self.probs.get(source, {}).get(target, 0.0)

    def save(self, path: str, conditioning_vocab: Vocabulary, generated_vocab: Vocabulary, header: str = None):
        """TSV sorted by source token then descending probability"""
        def surface(i: int) -> str:
            return NULL_TOKEN if i == NULL else conditioning_vocab.tokens[i]

        with open(path, 'w', encoding='utf-8') as f:
            if header:
                f.write(header + '\n')
            for source in sorted(self.probs, key=surface):
                row = self.probs[source]
                for target in sorted(row, key=lambda t: (-row[t], generated_vocab.tokens[t])):
                    f.write(f"{surface(source)}\t{generated_vocab.tokens[target]}\t{row[target]:.12g}\n")

    @classmethod
    def from_lines(cls, lines: Iterable[str], conditioning_vocab: Vocabulary, generated_vocab: Vocabulary,
                   direction: str = SRC2TGT) -> 'TTable':
        probs: Dict[int, Dict[int, float]] = defaultdict(dict)
        for number, line in enumerate(lines, 1):
            parts = line.rstrip('\n').split('\t')
            if len(parts) != 3:
                raise ArtifactError(f"translation table line {number}: expected 3 tab-separated fields")
            source = NULL if parts[0] == NULL_TOKEN else conditioning_vocab.lookup(parts[0])
            target = generated_vocab.lookup(parts[1])
            probs[source][target] = probs[source].get(target, 0.0) + float(parts[2])
        return cls(dict(probs), direction)


@dataclass(frozen=True)
class AlignmentLinks:
    """Set of (source position, target position) links, 0-based"""
    links: FrozenSet[Tuple[int, int]] = frozenset()

    def __iter__(self):
        return iter(sorted(self.links))

    def __len__(self):
        return len(self.links)

    def __contains__(self, link):
        return link in self.links

    def transpose(self) -> 'AlignmentLinks':
        return AlignmentLinks(frozenset((j, i) for i, j in self.links))

    def to_pharaoh(self) -> str:
        return ' '.join(f"{i}-{j}" for i, j in sorted(self.links))

    @classmethod
    def from_pharaoh(cls, line: str) -> 'AlignmentLinks':
        links = set()
        for item in line.split():
            i, j = item.split('-')
            links.add((int(i), int(j)))
        return cls(frozenset(links))


def _oriented(pair: SentencePair, direction: str) -> Tuple[Sequence[int], Sequence[int]]:
    """(conditioning words, generated words) for the given direction"""
    if direction == SRC2TGT:
        return pair.source, pair.target
    if direction == TGT2SRC:
        return pair.target, pair.source
    raise ValueError(f"unknown alignment direction '{direction}'")


def _initial_table(oriented: List[Tuple[Sequence[int], Sequence[int]]]) -> Dict[int, Dict[int, float]]:
    """Uniform over co-occurring pairs"""
    cooccur: Dict[int, Set[int]] = defaultdict(set)
    for cond, gen in oriented:
        gen_set = set(gen)
        cooccur[NULL].update(gen_set)
        for c in set(cond):
            cooccur[c].update(gen_set)
    return {c: {g: 1.0 / len(targets) for g in targets} for c, targets in cooccur.items()}


def _expectation(probs: Dict[int, Dict[int, float]],
                 chunk: List[Tuple[Sequence[int], Sequence[int]]]) -> Tuple[Dict[int, Dict[int, float]], float]:
    """Expected counts and log-likelihood for one chunk of sentence pairs"""
    counts: Dict[int, Dict[int, float]] = defaultdict(lambda: defaultdict(float))
    log_likelihood = 0.0
    for cond, gen in chunk:
        conditioning = [NULL] + list(cond)
        log_likelihood -= len(gen) * math.log(len(conditioning))
        rows = [probs[c] for c in conditioning]
        for g in gen:
            scores = [row.get(g, 0.0) for row in rows]
            total = sum(scores)
            log_likelihood += math.log(total)
            for c, score in zip(conditioning, scores):
                if score > 0.0:
                    counts[c][g] += score / total
    return {c: dict(row) for c, row in counts.items()}, log_likelihood


def train_model1(pairs: Sequence[SentencePair], iterations: int = DEFAULT_EM_ITERATIONS,
                 direction: str = SRC2TGT, n_jobs: int = 1) -> TTable:
    """
    EM training of IBM Model 1.

    The log-likelihood reported for iteration k is computed in its E-step,
    i.e. under the table produced by iteration k-1.
    """
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    if not pairs:
        raise DataContractError("cannot train IBM Model 1 on an empty corpus")

    oriented = [_oriented(p, direction) for p in pairs]
    probs = _initial_table(oriented)
    log_likelihoods = []

    chunks = [oriented]
    if n_jobs != 1:
        workers = n_jobs if n_jobs > 0 else 8
        size = max(1, math.ceil(len(oriented) / workers))
        chunks = [oriented[i:i + size] for i in range(0, len(oriented), size)]

    for iteration in range(1, iterations + 1):
        if len(chunks) == 1:
            partials = [_expectation(probs, chunks[0])]
        else:
            partials = Parallel(n_jobs=n_jobs)(delayed(_expectation)(probs, chunk) for chunk in chunks)

        # merge in chunk order
        counts: Dict[int, Dict[int, float]] = defaultdict(lambda: defaultdict(float))
        log_likelihood = 0.0
        for chunk_counts, chunk_ll in partials:
            log_likelihood += chunk_ll
            for c, row in chunk_counts.items():
                merged = counts[c]
                for g, value in row.items():
                    merged[g] += value

        probs = {}
        for c, row in counts.items():
            total = sum(row.values())
            probs[c] = {g: value / total for g, value in row.items()}

        log_likelihoods.append(log_likelihood)
        logger.info(f"IBM1 {direction} iteration {iteration}/{iterations}: log-likelihood {log_likelihood:.6f}")

    return TTable(probs, direction, log_likelihoods)


def viterbi_align(ttable: TTable, pair: SentencePair) -> AlignmentLinks:
    """
    Best link per generated word, NULL links omitted.

    Links are expressed in the table's own frame: (conditioning position,
    generated position). For a tgt2src table the caller transposes.
    """
    cond, gen = _oriented(pair, ttable.direction)
    null_row = ttable.probs.get(NULL, {})
    rows = [ttable.probs.get(c, {}) for c in cond]
    links = set()
    for j, g in enumerate(gen):
        best_i, best = None, -1.0
        for i, row in enumerate(rows):
            score = row.get(g, SMOOTHING_FLOOR)
            if score > best:
                best, best_i = score, i
        # NULL ranks after every real position on ties
        if best_i is not None and null_row.get(g, SMOOTHING_FLOOR) <= best:
            links.add((best_i, j))
    return AlignmentLinks(frozenset(links))


def grow_diag_final_and(fwd: AlignmentLinks, rev: AlignmentLinks, l: int, m: int) -> AlignmentLinks:
    """Symmetrize two directional alignments given in the same (i, j) frame"""
    fwd_links = set(fwd.links)
    rev_links = set(rev.links)
    union = fwd_links | rev_links
    alignment = fwd_links & rev_links
    aligned_src = {i for i, _ in alignment}
    aligned_tgt = {j for _, j in alignment}

    def add(i: int, j: int):
        alignment.add((i, j))
        aligned_src.add(i)
        aligned_tgt.add(j)

    # grow-diag, to fixpoint
    added = True
    while added:
        added = False
        for i in range(l):
            for j in range(m):
                if (i, j) not in alignment:
                    continue
                for di, dj in NEIGHBORS:
                    ni, nj = i + di, j + dj
                    if (ni, nj) in union and (ni, nj) not in alignment \
                            and (ni not in aligned_src or nj not in aligned_tgt):
                        add(ni, nj)
                        added = True

    # final-and: both endpoints still unaligned
    for directional in (fwd_links, rev_links):
        for i, j in sorted(directional):
            if i not in aligned_src and j not in aligned_tgt:
                add(i, j)

    return AlignmentLinks(frozenset(alignment))


def symmetrized_alignments(pairs: Sequence[SentencePair], fwd_table: TTable, rev_table: TTable) -> List[AlignmentLinks]:
    """Viterbi in both directions, grow-diag-final-and per pair"""
    alignments = []
    for pair in pairs:
        fwd = viterbi_align(fwd_table, pair)
        rev = viterbi_align(rev_table, pair)
        if rev_table.direction == TGT2SRC:
            rev = rev.transpose()
        if fwd_table.direction == TGT2SRC:
            fwd = fwd.transpose()
        alignments.append(grow_diag_final_and(fwd, rev, len(pair.source), len(pair.target)))
    return alignments
