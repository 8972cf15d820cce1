"""
Beam search over sentence-level vocabularies, UNK replacement and scoring.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from nltk.translate.bleu_score import brevity_penalty, closest_ref_length
from nltk.util import ngrams

from utils.corpus import BOS, EOS, PAD, RESERVED_IDS, UNK, SentencePair, Vocabulary, top_common_words
from utils.errors import DataContractError, VocabularyContractError
from utils.lexicon import DEFAULT_TOP_N, WordDictionary
from utils.nmt_model import AttentionNMT
from utils.phrase import DEFAULT_TOP_K
from utils.target_vocab import SentenceVocab, VocabBuilder

logger = logging.getLogger(__name__)

DEFAULT_BEAM = 12
NEVER_EMITTED = (BOS, PAD)
BLEU_ORDER = 4


@dataclass
class DecodeConfig:
    beam: int = DEFAULT_BEAM
    max_len: int = 50
    common_top_n: int = 2000
    dict_top_n: int = DEFAULT_TOP_N
    phrase_top_k: int = DEFAULT_TOP_K
    length_norm: bool = False

    def __post_init__(self):
        if self.beam < 1:
            raise ValueError(f"beam must be >= 1, got {self.beam}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")


@dataclass
class Hypothesis:
    """Emitted ids exclude the closing </s>; attn_trace has one alpha per emitted id"""
    tokens: List[int]
    score: float
    state: np.ndarray = field(repr=False)
    attn_trace: List[np.ndarray] = field(default_factory=list, repr=False)
    finished: bool = False

    @property
    def partial(self) -> bool:
        return not self.finished

    def rank_score(self, length_norm: bool) -> float:
        return self.score / (len(self.tokens) + 1) if length_norm else self.score


def beam_search(model: AttentionNMT, x: Sequence[int], vocab: SentenceVocab,
                config: Optional[DecodeConfig] = None) -> List[Hypothesis]:
    """
    Ranked hypotheses for x, every emitted id drawn from `vocab`.

    Finished hypotheses go to a pool; search stops once the pool holds
    `beam` entries or after max_len steps. With nothing finished the live
    hypotheses are returned instead, flagged partial.
    """
    config = config or DecodeConfig()
    if EOS not in vocab:
        raise VocabularyContractError("sentence vocabulary lacks </s>")

    enc = model.encode(x)
    ids = vocab.global_ids
    size = len(ids)
    masked = [vocab.local(i) for i in NEVER_EMITTED if i in vocab]

    live = [Hypothesis([], 0.0, model.initial_state(enc))]
    completed: List[Hypothesis] = []

    for _ in range(config.max_len):
        steps = []
        scores = np.empty((len(live), size))
        for row, hyp in enumerate(live):
            y_prev = hyp.tokens[-1] if hyp.tokens else BOS
            state, log_probs = model.step(enc, hyp.state, y_prev, vocab)
            log_probs = log_probs.astype(np.float64)
            log_probs[masked] = -np.inf
            scores[row] = hyp.score + log_probs
            steps.append(state)

        # Width stays fixed at `beam`: </s> among the top `beam` expansions
        # finishes, the best `beam` open expansions carry on.
        flat = scores.reshape(-1)
        next_live = []
        for rank, index in enumerate(np.argsort(-flat, kind='stable')):
            score = float(flat[index])
            if not math.isfinite(score) or (rank >= config.beam and len(next_live) >= config.beam):
                break
            row, local = divmod(int(index), size)
            parent, state = live[row], steps[row]
            token = int(ids[local])
            if token == EOS:
                if rank < config.beam:
                    completed.append(Hypothesis(list(parent.tokens), score, state.s, list(parent.attn_trace), True))
            elif len(next_live) < config.beam:
                next_live.append(Hypothesis(parent.tokens + [token], score, state.s,
                                            parent.attn_trace + [state.alpha]))

        if len(completed) >= config.beam or not next_live:
            break
        live = next_live

    pool = completed if completed else live
    ranked = sorted(pool, key=lambda h: -h.rank_score(config.length_norm))
    if not completed:
        logger.warning(f"⚠️ No hypothesis reached </s> within {config.max_len} steps; returning partial output")
    return ranked


def unk_replace(hyp: Hypothesis, x: Sequence[int], dictionary: Optional[WordDictionary],
                src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                source_tokens: Optional[Sequence[str]] = None) -> List[str]:
    """
    Surface tokens with every <unk> replaced through its attention argmax:
    the dictionary's top candidate for that source word, else the source
    word itself (its original surface form when source_tokens is given).
    """
    if len(hyp.attn_trace) != len(hyp.tokens):
        raise DataContractError("hypothesis has no attention trace to replace unknown words with")
    output = []
    for token, alpha in zip(hyp.tokens, hyp.attn_trace):
        if token != UNK:
            output.append(tgt_vocab.tokens[token])
            continue
        position = int(np.argmax(alpha))
        source_id = x[position]
        candidates = dictionary.top(source_id, 1) if dictionary is not None and source_id not in RESERVED_IDS else []
        if candidates:
            output.append(tgt_vocab.tokens[candidates[0]])
        elif source_tokens is not None:
            output.append(source_tokens[position])
        else:
            output.append(src_vocab.tokens[source_id])
    return output


@dataclass
class BleuReport:
    """Corpus statistics in multi-bleu's layout"""
    score: float
    precisions: List[float]
    matches: List[int]
    totals: List[int]
    brevity_penalty: float
    hyp_len: int
    ref_len: int

    @property
    def ratio(self) -> float:
        return self.hyp_len / self.ref_len if self.ref_len else 0.0

    def to_text(self) -> str:
        precisions = '/'.join(f"{100 * p:.1f}" for p in self.precisions)
        return (f"BLEU = {self.score:.2f}, {precisions} (BP={self.brevity_penalty:.3f}, "
                f"ratio={self.ratio:.3f}, hyp_len={self.hyp_len}, ref_len={self.ref_len})")


def _check_corpus(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]]):
    if not candidates:
        raise DataContractError("cannot score an empty candidate set")
    if len(candidates) != len(references):
        raise DataContractError(f"{len(candidates)} candidates but {len(references)} references")


def bleu_report(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                smooth: bool = False) -> BleuReport:
    """
    Case-sensitive corpus BLEU-4 from clipped n-gram counts summed over the
    corpus. Unsmoothed, any order without a single match scores 0.0;
    `smooth` adds one to numerator and denominator of orders above one.
    """
    _check_corpus(candidates, references)
    matches = [0] * BLEU_ORDER
    totals = [0] * BLEU_ORDER
    hyp_len = ref_len = 0
    for candidate, reference in zip(candidates, references):
        candidate, reference = list(candidate), list(reference)
        hyp_len += len(candidate)
        ref_len += closest_ref_length([reference], len(candidate))
        for n in range(1, BLEU_ORDER + 1):
            counts = Counter(ngrams(candidate, n))
            ref_counts = Counter(ngrams(reference, n))
            matches[n - 1] += sum(min(count, ref_counts[gram]) for gram, count in counts.items())
            totals[n - 1] += max(0, len(candidate) - n + 1)

    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    bp = brevity_penalty(ref_len, hyp_len) if hyp_len else 0.0

    if matches[0] == 0 or (not smooth and min(matches) == 0):
        score = 0.0
    else:
        # +1 on orders above one when smoothing
        logs = [math.log(matches[0] / totals[0])]
        for m, t in zip(matches[1:], totals[1:]):
            logs.append(math.log((m + 1) / (t + 1)) if smooth else math.log(m / t))
        score = 100.0 * bp * math.exp(sum(logs) / BLEU_ORDER)
    return BleuReport(score, precisions, matches, totals, bp, hyp_len, ref_len)


def bleu4(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], smooth: bool = False) -> float:
    return bleu_report(candidates, references, smooth).score


def token_accuracy(hypotheses: Sequence[Sequence], references: Sequence[Sequence]) -> float:
    """Position-wise matches over sum of max(len(hyp), len(ref))"""
    if len(hypotheses) != len(references):
        raise DataContractError(f"{len(hypotheses)} hypotheses but {len(references)} references")
    matches = total = 0
    for hyp, ref in zip(hypotheses, references):
        matches += sum(1 for a, b in zip(hyp, ref) if a == b)
        total += max(len(hyp), len(ref))
    return matches / total if total else 1.0


@dataclass
class TranslationResult:
    outputs: List[List[str]]
    hypotheses: List[Hypothesis]
    vocab_sizes: List[int]
    token_accuracy: Optional[float] = None
    bleu: Optional[BleuReport] = None

    @property
    def avg_vocab(self) -> float:
        return float(np.mean(self.vocab_sizes)) if self.vocab_sizes else 0.0

    @property
    def partial_count(self) -> int:
        return sum(1 for h in self.hypotheses if h.partial)


def _decode_one(model: AttentionNMT, x: Sequence[int], vocab: SentenceVocab, config: DecodeConfig) -> Hypothesis:
    return beam_search(model, x, vocab, config)[0]


def decode_builder(dictionary: Optional[WordDictionary], phrases, tgt_vocab: Vocabulary, config: DecodeConfig,
                   use_dict: bool = True, use_phrases: bool = True, use_common: bool = True) -> VocabBuilder:
    return VocabBuilder(dictionary, phrases, top_common_words(tgt_vocab, config.common_top_n),
                        config.dict_top_n, config.phrase_top_k, use_dict, use_phrases, use_common)


def translate_corpus(model: AttentionNMT, sources: Sequence[Sequence[int]], builder: VocabBuilder,
                     config: DecodeConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary,
                     dictionary: Optional[WordDictionary] = None, unk_replacement: bool = True,
                     source_tokens: Optional[Sequence[Sequence[str]]] = None,
                     references: Optional[Sequence[Sequence[str]]] = None,
                     smooth_bleu: bool = False, n_jobs: int = 1) -> TranslationResult:
    """Decode every source sentence; output order follows input order"""
    vocabs = [builder.decode_vocab(x) for x in sources]
    if n_jobs == 1:
        best = [_decode_one(model, x, vocab, config) for x, vocab in zip(sources, vocabs)]
    else:
        best = Parallel(n_jobs=n_jobs)(
            delayed(_decode_one)(model, x, vocab, config) for x, vocab in zip(sources, vocabs)
        )

    outputs = []
    for k, (x, hyp) in enumerate(zip(sources, best)):
        if unk_replacement:
            surface = source_tokens[k] if source_tokens is not None else None
            outputs.append(unk_replace(hyp, x, dictionary, src_vocab, tgt_vocab, surface))
        else:
            outputs.append(tgt_vocab.decode(hyp.tokens))

    result = TranslationResult(outputs, best, [len(v) for v in vocabs])
    if references is not None:
        result.token_accuracy = token_accuracy(outputs, references)
        result.bleu = bleu_report(outputs, references, smooth_bleu)
    logger.info(f"📊 Decoded {len(sources)} sentences, avg |V_o| {result.avg_vocab:.1f}, "
                f"{result.partial_count} partial")
    return result


def write_attention_dump(path: str, hypotheses: Sequence[Hypothesis]):
    """Per sentence a `# sentence k` line, then `t i*` per emitted token"""
    with open(path, 'w', encoding='utf-8') as f:
        for k, hyp in enumerate(hypotheses):
            f.write(f"# sentence {k}\n")
            for t, alpha in enumerate(hyp.attn_trace):
                f.write(f"{t} {int(np.argmax(alpha))}\n")


def decode_sweep(model: AttentionNMT, pairs: Sequence[SentencePair], dictionary: Optional[WordDictionary],
                 phrases, src_vocab: Vocabulary, tgt_vocab: Vocabulary, config: DecodeConfig,
                 common_sizes: Sequence[int], n_jobs: int = 1, unk_replacement: bool = True,
                 source_tokens: Optional[Sequence[Sequence[str]]] = None,
                 references: Optional[Sequence[Sequence[str]]] = None,
                 smooth_bleu: bool = False) -> pd.DataFrame:
    """Decode the same set once per common_top_n; one row per size"""
    if references is None:
        references = [tgt_vocab.decode(p.target) for p in pairs]
    sources = [p.source for p in pairs]
    rows: List[Dict] = []
    for n in common_sizes:
        sized = replace(config, common_top_n=n)
        builder = decode_builder(dictionary, phrases, tgt_vocab, sized)
        result = translate_corpus(model, sources, builder, sized, src_vocab, tgt_vocab, dictionary,
                                  unk_replacement=unk_replacement, source_tokens=source_tokens,
                                  references=references, smooth_bleu=smooth_bleu, n_jobs=n_jobs)
        rows.append({
            'common_top_n': n,
            'avg_vocab': result.avg_vocab,
            'token_accuracy': result.token_accuracy,
            'bleu': result.bleu.score,
        })
        logger.info(f"📊 common_top_n={n}: avg |V_o| {result.avg_vocab:.1f}, accuracy {result.token_accuracy:.4f}")
    return pd.DataFrame(rows)
