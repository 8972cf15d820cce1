"""
Pipeline stages behind the vocab_sniper command line.

Each cmd_* reads its inputs from the paths in PipelineConfig, checks the
headers of upstream artifacts and writes its own artifacts with a header.
"""

import logging
import os
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from utils.align import SRC2TGT, TGT2SRC, AlignmentLinks, TTable, symmetrized_alignments, train_model1
from utils.artifacts import ensure_parent, header_line, read_artifact, stage_hash, write_artifact
from utils.benchmark import BenchConfig, run_benchmark
from utils.corpus import (FIRST_WORD_ID, SentencePair, TextPair, Vocabulary, build_vocabulary, encode_corpus,
                          load_parallel, top_common_words)
from utils.decoder import (DecodeConfig, TranslationResult, bleu_report, decode_builder, decode_sweep,
                           token_accuracy, translate_corpus, write_attention_dump)
from utils.errors import ArtifactError, CorpusError
from utils.lexicon import WordDictionary, extract_dictionary
from utils.nmt_model import load_checkpoint
from utils.phrase import PhraseSetTable, extract_phrases
from utils.pipeline_config import PipelineConfig
from utils.synthetic_corpus import generate, write_corpus
from utils.target_vocab import DECODE, TRAIN, VocabBuilder, coverage_stats
from utils.trainer import TrainConfig, TrainResult, train

logger = logging.getLogger(__name__)


# shared loaders

def _corpus(config: PipelineConfig) -> List[TextPair]:
    text_pairs, _ = load_parallel(config.train_src, config.train_tgt, config.max_len)
    if not text_pairs:
        raise CorpusError(f"no usable sentence pairs in {config.train_src} / {config.train_tgt}")
    return text_pairs


def _vocabs(config: PipelineConfig) -> Tuple[Vocabulary, Vocabulary]:
    for path in (config.src_vocab, config.tgt_vocab):
        if not os.path.exists(path):
            raise ArtifactError(f"vocabulary {path} is missing; run the align stage first")
    return Vocabulary.load(config.src_vocab), Vocabulary.load(config.tgt_vocab)


def _encoded_corpus(config: PipelineConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> List[SentencePair]:
    return encode_corpus(_corpus(config), src_vocab, tgt_vocab)


def _dictionary(config: PipelineConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> WordDictionary:
    lines = read_artifact(config.dict_path, 'lexicon', config, config.force)
    return WordDictionary.from_lines(lines, src_vocab, tgt_vocab, config.dict_max_candidates)


def _phrases(config: PipelineConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> PhraseSetTable:
    lines = read_artifact(config.phrases, 'phrases', config, config.force)
    return PhraseSetTable.from_lines(lines, src_vocab, tgt_vocab, config.max_phrase_src, config.max_phrase_tgt)


def _read_tokens(path: str) -> List[List[str]]:
    with open(path, 'r', encoding='utf-8') as f:
        return [line.split() for line in f.read().splitlines()]


def _write_table(path: str, stage: str, config: PipelineConfig, frame: pd.DataFrame):
    write_artifact(path, stage, config, frame.to_string(index=False).splitlines())


# stages

def cmd_toy(config: PipelineConfig) -> Dict[str, str]:
    """Write a synthetic training corpus and, when test paths are set, a held-out set"""
    src_lines, tgt_lines = generate(config.toy_task, config.toy_pairs, seed=config.seed)
    write_corpus(src_lines, tgt_lines, config.train_src, config.train_tgt)
    written = {'train_src': config.train_src, 'train_tgt': config.train_tgt}
    if config.test_src and config.test_tgt:
        src_lines, tgt_lines = generate(config.toy_task, config.toy_test_pairs, seed=config.seed + 1)
        write_corpus(src_lines, tgt_lines, config.test_src, config.test_tgt)
        written.update(test_src=config.test_src, test_tgt=config.test_tgt)
    return written


def cmd_align(config: PipelineConfig) -> Dict[str, str]:
    """Vocabularies, both Model-1 tables and grow-diag-final-and alignments"""
    text_pairs = _corpus(config)
    src_vocab = build_vocabulary([p.source for p in text_pairs], config.src_vocab_cap + FIRST_WORD_ID)
    tgt_vocab = build_vocabulary([p.target for p in text_pairs], config.tgt_vocab_cap + FIRST_WORD_ID)
    for path in (config.src_vocab, config.tgt_vocab):
        ensure_parent(path)
    src_vocab.save(config.src_vocab)
    tgt_vocab.save(config.tgt_vocab)

    pairs = encode_corpus(text_pairs, src_vocab, tgt_vocab)
    fwd = train_model1(pairs, config.em_iters, SRC2TGT, config.n_jobs)
    rev = train_model1(pairs, config.em_iters, TGT2SRC, config.n_jobs)
    alignments = symmetrized_alignments(pairs, fwd, rev)

    header = header_line(config, 'align')
    ensure_parent(config.ttable)
    fwd.save(config.ttable, src_vocab, tgt_vocab, header)
    rev.save(config.ttable_rev, tgt_vocab, src_vocab, header)
    write_artifact(config.alignments, 'align', config, [a.to_pharaoh() for a in alignments])
    logger.info(f"✅ Aligned {len(pairs)} pairs; final log-likelihood {fwd.log_likelihoods[-1]:.4f} (src2tgt), "
                f"{rev.log_likelihoods[-1]:.4f} (tgt2src)")
    return {'src_vocab': config.src_vocab, 'tgt_vocab': config.tgt_vocab, 'ttable': config.ttable,
            'ttable_rev': config.ttable_rev, 'alignments': config.alignments}


def cmd_lexicon(config: PipelineConfig) -> Dict[str, str]:
    src_vocab, tgt_vocab = _vocabs(config)
    lines = read_artifact(config.ttable, 'align', config, config.force)
    ttable = TTable.from_lines(lines, src_vocab, tgt_vocab, SRC2TGT)
    dictionary = extract_dictionary(ttable, config.dict_max_candidates, config.dict_min_prob)
    ensure_parent(config.dict_path)
    dictionary.save(config.dict_path, src_vocab, tgt_vocab, header_line(config, 'lexicon'))
    return {'dict_path': config.dict_path}


def cmd_phrases(config: PipelineConfig) -> Dict[str, str]:
    src_vocab, tgt_vocab = _vocabs(config)
    lines = read_artifact(config.alignments, 'align', config, config.force)
    pairs = _encoded_corpus(config, src_vocab, tgt_vocab)
    if len(lines) != len(pairs):
        raise ArtifactError(f"{config.alignments} has {len(lines)} alignments for {len(pairs)} sentence pairs")
    alignments = [AlignmentLinks.from_pharaoh(line) for line in lines]
    table = extract_phrases(pairs, alignments, config.max_phrase_src, config.max_phrase_tgt, config.n_jobs)
    ensure_parent(config.phrases)
    table.save(config.phrases, src_vocab, tgt_vocab, header_line(config, 'phrases'))
    return {'phrases': config.phrases}


def _stats_pairs(config: PipelineConfig, mode: str, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> List[SentencePair]:
    if mode == DECODE and config.test_src and config.test_tgt:
        text_pairs, _ = load_parallel(config.test_src, config.test_tgt, config.max_len)
        return encode_corpus(text_pairs, src_vocab, tgt_vocab)
    return _encoded_corpus(config, src_vocab, tgt_vocab)


def cmd_stats(config: PipelineConfig, mode: Optional[str] = None, sweep: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """
    Reference coverage and vocabulary sizes, one row per ingredient mix and
    dictionary top-n. Phrase sets always use phrase_top_k. In train mode
    `coverage_no_ref` is the coverage of the same mix without the reference
    words.
    """
    mode = mode or config.stats_mode
    sweep = list(sweep) if sweep is not None else config.sweep('stats_sweep')
    src_vocab, tgt_vocab = _vocabs(config)
    dictionary = _dictionary(config, src_vocab, tgt_vocab)
    phrases = _phrases(config, src_vocab, tgt_vocab)
    pairs = _stats_pairs(config, mode, src_vocab, tgt_vocab)
    common = top_common_words(tgt_vocab, config.common_top_n)

    too_deep = [n for n in sweep if n > dictionary.max_candidates]
    if too_deep:
        raise ArtifactError(f"stats_sweep {too_deep} exceeds the {dictionary.max_candidates} candidates stored per "
                            f"source word (rerun lexicon with a larger dict_max_candidates)")

    mixes = [('D', True, False, False), ('P', False, True, False), ('D+P', True, True, False),
             ('D+P+T', True, True, True)]
    rows = []
    for n in sweep:
        for label, use_dict, use_phrases, use_common in mixes:
            builder = VocabBuilder(dictionary, phrases, common, n, config.phrase_top_k,
                                   use_dict, use_phrases, use_common, config.batch_size)
            report = coverage_stats(pairs, builder, mode)
            row = {'mix': label, 'top_n': n, 'phrase_top_k': config.phrase_top_k,
                   'coverage': report.word_level_ratio}
            if mode == TRAIN:
                row['coverage_no_ref'] = coverage_stats(pairs, builder, DECODE).word_level_ratio
            row.update(full_sentence=report.full_sentence_ratio, avg_sentence_vocab=report.avg_sentence_vocab,
                       avg_batch_vocab=report.avg_batch_vocab, avg_reference_vocab=report.avg_reference_vocab)
            rows.append(row)
    frame = pd.DataFrame(rows)
    _write_table(config.stats_out, 'stats', config, frame)

    if config.vocab_dump:
        builder = VocabBuilder(dictionary, phrases, common, config.dict_top_n, config.phrase_top_k,
                               batch_size=config.batch_size)
        lines = [(builder.train_vocab(p) if mode == TRAIN else builder.decode_vocab(p.source)).dump_line(p.pair_id)
                 for p in pairs]
        write_artifact(config.vocab_dump, 'stats', config, lines)
    logger.info(f"📊 Coverage table ({mode}) written to {config.stats_out}")
    return frame


def train_config_from(config: PipelineConfig) -> TrainConfig:
    return TrainConfig(
        d_emb=config.d_emb, d_h=config.d_h, d_s=config.d_s, d_o=config.d_o, d_att=config.d_att,
        out_depth=config.out_depth, rho=config.rho, epsilon=config.epsilon, lr=config.lr,
        batch_size=config.batch_size, epochs=config.epochs, seed=config.seed,
        freeze_embeddings_after=config.freeze_embeddings_after, top_n_dict=config.dict_top_n,
        top_k_phrase=config.phrase_top_k, full_softmax=config.full_softmax,
        force_batch_vocab_size=config.force_batch_vocab_size, max_batches=config.max_batches, dtype=config.dtype,
    )


def cmd_train(config: PipelineConfig, monitor=None) -> TrainResult:
    src_vocab, tgt_vocab = _vocabs(config)
    dictionary = _dictionary(config, src_vocab, tgt_vocab)
    phrases = _phrases(config, src_vocab, tgt_vocab)
    pairs = _encoded_corpus(config, src_vocab, tgt_vocab)
    train_config = train_config_from(config)
    model = train_config.new_model(len(src_vocab), len(tgt_vocab))
    ensure_parent(config.model)
    ensure_parent(config.train_log)
    meta = {
        'vocab_hashes': {'src': src_vocab.content_hash(), 'tgt': tgt_vocab.content_hash()},
        'config_hash': stage_hash(config, 'train'),
    }
    return train(model, pairs, dictionary, phrases, top_common_words(tgt_vocab, config.common_top_n),
                 train_config, train_log_path=config.train_log, checkpoint_path=config.model,
                 checkpoint_meta=meta, monitor=monitor, log_header=header_line(config, 'train'))


def decode_config_from(config: PipelineConfig) -> DecodeConfig:
    return DecodeConfig(config.beam, config.decode_max_len, config.decode_common_top_n, config.dict_top_n,
                        config.phrase_top_k, config.length_norm)


def cmd_decode(config: PipelineConfig) -> TranslationResult:
    """Translate test_src; score against test_tgt when it is configured"""
    src_vocab, tgt_vocab = _vocabs(config)
    model, meta = load_checkpoint(config.model)
    current = {'src': src_vocab.content_hash(), 'tgt': tgt_vocab.content_hash()}
    if meta.get('vocab_hashes') != current:
        raise ArtifactError(f"checkpoint {config.model} was trained with other vocabularies; rerun train")
    expected = stage_hash(config, 'train')
    if meta.get('config_hash') != expected:
        if not config.force:
            raise ArtifactError(f"stale checkpoint: config_hash {meta.get('config_hash')} != {expected} "
                                f"(rerun train or pass --force)")
        logger.warning(f"⚠️ Decoding with a checkpoint from another training config under --force")

    if not config.test_src:
        raise ArtifactError("no test_src configured for decoding")
    if not os.path.exists(config.test_src):
        raise ArtifactError(f"test source {config.test_src} is missing")
    source_tokens = _read_tokens(config.test_src)
    references = None
    if config.test_tgt and os.path.exists(config.test_tgt):
        references = _read_tokens(config.test_tgt)
        if len(references) != len(source_tokens):
            raise CorpusError(f"line count {len(source_tokens)} != {len(references)} "
                              f"({config.test_src} vs {config.test_tgt})")

    dictionary = _dictionary(config, src_vocab, tgt_vocab)
    phrases = _phrases(config, src_vocab, tgt_vocab)
    decode_config = decode_config_from(config)
    builder = decode_builder(dictionary, phrases, tgt_vocab, decode_config)

    # empty source lines stay empty in the output
    keep = [k for k, tokens in enumerate(source_tokens) if tokens]
    sources = [tuple(src_vocab.encode(source_tokens[k])) for k in keep]
    result = translate_corpus(model, sources, builder, decode_config, src_vocab, tgt_vocab, dictionary,
                              unk_replacement=config.unk_replace,
                              source_tokens=[source_tokens[k] for k in keep], n_jobs=config.n_jobs)
    outputs: List[List[str]] = [[] for _ in source_tokens]
    for k, output in zip(keep, result.outputs):
        outputs[k] = output
    result.outputs = outputs

    ensure_parent(config.output)
    with open(config.output, 'w', encoding='utf-8') as f:
        f.writelines(' '.join(tokens) + '\n' for tokens in outputs)
    if config.attention_dump:
        ensure_parent(config.attention_dump)
        write_attention_dump(config.attention_dump, result.hypotheses)

    logger.info(f"📊 avg |V_o| = {result.avg_vocab:.1f} (common_top_n={config.decode_common_top_n})")
    if references is not None:
        result.token_accuracy = token_accuracy(outputs, references)
        result.bleu = bleu_report(outputs, references, config.smooth_bleu)
        logger.info(f"📊 {result.bleu.to_text()}{' (+1 smoothed)' if config.smooth_bleu else ''}")
        logger.info(f"📊 token accuracy = {result.token_accuracy:.4f}")

        sizes = config.sweep('decode_sweep')
        if sizes:
            test_pairs = [SentencePair(tuple(src_vocab.encode(source_tokens[k])),
                                       tuple(tgt_vocab.encode(references[k])), k) for k in keep]
            frame = decode_sweep(model, test_pairs, dictionary, phrases, src_vocab, tgt_vocab, decode_config,
                                 sizes, config.n_jobs, unk_replacement=config.unk_replace,
                                 source_tokens=[source_tokens[k] for k in keep],
                                 references=[references[k] for k in keep], smooth_bleu=config.smooth_bleu)
            _write_table(config.sweep_out, 'decode', config, frame)
    return result


def bench_config_from(config: PipelineConfig) -> BenchConfig:
    return BenchConfig(tgt_vocab_size=config.bench_vocab_size, sizes=config.sweep('bench_sweep'),
                       train_sizes=config.sweep('bench_train_sizes'), d=config.bench_dim, runs=config.bench_runs,
                       warmup=config.bench_warmup, steps=config.bench_steps, train_pairs=config.bench_train_pairs,
                       seed=config.seed)


def cmd_bench(config: PipelineConfig):
    report = run_benchmark(bench_config_from(config))
    write_artifact(config.bench_out, 'bench', config, report.to_text().splitlines())
    return report


COMMANDS = {
    'toy': cmd_toy,
    'align': cmd_align,
    'lexicon': cmd_lexicon,
    'phrases': cmd_phrases,
    'stats': cmd_stats,
    'train': cmd_train,
    'decode': cmd_decode,
    'bench': cmd_bench,
}
