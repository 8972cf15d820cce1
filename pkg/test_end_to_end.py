"""
Longer runs on synthetic corpora and the timing benchmark.
Deselected by default; run with `pytest -m slow`.
"""

import numpy as np
import pytest

from utils.align import TGT2SRC, symmetrized_alignments, train_model1
from utils.benchmark import BenchConfig, run_benchmark
from utils.corpus import TextPair, build_vocabulary, encode_corpus, top_common_words
from utils.decoder import DecodeConfig, beam_search, decode_builder, decode_sweep, translate_corpus
from utils.lexicon import extract_dictionary
from utils.phrase import extract_phrases
from utils.pipeline import cmd_align, cmd_lexicon, cmd_phrases, cmd_toy, cmd_train
from utils.pipeline_config import PipelineConfig
from utils.synthetic_corpus import ambiguous_task, copy_task
from utils.target_vocab import DECODE, TRAIN, VocabBuilder, coverage_stats
from utils.trainer import TrainConfig, train

pytestmark = pytest.mark.slow


def text_pairs(src_lines, tgt_lines):
    return [TextPair(tuple(s.split()), tuple(t.split()), k) for k, (s, t) in enumerate(zip(src_lines, tgt_lines))]


def prepared(src_lines, tgt_lines, em_iters=8):
    corpus = text_pairs(src_lines, tgt_lines)
    src_vocab = build_vocabulary([p.source for p in corpus], 1000)
    tgt_vocab = build_vocabulary([p.target for p in corpus], 1000)
    pairs = encode_corpus(corpus, src_vocab, tgt_vocab)
    fwd = train_model1(pairs, em_iters)
    rev = train_model1(pairs, em_iters, TGT2SRC)
    dictionary = extract_dictionary(fwd)
    phrases = extract_phrases(pairs, symmetrized_alignments(pairs, fwd, rev))
    return pairs, src_vocab, tgt_vocab, dictionary, phrases


def test_copy_task_is_learned_and_beam_search_recovers_it():
    src, tgt = copy_task(300, n_symbols=10, min_len=3, max_len=6, seed=1)
    held_out, _ = copy_task(40, n_symbols=10, min_len=3, max_len=6, seed=2)
    pairs, src_vocab, tgt_vocab, dictionary, phrases = prepared(src, tgt)
    config = TrainConfig.for_toy_corpus(d_emb=32, d_h=32, d_s=32, d_o=32, d_att=32, epochs=50, seed=3)
    model = config.new_model(len(src_vocab), len(tgt_vocab))

    result = train(model, pairs, dictionary, phrases, set(), config)

    assert all(np.isfinite(result.losses))
    decode = DecodeConfig(beam=5, max_len=10, common_top_n=0)
    builder = decode_builder(dictionary, phrases, tgt_vocab, decode)
    sources = [src_vocab.encode(line.split()) for line in held_out]
    translation = translate_corpus(model, sources, builder, decode, src_vocab, tgt_vocab, dictionary)
    exact = sum(output == line.split() for output, line in zip(translation.outputs, held_out))
    assert exact >= 0.95 * len(held_out)

    greedy = DecodeConfig(beam=1, max_len=10, common_top_n=0)
    for x in sources:
        vocab = builder.decode_vocab(x)
        wide = beam_search(model, x, vocab, decode)[0]
        narrow = beam_search(model, x, vocab, greedy)[0]
        assert wide.score >= narrow.score - 1e-9


def test_copy_loss_falls_every_epoch_at_first():
    src, tgt = copy_task(50, n_symbols=30, seed=4)
    pairs, src_vocab, tgt_vocab, dictionary, phrases = prepared(src, tgt)
    config = TrainConfig.for_toy_corpus(d_emb=16, d_h=16, d_s=16, d_o=16, d_att=16, epochs=30, seed=5)
    model = config.new_model(len(src_vocab), len(tgt_vocab))

    result = train(model, pairs, dictionary, phrases, top_common_words(tgt_vocab, 2000), config)

    first = result.losses[:5]
    assert all(later < earlier for earlier, later in zip(first, first[1:]))
    assert result.losses[-1] < result.losses[0]


def test_train_stage_cuts_the_copy_loss_below_a_fifth(tmp_path):
    config = PipelineConfig(
        work_dir=str(tmp_path / 'work'), log_dir=str(tmp_path / 'logs'),
        train_src=str(tmp_path / 'toy.src'), train_tgt=str(tmp_path / 'toy.tgt'),
        toy_task='copy', toy_pairs=200, em_iters=8, common_top_n=50,
        d_emb=32, d_h=32, d_s=32, d_o=32, d_att=32, batch_size=4, epsilon=1e-4, epochs=30,
    )
    for command in (cmd_toy, cmd_align, cmd_lexicon, cmd_phrases):
        command(config)

    result = cmd_train(config)

    assert len(result.losses) == 30
    assert result.losses[-1] < 0.2 * result.losses[0]


def test_ambiguous_task_dictionary_covers_both_senses():
    src, tgt = ambiguous_task(500, seed=2)
    pairs, _, _, dictionary, phrases = prepared(src, tgt, em_iters=10)

    one = coverage_stats(pairs, VocabBuilder(dictionary, None, set(), top_n_dict=1, use_phrases=False), DECODE)
    two = coverage_stats(pairs, VocabBuilder(dictionary, None, set(), top_n_dict=2, use_phrases=False), DECODE)
    with_phrases = coverage_stats(pairs, VocabBuilder(dictionary, phrases, set(), top_n_dict=2), DECODE)
    training = coverage_stats(pairs, VocabBuilder(dictionary, phrases, set(), top_n_dict=2), TRAIN)

    assert two.word_level_ratio > one.word_level_ratio
    assert two.word_level_ratio > 0.9
    assert with_phrases.word_level_ratio >= two.word_level_ratio
    assert training.word_level_ratio == 1.0
    assert training.full_sentence_ratio == 1.0


def test_common_word_sweep_grows_the_vocabulary_but_not_the_accuracy():
    src, tgt = ambiguous_task(300, seed=7)
    # single-word filler pairs push |V_y| past 200 target words
    filler = [f"z{k}" for k in range(300)], [f"f{k}" for k in range(300)]
    pairs, src_vocab, tgt_vocab, dictionary, phrases = prepared(src + filler[0], tgt + filler[1], em_iters=10)
    assert len(tgt_vocab) > 204
    config = TrainConfig.for_toy_corpus(d_emb=32, d_h=32, d_s=32, d_o=32, d_att=32, epochs=50, seed=8)
    model = config.new_model(len(src_vocab), len(tgt_vocab))
    train(model, pairs, dictionary, phrases, top_common_words(tgt_vocab, 2000), config)

    test_src, test_tgt = ambiguous_task(100, seed=9)
    held_out = encode_corpus(text_pairs(test_src, test_tgt), src_vocab, tgt_vocab)
    table = decode_sweep(model, held_out, dictionary, phrases, src_vocab, tgt_vocab,
                         DecodeConfig(beam=1, max_len=12), [50, 200, 2000])

    sizes = list(table['avg_vocab'])
    assert sizes[0] < sizes[1] < sizes[2]
    assert table['token_accuracy'].max() - table['token_accuracy'].min() <= 0.01


def test_restricted_output_layer_is_faster_than_full_softmax():
    config = BenchConfig(tgt_vocab_size=50000, sizes=[2000, 8000, 16000, 32000], train_sizes=[2000, 30000], d=32,
                         runs=5, warmup=1, steps=50, train_pairs=20)

    report = run_benchmark(config)

    by_size = report.output_layer.set_index('vocab_size')
    assert by_size.loc[2000, 'speedup_vs_full'] >= 5.0
    assert by_size.loc[50000, 'speedup_vs_full'] == 1.0
    assert report.r_squared > 0.95
    assert list(report.training['batch_vocab']) == [2000.0, 30000.0, 50000.0]
    assert list(report.training['full_softmax']) == [False, False, True]
    assert report.training['seconds'].iloc[1] > report.training['seconds'].iloc[0]
    assert report.rss_mb > 0.0
    assert 'rss_mb' in report.to_text()


def decode_accuracy(model, dictionary, phrases, src_vocab, tgt_vocab, common_top_n, test_src, test_tgt):
    decode = DecodeConfig(beam=1, max_len=12, common_top_n=common_top_n, dict_top_n=10, phrase_top_k=10)
    builder = decode_builder(dictionary, phrases, tgt_vocab, decode)
    sources = [src_vocab.encode(line.split()) for line in test_src]
    references = [line.split() for line in test_tgt]
    return translate_corpus(model, sources, builder, decode, src_vocab, tgt_vocab, dictionary,
                            references=references).token_accuracy


def test_ambiguous_task_reaches_ninety_percent_with_sentence_vocabularies():
    src, tgt = ambiguous_task(500, seed=11)
    test_src, test_tgt = ambiguous_task(100, seed=12)
    pairs, src_vocab, tgt_vocab, dictionary, phrases = prepared(src, tgt, em_iters=10)
    common = top_common_words(tgt_vocab, 50)

    restricted_config = TrainConfig.for_toy_corpus(epochs=50, seed=13)
    restricted = restricted_config.new_model(len(src_vocab), len(tgt_vocab))
    train(restricted, pairs, dictionary, phrases, common, restricted_config)
    full_config = TrainConfig.for_toy_corpus(epochs=50, seed=13, full_softmax=True)
    full = full_config.new_model(len(src_vocab), len(tgt_vocab))
    train(full, pairs, dictionary, phrases, common, full_config)

    accuracy = decode_accuracy(restricted, dictionary, phrases, src_vocab, tgt_vocab, 50, test_src, test_tgt)
    baseline = decode_accuracy(full, dictionary, phrases, src_vocab, tgt_vocab, len(tgt_vocab), test_src, test_tgt)

    assert accuracy >= 0.9
    assert accuracy >= baseline - 0.02
