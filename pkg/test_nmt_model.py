"""
Attention encoder-decoder: restricted output layer, gradients, checkpoints
"""

import joblib
import numpy as np
import pytest

from utils.corpus import BOS, EOS, SentencePair
from utils.errors import ArtifactError, DataContractError, VocabularyContractError
from utils.nmt_model import (
    AttentionNMT, Gradients, ModelDims, gradient_check, load_checkpoint, save_checkpoint,
)
from utils.target_vocab import SentenceVocab, build_full_vocab

TINY = dict(d_emb=3, d_h=4, d_s=5, d_o=4, d_att=3)


def tiny_model(seed=0, out_depth=1, init_scale=0.3):
    dims = ModelDims(src_vocab_size=7, tgt_vocab_size=9, out_depth=out_depth, **TINY)
    return AttentionNMT.initialize(dims, seed=seed, init_scale=init_scale)


def test_shapes_and_validation():
    model = tiny_model(out_depth=2)

    assert model.params['dec_W'].shape == (15, 3 + 8)
    assert model.params['proj_W'].shape == (9, 4)
    assert 'out_deep1_W' in model.params
    with pytest.raises(ValueError):
        ModelDims(src_vocab_size=7, tgt_vocab_size=0)


def test_constructor_rejects_wrong_layout():
    model = tiny_model()
    params = dict(model.params)
    params['proj_b'] = np.zeros(3)

    with pytest.raises(ArtifactError):
        AttentionNMT(params, model.dims)


def test_initialization_is_seeded():
    assert tiny_model(seed=3).embedding_hash() == tiny_model(seed=3).embedding_hash()
    assert tiny_model(seed=3).embedding_hash() != tiny_model(seed=4).embedding_hash()


def test_encoder_rejects_empty_and_out_of_range_sources():
    model = tiny_model()

    with pytest.raises(DataContractError):
        model.encode([])
    with pytest.raises(DataContractError):
        model.encode([4, 7])


def test_encoder_is_symmetric_with_tied_directions():
    model = tiny_model(seed=1)
    for part in ('W', 'U', 'b'):
        model.params[f'enc_bwd_{part}'] = model.params[f'enc_fwd_{part}'].copy()
    H = model.dims.d_h

    enc = model.encode([4, 5, 6, 5, 4])

    for i in range(5):
        assert np.allclose(enc.h[i, :H], enc.h[4 - i, H:])


def test_attention_weights_sum_to_one():
    model = tiny_model(seed=2)
    enc = model.encode([4, 5, 6])
    s0 = model.initial_state(enc)

    alpha, context = model.attend(s0, enc, model.params['tgt_embed'][BOS])

    assert alpha.shape == (3,)
    assert np.all(alpha >= 0.0)
    assert alpha.sum() == pytest.approx(1.0)
    assert np.allclose(context, alpha @ enc.h)


def test_restricted_softmax_is_renormalized_full_softmax():
    model = tiny_model(seed=5)
    enc = model.encode([4, 6])
    s0 = model.initial_state(enc)
    _, context = model.attend(s0, enc, model.params['tgt_embed'][BOS])
    s1 = model.decode_step(s0, BOS, context)
    vocab = SentenceVocab([5, 8])

    full = model.output_distribution(s1, BOS, context)
    restricted = model.output_distribution(s1, BOS, context, vocab)

    expected = full[vocab.global_ids] / full[vocab.global_ids].sum()
    assert restricted.sum() == pytest.approx(1.0)
    assert np.allclose(restricted, expected)


def test_restricted_softmax_matches_on_random_subsets():
    rng = np.random.default_rng(21)
    for trial in range(100):
        vocab_size = int(rng.integers(8, 201))
        dims = ModelDims(src_vocab_size=6, tgt_vocab_size=vocab_size, **TINY)
        model = AttentionNMT.initialize(dims, seed=trial, init_scale=1.0)
        s = rng.uniform(-1.0, 1.0, size=dims.d_s)
        context = rng.uniform(-1.0, 1.0, size=2 * dims.d_h)
        y_prev = int(rng.integers(0, vocab_size))
        subset = rng.choice(np.arange(4, vocab_size), size=int(rng.integers(1, vocab_size - 3)), replace=False)
        vocab = SentenceVocab(int(i) for i in subset)

        full = model.output_distribution(s, y_prev, context)
        restricted = model.output_distribution(s, y_prev, context, vocab)

        expected = full[vocab.global_ids] / full[vocab.global_ids].sum()
        assert np.allclose(restricted, expected, rtol=0.0, atol=1e-6)


def test_step_log_probs_match_output_distribution():
    model = tiny_model(seed=6)
    enc = model.encode([4, 5])
    s0 = model.initial_state(enc)
    vocab = SentenceVocab([6, 7])

    state, log_probs = model.step(enc, s0, BOS, vocab)

    expected = model.output_distribution(state.s, BOS, state.context, vocab)
    assert np.allclose(np.exp(log_probs), expected)


def test_output_logits_read_only_requested_rows():
    model = tiny_model(seed=7)
    o = np.ones(model.dims.d_o)
    rows = np.array([0, 2, 5])
    before = model.output_logits(o, rows)

    model.params['proj_W'][[1, 3, 4, 6, 7, 8]] = np.nan
    after = model.output_logits(o, rows)

    assert np.array_equal(before, after)


def test_decode_step_saturated_update_gate_keeps_state():
    model = tiny_model(seed=8)
    S = model.dims.d_s
    model.params['dec_b'][S:2 * S] = 50.0
    s_prev = np.linspace(-0.5, 0.5, S)
    context = np.ones(2 * model.dims.d_h)

    s = model.decode_step(s_prev, 5, context)

    assert np.allclose(s, s_prev)


def test_decode_step_of_zero_model_stays_at_zero():
    model = AttentionNMT.zeros(ModelDims(src_vocab_size=7, tgt_vocab_size=9, **TINY))

    s = model.decode_step(np.zeros(model.dims.d_s), 5, np.zeros(2 * model.dims.d_h))

    assert np.array_equal(s, np.zeros(model.dims.d_s))


def test_sentence_loss_matches_step_by_step_scoring():
    model = tiny_model(seed=9)
    pair = SentencePair((4, 5, 6), (7, 8), 0)
    vocab = SentenceVocab([7, 8, 5])

    enc = model.encode(pair.source)
    s = model.initial_state(enc)
    total = 0.0
    for y_prev, gold in zip((BOS,) + pair.target, pair.target + (EOS,)):
        state, log_probs = model.step(enc, s, y_prev, vocab)
        total -= log_probs[vocab.local(gold)]
        s = state.s

    assert model.sentence_loss(pair, vocab) == pytest.approx(total)


@pytest.mark.parametrize('seed', range(4))
def test_loss_never_drops_when_the_vocabulary_grows(seed):
    model = tiny_model(seed=seed, init_scale=0.5)
    pair = SentencePair((4, 5, 6), (7, 8), 0)
    nested = [SentenceVocab([7, 8]), SentenceVocab([5, 7, 8]), SentenceVocab([4, 5, 7, 8]), build_full_vocab(9)]

    losses = [model.sentence_loss(pair, vocab) for vocab in nested]

    assert all(small <= large + 1e-12 for small, large in zip(losses, losses[1:]))


def test_loss_rejects_reference_outside_vocabulary():
    model = tiny_model()
    with pytest.raises(VocabularyContractError):
        model.sentence_loss(SentencePair((4,), (8,), 0), SentenceVocab([5]))


@pytest.mark.parametrize('seed', range(10))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = tiny_model(seed=seed, out_depth=1 + seed % 2)
    source = tuple(int(i) for i in rng.integers(4, 7, size=int(rng.integers(2, 4))))
    target = tuple(int(i) for i in rng.integers(4, 9, size=int(rng.integers(1, 3))))
    pair = SentencePair(source, target, seed)
    vocab = SentenceVocab(set(target) | {int(rng.integers(4, 9))})

    assert gradient_check(model, pair, vocab) < 1e-4


def test_gradient_check_over_full_vocabulary():
    model = tiny_model(seed=11)
    pair = SentencePair((4, 5), (6, 7), 0)

    assert gradient_check(model, pair, build_full_vocab(9)) < 1e-4


def test_gradient_check_catches_a_corrupted_gradient():
    model = tiny_model(seed=12)
    pair = SentencePair((4, 5, 6), (7,), 0)
    vocab = SentenceVocab([7])

    def double_att_v(grads: Gradients):
        grads.dense['att_v'] *= 2.0

    assert gradient_check(model, pair, vocab, mutate=double_att_v) > 0.1


def test_gradients_touch_only_restricted_projection_rows():
    model = tiny_model(seed=13)
    vocab = SentenceVocab([5])

    _, grads = model.loss_and_gradients(SentencePair((4, 6), (5, 5), 0), vocab)

    rows, _ = grads.sparse['proj_W']
    assert list(rows) == [0, 1, 2, 3, 5]
    tgt_rows, _ = grads.sparse['tgt_embed']
    assert list(tgt_rows) == [BOS, 5]


def test_gradients_accumulate_across_sentences():
    model = tiny_model(seed=14)
    vocab = SentenceVocab([5, 6])
    first, second = SentencePair((4,), (5,), 0), SentencePair((6, 4), (6,), 1)

    _, a = model.loss_and_gradients(first, vocab)
    _, b = model.loss_and_gradients(second, vocab)
    _, both = model.loss_and_gradients(second, vocab, model.loss_and_gradients(first, vocab)[1])
    a.merge(b)

    for name, value in model.params.items():
        assert np.allclose(both.to_dense(name, value), a.to_dense(name, value))


def test_checkpoint_round_trip(tmp_path):
    model = tiny_model(seed=15)
    path = str(tmp_path / 'model.ckpt')

    save_checkpoint(path, model, {'epochs': 3}, {'tgt_vocab': 'abc'}, epoch=3, config_hash='0123456789abcdef')
    loaded, meta = load_checkpoint(path)

    assert meta['epoch'] == 3
    assert meta['vocab_hashes'] == {'tgt_vocab': 'abc'}
    assert meta['config_hash'] == '0123456789abcdef'
    assert meta['embedding_hash'] == model.embedding_hash()
    for name, value in model.params.items():
        assert np.array_equal(loaded.params[name], value)


def test_load_checkpoint_errors(tmp_path):
    with pytest.raises(ArtifactError):
        load_checkpoint(str(tmp_path / 'missing.ckpt'))

    other = str(tmp_path / 'other.ckpt')
    joblib.dump({'format': 'something else'}, other)
    with pytest.raises(ArtifactError):
        load_checkpoint(other)
