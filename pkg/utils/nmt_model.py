"""
Attention encoder-decoder with a restricted output layer.

Bidirectional GRU encoder, GRU decoder conditioned on the previous target
embedding and the attention context, a feed-forward output layer g and a
projection whose rows are only ever touched for the ids of the current
restricted vocabulary. Forward and backward passes are written out by hand
in numpy so every gradient can be checked against finite differences.
"""

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import joblib
import numpy as np
from scipy.special import expit, logsumexp, softmax

from utils.corpus import BOS, EOS, SentencePair
from utils.errors import ArtifactError, DataContractError, VocabularyContractError
from utils.target_vocab import SentenceVocab

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 'vocab_sniper.nmt/1'
INIT_SCALE = 0.08
FD_STEP = 1e-5

# parameters updated row by row
SPARSE_PARAMS = ('src_embed', 'tgt_embed', 'proj_W', 'proj_b')
EMBEDDINGS = ('src_embed', 'tgt_embed')


@dataclass
class ModelDims:
    src_vocab_size: int
    tgt_vocab_size: int
    d_emb: int = 64
    d_h: int = 64
    d_s: int = 64
    d_o: int = 64
    d_att: int = 64
    out_depth: int = 1

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        E, H, S, O, A = self.d_emb, self.d_h, self.d_s, self.d_o, self.d_att
        shapes = {
            'src_embed': (self.src_vocab_size, E),
            'tgt_embed': (self.tgt_vocab_size, E),
            'enc_fwd_W': (3 * H, E), 'enc_fwd_U': (3 * H, H), 'enc_fwd_b': (3 * H,),
            'enc_bwd_W': (3 * H, E), 'enc_bwd_U': (3 * H, H), 'enc_bwd_b': (3 * H,),
            'init_W': (S, H), 'init_b': (S,),
            'dec_W': (3 * S, E + 2 * H), 'dec_U': (3 * S, S), 'dec_b': (3 * S,),
            'att_Ws': (A, S), 'att_Wh': (A, 2 * H), 'att_Wy': (A, E), 'att_b': (A,), 'att_v': (A,),
            'out_Ws': (O, S), 'out_Wy': (O, E), 'out_Wc': (O, 2 * H), 'out_b': (O,),
        }
        for k in range(1, self.out_depth):
            shapes[f'out_deep{k}_W'] = (O, O)
            shapes[f'out_deep{k}_b'] = (O,)
        shapes['proj_W'] = (self.tgt_vocab_size, O)
        shapes['proj_b'] = (self.tgt_vocab_size,)
        return shapes


@dataclass
class EncoderStates:
    """h[i] = [backward_i ; forward_i]"""
    h: np.ndarray
    att_keys: np.ndarray
    source: Tuple[int, ...]
    fwd_caches: List[tuple] = field(default_factory=list, repr=False)
    bwd_caches: List[tuple] = field(default_factory=list, repr=False)


@dataclass
class StepState:
    s: np.ndarray
    alpha: np.ndarray
    context: np.ndarray


@dataclass
class _StepCache:
    y_prev: int
    ye: np.ndarray
    s_prev: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    context: np.ndarray
    att_hidden: np.ndarray
    gru_cache: tuple
    outs: List[np.ndarray]
    probs: np.ndarray
    gold: int


def _gru_forward(W: np.ndarray, U: np.ndarray, b: np.ndarray, x: np.ndarray, h_prev: np.ndarray):
    """Gate layout [reset, update, candidate]; h = z * h_prev + (1 - z) * n"""
    K = h_prev.shape[0]
    a = W @ x + b
    u = U @ h_prev
    r = expit(a[:K] + u[:K])
    z = expit(a[K:2 * K] + u[K:2 * K])
    n = np.tanh(a[2 * K:] + r * u[2 * K:])
    h = z * h_prev + (1.0 - z) * n
    return h, (x, h_prev, r, z, n, u[2 * K:])


def _gru_backward(W: np.ndarray, U: np.ndarray, dh: np.ndarray, cache: tuple,
                  dW: np.ndarray, dU: np.ndarray, db: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    x, h_prev, r, z, n, u_n = cache
    dz = dh * (h_prev - n)
    dpre_n = dh * (1.0 - z) * (1.0 - n * n)
    dpre_r = dpre_n * u_n * r * (1.0 - r)
    dpre_z = dz * z * (1.0 - z)
    da = np.concatenate([dpre_r, dpre_z, dpre_n])
    du = np.concatenate([dpre_r, dpre_z, dpre_n * r])
    dW += np.outer(da, x)
    dU += np.outer(du, h_prev)
    db += da
    return W.T @ da, dh * z + U.T @ du


def _coalesce(rows: np.ndarray, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    unique, inverse = np.unique(rows, return_inverse=True)
    if len(unique) == len(rows) and np.all(unique == rows):
        return rows, values
    merged = np.zeros((len(unique),) + values.shape[1:], dtype=values.dtype)
    np.add.at(merged, inverse, values)
    return unique, merged


class Gradients:
    """Dense gradients plus row-sparse blocks (sorted global rows, values)"""

    def __init__(self):
        self.dense: Dict[str, np.ndarray] = {}
        self.sparse: Dict[str, Tuple[np.ndarray, np.ndarray]] = {}

    def add_dense(self, name: str, value: np.ndarray):
        if name in self.dense:
            self.dense[name] += value
        else:
            self.dense[name] = value.copy()

    def add_rows(self, name: str, rows: np.ndarray, values: np.ndarray):
        rows, values = _coalesce(np.asarray(rows, dtype=np.int64), values)
        if name not in self.sparse:
            self.sparse[name] = (rows.copy(), values.copy())
            return
        old_rows, old_values = self.sparse[name]
        if old_rows.shape == rows.shape and np.array_equal(old_rows, rows):
            old_values += values
            return
        self.sparse[name] = _coalesce(np.concatenate([old_rows, rows]), np.concatenate([old_values, values]))

    def merge(self, other: 'Gradients'):
        for name, value in other.dense.items():
            self.add_dense(name, value)
        for name, (rows, values) in other.sparse.items():
            self.add_rows(name, rows, values)

    def scale(self, factor: float):
        for value in self.dense.values():
            value *= factor
        for _, values in self.sparse.values():
            values *= factor

    def to_dense(self, name: str, like: np.ndarray) -> np.ndarray:
        if name in self.dense:
            return self.dense[name]
        out = np.zeros_like(like)
        if name in self.sparse:
            rows, values = self.sparse[name]
            out[rows] = values
        return out


class AttentionNMT:
    """Encoder-decoder with attention; parameters live in a flat name -> array dict"""

    def __init__(self, params: Dict[str, np.ndarray], dims: ModelDims):
        expected = dims.shapes()
        if set(params) != set(expected):
            raise ArtifactError(f"parameter names differ from the model layout: "
                                f"{sorted(set(params) ^ set(expected))}")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ArtifactError(f"parameter {name} has shape {params[name].shape}, expected {shape}")
        self.params = params
        self.dims = dims

    @classmethod
    def initialize(cls, dims: ModelDims, seed: int = 0, init_scale: float = INIT_SCALE,
                   dtype=np.float64) -> 'AttentionNMT':
        rng = np.random.default_rng(seed)
        params = {
            name: rng.uniform(-init_scale, init_scale, size=shape).astype(dtype)
            for name, shape in dims.shapes().items()
        }
        return cls(params, dims)

    @classmethod
    def zeros(cls, dims: ModelDims, dtype=np.float64) -> 'AttentionNMT':
        return cls({name: np.zeros(shape, dtype=dtype) for name, shape in dims.shapes().items()}, dims)

    def copy(self) -> 'AttentionNMT':
        return AttentionNMT({name: value.copy() for name, value in self.params.items()}, self.dims)

    @property
    def dtype(self):
        return self.params['proj_W'].dtype

    def embedding_hash(self) -> str:
        digest = hashlib.sha256()
        for name in EMBEDDINGS:
            digest.update(np.ascontiguousarray(self.params[name]).tobytes())
        return digest.hexdigest()

    # forward pieces

    def encode(self, x: Sequence[int]) -> EncoderStates:
        if len(x) == 0:
            raise DataContractError("cannot encode an empty source sentence")
        bad = [i for i in x if not 0 <= i < self.dims.src_vocab_size]
        if bad:
            raise DataContractError(f"source ids {bad} outside [0, {self.dims.src_vocab_size})")

        p = self.params
        H = self.dims.d_h
        embedded = p['src_embed'][list(x)]
        l = len(x)

        fwd_states, fwd_caches = [], []
        state = np.zeros(H, dtype=self.dtype)
        for i in range(l):
            state, cache = _gru_forward(p['enc_fwd_W'], p['enc_fwd_U'], p['enc_fwd_b'], embedded[i], state)
            fwd_states.append(state)
            fwd_caches.append(cache)

        bwd_states, bwd_caches = [None] * l, [None] * l
        state = np.zeros(H, dtype=self.dtype)
        for i in reversed(range(l)):
            state, cache = _gru_forward(p['enc_bwd_W'], p['enc_bwd_U'], p['enc_bwd_b'], embedded[i], state)
            bwd_states[i] = state
            bwd_caches[i] = cache

        h = np.hstack([np.array(bwd_states), np.array(fwd_states)])
        return EncoderStates(h, h @ p['att_Wh'].T, tuple(x), fwd_caches, bwd_caches)

    def initial_state(self, enc: EncoderStates) -> np.ndarray:
        """s_0 = tanh(init_W . backward_0 + init_b)"""
        return np.tanh(self.params['init_W'] @ enc.h[0, :self.dims.d_h] + self.params['init_b'])

    def _attention(self, s_prev: np.ndarray, enc: EncoderStates, ye: np.ndarray):
        p = self.params
        query = p['att_Ws'] @ s_prev + p['att_Wy'] @ ye + p['att_b']
        hidden = np.tanh(enc.att_keys + query)
        alpha = softmax(hidden @ p['att_v'])
        return alpha, alpha @ enc.h, hidden

    def attend(self, s_prev: np.ndarray, enc: EncoderStates, y_prev_embed: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        alpha, context, _ = self._attention(s_prev, enc, y_prev_embed)
        return alpha, context

    def decode_step(self, s_prev: np.ndarray, y_prev: int, context: np.ndarray) -> np.ndarray:
        p = self.params
        x = np.concatenate([p['tgt_embed'][y_prev], context])
        s, _ = _gru_forward(p['dec_W'], p['dec_U'], p['dec_b'], x, s_prev)
        return s

    def _output_layers(self, s: np.ndarray, ye: np.ndarray, context: np.ndarray) -> List[np.ndarray]:
        p = self.params
        o = np.tanh(p['out_Ws'] @ s + p['out_Wy'] @ ye + p['out_Wc'] @ context + p['out_b'])
        outs = [o]
        for k in range(1, self.dims.out_depth):
            o = np.tanh(p[f'out_deep{k}_W'] @ o + p[f'out_deep{k}_b'])
            outs.append(o)
        return outs

    def _rows(self, restricted: Optional[SentenceVocab]) -> np.ndarray:
        if restricted is None:
            return np.arange(self.dims.tgt_vocab_size)
        if EOS not in restricted:
            raise VocabularyContractError("restricted vocabulary lacks </s>; decoding could never terminate")
        return restricted.global_ids

    def output_logits(self, o: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """Only the projection rows in `rows` are read"""
        return self.params['proj_W'][rows] @ o + self.params['proj_b'][rows]

    def output_distribution(self, s_t: np.ndarray, y_prev: int, context: np.ndarray,
                            restricted: Optional[SentenceVocab] = None) -> np.ndarray:
        """Softmax of g(s_t, y_prev, context) over the restricted ids (None = all of V_y)"""
        rows = self._rows(restricted)
        o = self._output_layers(s_t, self.params['tgt_embed'][y_prev], context)[-1]
        return softmax(self.output_logits(o, rows))

    def step(self, enc: EncoderStates, s_prev: np.ndarray, y_prev: int,
             restricted: Optional[SentenceVocab] = None) -> Tuple[StepState, np.ndarray]:
        """One decoding step: attend, update the state, score the restricted ids (log-probs)"""
        rows = self._rows(restricted)
        ye = self.params['tgt_embed'][y_prev]
        alpha, context, _ = self._attention(s_prev, enc, ye)
        s = self.decode_step(s_prev, y_prev, context)
        logits = self.output_logits(self._output_layers(s, ye, context)[-1], rows)
        return StepState(s, alpha, context), logits - logsumexp(logits)

    # training objective

    def _forward(self, pair: SentencePair, vocab: Optional[SentenceVocab]):
        rows = self._rows(vocab)
        local = {int(g): k for k, g in enumerate(rows)} if vocab is None else vocab.local_of_global
        y_in = (BOS,) + tuple(pair.target)
        y_out = tuple(pair.target) + (EOS,)
        missing = [y for y in y_out if y not in local]
        if missing:
            raise VocabularyContractError(f"pair {pair.pair_id}: reference ids {missing} outside the output vocabulary")

        p = self.params
        enc = self.encode(pair.source)
        s0 = self.initial_state(enc)
        proj_W = p['proj_W'][rows]
        proj_b = p['proj_b'][rows]

        loss = 0.0
        s = s0
        steps = []
        for y_prev, gold in zip(y_in, y_out):
            ye = p['tgt_embed'][y_prev]
            alpha, context, hidden = self._attention(s, enc, ye)
            s_new, gru_cache = _gru_forward(p['dec_W'], p['dec_U'], p['dec_b'], np.concatenate([ye, context]), s)
            outs = self._output_layers(s_new, ye, context)
            logits = proj_W @ outs[-1] + proj_b
            log_probs = logits - logsumexp(logits)
            k = local[gold]
            loss -= float(log_probs[k])
            steps.append(_StepCache(y_prev, ye, s, s_new, alpha, context, hidden, gru_cache, outs,
                                    np.exp(log_probs), k))
            s = s_new
        return loss, enc, s0, steps, rows, proj_W

    def sentence_loss(self, pair: SentencePair, vocab: Optional[SentenceVocab]) -> float:
        """Negative log-likelihood of target + </s>, conditioning each step on the reference prefix"""
        return self._forward(pair, vocab)[0]

    def loss_and_gradients(self, pair: SentencePair, vocab: Optional[SentenceVocab],
                           grads: Optional[Gradients] = None) -> Tuple[float, Gradients]:
        loss, enc, s0, steps, rows, proj_W = self._forward(pair, vocab)
        p = self.params
        E, H = self.dims.d_emb, self.dims.d_h
        grads = grads if grads is not None else Gradients()
        d = {name: np.zeros_like(value) for name, value in p.items() if name not in SPARSE_PARAMS}

        d_proj_W = np.zeros_like(proj_W)
        d_proj_b = np.zeros(len(rows), dtype=self.dtype)
        dh = np.zeros_like(enc.h)
        tgt_values = np.zeros((len(steps), E), dtype=self.dtype)
        ds_next = np.zeros(self.dims.d_s, dtype=self.dtype)

        for t in reversed(range(len(steps))):
            st = steps[t]
            dlogits = st.probs.copy()
            dlogits[st.gold] -= 1.0
            d_proj_W += np.outer(dlogits, st.outs[-1])
            d_proj_b += dlogits
            do = proj_W.T @ dlogits

            for k in range(self.dims.out_depth - 1, 0, -1):
                dpre = do * (1.0 - st.outs[k] ** 2)
                d[f'out_deep{k}_W'] += np.outer(dpre, st.outs[k - 1])
                d[f'out_deep{k}_b'] += dpre
                do = p[f'out_deep{k}_W'].T @ dpre
            dpre = do * (1.0 - st.outs[0] ** 2)
            d['out_Ws'] += np.outer(dpre, st.s)
            d['out_Wy'] += np.outer(dpre, st.ye)
            d['out_Wc'] += np.outer(dpre, st.context)
            d['out_b'] += dpre

            ds = p['out_Ws'].T @ dpre + ds_next
            dye = p['out_Wy'].T @ dpre
            dc = p['out_Wc'].T @ dpre

            dx, ds_prev = _gru_backward(p['dec_W'], p['dec_U'], ds, st.gru_cache, d['dec_W'], d['dec_U'], d['dec_b'])
            dye += dx[:E]
            dc += dx[E:]

            # context = alpha @ h
            dalpha = enc.h @ dc
            dh += np.outer(st.alpha, dc)
            de = st.alpha * (dalpha - st.alpha @ dalpha)
            d['att_v'] += st.att_hidden.T @ de
            dpre_att = np.outer(de, p['att_v']) * (1.0 - st.att_hidden ** 2)
            dq = dpre_att.sum(axis=0)
            d['att_Ws'] += np.outer(dq, st.s_prev)
            d['att_Wy'] += np.outer(dq, st.ye)
            d['att_b'] += dq
            d['att_Wh'] += dpre_att.T @ enc.h
            dh += dpre_att @ p['att_Wh']
            ds_prev += p['att_Ws'].T @ dq
            dye += p['att_Wy'].T @ dq

            tgt_values[t] = dye
            ds_next = ds_prev

        dpre0 = ds_next * (1.0 - s0 ** 2)
        d['init_W'] += np.outer(dpre0, enc.h[0, :H])
        d['init_b'] += dpre0
        dh[0, :H] += p['init_W'].T @ dpre0

        l = len(enc.source)
        src_values = np.zeros((l, E), dtype=self.dtype)
        carry = np.zeros(H, dtype=self.dtype)
        for i in reversed(range(l)):
            dx, carry = _gru_backward(p['enc_fwd_W'], p['enc_fwd_U'], dh[i, H:] + carry, enc.fwd_caches[i],
                                      d['enc_fwd_W'], d['enc_fwd_U'], d['enc_fwd_b'])
            src_values[i] += dx
        carry = np.zeros(H, dtype=self.dtype)
        for i in range(l):
            dx, carry = _gru_backward(p['enc_bwd_W'], p['enc_bwd_U'], dh[i, :H] + carry, enc.bwd_caches[i],
                                      d['enc_bwd_W'], d['enc_bwd_U'], d['enc_bwd_b'])
            src_values[i] += dx

        for name, value in d.items():
            grads.add_dense(name, value)
        grads.add_rows('proj_W', rows, d_proj_W)
        grads.add_rows('proj_b', rows, d_proj_b)
        grads.add_rows('tgt_embed', np.array([st.y_prev for st in steps]), tgt_values)
        grads.add_rows('src_embed', np.array(enc.source), src_values)
        return loss, grads


def gradient_check(model: AttentionNMT, pair: SentencePair, vocab: Optional[SentenceVocab],
                   step: float = FD_STEP, mutate: Optional[Callable[[Gradients], None]] = None) -> float:
    """
    Max over parameter tensors of |analytic - numeric| / (|analytic| + |numeric|),
    numeric gradients by central differences on every element.
    `mutate` may corrupt the analytic gradients first (negative control).
    """
    if model.dtype != np.float64:
        raise ValueError("gradient checks need float64 parameters")
    _, grads = model.loss_and_gradients(pair, vocab)
    if mutate is not None:
        mutate(grads)

    worst = 0.0
    for name, value in model.params.items():
        analytic = grads.to_dense(name, value)
        numeric = np.zeros_like(value)
        flat = value.reshape(-1)
        numeric_flat = numeric.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + step
            plus = model.sentence_loss(pair, vocab)
            flat[k] = original - step
            minus = model.sentence_loss(pair, vocab)
            flat[k] = original
            numeric_flat[k] = (plus - minus) / (2.0 * step)
        norm_a, norm_n = np.linalg.norm(analytic), np.linalg.norm(numeric)
        if norm_a < 1e-10 and norm_n < 1e-10:
            continue
        error = float(np.linalg.norm(analytic - numeric) / (norm_a + norm_n))
        if error > worst:
            worst = error
        logger.debug(f"gradient check {name}: relative error {error:.3e}")
    return worst


def save_checkpoint(path: str, model: AttentionNMT, train_config: dict, vocab_hashes: Dict[str, str],
                    epoch: int, config_hash: str = ''):
    payload = {
        'format': CHECKPOINT_FORMAT,
        'params': model.params,
        'dims': asdict(model.dims),
        'train_config': dict(train_config),
        'vocab_hashes': dict(vocab_hashes),
        'epoch': epoch,
        'embedding_hash': model.embedding_hash(),
        'config_hash': config_hash,
    }
    joblib.dump(payload, path)
    logger.info(f"💾 Checkpoint saved to {path} (epoch {epoch})")


def load_checkpoint(path: str) -> Tuple[AttentionNMT, dict]:
    try:
        payload = joblib.load(path)
    except FileNotFoundError:
        raise ArtifactError(f"checkpoint {path} not found; run the train stage first") from None
    if not isinstance(payload, dict) or payload.get('format') != CHECKPOINT_FORMAT:
        raise ArtifactError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    model = AttentionNMT(payload['params'], ModelDims(**payload['dims']))
    meta = {key: value for key, value in payload.items() if key != 'params'}
    return model, meta
