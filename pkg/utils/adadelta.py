"""
AdaDelta with row-sparse updates.

Rows outside a sparse gradient block keep both their parameters and their
accumulators untouched, so output rows and embeddings of words absent from
a batch vocabulary do not move.
"""

import logging
from typing import Dict, Iterable, Union

import numpy as np

from utils.nmt_model import Gradients

logger = logging.getLogger(__name__)

DEFAULT_RHO = 0.95
DEFAULT_EPSILON = 1e-6


class AdaDelta:

    def __init__(self, params: Dict[str, np.ndarray], rho: float = DEFAULT_RHO,
                 epsilon: float = DEFAULT_EPSILON, lr: float = 1.0):
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must be in (0, 1), got {rho}")
        if epsilon <= 0.0:
            raise ValueError(f"epsilon must be > 0, got {epsilon}")
        self.params = params
        self.rho = rho
        self.epsilon = epsilon
        self.lr = lr
        # E[g^2] and E[dx^2]
        self.accum_grad = {name: np.zeros_like(value) for name, value in params.items()}
        self.accum_update = {name: np.zeros_like(value) for name, value in params.items()}

    def _apply(self, name: str, index: Union[slice, np.ndarray], grad: np.ndarray):
        eg = self.rho * self.accum_grad[name][index] + (1.0 - self.rho) * grad * grad
        ex = self.accum_update[name][index]
        delta = -np.sqrt(ex + self.epsilon) / np.sqrt(eg + self.epsilon) * grad
        self.accum_grad[name][index] = eg
        self.accum_update[name][index] = self.rho * ex + (1.0 - self.rho) * delta * delta
        self.params[name][index] += self.lr * delta

    def step(self, grads: Gradients, frozen: Iterable[str] = ()):
        """Apply one update; parameters named in `frozen` are skipped entirely"""
        frozen = set(frozen)
        for name, grad in grads.dense.items():
            if name not in frozen:
                self._apply(name, slice(None), grad)
        for name, (rows, values) in grads.sparse.items():
            if name not in frozen:
                self._apply(name, rows, values)
