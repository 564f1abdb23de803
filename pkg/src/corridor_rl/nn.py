"""Minimal dense network with manual reverse-mode gradients and Adam.

Just enough machinery for small actor/critic heads: tanh hidden layers,
identity output, batched forward, and gradients with respect to every
weight/bias given an upstream gradient on the outputs.
"""

from dataclasses import dataclass, field

import numpy as np


def orthogonal(rng, rows, cols, gain=1.0):
    a = rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(a if rows >= cols else a.T)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


class Mlp:
    """Fully connected net: tanh hidden layers, identity output."""

    def __init__(self, dims, rng=None, out_gain=1.0):
        self.dims = list(dims)
        self.W = []
        self.b = []
        rng = rng or np.random.default_rng(0)
        for i in range(len(dims) - 1):
            gain = out_gain if i == len(dims) - 2 else 1.0
            self.W.append(orthogonal(rng, dims[i], dims[i + 1], gain))
            self.b.append(np.zeros(dims[i + 1]))
        self._cache = None

    # ---- forward / backward -------------------------------------------

    def forward(self, x):
        """x: (batch, in_dim) or (in_dim,). Caches activations for backward."""
        squeeze = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.dims[0]:
            raise ValueError(f"input width {h.shape[1]} != {self.dims[0]}")
        acts = [h]
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            h = h @ W + b
            if i < len(self.W) - 1:
                h = np.tanh(h)
            acts.append(h)
        self._cache = acts
        return h[0] if squeeze else h

    def backward(self, dy):
        """Gradient of a scalar loss w.r.t. parameters, given dL/d(output).

        Must follow a forward() call on the same input. Returns (dWs, dbs).
        """
        acts = self._cache
        if acts is None:
            raise RuntimeError("backward() without a preceding forward()")
        g = np.atleast_2d(dy)
        dWs = [None] * len(self.W)
        dbs = [None] * len(self.b)
        for i in range(len(self.W) - 1, -1, -1):
            if i < len(self.W) - 1:
                g = g * (1.0 - acts[i + 1] ** 2)  # through tanh
            dWs[i] = acts[i].T @ g
            dbs[i] = g.sum(axis=0)
            g = g @ self.W[i].T
        return dWs, dbs

    # ---- flat parameter vector ----------------------------------------

    def get_flat(self):
        return np.concatenate([a.ravel() for pair in zip(self.W, self.b) for a in pair])

    def set_flat(self, flat):
        k = 0
        for i in range(len(self.W)):
            for arr in (self.W[i], self.b[i]):
                arr[...] = flat[k:k + arr.size].reshape(arr.shape)
                k += arr.size
        if k != len(flat):
            raise ValueError("flat vector length mismatch")

    @staticmethod
    def flatten_grads(dWs, dbs):
        return np.concatenate([a.ravel() for pair in zip(dWs, dbs) for a in pair])

    def copy(self):
        m = Mlp.__new__(Mlp)
        m.dims = list(self.dims)
        m.W = [w.copy() for w in self.W]
        m.b = [b.copy() for b in self.b]
        m._cache = None
        return m


@dataclass
class AdamState:
    size: int
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.size)
        if self.v is None:
            self.v = np.zeros(self.size)


def adam_step(params_flat, grad_flat, state: AdamState):
    """One Adam update; returns new parameters (state mutated in place)."""
    state.step_count += 1
    t = state.step_count
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad_flat
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad_flat ** 2
    m_hat = state.m / (1 - state.beta1 ** t)
    v_hat = state.v / (1 - state.beta2 ** t)
    return params_flat - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
