from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_CHUNK = 1 << 16


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name: str, index: tuple):
        super().__init__(f"non-finite gradient in {name} at index {index}")
        self.name = name
        self.index = index


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray], **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def _update(p, g, m, v, b1, b2, step, inv_sqrt_bc2, eps, buf):
    m *= b1
    np.multiply(g, 1.0 - b1, out=buf)
    m += buf
    v *= b2
    np.multiply(g, g, out=buf)
    buf *= 1.0 - b2
    v += buf
    # lr * m_hat / (sqrt(v_hat) + eps)
    np.sqrt(v, out=buf)
    buf *= inv_sqrt_bc2
    buf += eps
    np.divide(m, buf, out=buf)
    buf *= step
    p -= buf


def adam_step(params: dict, grads: dict, state: AdamState):
    """In-place bias-corrected Adam update; returns ``(params, state)``."""
    for name, g in grads.items():
        if not np.isfinite(g).all():
            bad = np.unravel_index(int(np.argmin(np.isfinite(g))), g.shape)
            raise NonFiniteGradientError(name, tuple(int(i) for i in bad))
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    step = state.lr / bc1
    inv_sqrt_bc2 = 1.0 / np.sqrt(bc2)
    for name, g in grads.items():
        p = params[name].reshape(-1)
        g = g.reshape(-1).astype(p.dtype, copy=False)
        m = state.m[name].reshape(-1)
        v = state.v[name].reshape(-1)
        # chunked so the temporaries stay cache-resident on the large FC matrix
        buf = np.empty(min(_CHUNK, p.size), dtype=p.dtype)
        for s in range(0, p.size, _CHUNK):
            e = min(p.size, s + _CHUNK)
            _update(p[s:e], g[s:e], m[s:e], v[s:e], state.beta1, state.beta2, step, inv_sqrt_bc2, state.eps, buf[: e - s])
    return params, state
