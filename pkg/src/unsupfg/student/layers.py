"""Layer primitives with explicit forward/backward passes on NCHW arrays."""

from __future__ import annotations

import numpy as np

from ..imagery import bilinear_matrix


def conv3x3_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Zero-padded 3x3 convolution (cross-correlation), stride 1.

    x: (N, C, H, W); w: (O, C, 3, 3); b: (O,).  Returns (out, cols) where
    cols is the im2col buffer reused by the backward pass.
    """
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    cols = np.empty((n, c, 9, h, wd), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, i * 3 + j] = xp[:, :, i : i + h, j : j + wd]
    cols = cols.reshape(n, c * 9, h * wd)
    out = w.reshape(w.shape[0], -1) @ cols
    out += b[None, :, None]
    return out.reshape(n, w.shape[0], h, wd), cols


def conv3x3_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, need_dx: bool = True):
    n, o, h, wd = dout.shape
    c = w.shape[1]
    d = dout.reshape(n, o, h * wd)
    dw = np.einsum("nop,nkp->ok", d, cols, optimize=True).reshape(w.shape)
    db = d.sum(axis=(0, 2))
    if not need_dx:
        return None, dw, db
    dcols = (w.reshape(o, -1).T @ d).reshape(n, c, 9, h, wd)
    dxp = np.zeros((n, c, h + 2, wd + 2), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, :, i : i + h, j : j + wd] += dcols[:, :, i * 3 + j]
    return dxp[:, :, 1:-1, 1:-1], dw, db


def relu_forward(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # subgradient 0 at 0
    return dout * mask


def _windows(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"2x2 pooling needs even spatial size, got {h}x{w}")
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)


def maxpool2_forward(x: np.ndarray):
    """2x2/2 max pooling; ties go to the first element in scan order."""
    win = _windows(x)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, c, h2, w2 = dout.shape
    win = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
    np.put_along_axis(win, idx[..., None], dout[..., None], axis=-1)
    return win.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2 * 2, w2 * 2)


class Resize:
    """Fixed bilinear resampling (half-pixel centers) as a linear map."""

    def __init__(self, src_h: int, src_w: int, dst_h: int, dst_w: int, dtype=np.float32):
        self.ry = bilinear_matrix(src_h, dst_h).astype(dtype)
        self.rx = bilinear_matrix(src_w, dst_w).astype(dtype)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.ry @ x @ self.rx.T

    def backward(self, dout: np.ndarray) -> np.ndarray:
        return self.ry.T @ dout @ self.rx


def fc_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x: (N, D_in); w: (D_out, D_in)."""
    return x @ w.T + b


def fc_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, need_dx: bool = True):
    dw = dout.T @ x
    db = dout.sum(axis=0)
    dx = dout @ w if need_dx else None
    return dx, dw, db
