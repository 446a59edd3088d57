"""The student network.

Topology: conv x2 -> pool -> conv x2 -> pool -> conv x3 (ReLU after every
conv), then a fully connected layer over the concatenation of
[conv7 output, input stack resized, post-pool-1 features resized], all at
the output grid (input size / 4).  Outputs are linear.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layers

N_CONV = 7
IN_PLANES = 7


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    input_size: int
    widths: tuple[int, ...]  # output channels of conv1..conv7

    def __post_init__(self):
        if len(self.widths) != N_CONV:
            raise ConfigurationError(f"need {N_CONV} conv widths, got {len(self.widths)}")
        if self.input_size % 4:
            raise ConfigurationError("input size must be divisible by 4")

    @property
    def out_size(self) -> int:
        return self.input_size // 4

    @property
    def fc_in(self) -> int:
        return (self.widths[6] + IN_PLANES + self.widths[1]) * self.out_size**2

    @property
    def fc_out(self) -> int:
        return self.out_size**2

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c_in = IN_PLANES
        for i, c_out in enumerate(self.widths, start=1):
            shapes[f"conv{i}.w"] = (c_out, c_in, 3, 3)
            shapes[f"conv{i}.b"] = (c_out,)
            c_in = c_out
        shapes["fc.w"] = (self.fc_out, self.fc_in)
        shapes["fc.b"] = (self.fc_out,)
        return shapes


PRESETS = {
    "paper": Architecture(128, (32, 32, 64, 64, 128, 128, 128)),
    "desk": Architecture(128, (8, 8, 16, 16, 32, 32, 32)),
    "tiny": Architecture(8, (2, 2, 3, 3, 3, 3, 3)),
}


def init_params(arch: Architecture, seed: int = 0, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
            continue
        if len(shape) == 4:
            fan_in, fan_out = shape[1] * 9, shape[0] * 9
        else:
            fan_in, fan_out = shape[1], shape[0]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
    return params


def check_params(params: dict, arch: Architecture) -> None:
    for name, shape in arch.param_shapes().items():
        if name not in params:
            raise ConfigurationError(f"missing parameter {name}")
        if params[name].shape != shape:
            raise ConfigurationError(f"{name} has shape {params[name].shape}, architecture expects {shape}")


class Student:
    """Parameters plus the cached resamplers for one architecture."""

    def __init__(self, arch: Architecture, params: dict[str, np.ndarray]):
        check_params(params, arch)
        self.arch = arch
        self.params = params
        dtype = params["fc.w"].dtype
        s, o = arch.input_size, arch.out_size
        self.resize_input = layers.Resize(s, s, o, o, dtype)
        self.resize_pool1 = layers.Resize(s // 2, s // 2, o, o, dtype)

    @classmethod
    def create(cls, arch: Architecture | str = "desk", seed: int = 0, dtype=np.float32) -> "Student":
        if isinstance(arch, str):
            arch = PRESETS[arch]
        return cls(arch, init_params(arch, seed, dtype))

    def forward(self, x: np.ndarray, keep_cache: bool = False):
        """(N, 7, S, S) -> (N, (S/4)^2) linear outputs."""
        a, p = self.arch, self.params
        if x.ndim != 4 or x.shape[1:] != (IN_PLANES, a.input_size, a.input_size):
            raise ConfigurationError(
                f"input shape {x.shape[1:]} does not match ({IN_PLANES}, {a.input_size}, {a.input_size})"
            )
        x = x.astype(p["fc.w"].dtype, copy=False)
        cache = {}
        h = x
        for i in range(1, N_CONV + 1):
            h, cache[f"cols{i}"] = layers.conv3x3_forward(h, p[f"conv{i}.w"], p[f"conv{i}.b"])
            h, cache[f"relu{i}"] = layers.relu_forward(h)
            if i in (2, 4):
                h, cache[f"pool{i // 2}"] = layers.maxpool2_forward(h)
                if i == 2:
                    pool1 = h
        n = x.shape[0]
        feats = np.concatenate(
            [h, self.resize_input.forward(x), self.resize_pool1.forward(pool1)], axis=1
        ).reshape(n, -1)
        cache["feats"] = feats
        y = layers.fc_forward(feats, p["fc.w"], p["fc.b"])
        return (y, cache) if keep_cache else y

    def backward(self, cache: dict, dy: np.ndarray) -> dict[str, np.ndarray]:
        a, p = self.arch, self.params
        grads = {}
        feats = cache["feats"]
        dfeats, grads["fc.w"], grads["fc.b"] = layers.fc_backward(dy, feats, p["fc.w"])
        n, o = dy.shape[0], a.out_size
        dfeats = dfeats.reshape(n, -1, o, o)
        c7 = a.widths[6]
        dh = dfeats[:, :c7]
        # input-plane skip has no parameters upstream
        dpool1_skip = self.resize_pool1.backward(dfeats[:, c7 + IN_PLANES :])
        for i in range(N_CONV, 0, -1):
            if i in (2, 4):
                if i == 2:
                    dh = dh + dpool1_skip
                dh = layers.maxpool2_backward(dh, cache[f"pool{i // 2}"])
            dh = layers.relu_backward(dh, cache[f"relu{i}"])
            dh, grads[f"conv{i}.w"], grads[f"conv{i}.b"] = layers.conv3x3_backward(
                dh, cache[f"cols{i}"], p[f"conv{i}.w"], need_dx=i > 1
            )
        return {name: grads[name] for name in p}

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Clamped inference masks, (N, S/4, S/4) uint8."""
        y = self.forward(x)
        o = self.arch.out_size
        q = np.floor(np.clip(y, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
        return q.reshape(-1, o, o)


def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Batch mean of per-example summed squared error, values in [0, 1]."""
    d = pred.astype(np.float64) - target.astype(np.float64)
    return float((d * d).sum() / pred.shape[0])


def loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    return (2.0 / pred.shape[0]) * (pred - target.astype(pred.dtype))
