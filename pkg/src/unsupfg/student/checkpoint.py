"""Binary checkpoints.

Layout (little-endian): b"USFG", u32 version, u32 tensor count, then per
tensor: u16 name length, UTF-8 name, u8 rank, u32 extents, f32 payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .adam import AdamState
from .net import Architecture

MAGIC = b"USFG"
VERSION = 1


class CheckpointError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def encode_tensors(tensors: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def decode_tensors(buf: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated {what}", pos)
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic", 0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    tensors = {}
    for _ in range(count):
        start = pos
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("tensor name is not UTF-8", start + 2) from None
        (rank,) = struct.unpack("<B", take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, "extents"))
        size = int(np.prod(shape, dtype=np.int64))
        payload = take(4 * size, f"payload of {name!r}")
        if name in tensors:
            raise CheckpointError(f"duplicate tensor {name!r}", start)
        tensors[name] = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(shape)
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last tensor", pos)
    return tensors


def save_checkpoint(path, params: dict, state: AdamState | None, arch: Architecture) -> None:
    tensors = {"arch": np.array([arch.input_size, *arch.widths], dtype=np.float32)}
    tensors.update(params)
    if state is not None:
        tensors["adam.t"] = np.array([state.t], dtype=np.float32)
        for name in params:
            tensors[f"adam.m.{name}"] = state.m[name]
            tensors[f"adam.v.{name}"] = state.v[name]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_tensors(tensors))
    tmp.replace(path)


def load_checkpoint(path, **adam_hyper) -> tuple[dict, AdamState | None, Architecture]:
    """Returns ``(params, adam_state_or_None, architecture)``."""
    tensors = decode_tensors(Path(path).read_bytes())
    if "arch" not in tensors:
        raise CheckpointError("missing architecture tensor", 0)
    a = [int(v) for v in tensors.pop("arch")]
    arch = Architecture(a[0], tuple(a[1:]))
    names = list(arch.param_shapes())
    params = {}
    for name in names:
        if name not in tensors:
            raise CheckpointError(f"missing tensor {name!r}", 0)
        params[name] = tensors[name]
    state = None
    if "adam.t" in tensors:
        state = AdamState(
            m={n: tensors[f"adam.m.{n}"] for n in names},
            v={n: tensors[f"adam.v.{n}"] for n in names},
            t=int(tensors["adam.t"][0]),
            **adam_hyper,
        )
    return params, state, arch
