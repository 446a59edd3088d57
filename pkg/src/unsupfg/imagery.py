"""Raster containers, binary Netpbm I/O, bilinear resizing and the 7-plane
student input (RGB, hue, saturation, luminance derivatives)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class NetpbmError(ValueError):
    """Malformed or unsupported Netpbm payload."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class Image:
    """8-bit raster, row-major with interleaved channels (1 or 3)."""

    data: np.ndarray  # uint8, shape (h, w, c)

    def __post_init__(self):
        d = self.data
        if d.dtype != np.uint8 or d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ValueError(f"Image data must be uint8 (h, w, 1|3), got {d.dtype} {d.shape}")
        if d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError("Image dimensions must be >= 1")

    @classmethod
    def from_array(cls, arr) -> "Image":
        arr = np.asarray(arr)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return cls(np.ascontiguousarray(arr, dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SoftMask(Image):
    """Single-plane 0-255 soft segmentation."""

    def __post_init__(self):
        super().__post_init__()
        if self.data.shape[2] != 1:
            raise ValueError("SoftMask must have exactly one channel")

    @classmethod
    def from_values(cls, values) -> "SoftMask":
        return cls(np.ascontiguousarray(np.asarray(values, dtype=np.uint8)[:, :, None]))

    @property
    def values(self) -> np.ndarray:
        """(h, w) view of the mask values."""
        return self.data[:, :, 0]


@dataclass(frozen=True)
class ChannelStack:
    """Planar float32 stack, plane order R, G, B, H, S, Dx, Dy."""

    planes: np.ndarray  # (7, h, w)

    PLANES = ("R", "G", "B", "H", "S", "Dx", "Dy")

    @property
    def width(self) -> int:
        return self.planes.shape[2]

    @property
    def height(self) -> int:
        return self.planes.shape[1]


# --------------------------------------------------------------------------
# Netpbm

_TOKEN = re.compile(rb"\S+")


def _header_tokens(buf: bytes, count: int) -> tuple[list[bytes], int]:
    """Read ``count`` whitespace-separated header tokens, honoring comments.

    Returns the tokens and the offset of the first payload byte.
    """
    tokens: list[bytes] = []
    pos = 0
    n = len(buf)
    while len(tokens) < count:
        while pos < n and buf[pos : pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos : pos + 1] == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        if pos >= n:
            raise NetpbmError("truncated header", pos)
        m = _TOKEN.match(buf, pos)
        tok = m.group(0)
        if b"#" in tok:
            tok = tok[: tok.index(b"#")]
        tokens.append(tok)
        pos += len(tok)
    # exactly one whitespace byte separates maxval from the raster
    if pos >= n or not buf[pos : pos + 1].isspace():
        raise NetpbmError("missing whitespace after header", pos)
    return tokens, pos + 1


def decode_netpbm(buf: bytes) -> Image:
    """Decode a binary PGM (P5) or PPM (P6) payload with maxval 255."""
    if len(buf) < 2:
        raise NetpbmError("truncated magic", 0)
    magic = bytes(buf[:2])
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic {magic!r}", 0)
    channels = 1 if magic == b"P5" else 3
    tokens, start = _header_tokens(buf[2:], 3)
    start += 2
    values = []
    for i, tok in enumerate(tokens):
        if not tok.isdigit():
            raise NetpbmError(f"invalid header field {tok!r}", 2 + i)
        values.append(int(tok))
    width, height, maxval = values
    if width < 1 or height < 1:
        raise NetpbmError(f"invalid dimensions {width}x{height}", 2)
    if maxval != 255:
        raise NetpbmError(f"unsupported maxval {maxval}", 2)
    size = width * height * channels
    if len(buf) - start < size:
        raise NetpbmError(f"truncated payload: need {size} bytes, have {len(buf) - start}", len(buf))
    data = np.frombuffer(buf, dtype=np.uint8, count=size, offset=start)
    data = data.reshape(height, width, channels).copy()
    return Image(data)


def encode_netpbm(img: Image) -> bytes:
    magic = b"P5" if img.channels == 1 else b"P6"
    header = b"%s\n%d %d\n255\n" % (magic, img.width, img.height)
    return header + np.ascontiguousarray(img.data).tobytes()


def read_netpbm(path) -> Image:
    return decode_netpbm(Path(path).read_bytes())


def read_mask(path) -> SoftMask:
    img = read_netpbm(path)
    if img.channels != 1:
        raise ValueError(f"{path}: expected a P5 mask")
    return SoftMask(img.data)


def write_netpbm(path, img: Image) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_netpbm(img))


def read_netpbm_size(path) -> tuple[int, int]:
    """(width, height) from the header only."""
    with open(path, "rb") as fh:
        head = fh.read(256)
    tokens, _ = _header_tokens(head[2:], 3)
    return int(tokens[0]), int(tokens[1])


# --------------------------------------------------------------------------
# Resizing


def bilinear_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) interpolation matrix, half-pixel centers, edge clamp."""
    # (i + 0.5) * src / dst - 0.5 from an integer numerator, so exact halves stay exact
    x = ((2 * np.arange(dst) + 1) * src - dst) / (2.0 * dst)
    x = np.clip(x, 0.0, src - 1)
    x0 = np.floor(x).astype(np.int64)
    x1 = np.minimum(x0 + 1, src - 1)
    frac = x - x0
    m = np.zeros((dst, src))
    rows = np.arange(dst)
    np.add.at(m, (rows, x0), 1.0 - frac)
    np.add.at(m, (rows, x1), frac)
    return m


def resize_plane(plane: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resize of a float (h, w) or (..., h, w) array."""
    h, w = plane.shape[-2:]
    if (h, w) == (target_h, target_w):
        return plane.astype(np.float64, copy=True)
    ry = bilinear_matrix(h, target_h)
    rx = bilinear_matrix(w, target_w)
    return ry @ plane @ rx.T


def resize_bilinear(img: Image, target_w: int, target_h: int) -> Image:
    """Resize an Image or SoftMask; 8-bit outputs round half up."""
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be >= 1, got {target_w}x{target_h}")
    if (img.width, img.height) == (target_w, target_h):
        return type(img)(img.data.copy())
    planes = np.moveaxis(img.data, 2, 0).astype(np.float64)
    out = resize_plane(planes, target_w, target_h)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return type(img)(np.ascontiguousarray(np.moveaxis(out, 0, 2)))


# --------------------------------------------------------------------------
# Student input planes


def rgb_to_hs(rgb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hue in [0, 1) and saturation in [0, 1] for float RGB planes (3, h, w).

    Achromatic pixels get hue 0.
    """
    r, g, b = rgb
    mx = rgb.max(axis=0)
    mn = rgb.min(axis=0)
    delta = mx - mn
    sat = np.where(mx > 0, delta / np.where(mx > 0, mx, 1.0), 0.0)
    safe = np.where(delta > 0, delta, 1.0)
    hue = np.where(
        mx == r,
        ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(delta > 0, hue / 6.0, 0.0)
    return hue, sat


def central_differences(plane: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(d/dx, d/dy) as half the difference of the neighbours, edges replicated."""
    p = np.pad(plane, 1, mode="edge")
    dx = (p[1:-1, 2:] - p[1:-1, :-2]) * 0.5
    dy = (p[2:, 1:-1] - p[:-2, 1:-1]) * 0.5
    return dx, dy


def to_student_channels(img: Image, net_input_size: int = 128) -> ChannelStack:
    if img.channels != 3:
        raise ValueError("student input requires a 3-channel image")
    img = resize_bilinear(img, net_input_size, net_input_size)
    rgb = np.moveaxis(img.data, 2, 0).astype(np.float64) / 255.0
    hue, sat = rgb_to_hs(rgb)
    lum = 0.299 * rgb[0] + 0.587 * rgb[1] + 0.114 * rgb[2]
    dx, dy = central_differences(lum)
    planes = np.concatenate([rgb, hue[None], sat[None], dx[None], dy[None]])
    return ChannelStack(planes.astype(np.float32))
