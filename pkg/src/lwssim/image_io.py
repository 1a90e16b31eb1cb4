"""Image container, PGM/PPM/PNG codecs and synthetic test images.

Images are held planar as float64 arrays of shape ``(channels, m, n)`` with
intensities normalized to [0, 1].
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import png

from ._fileio import atomic_write_bytes

__all__ = [
    "Image",
    "ImageFormatError",
    "SyntheticSpec",
    "as_planes",
    "load_image",
    "save_image",
    "synthesize",
    "encode_gray8",
]


class ImageFormatError(ValueError):
    """Unsupported or malformed image file."""


@dataclass(frozen=True)
class Image:
    """Immutable multi-channel image with intensities in [0, 1].

    Parameters
    ----------
    data : array_like
        ``(m, n)`` for a single plane or ``(channels, m, n)``.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None]
        if arr.ndim != 3:
            raise ValueError(f"image data must be 2-D or 3-D, got shape {arr.shape}")
        c, m, n = arr.shape
        if c < 1:
            raise ValueError("image needs at least one channel")
        if m < 2 or n < 2:
            raise ValueError(f"image must be at least 2x2, got {m}x{n}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image intensities must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def clipped(cls, data) -> "Image":
        """Build an image from arbitrary reals by clipping into [0, 1]."""
        return cls(np.clip(np.asarray(data, dtype=np.float64), 0.0, 1.0))


def as_planes(img) -> np.ndarray:
    """Return a float64 ``(channels, m, n)`` view of an Image or array.

    No range check is applied, so perturbed images (e.g. for finite
    differences) pass through unchanged.
    """
    if isinstance(img, Image):
        return img.data
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a 2-D or 3-D array, got shape {arr.shape}")
    return arr


# --------------------------------------------------------------------------
# Netpbm (P5 / P6)
# --------------------------------------------------------------------------

def _pnm_header(buf: bytes):
    """Parse magic, width, height, maxval; return them and the raster offset."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(buf):
            raise ImageFormatError("truncated netpbm header")
        ch = buf[pos:pos + 1]
        if ch == b"#":
            end = buf.find(b"\n", pos)
            pos = len(buf) if end < 0 else end + 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(buf) and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(buf[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    pos += 1
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageFormatError("malformed netpbm header") from exc
    return magic, width, height, maxval, pos


def _read_pnm(buf: bytes) -> np.ndarray:
    magic, width, height, maxval, offset = _pnm_header(buf)
    if magic == b"P5":
        channels = 1
    elif magic == b"P6":
        channels = 3
    else:
        raise ImageFormatError(f"unsupported netpbm type {magic!r}")
    if not 0 < maxval <= 65535:
        raise ImageFormatError(f"unsupported maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height * channels
    if len(buf) - offset < count * dtype.itemsize:
        raise ImageFormatError("truncated netpbm raster")
    raw = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    planes = raw.reshape(height, width, channels).transpose(2, 0, 1)
    return planes.astype(np.float64) / maxval


def _write_pnm(planes8: np.ndarray) -> bytes:
    c, m, n = planes8.shape
    magic = {1: b"P5", 3: b"P6"}.get(c)
    if magic is None:
        raise ImageFormatError(f"netpbm output needs 1 or 3 channels, got {c}")
    header = magic + f"\n{n} {m}\n255\n".encode("ascii")
    return header + planes8.transpose(1, 2, 0).astype(np.uint8).tobytes()


# --------------------------------------------------------------------------
# PNG
# --------------------------------------------------------------------------

def _read_png(buf: bytes) -> np.ndarray:
    try:
        width, height, rows, info = png.Reader(bytes=buf).asDirect()
        data = np.vstack([np.asarray(row, dtype=np.float64) for row in rows])
    except png.Error as exc:
        raise ImageFormatError(f"cannot decode PNG: {exc}") from exc
    bitdepth = info["bitdepth"]
    if bitdepth not in (8, 16):
        raise ImageFormatError(f"unsupported PNG bit depth {bitdepth}")
    planes = info["planes"]
    data = data.reshape(height, width, planes).transpose(2, 0, 1)
    if info["alpha"]:
        data = data[:-1]
    return data / float(2 ** bitdepth - 1)


def _write_png(planes8: np.ndarray) -> bytes:
    c, m, n = planes8.shape
    if c not in (1, 3):
        raise ImageFormatError(f"PNG output needs 1 or 3 channels, got {c}")
    writer = png.Writer(width=n, height=m, greyscale=(c == 1), bitdepth=8)
    rows = planes8.transpose(1, 2, 0).reshape(m, n * c).astype(np.uint8)
    out = io.BytesIO()
    writer.write(out, rows)
    return out.getvalue()


def load_image(path) -> Image:
    """Load a PGM (P5), PPM (P6) or PNG file into an :class:`Image`.

    Integer samples are divided by the format maximum. Alpha channels are
    dropped.
    """
    buf = Path(path).read_bytes()
    if buf.startswith(b"\x89PNG\r\n\x1a\n"):
        planes = _read_png(buf)
    elif buf[:2] in (b"P5", b"P6"):
        planes = _read_pnm(buf)
    else:
        raise ImageFormatError(f"{path}: not a PGM/PPM/PNG file")
    return Image(planes)


def quantize8(planes: np.ndarray) -> np.ndarray:
    return np.rint(np.clip(planes, 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_gray8(plane: np.ndarray, suffix: str) -> bytes:
    """Encode a single [0, 1] plane of any size (maps may be 1xN)."""
    planes8 = quantize8(np.asarray(plane, dtype=np.float64)[None])
    return _encode(planes8, suffix)


def _encode(planes8: np.ndarray, suffix: str) -> bytes:
    suffix = suffix.lower()
    if suffix == ".png":
        return _write_png(planes8)
    if suffix == ".pgm":
        if planes8.shape[0] != 1:
            raise ImageFormatError("PGM holds a single channel; use .ppm or .png")
        return _write_pnm(planes8)
    if suffix == ".ppm":
        if planes8.shape[0] != 3:
            raise ImageFormatError("PPM holds three channels; use .pgm or .png")
        return _write_pnm(planes8)
    raise ImageFormatError(f"unsupported output extension {suffix!r}")


def save_image(img: Image, path) -> None:
    """Write an 8-bit PGM/PPM/PNG chosen by the file extension."""
    path = Path(path)
    atomic_write_bytes(path, _encode(quantize8(img.data), path.suffix))


# --------------------------------------------------------------------------
# Synthetic images
# --------------------------------------------------------------------------

_KINDS = ("constant", "horizontal-gradient", "checkerboard", "uniform-noise")


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a deterministic test image.

    ``value`` is used by *constant*, ``period`` by *checkerboard*,
    ``seed`` and ``amplitude`` by *uniform-noise* (samples are
    ``0.5 + amplitude * (u - 0.5)`` with ``u ~ U[0, 1)``).
    """

    kind: str
    value: float = 0.5
    period: int = 1
    seed: int = 0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown synthetic kind {self.kind!r}; expected one of {_KINDS}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("constant value must lie in [0, 1]")
        if not 0.0 <= self.amplitude <= 1.0:
            raise ValueError("noise amplitude must lie in [0, 1]")
        if self.period < 1:
            raise ValueError("checkerboard period must be >= 1")


def synthesize(spec: SyntheticSpec, channels: int, m: int, n: int) -> Image:
    if m < 2 or n < 2:
        raise ValueError(f"synthetic image must be at least 2x2, got {m}x{n}")
    if channels < 1:
        raise ValueError("channels must be >= 1")
    shape = (channels, m, n)
    if spec.kind == "constant":
        data = np.full(shape, spec.value)
    elif spec.kind == "horizontal-gradient":
        ramp = np.arange(n, dtype=np.float64) / (n - 1)
        data = np.broadcast_to(ramp, shape).copy()
    elif spec.kind == "checkerboard":
        i = np.arange(m)[:, None] // spec.period
        j = np.arange(n)[None, :] // spec.period
        data = np.broadcast_to(((i + j) % 2).astype(np.float64), shape).copy()
    else:
        rng = np.random.default_rng(spec.seed)
        data = 0.5 + spec.amplitude * (rng.random(shape) - 0.5)
    return Image(data)
