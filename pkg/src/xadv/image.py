"""Pixel-space primitives: image buffers, L-infinity projection and lossless I/O.

Images are ``H x W x 3`` float64 arrays with values in ``[0, 1]``. 8-bit
quantization only happens when writing PNG files.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import kernels

SIDECAR_MAGIC = b"XADV"
LOSSLESS_SUFFIXES = {".png"}


class ImageError(ValueError):
    """Raised for unreadable, undecodable or out-of-contract images."""


class ImageBuffer:
    """Immutable H x W x 3 floating point image with values in [0, 1]."""

    __slots__ = ("_data",)

    def __init__(self, data, *, copy=True):
        arr = np.array(data, dtype=np.float64, copy=copy)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ImageError(f"expected an H x W x 3 array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ImageError(f"image must have positive height and width, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ImageError("image contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ImageError(
                f"image values must lie in [0, 1], got [{arr.min():.6g}, {arr.max():.6g}]"
            )
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        self._data = arr

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def height(self) -> int:
        return self._data.shape[0]

    @property
    def width(self) -> int:
        return self._data.shape[1]

    @property
    def channels(self) -> int:
        return 3

    @property
    def shape(self):
        return self._data.shape

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self.shape == other.shape and self._data.tobytes() == other._data.tobytes()

    def __hash__(self):
        return hash((self.shape, self._data.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.height}x{self.width})"

    @classmethod
    def full(cls, height, width, value=0.5):
        return cls(np.full((height, width, 3), value, dtype=np.float64), copy=False)


def as_array(image) -> np.ndarray:
    """Return the float64 array behind an ImageBuffer or array-like."""
    if isinstance(image, ImageBuffer):
        return image.data
    return np.asarray(image, dtype=np.float64)


@dataclass
class Perturbation:
    """Additive image-shaped delta constrained to an L-infinity ball."""

    data: np.ndarray
    budget: float
    shape: tuple = field(init=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.shape = self.data.shape

    @property
    def linf(self) -> float:
        return float(np.abs(self.data).max(initial=0.0))

    def within_budget(self) -> bool:
        return self.linf <= self.budget


def clip_linf(delta, epsilon):
    """Project ``delta`` elementwise onto ``[-epsilon, epsilon]``.

    Accepts a :class:`Perturbation` or an array and returns the same kind.
    Non-finite elements raise ``FloatingPointError``; they mean the
    optimization state is corrupted.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    arr = delta.data if isinstance(delta, Perturbation) else np.asarray(delta, dtype=np.float64)
    flat = np.ascontiguousarray(arr, dtype=np.float64).ravel()
    out = np.asarray(kernels.clip_linf(flat, float(epsilon))).reshape(arr.shape)
    if isinstance(delta, Perturbation):
        return Perturbation(out, float(epsilon))
    return out


def clamp_unit(image):
    """Clamp every element into [0, 1]; in-range values are untouched."""
    arr = as_array(image)
    if not np.isfinite(arr).all():
        raise ImageError("cannot clamp a non-finite image")
    out = np.clip(arr, 0.0, 1.0)
    if isinstance(image, ImageBuffer):
        return ImageBuffer(out, copy=False)
    return out


def quantize(image):
    """Round to the 8-bit grid, ``v -> round(v * 255) / 255``."""
    arr = as_array(image)
    out = to_uint8(arr).astype(np.float64) / 255.0
    if isinstance(image, ImageBuffer):
        return ImageBuffer(out, copy=False)
    return out


def to_uint8(arr) -> np.ndarray:
    # np.rint is round-half-to-even; add-half-floor gives the round-half-up
    # rule so 0.5 -> 128 as documented.
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _atomic_write_bytes(path: Path, payload: bytes):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def png_bytes(image) -> bytes:
    """Encode as an 8-bit RGB PNG (deterministic: fixed compression, no metadata)."""
    import io

    buf = io.BytesIO()
    Image.fromarray(to_uint8(as_array(image)), mode="RGB").save(
        buf, format="PNG", optimize=False, compress_level=6
    )
    return buf.getvalue()


def save_image(image, path):
    """Write ``image`` as a lossless PNG, atomically."""
    path = Path(path)
    if path.suffix.lower() not in LOSSLESS_SUFFIXES:
        raise ImageError(f"refusing to write {path.suffix or 'extension-less'} output; PNG only")
    if not path.parent.exists():
        raise ImageError(f"output directory does not exist: {path.parent}")
    try:
        _atomic_write_bytes(path, png_bytes(image))
    except OSError as exc:
        raise ImageError(f"cannot write {path}: {exc}") from exc
    return path


def load_image(path) -> ImageBuffer:
    """Read an 8-bit RGB image. Images with alpha or other modes are rejected."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode != "RGB":
                raise ImageError(f"{path}: expected 8-bit RGB, got mode {mode!r}")
            arr = np.asarray(im, dtype=np.uint8)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise ImageError(f"cannot decode {path}: {exc}") from exc
    return ImageBuffer(arr.astype(np.float64) / 255.0, copy=False)


def encode_sidecar(arr) -> bytes:
    """Raw float sidecar: ``XADV`` + (H, W, C) as u32 LE + float32 LE data."""
    arr = np.asarray(arr)
    if arr.ndim != 3:
        raise ValueError(f"sidecar needs a 3-D array, got shape {arr.shape}")
    header = SIDECAR_MAGIC + struct.pack("<3I", *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_sidecar(payload: bytes) -> np.ndarray:
    if len(payload) < 16 or payload[:4] != SIDECAR_MAGIC:
        raise ImageError("not an XADV sidecar (bad magic)")
    h, w, c = struct.unpack("<3I", payload[4:16])
    body = payload[16:]
    if len(body) != 4 * h * w * c:
        raise ImageError(f"sidecar body has {len(body)} bytes, expected {4 * h * w * c}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)


def save_sidecar(arr, path):
    _atomic_write_bytes(Path(path), encode_sidecar(arr))
    return Path(path)


def load_sidecar(path) -> np.ndarray:
    return decode_sidecar(Path(path).read_bytes())


def _bilinear_weights(n_in, n_out):
    # half-pixel centers, edge-clamped
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_bilinear(arr, height, width):
    """Bilinear resize of an H x W x C array (half-pixel convention)."""
    arr = np.asarray(arr, dtype=np.float64)
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {height}x{width}")
    if arr.shape[:2] == (height, width):
        return arr.copy()
    r0, r1, fr = _bilinear_weights(arr.shape[0], height)
    c0, c1, fc = _bilinear_weights(arr.shape[1], width)
    rows = arr[r0] * (1.0 - fr)[:, None, None] + arr[r1] * fr[:, None, None]
    out = rows[:, c0] * (1.0 - fc)[None, :, None] + rows[:, c1] * fc[None, :, None]
    return out
