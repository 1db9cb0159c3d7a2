"""Normalized raster and binary mask types plus PNG import/export.

A :class:`Raster` is the substrate for every stage layer and preview: a
row-major float64 grid with 1 or 3 channels, all samples finite and in
[0, 1]. A :class:`Mask` is a same-shaped binary coverage grid. Both wrap
read-only numpy arrays so shared snapshots cannot be mutated in place.

PNG export quantizes with ``round(v * 255)`` (ties to even) and import maps
back with ``v = q / 255``; masks are written as 1-channel PNGs with values
{0, 255}.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .errors import ChannelMismatch, DimensionMismatch

__all__ = [
    "Raster",
    "Mask",
    "quantize",
    "dequantize",
    "raster_to_png",
    "raster_from_png",
    "mask_to_png",
    "mask_from_png",
]


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


class Raster:
    """Immutable float image grid, shape (height, width) or (height, width, 3)."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        else:
            raise ChannelMismatch(f"raster must have 1 or 3 channels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"raster must be at least 1x1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster samples must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("raster samples must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(arr.copy() if arr.base is not None or arr.flags.writeable else arr))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Raster is immutable")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @classmethod
    def blank(cls, width: int, height: int, channels: int = 1, fill: float = 0.0) -> "Raster":
        shape = (height, width) if channels == 1 else (height, width, 3)
        return cls(np.full(shape, fill, dtype=np.float64))

    def same_shape(self, other: "Raster") -> bool:
        return self.data.shape == other.data.shape

    def __eq__(self, other) -> bool:
        return isinstance(other, Raster) and self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"Raster({self.width}x{self.height}x{self.channels})"


class Mask:
    """Immutable binary coverage grid, shape (height, width), values {0, 1}."""

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.asarray(data)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise DimensionMismatch(f"mask must be 2-d, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            values = np.unique(arr)
            if not np.all(np.isin(values, (0, 1))):
                raise ValueError("mask values must be strictly binary (0 or 1)")
            arr = arr.astype(bool)
        object.__setattr__(self, "data", _freeze(arr.copy() if arr.base is not None or arr.flags.writeable else arr))

    def __setattr__(self, name, value):  # pragma: no cover - immutability guard
        raise AttributeError("Mask is immutable")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))

    def matches(self, raster: Raster) -> bool:
        return self.data.shape == raster.data.shape[:2]

    def is_empty(self) -> bool:
        return not bool(self.data.any())

    def union(self, other: "Mask") -> "Mask":
        if self.data.shape != other.data.shape:
            raise DimensionMismatch("mask union requires matching shapes")
        return Mask(self.data | other.data)

    def intersection(self, other: "Mask") -> "Mask":
        if self.data.shape != other.data.shape:
            raise DimensionMismatch("mask intersection requires matching shapes")
        return Mask(self.data & other.data)

    def invert(self) -> "Mask":
        return Mask(~self.data)

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self) -> str:
        return f"Mask({self.width}x{self.height}, {int(self.data.sum())} set)"


def quantize(raster: Raster) -> np.ndarray:
    """8-bit quantization: round(v * 255), ties to even."""
    return np.rint(raster.data * 255.0).astype(np.uint8)


def dequantize(levels: np.ndarray) -> Raster:
    """Inverse of :func:`quantize`: v = q / 255."""
    return Raster(np.asarray(levels, dtype=np.float64) / 255.0)


def raster_to_png(raster: Raster) -> bytes:
    levels = quantize(raster)
    mode = "L" if raster.channels == 1 else "RGB"
    img = Image.fromarray(levels, mode=mode)
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def raster_from_png(blob: bytes) -> Raster:
    img = Image.open(io.BytesIO(blob))
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB") if len(img.getbands()) >= 3 else img.convert("L")
    return dequantize(np.asarray(img))


def mask_to_png(mask: Mask) -> bytes:
    img = Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def mask_from_png(blob: bytes) -> Mask:
    img = Image.open(io.BytesIO(blob)).convert("L")
    return Mask(np.asarray(img) >= 128)
