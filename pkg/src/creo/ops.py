"""Deterministic image primitives behind every stage tool.

Everything here is a pure function over immutable rasters: stroke rendering
with a hard round brush, mask erasing, lasso transforms, masked compositing,
scribble-seeded flood fill, the closed-form light-rig shading map, parametric
style filters, morphological stroke thinning, and the image-first
decomposition into stage layers.

Pixel centers sit at integer coordinates; masks are hard-edged and brushes
max-blend, so every locality and lock invariant can be asserted bit-exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .errors import (
    ChannelMismatch,
    DimensionMismatch,
    EmptyStroke,
    SingularTransform,
    UnknownPreset,
)
from .model import LightSpec, PaletteColor, StyleSpec
from .raster import Mask, Raster

__all__ = [
    "Stroke",
    "AffineTransform",
    "render_stroke",
    "stroke_coverage",
    "erase_region",
    "lasso_transform",
    "masked_composite",
    "palette_fill",
    "flood_region",
    "shade_map",
    "apply_style",
    "thin_strokes",
    "decompose_image",
    "sobel_magnitude",
]

#: Ink density above which a pixel counts as a stroke boundary.
INK_THRESHOLD = 0.5

#: Shading values at or below this are treated as black during decomposition.
BLACK_CUTOFF = 1e-4

#: Normalized gradient magnitude above this becomes composition ink.
EDGE_THRESHOLD = 0.2

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Stroke:
    """Polyline brush stroke in float pixel coordinates."""

    points: tuple  # tuple[(x, y), ...]
    radius: float
    ink: float = 1.0
    mode: str = "draw"  # "draw" | "erase"

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        if not pts:
            raise EmptyStroke("stroke needs at least one point")
        if self.radius <= 0:
            raise ValueError("stroke radius must be positive")
        if not 0.0 <= self.ink <= 1.0:
            raise ValueError("stroke ink must lie in [0, 1]")
        if self.mode not in ("draw", "erase"):
            raise ValueError(f"stroke mode must be draw or erase, got {self.mode!r}")
        object.__setattr__(self, "points", pts)

    def to_json(self) -> dict:
        return {
            "points": [[x, y] for x, y in self.points],
            "radius": self.radius,
            "ink": self.ink,
            "mode": self.mode,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Stroke":
        return cls(
            points=tuple((p[0], p[1]) for p in obj["points"]),
            radius=float(obj["radius"]),
            ink=float(obj.get("ink", 1.0)),
            mode=obj.get("mode", "draw"),
        )


@dataclass(frozen=True)
class AffineTransform:
    """2x3 pixel-space affine (linear part + translation); must be invertible."""

    matrix: tuple  # ((a, b, tx), (c, d, ty))

    def __post_init__(self):
        m = tuple(tuple(float(v) for v in row) for row in self.matrix)
        if len(m) != 2 or any(len(row) != 3 for row in m):
            raise ValueError("affine matrix must be 2x3")
        object.__setattr__(self, "matrix", m)

    @property
    def determinant(self) -> float:
        (a, b, _), (c, d, _) = self.matrix
        return a * d - b * c

    def inverse_coeffs(self) -> tuple:
        """Coefficients mapping destination (x, y) back to source coordinates."""
        (a, b, tx), (c, d, ty) = self.matrix
        det = self.determinant
        if abs(det) <= 1e-9:
            raise SingularTransform(f"|det| = {abs(det):.3g} <= 1e-9")
        ia, ib = d / det, -b / det
        ic, id_ = -c / det, a / det
        itx = -(ia * tx + ib * ty)
        ity = -(ic * tx + id_ * ty)
        return (ia, ib, itx, ic, id_, ity)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "AffineTransform":
        return cls(((1.0, 0.0, dx), (0.0, 1.0, dy)))

    def to_json(self) -> list:
        return [list(row) for row in self.matrix]

    @classmethod
    def from_json(cls, obj: Sequence) -> "AffineTransform":
        return cls(tuple(tuple(row) for row in obj))


def _pixel_grid(width: int, height: int):
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(np.float64), ys.astype(np.float64)


def stroke_coverage(width: int, height: int, stroke: Stroke) -> Mask:
    """Pixels whose center lies within the stroke radius of its polyline."""
    xs, ys = _pixel_grid(width, height)
    covered = np.zeros((height, width), dtype=bool)
    pts = stroke.points
    segments = [(pts[0], pts[0])] if len(pts) == 1 else list(zip(pts[:-1], pts[1:]))
    r2 = stroke.radius * stroke.radius
    for (x1, y1), (x2, y2) in segments:
        dx, dy = x2 - x1, y2 - y1
        length2 = dx * dx + dy * dy
        if length2 == 0.0:
            d2 = (xs - x1) ** 2 + (ys - y1) ** 2
        else:
            t = np.clip(((xs - x1) * dx + (ys - y1) * dy) / length2, 0.0, 1.0)
            d2 = (xs - (x1 + t * dx)) ** 2 + (ys - (y1 + t * dy)) ** 2
        covered |= d2 <= r2
    return Mask(covered)


def render_stroke(canvas: Raster, stroke: Stroke) -> Raster:
    """Hard round brush: covered pixels take max(old ink, stroke ink)."""
    if canvas.channels != 1:
        raise ChannelMismatch("strokes render onto 1-channel ink layers")
    if stroke.mode != "draw":
        raise ValueError("render_stroke handles draw mode; erase via erase_region")
    covered = stroke_coverage(canvas.width, canvas.height, stroke).data
    return Raster(np.where(covered, np.maximum(canvas.data, stroke.ink), canvas.data))


def erase_region(canvas: Raster, mask: Mask) -> Raster:
    """Ink drops to 0 under the mask, untouched elsewhere."""
    if canvas.channels != 1:
        raise ChannelMismatch("erase operates on 1-channel ink layers")
    if not mask.matches(canvas):
        raise DimensionMismatch("erase mask does not match canvas")
    return Raster(np.where(mask.data, 0.0, canvas.data))


def lasso_transform(canvas: Raster, mask: Mask, t: AffineTransform) -> Raster:
    """Cut the masked region, warp it (nearest-neighbor), max-blend at the
    destination; content warped off-canvas is dropped."""
    if canvas.channels != 1:
        raise ChannelMismatch("lasso operates on 1-channel ink layers")
    if not mask.matches(canvas):
        raise DimensionMismatch("lasso mask does not match canvas")
    ia, ib, itx, ic, id_, ity = t.inverse_coeffs()

    cut = np.where(mask.data, 0.0, canvas.data)
    xs, ys = _pixel_grid(canvas.width, canvas.height)
    sx = np.rint(ia * xs + ib * ys + itx).astype(np.int64)
    sy = np.rint(ic * xs + id_ * ys + ity).astype(np.int64)
    inside = (sx >= 0) & (sx < canvas.width) & (sy >= 0) & (sy < canvas.height)
    sxc = np.clip(sx, 0, canvas.width - 1)
    syc = np.clip(sy, 0, canvas.height - 1)
    pulled = np.where(inside & mask.data[syc, sxc], canvas.data[syc, sxc], 0.0)
    return Raster(np.maximum(cut, pulled))


def masked_composite(base: Raster, patch: Raster, mask: Mask) -> Raster:
    """patch where mask = 1, base where mask = 0, bit-exact."""
    if base.data.shape != patch.data.shape:
        raise DimensionMismatch("composite base and patch must share shape and channels")
    if not mask.matches(base):
        raise DimensionMismatch("composite mask does not match rasters")
    cover = mask.data if base.channels == 1 else mask.data[:, :, None]
    return Raster(np.where(cover, patch.data, base.data))


def flood_region(sketch: Raster, seed: Mask) -> Mask:
    """Union of 4-connected low-ink components intersecting the seed mask.

    Low ink means density <= INK_THRESHOLD; components are bounded by
    higher-ink pixels.
    """
    if sketch.channels != 1:
        raise ChannelMismatch("flood fill reads a 1-channel ink layer")
    if not seed.matches(sketch):
        raise DimensionMismatch("flood seed mask does not match sketch")
    low = sketch.data <= INK_THRESHOLD
    labels, _ = ndimage.label(low, structure=_FOUR_CONNECTED)
    hit = np.unique(labels[seed.data & low])
    hit = hit[hit != 0]
    if hit.size == 0:
        return Mask.empty(sketch.width, sketch.height)
    return Mask(np.isin(labels, hit))


def palette_fill(sketch: Raster, scribble: Mask, color: PaletteColor, chroma: Raster) -> Raster:
    """Flood the scribbled low-ink components with a palette color in the
    chroma layer; never alters pixels above the ink threshold."""
    if chroma.channels != 3:
        raise ChannelMismatch("palette fill writes a 3-channel chroma layer")
    if chroma.data.shape[:2] != sketch.data.shape:
        raise DimensionMismatch("chroma layer does not match sketch")
    region = flood_region(sketch, scribble)
    solid = np.empty_like(chroma.data)
    solid[:] = color.rgb
    return Raster(np.where(region.data[:, :, None], solid, chroma.data))


def _centered_coords(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros(1, dtype=np.float64)
    return (2.0 * np.arange(n, dtype=np.float64) / (n - 1)) - 1.0


def shade_map(width: int, height: int, lights: Sequence[LightSpec]) -> Raster:
    """Closed-form shading: ambient terms plus directional ramps over centered
    normalized coordinates (u, v) in [-1, 1]^2, clamped to [0, 1]."""
    u = _centered_coords(width)[None, :]
    v = _centered_coords(height)[:, None]
    total = np.zeros((height, width), dtype=np.float64)
    for light in lights:
        if light.kind == "ambient":
            total += light.intensity
        else:
            az = math.radians(light.azimuth)
            el = math.radians(light.elevation)
            ramp = 0.5 + 0.5 * (u * math.cos(az) * math.cos(el) + v * math.sin(az) * math.cos(el))
            total = total + light.intensity * ramp
    return Raster(np.clip(total, 0.0, 1.0))


# --- style filters -----------------------------------------------------------


def _box_blur3(data: np.ndarray) -> np.ndarray:
    pad = ((1, 1), (1, 1)) if data.ndim == 2 else ((1, 1), (1, 1), (0, 0))
    p = np.pad(data, pad, mode="edge")
    acc = np.zeros_like(data)
    for dy in range(3):
        for dx in range(3):
            acc = acc + p[dy : dy + data.shape[0], dx : dx + data.shape[1]]
    return acc / 9.0


def sobel_magnitude(data: np.ndarray) -> np.ndarray:
    """Gradient magnitude of a 2-d grid with edge-replicated borders."""
    p = np.pad(data, 1, mode="edge")
    east = p[0:-2, 2:] + 2.0 * p[1:-1, 2:] + p[2:, 2:]
    west = p[0:-2, 0:-2] + 2.0 * p[1:-1, 0:-2] + p[2:, 0:-2]
    south = p[2:, 0:-2] + 2.0 * p[2:, 1:-1] + p[2:, 2:]
    north = p[0:-2, 0:-2] + 2.0 * p[0:-2, 1:-1] + p[0:-2, 2:]
    return np.hypot(east - west, south - north)


def _value_noise(width: int, height: int, seed: int, cell: int = 8) -> np.ndarray:
    """Smooth lattice noise in [-1, 1], deterministic for a given seed."""
    rng = np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)
    gw = width // cell + 2
    gh = height // cell + 2
    lattice = rng.random((gh, gw)) * 2.0 - 1.0
    xs = np.arange(width, dtype=np.float64) / cell
    ys = np.arange(height, dtype=np.float64) / cell
    x0 = xs.astype(np.int64)
    y0 = ys.astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    fx = fx * fx * (3.0 - 2.0 * fx)
    fy = fy * fy * (3.0 - 2.0 * fy)
    fx = fx[None, :]
    fy = fy[:, None]
    a = lattice[np.ix_(y0, x0)]
    b = lattice[np.ix_(y0, x0 + 1)]
    c = lattice[np.ix_(y0 + 1, x0)]
    d = lattice[np.ix_(y0 + 1, x0 + 1)]
    return (a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy


def _style_pencil(data: np.ndarray, params: dict, seed: int) -> np.ndarray:
    strength = float(params.get("edge", 0.5))
    lum = data.mean(axis=2)
    edges = sobel_magnitude(lum)
    peak = edges.max()
    if peak > 0.0:
        edges = edges / peak
    out = np.clip(lum - strength * edges, 0.0, 1.0)
    return np.repeat(out[:, :, None], 3, axis=2)


def _style_watercolor(data: np.ndarray, params: dict, seed: int) -> np.ndarray:
    grain = float(params.get("grain", 0.05))
    blurred = _box_blur3(data)
    noise = _value_noise(data.shape[1], data.shape[0], seed)
    return np.clip(blurred + grain * noise[:, :, None], 0.0, 1.0)


def _style_digital_paint(data: np.ndarray, params: dict, seed: int) -> np.ndarray:
    levels = max(2, int(params.get("levels", 6)))
    smoothed = _box_blur3(data)
    return np.rint(smoothed * (levels - 1)) / (levels - 1)


def _style_photoreal_mock(data: np.ndarray, params: dict, seed: int) -> np.ndarray:
    strength = float(params.get("vignette", 0.3))
    curve = data * data * (3.0 - 2.0 * data)
    u = _centered_coords(data.shape[1])[None, :]
    v = _centered_coords(data.shape[0])[:, None]
    falloff = 1.0 - strength * 0.5 * (u * u + v * v)
    return np.clip(curve * falloff[:, :, None], 0.0, 1.0)


_STYLE_FILTERS = {
    "pencil": _style_pencil,
    "watercolor": _style_watercolor,
    "digital-paint": _style_digital_paint,
    "photoreal-mock": _style_photoreal_mock,
}


def apply_style(image: Raster, style: StyleSpec) -> Raster:
    """Apply a registered style filter; identity returns the input unchanged."""
    if image.channels != 3:
        raise ChannelMismatch("style filters render 3-channel images")
    if style.preset == "identity":
        return image
    try:
        filt = _STYLE_FILTERS[style.preset]
    except KeyError:
        raise UnknownPreset(f"style preset {style.preset!r} is not registered") from None
    return Raster(filt(image.data, style.params, style.seed))


# --- morphological thinning ---------------------------------------------------


def _neighbors(b: np.ndarray) -> list:
    """Clockwise 8-neighborhood planes P2..P9 (N, NE, E, SE, S, SW, W, NW)."""
    p = np.pad(b, 1, mode="constant")
    h, w = b.shape
    return [
        p[0:h, 1 : w + 1],  # N
        p[0:h, 2 : w + 2],  # NE
        p[1 : h + 1, 2 : w + 2],  # E
        p[2 : h + 2, 2 : w + 2],  # SE
        p[2 : h + 2, 1 : w + 1],  # S
        p[2 : h + 2, 0:w],  # SW
        p[1 : h + 1, 0:w],  # W
        p[0:h, 0:w],  # NW
    ]


def thin_strokes(canvas: Raster, editable: Optional[Mask] = None) -> Raster:
    """Zhang-Suen thinning of the binarized ink structure.

    Only pixels inside ``editable`` may be deleted (the surrounding structure
    still counts as context), deleted pixels drop to 0 ink, surviving pixels
    keep their original density. Already-thin strokes are a fixpoint.
    """
    if canvas.channels != 1:
        raise ChannelMismatch("thinning operates on 1-channel ink layers")
    allowed = editable.data if editable is not None else np.ones(canvas.data.shape, dtype=bool)
    if allowed.shape != canvas.data.shape:
        raise DimensionMismatch("editable mask does not match canvas")

    binary = canvas.data > INK_THRESHOLD
    changed = True
    while changed:
        changed = False
        for step in (0, 1):
            n = _neighbors(binary.astype(np.uint8))
            count = sum(n)
            ring = n + [n[0]]
            transitions = sum(
                ((ring[i] == 0) & (ring[i + 1] == 1)).astype(np.uint8) for i in range(8)
            )
            p2, p4, p6, p8 = n[0], n[2], n[4], n[6]
            if step == 0:
                cond = (p2 * p4 * p6 == 0) & (p4 * p6 * p8 == 0)
            else:
                cond = (p2 * p4 * p8 == 0) & (p2 * p6 * p8 == 0)
            deletable = (
                binary
                & allowed
                & (count >= 2)
                & (count <= 6)
                & (transitions == 1)
                & cond
            )
            if deletable.any():
                binary = binary & ~deletable
                changed = True
    removed = (canvas.data > INK_THRESHOLD) & ~binary
    return Raster(np.where(removed, 0.0, canvas.data))


# --- image-first decomposition -------------------------------------------------


@dataclass(frozen=True)
class DecomposedLayers:
    composition: Raster
    chroma: Raster
    shading: Raster


def decompose_image(image: Raster) -> DecomposedLayers:
    """Reverse-engineer a finished image into stage layers.

    Shading is the per-pixel max channel, chroma the per-channel ratio to it
    (identity below the black cutoff), and composition the thresholded
    normalized gradient of shading. chroma * shading reproduces the image
    wherever shading exceeds the cutoff.
    """
    if image.channels != 3:
        raise ChannelMismatch("decomposition expects a 3-channel image")
    shading = image.data.max(axis=2)
    lit = shading > BLACK_CUTOFF
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = image.data / shading[:, :, None]
    chroma = np.where(lit[:, :, None], ratio, 1.0)
    grad = sobel_magnitude(shading)
    peak = grad.max()
    if peak > 0.0:
        ink = (grad / peak > EDGE_THRESHOLD).astype(np.float64)
    else:
        ink = np.zeros_like(shading)
    return DecomposedLayers(
        composition=Raster(ink),
        chroma=Raster(chroma),
        shading=Raster(shading),
    )
