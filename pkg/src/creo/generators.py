"""Generation backends behind one contract: every output is a mask-bounded diff.

The mock backend is a registry of exact-match instructions implemented with
the deterministic primitives in creo.ops; it backs all tests. The remote
adapter serializes the decision state into a stage-scoped multipart request
and forcibly clips whatever comes back to the effective mask, so model
spillover becomes a logged discrepancy instead of state corruption.
"""

from __future__ import annotations

import hashlib
import logging
import math
import uuid
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .errors import (
    BackendUnavailable,
    DimensionMismatch,
    EmptyPrompt,
    LockedRegionRequested,
    UnknownInstruction,
    ZeroCount,
)
from .model import DecisionState, LightSpec, StageId
from .ops import (
    apply_style,
    flood_region,
    masked_composite,
    render_stroke,
    thin_strokes,
    Stroke,
)
from .pipeline import compose_base, compose_preview, editable_attributes, ALL_ATTRIBUTES
from .raster import Mask, Raster, mask_from_png, mask_to_png, raster_from_png, raster_to_png

log = logging.getLogger(__name__)

__all__ = [
    "Diff",
    "GenerationRequest",
    "PromptBundle",
    "Backend",
    "MockBackend",
    "RemoteBackend",
    "LIGHT_RIGS",
    "effective_mask",
    "stage_edit",
    "apply_diff",
    "build_prompt",
    "generate_viewpoints",
]


@dataclass(frozen=True)
class Diff:
    """Mask-bounded patch for one stage layer; values outside the mask are ignored."""

    mask: Mask
    patch: Raster
    target_stage: StageId

    def is_empty(self) -> bool:
        return self.mask.is_empty()


@dataclass(frozen=True)
class GenerationRequest:
    state: DecisionState
    stage: StageId
    instruction: str
    mask: Optional[Mask] = None
    seed: int = 0

    def __post_init__(self):
        if not self.instruction:
            raise UnknownInstruction("instruction must be non-empty")
        if self.mask is not None and not self.mask.matches(self.state.composition):
            raise DimensionMismatch("request mask does not match canvas")


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    stage_text: str
    lock_description: str
    reference_images: dict  # name -> Raster


def effective_mask(request: GenerationRequest) -> Mask:
    """Request mask minus locks; an explicit mask may not overlap a lock.

    With no explicit mask the whole canvas minus the stage's locked coverage
    is editable. A fully locked stage, or an explicit mask touching locked
    pixels, is rejected before any generation happens.
    """
    state = request.state
    locked = state.locks.combined_mask(request.stage, state.width, state.height)
    if state.locks.is_stage_locked(request.stage):
        raise LockedRegionRequested(f"{request.stage.value} is fully locked")
    if request.mask is not None:
        if bool((request.mask.data & locked.data).any()):
            raise LockedRegionRequested("request mask overlaps a locked region")
        return request.mask
    return Mask(~locked.data)


class Backend(Protocol):
    def generate(self, request: GenerationRequest, editable: Mask) -> tuple:
        """Return (patch raster, support mask) honoring the editable mask."""
        ...


def _support(old: Raster, new: Raster, editable: Mask) -> Mask:
    delta = old.data != new.data
    if old.channels == 3:
        delta = delta.any(axis=2)
    return Mask(delta & editable.data)


class MockBackend:
    """Exact-match instruction registry over the deterministic primitives."""

    name = "mock"

    def generate(self, request: GenerationRequest, editable: Mask) -> tuple:
        state = request.state
        stage = request.stage
        instruction = request.instruction

        if stage is StageId.COMPOSITION and instruction == "cleanup":
            thinned = thin_strokes(state.composition, editable)
            return thinned, _support(state.composition, thinned, editable)

        if stage is StageId.COLOR and instruction.startswith("fill:"):
            index = _parse_palette_index(instruction, len(state.palette))
            color = state.palette[index]
            region = flood_region(state.composition, editable).intersection(editable)
            solid = np.empty_like(state.chroma.data)
            solid[:] = color.rgb
            patch = Raster(np.where(region.data[:, :, None], solid, state.chroma.data))
            return patch, _support(state.chroma, patch, editable)

        if stage is StageId.LIGHTING and instruction.startswith("vibe:"):
            rig_name = instruction.split(":", 1)[1]
            rig = LIGHT_RIGS.get(rig_name)
            if rig is None:
                raise UnknownInstruction(f"unknown lighting vibe {rig_name!r}")
            from .ops import shade_map

            shaded = shade_map(state.width, state.height, rig)
            return shaded, _support(state.shading, shaded, editable)

        if stage is StageId.STYLE and instruction == "apply":
            base = compose_base(state)
            styled = apply_style(base, state.style)
            return styled, _support(base, styled, editable)

        raise UnknownInstruction(f"{stage.value}/{instruction!r} is not registered")


def _parse_palette_index(instruction: str, palette_size: int) -> int:
    raw = instruction.split(":", 1)[1]
    try:
        index = int(raw)
    except ValueError:
        raise UnknownInstruction(f"bad palette index in {instruction!r}") from None
    if not 0 <= index < palette_size:
        raise UnknownInstruction(f"palette index {index} out of range (palette has {palette_size})")
    return index


#: Named light rigs reachable through the "vibe:<name>" instruction.
LIGHT_RIGS = {
    "sunset": (
        LightSpec(kind="directional", azimuth=180.0, elevation=10.0, intensity=0.8),
        LightSpec(kind="ambient", intensity=0.2),
    ),
    "noon": (
        LightSpec(kind="directional", azimuth=90.0, elevation=60.0, intensity=0.6),
        LightSpec(kind="ambient", intensity=0.4),
    ),
    "studio": (
        LightSpec(kind="directional", azimuth=45.0, elevation=45.0, intensity=0.5),
        LightSpec(kind="ambient", intensity=0.5),
    ),
    "moonlight": (
        LightSpec(kind="directional", azimuth=270.0, elevation=30.0, intensity=0.35),
        LightSpec(kind="ambient", intensity=0.1),
    ),
    "neon-backlight": (
        LightSpec(kind="directional", azimuth=90.0, elevation=5.0, intensity=0.85),
        LightSpec(kind="ambient", intensity=0.15),
    ),
}


def stage_edit(request: GenerationRequest, backend: Backend) -> Diff:
    """Run one stage-scoped generation; the result is always a diff whose
    support lies inside the request's effective mask."""
    editable = effective_mask(request)
    patch, support = backend.generate(request, editable)
    support = support.intersection(editable)
    return Diff(mask=support, patch=patch, target_stage=request.stage)


def apply_diff(layer: Raster, diff: Diff) -> Raster:
    """Identical to masked_composite(layer, diff.patch, diff.mask)."""
    return masked_composite(layer, diff.patch, diff.mask)


_SYSTEM_TEXT = (
    "You are an image editing model inside a staged ideation workflow. "
    "Edit only what the stage instruction permits and return a patch plus "
    "the mask of pixels you changed."
)


def build_prompt(request: GenerationRequest) -> PromptBundle:
    """Deterministic serialization of a request for a remote model."""
    stage = request.stage
    mutable = sorted(editable_attributes(stage))
    frozen = [a for a in ALL_ATTRIBUTES if a not in mutable]
    stage_text = (
        f"Stage: {stage.value}. "
        f"Mutable attributes: {', '.join(mutable)}. "
        f"Frozen attributes (do not alter): {', '.join(frozen)}. "
        f"Instruction: {request.instruction}"
    )

    locks = request.state.locks
    parts = []
    for s in sorted(locks.stage_locks, key=lambda s: s.value):
        parts.append(f"stage {s.value} fully locked")
    for rl in locks.region_locks:
        parts.append(f"region lock {rl.lock_id} on {rl.stage.value}: {int(rl.mask.data.sum())} px")
    lock_description = "; ".join(parts) if parts else "no locks"

    state = request.state
    if stage in (StageId.VIEWPOINT, StageId.COMPOSITION):
        layer: Raster = state.composition
    elif stage is StageId.COLOR:
        layer = state.chroma
    elif stage is StageId.LIGHTING:
        layer = state.shading
    else:
        layer = compose_base(state)

    return PromptBundle(
        system_text=_SYSTEM_TEXT,
        stage_text=stage_text,
        lock_description=lock_description,
        reference_images={"preview": compose_preview(state), "layer": layer},
    )


class RemoteBackend:
    """HTTP adapter: multipart POST of the prompt bundle, PNG patch + mask back.

    The response is clipped to the effective mask before it ever reaches a
    layer; spillover pixel counts are logged. Failures never mutate state.
    """

    name = "remote"

    def __init__(self, url: str, timeout: float = 60.0, retries: int = 2, session=None):
        import requests

        self.url = url
        self.timeout = timeout
        self.retries = retries
        self._http = session or requests.Session()

    def generate(self, request: GenerationRequest, editable: Mask) -> tuple:
        bundle = build_prompt(request)
        data = {
            "system_text": bundle.system_text,
            "stage_text": bundle.stage_text,
            "lock_description": bundle.lock_description,
            "stage": request.stage.value,
            "instruction": request.instruction,
            "seed": str(request.seed),
        }
        files = {
            name: (f"{name}.png", raster_to_png(img), "image/png")
            for name, img in sorted(bundle.reference_images.items())
        }
        files["mask"] = ("mask.png", mask_to_png(editable), "image/png")

        last_error: Exception | None = None
        for _ in range(self.retries + 1):
            headers = {"Idempotency-Key": uuid.uuid4().hex}
            try:
                resp = self._http.post(
                    self.url, data=data, files=files, headers=headers, timeout=self.timeout
                )
                resp.raise_for_status()
                body = resp.json()
                patch = raster_from_png(_b64decode(body["patch"]))
                mask = mask_from_png(_b64decode(body["mask"]))
            except Exception as exc:  # noqa: BLE001 - every failure mode retries
                last_error = exc
                continue
            if not mask.matches(request.state.composition):
                last_error = BackendUnavailable("remote mask does not match canvas")
                continue
            spill = int((mask.data & ~editable.data).sum())
            if spill:
                log.warning("remote backend spilled %d px outside the mask; clipped", spill)
            return patch, mask.intersection(editable)
        raise BackendUnavailable(f"remote backend failed after {self.retries + 1} attempts: {last_error}")


def _b64decode(text: str) -> bytes:
    import base64

    return base64.b64decode(text)


# --- procedural viewpoint sketches ---------------------------------------------


def _sketch_rng(prompt: str, seed: int, index: int) -> np.random.Generator:
    digest = hashlib.sha256(f"{prompt}\x1f{seed}\x1f{index}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def _ellipse_points(cx: float, cy: float, rx: float, ry: float, n: int = 28) -> tuple:
    ts = np.linspace(0.0, 2.0 * math.pi, n)
    return tuple((cx + rx * math.cos(t), cy + ry * math.sin(t)) for t in ts)


def generate_viewpoints(
    prompt: str, n: int, seed: int, width: int = 512, height: int = 512
) -> list:
    """n distinct procedural composition sketches, deterministic in
    (prompt, n, seed); layout of the primitive outlines is hash-driven."""
    if not prompt:
        raise EmptyPrompt("viewpoint generation needs a prompt")
    if n < 1:
        raise ZeroCount("viewpoint count must be at least 1")

    sketches = []
    for index in range(n):
        rng = _sketch_rng(prompt, seed, index)
        canvas = Raster.blank(width, height, 1, 0.0)
        radius = max(1.0, min(width, height) / 96.0)

        horizon = float(rng.uniform(0.25, 0.85)) * (height - 1)
        canvas = render_stroke(
            canvas,
            Stroke(points=((0.0, horizon), (float(width - 1), horizon)), radius=radius),
        )

        for _ in range(int(rng.integers(2, 5))):
            kind = rng.integers(0, 3)
            cx = float(rng.uniform(0.15, 0.85)) * width
            cy = float(rng.uniform(0.15, 0.85)) * height
            sx = float(rng.uniform(0.08, 0.28)) * width
            sy = float(rng.uniform(0.08, 0.28)) * height
            if kind == 0:  # box outline
                pts = (
                    (cx - sx, cy - sy),
                    (cx + sx, cy - sy),
                    (cx + sx, cy + sy),
                    (cx - sx, cy + sy),
                    (cx - sx, cy - sy),
                )
            elif kind == 1:  # ellipse
                pts = _ellipse_points(cx, cy, sx, sy)
            else:  # triangle
                pts = ((cx, cy - sy), (cx + sx, cy + sy), (cx - sx, cy + sy), (cx, cy - sy))
            canvas = render_stroke(canvas, Stroke(points=pts, radius=radius))
        sketches.append(canvas)
    return sketches
