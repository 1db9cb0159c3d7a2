"""Domain types: stages, layers, locks, events, and sessions.

The decision state is the complete record of a user's committed choices.
Layer algebra is multiplicative: the composition layer is ink density
(0 = blank paper), chroma and shading are per-pixel multiplicative factors
whose identity is all-ones, and the style spec is applied last at preview
time. A stage that has never been visited holds its identity layer, so the
blank state previews to pure white.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, UnknownBranch, UnknownEvent
from .raster import Mask, Raster

__all__ = [
    "StageId",
    "STAGE_ORDER",
    "LightSpec",
    "PaletteColor",
    "StyleSpec",
    "RegionLock",
    "LockSet",
    "DecisionState",
    "blank_state",
    "EditEvent",
    "Session",
]


class StageId(str, Enum):
    """The five decision stages; Viewpoint selects the initial sketch and the
    canonical preview composition order is Composition -> Color -> Lighting -> Style."""

    VIEWPOINT = "Viewpoint"
    COMPOSITION = "Composition"
    COLOR = "Color"
    LIGHTING = "Lighting"
    STYLE = "Style"

    @classmethod
    def parse(cls, value: str) -> "StageId":
        for stage in cls:
            if stage.value.lower() == str(value).lower():
                return stage
        raise ValueError(f"unknown stage {value!r}")


STAGE_ORDER = (
    StageId.VIEWPOINT,
    StageId.COMPOSITION,
    StageId.COLOR,
    StageId.LIGHTING,
    StageId.STYLE,
)


@dataclass(frozen=True)
class LightSpec:
    """One light in a rig; ambient lights store azimuth/elevation as 0."""

    kind: str  # "ambient" | "directional"
    azimuth: float = 0.0  # degrees in [0, 360)
    elevation: float = 0.0  # degrees in [0, 90]
    intensity: float = 1.0  # [0, 1]

    def __post_init__(self):
        if self.kind not in ("ambient", "directional"):
            raise ValueError(f"light kind must be ambient or directional, got {self.kind!r}")
        if self.kind == "ambient" and (self.azimuth != 0.0 or self.elevation != 0.0):
            raise ValueError("ambient lights must store azimuth and elevation as 0")
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError("azimuth must lie in [0, 360)")
        if not 0.0 <= self.elevation <= 90.0:
            raise ValueError("elevation must lie in [0, 90]")
        if not 0.0 <= self.intensity <= 1.0 or not math.isfinite(self.intensity):
            raise ValueError("intensity must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "azimuth": self.azimuth,
            "elevation": self.elevation,
            "intensity": self.intensity,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LightSpec":
        return cls(
            kind=obj["kind"],
            azimuth=float(obj.get("azimuth", 0.0)),
            elevation=float(obj.get("elevation", 0.0)),
            intensity=float(obj.get("intensity", 1.0)),
        )


@dataclass(frozen=True)
class PaletteColor:
    rgb: tuple[float, float, float]
    label: str = ""

    def __post_init__(self):
        rgb = tuple(float(c) for c in self.rgb)
        if len(rgb) != 3 or any(not 0.0 <= c <= 1.0 for c in rgb):
            raise ValueError("palette rgb components must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)

    def to_json(self) -> dict:
        return {"rgb": list(self.rgb), "label": self.label}

    @classmethod
    def from_json(cls, obj: dict) -> "PaletteColor":
        return cls(rgb=tuple(obj["rgb"]), label=obj.get("label", ""))


#: Style presets registered with the filter implementations in creo.ops.
STYLE_PRESETS = ("identity", "pencil", "watercolor", "digital-paint", "photoreal-mock")


@dataclass(frozen=True)
class StyleSpec:
    """Global appearance filter choice; ``identity`` with empty params is a no-op."""

    preset: str = "identity"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.preset not in STYLE_PRESETS:
            # UnknownPreset is raised by apply_style; construction stays strict too.
            from .errors import UnknownPreset

            raise UnknownPreset(f"style preset {self.preset!r} is not registered")

    def is_identity(self) -> bool:
        return self.preset == "identity"

    def key(self) -> tuple:
        return (self.preset, tuple(sorted(self.params.items())), self.seed)

    def __eq__(self, other) -> bool:
        return isinstance(other, StyleSpec) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def to_json(self) -> dict:
        return {"preset": self.preset, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: dict) -> "StyleSpec":
        return cls(preset=obj["preset"], params=dict(obj.get("params", {})), seed=int(obj.get("seed", 0)))


@dataclass(frozen=True)
class RegionLock:
    lock_id: str
    stage: StageId
    mask: Mask


@dataclass(frozen=True)
class LockSet:
    """Stage-level and region-level freezes; a fully locked stage behaves as if
    region-locked everywhere."""

    stage_locks: frozenset = frozenset()
    region_locks: tuple = ()  # tuple[RegionLock, ...]

    def is_stage_locked(self, stage: StageId) -> bool:
        return stage in self.stage_locks

    def masks_for(self, stage: StageId) -> list[Mask]:
        return [rl.mask for rl in self.region_locks if rl.stage == stage]

    def combined_mask(self, stage: StageId, width: int, height: int) -> Mask:
        """Union of all locked coverage for a stage at the given canvas size."""
        if stage in self.stage_locks:
            return Mask.full(width, height)
        acc = np.zeros((height, width), dtype=bool)
        for rl in self.region_locks:
            if rl.stage == stage:
                if rl.mask.data.shape != (height, width):
                    raise DimensionMismatch("region lock mask does not match canvas")
                acc |= rl.mask.data
        return Mask(acc)

    def with_stage_lock(self, stage: StageId) -> "LockSet":
        return LockSet(self.stage_locks | {stage}, self.region_locks)

    def without_stage_lock(self, stage: StageId) -> "LockSet":
        return LockSet(self.stage_locks - {stage}, self.region_locks)

    def with_region_lock(self, lock: RegionLock) -> "LockSet":
        return LockSet(self.stage_locks, self.region_locks + (lock,))

    def without_region_lock(self, lock_id: str) -> "LockSet":
        return LockSet(
            self.stage_locks,
            tuple(rl for rl in self.region_locks if rl.lock_id != lock_id),
        )

    def lock_ids(self) -> list[str]:
        ids = [f"stage:{s.value}" for s in sorted(self.stage_locks, key=lambda s: s.value)]
        ids.extend(rl.lock_id for rl in self.region_locks)
        return ids


@dataclass(frozen=True, eq=False)
class DecisionState:
    """Per-stage layers plus locks and the visited set; the unit of propagation."""

    composition: Raster  # 1ch ink density, 0 = blank paper
    chroma: Raster  # 3ch multiplicative color factors, identity all-ones
    shading: Raster  # 1ch multiplicative light factors, identity all-ones
    lights: tuple = ()  # tuple[LightSpec, ...]
    palette: tuple = ()  # tuple[PaletteColor, ...]
    style: StyleSpec = StyleSpec()
    locks: LockSet = LockSet()
    visited: frozenset = frozenset()

    def __post_init__(self):
        if self.composition.channels != 1 or self.shading.channels != 1:
            raise DimensionMismatch("composition and shading layers must be 1-channel")
        if self.chroma.channels != 3:
            raise DimensionMismatch("chroma layer must be 3-channel")
        shape = self.composition.data.shape
        if self.shading.data.shape != shape or self.chroma.data.shape[:2] != shape:
            raise DimensionMismatch("all layer rasters must share width and height")

    @property
    def width(self) -> int:
        return self.composition.width

    @property
    def height(self) -> int:
        return self.composition.height

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, DecisionState)
            and self.composition == other.composition
            and self.chroma == other.chroma
            and self.shading == other.shading
            and self.lights == other.lights
            and self.palette == other.palette
            and self.style == other.style
            and self.locks == other.locks
            and self.visited == other.visited
        )

    def __hash__(self):  # pragma: no cover - states are not used as dict keys
        return hash((self.composition, self.chroma, self.shading))


def blank_state(width: int, height: int) -> DecisionState:
    """Identity layers, nothing visited: previews to pure white."""
    return DecisionState(
        composition=Raster.blank(width, height, 1, 0.0),
        chroma=Raster.blank(width, height, 3, 1.0),
        shading=Raster.blank(width, height, 1, 1.0),
    )


@dataclass(frozen=True)
class EditEvent:
    """Append-only, branch-aware record of one user/model action."""

    event_id: int
    parent_id: Optional[int]
    branch: str
    stage: StageId
    tool: str
    payload: dict
    mask: Optional[Mask] = None
    seed: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True, eq=False)
class Session:
    """Immutable session snapshot: event DAG, branch heads, entry metadata.

    Mutation happens only through the pure operations in creo.engine, each of
    which returns a new Session value.
    """

    session_id: str
    entry_mode: str  # "prompt_first" | "image_first"
    prompt: Optional[str]
    source_image: Optional[Raster]
    width: int
    height: int
    events: dict = field(default_factory=dict)  # event_id -> EditEvent
    heads: dict = field(default_factory=dict)  # branch name -> event_id
    active_branch: str = "main"

    def __post_init__(self):
        if self.entry_mode not in ("prompt_first", "image_first"):
            raise ValueError(f"unknown entry mode {self.entry_mode!r}")
        if self.entry_mode == "prompt_first" and not self.prompt:
            from .errors import MissingPrompt

            raise MissingPrompt("prompt_first sessions require a prompt")
        if self.entry_mode == "image_first" and self.source_image is None:
            from .errors import MissingImage

            raise MissingImage("image_first sessions require a source image")

    # -- read helpers (no mutation) ------------------------------------------

    def event(self, event_id: int) -> EditEvent:
        try:
            return self.events[event_id]
        except KeyError:
            raise UnknownEvent(f"event {event_id} does not exist") from None

    def head(self, branch: Optional[str] = None) -> int:
        name = branch or self.active_branch
        try:
            return self.heads[name]
        except KeyError:
            raise UnknownBranch(f"branch {name!r} does not exist") from None

    def root_id(self) -> int:
        roots = [e.event_id for e in self.events.values() if e.parent_id is None]
        if len(roots) != 1:
            raise ValueError(f"session must have exactly one root, found {len(roots)}")
        return roots[0]

    def path_to(self, event_id: int) -> list[EditEvent]:
        """Events from the root to event_id inclusive, following parent links."""
        chain = []
        cursor: Optional[int] = event_id
        seen = set()
        while cursor is not None:
            if cursor in seen:
                raise ValueError("event graph contains a cycle")
            seen.add(cursor)
            ev = self.event(cursor)
            chain.append(ev)
            cursor = ev.parent_id
        chain.reverse()
        return chain

    def ancestors(self, event_id: int) -> set:
        return {e.event_id for e in self.path_to(event_id)}

    def branch_events(self, branch: str) -> list[EditEvent]:
        return [e for e in sorted(self.events.values(), key=lambda e: e.event_id) if e.branch == branch]

    def next_event_id(self) -> int:
        return max(self.events) + 1 if self.events else 0

    def with_changes(self, **kwargs) -> "Session":
        return replace(self, **kwargs)
