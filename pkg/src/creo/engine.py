"""Event application and the pure session graph operations.

Sessions are immutable; append/revert/branch return new values. Every state
mutation is an EditEvent whose payload is self-contained (backend diffs are
pinned into the payload when the event is created), so replaying the chain
from the root deterministically reconstructs any snapshot without touching a
backend. Snapshot caching is a pure optimization checked by dual-path tests.
"""

from __future__ import annotations

import base64
from dataclasses import replace
from typing import Optional

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateBranchName,
    DuplicateEventId,
    StageLocked,
    ToolStageMismatch,
    UnknownBranch,
    UnknownEvent,
    UnknownLock,
    UnknownParent,
)
from .generators import LIGHT_RIGS, Diff, generate_viewpoints
from .model import (
    DecisionState,
    EditEvent,
    LightSpec,
    LockSet,
    PaletteColor,
    RegionLock,
    Session,
    StageId,
    StyleSpec,
    blank_state,
)
from .ops import (
    AffineTransform,
    Stroke,
    decompose_image,
    erase_region,
    lasso_transform,
    masked_composite,
    render_stroke,
    shade_map,
    stroke_coverage,
)
from .pipeline import propagate
from .raster import Mask, Raster, mask_from_png, mask_to_png, raster_from_png, raster_to_png

__all__ = [
    "STAGE_TOOLS",
    "BACKEND_TOOLS",
    "UNIVERSAL_TOOLS",
    "encode_raster",
    "decode_raster",
    "encode_mask",
    "decode_mask",
    "encode_diff",
    "decode_diff",
    "new_session",
    "append_event",
    "snapshot_at",
    "revert_to",
    "branch_from",
    "apply_event",
    "candidates_of",
    "SessionEngine",
]

#: Stage-scoped tools accepted by submit_edit; mirrors the client toolsets.
STAGE_TOOLS = {
    StageId.VIEWPOINT: ("pick_candidate", "regenerate"),
    StageId.COMPOSITION: ("draw", "erase", "lasso", "mask_edit", "ai_cleanup"),
    StageId.COLOR: ("palette_editor", "brush_fill", "ai_fill"),
    StageId.LIGHTING: ("light_rig_editor", "vibe_preset"),
    StageId.STYLE: ("preset_picker", "apply"),
}

#: Tools whose content comes from a generation backend (their events carry a
#: pinned diff and map to "generate" in derived action logs).
BACKEND_TOOLS = frozenset({"regenerate", "ai_cleanup", "ai_fill", "vibe_preset", "apply"})

#: Tools legal on any stage.
UNIVERSAL_TOOLS = frozenset({"lock", "unlock"})

ROOT_TOOL = "create"


def check_tool(stage: StageId, tool: str) -> None:
    if tool in UNIVERSAL_TOOLS or tool == ROOT_TOOL:
        return
    if tool not in STAGE_TOOLS[stage]:
        raise ToolStageMismatch(f"tool {tool!r} is not part of the {stage.value} toolset")


# --- payload codecs -----------------------------------------------------------


def encode_raster(raster: Raster) -> str:
    return base64.b64encode(raster_to_png(raster)).decode("ascii")


def decode_raster(text: str) -> Raster:
    return raster_from_png(base64.b64decode(text))


def encode_mask(mask: Mask) -> str:
    return base64.b64encode(mask_to_png(mask)).decode("ascii")


def decode_mask(text: str) -> Mask:
    return mask_from_png(base64.b64decode(text))


def encode_diff(diff: Diff) -> dict:
    """Pin a diff into an event payload; the patch is stored 8-bit quantized,
    and events always apply the stored (quantized) values so replay matches."""
    return {
        "mask": encode_mask(diff.mask),
        "patch": encode_raster(diff.patch),
        "target_stage": diff.target_stage.value,
    }


def decode_diff(obj: dict) -> Diff:
    return Diff(
        mask=decode_mask(obj["mask"]),
        patch=decode_raster(obj["patch"]),
        target_stage=StageId.parse(obj["target_stage"]),
    )


# --- session construction -------------------------------------------------------


def new_session(
    session_id: str,
    mode: str,
    prompt: Optional[str] = None,
    image: Optional[Raster] = None,
    n_viewpoints: int = 6,
    seed: int = 0,
    width: int = 512,
    height: int = 512,
    wall_time: float = 0.0,
) -> Session:
    """Session with its root event; prompt-first roots carry the viewpoint
    candidates, image-first roots carry the source image to decompose."""
    payload: dict = {"mode": mode, "canvas": {"width": width, "height": height}}
    if mode == "prompt_first":
        if not prompt:
            from .errors import MissingPrompt

            raise MissingPrompt("prompt_first sessions require a prompt")
        candidates = generate_viewpoints(prompt, n_viewpoints, seed, width, height)
        payload["prompt"] = prompt
        payload["n_viewpoints"] = n_viewpoints
        payload["candidates"] = [encode_raster(c) for c in candidates]
    elif mode == "image_first":
        if image is None:
            from .errors import MissingImage

            raise MissingImage("image_first sessions require a source image")
        if image.width != width or image.height != height:
            raise DimensionMismatch("source image must match the session canvas size")
        payload["source"] = encode_raster(image)
    else:
        raise ValueError(f"unknown entry mode {mode!r}")

    root = EditEvent(
        event_id=0,
        parent_id=None,
        branch="main",
        stage=StageId.VIEWPOINT,
        tool=ROOT_TOOL,
        payload=payload,
        mask=None,
        seed=seed,
        wall_time=wall_time,
    )
    session = Session(
        session_id=session_id,
        entry_mode=mode,
        prompt=prompt,
        source_image=image,
        width=width,
        height=height,
    )
    return append_event(session, root)


# --- pure session-graph operations ----------------------------------------------


def append_event(session: Session, event: EditEvent) -> Session:
    """Append one event and advance its branch head; prior events untouched."""
    if event.event_id in session.events:
        raise DuplicateEventId(f"event {event.event_id} already exists")
    if event.parent_id is None:
        if session.events:
            raise UnknownParent("session already has a root event")
    elif event.parent_id not in session.events:
        raise UnknownParent(f"parent event {event.parent_id} does not exist")
    if event.mask is not None and event.mask.data.shape != (session.height, session.width):
        raise DimensionMismatch("event mask does not match the session canvas")
    if event.parent_id is not None and event.branch not in session.heads:
        raise UnknownBranch(f"branch {event.branch!r} does not exist")

    events = dict(session.events)
    events[event.event_id] = event
    heads = dict(session.heads)
    heads[event.branch] = event.event_id
    return session.with_changes(events=events, heads=heads)


def snapshot_at(session: Session, event_id: int) -> DecisionState:
    """Replay root -> event_id along its parent path; pure, no caching."""
    state = blank_state(session.width, session.height)
    for event in session.path_to(event_id):
        state = apply_event(state, event, session)
    return state


def revert_to(session: Session, event_id: int, branch: Optional[str] = None) -> Session:
    """Move a branch head backward (or forward again); nothing is deleted."""
    name = branch or session.active_branch
    head = session.head(name)
    if event_id not in session.events:
        raise UnknownEvent(f"event {event_id} does not exist")
    on_branch = event_id in session.ancestors(head) or session.event(event_id).branch == name
    if not on_branch:
        raise UnknownEvent(f"event {event_id} is not on branch {name!r}")
    heads = dict(session.heads)
    heads[name] = event_id
    return session.with_changes(heads=heads)


def branch_from(session: Session, event_id: int, name: str) -> Session:
    """New named branch whose head is an existing event; original untouched."""
    if event_id not in session.events:
        raise UnknownEvent(f"event {event_id} does not exist")
    if name in session.heads:
        raise DuplicateBranchName(f"branch {name!r} already exists")
    if not name:
        raise ValueError("branch name must be non-empty")
    heads = dict(session.heads)
    heads[name] = event_id
    return session.with_changes(heads=heads)


def candidates_of(session: Session, event_id: int) -> list:
    """Viewpoint candidates pinned in a root or regenerate event."""
    event = session.event(event_id)
    encoded = event.payload.get("candidates")
    if encoded is None:
        raise UnknownEvent(f"event {event_id} carries no viewpoint candidates")
    return [decode_raster(c) for c in encoded]


# --- event application -----------------------------------------------------------


def _solid_chroma(state: DecisionState, rgb) -> Raster:
    solid = np.empty_like(state.chroma.data)
    solid[:] = rgb
    return Raster(solid)


def _cover_from(state: DecisionState, event: EditEvent, payload_stroke: Optional[dict]) -> Mask:
    if event.mask is not None and payload_stroke is not None:
        stroke = Stroke.from_json(payload_stroke)
        return stroke_coverage(state.width, state.height, stroke).intersection(event.mask)
    if event.mask is not None:
        return event.mask
    if payload_stroke is not None:
        stroke = Stroke.from_json(payload_stroke)
        return stroke_coverage(state.width, state.height, stroke)
    raise ValueError(f"tool {event.tool!r} needs a mask or a stroke")


def apply_event(state: DecisionState, event: EditEvent, session: Session) -> DecisionState:
    """Fold one event into the decision state; deterministic given the event.

    Backend-tool events apply the diff pinned at creation time, so replay
    never consults a backend.
    """
    tool = event.tool
    payload = event.payload

    if tool == ROOT_TOOL:
        if payload["mode"] == "image_first":
            source = decode_raster(payload["source"])
            layers = decompose_image(source)
            return replace(
                state,
                composition=layers.composition,
                chroma=layers.chroma,
                shading=layers.shading,
                visited=state.visited
                | {StageId.COMPOSITION, StageId.COLOR, StageId.LIGHTING},
            )
        return state  # prompt_first roots only pin candidates

    if tool == "lock":
        return _apply_lock(state, event)
    if tool == "unlock":
        return _apply_unlock(state, event)

    check_tool(event.stage, tool)
    if state.locks.is_stage_locked(event.stage):
        raise StageLocked(f"{event.stage.value} is fully locked")

    if tool == "pick_candidate":
        source_event = payload.get("source_event_id", session.root_id())
        sketch = candidates_of(session, source_event)[payload["index"]]
        return propagate(state, StageId.VIEWPOINT, sketch)

    if tool == "regenerate":
        return state  # new candidates are pinned in the event payload

    if tool == "draw":
        stroke = Stroke.from_json(payload["stroke"])
        drawn = render_stroke(state.composition, stroke)
        return propagate(state, StageId.COMPOSITION, drawn)

    if tool == "erase":
        cover = _cover_from(state, event, payload.get("stroke"))
        erased = erase_region(state.composition, cover)
        return propagate(state, StageId.COMPOSITION, erased)

    if tool == "lasso":
        if event.mask is None:
            raise ValueError("lasso needs a selection mask")
        t = AffineTransform.from_json(payload["transform"])
        moved = lasso_transform(state.composition, event.mask, t)
        return propagate(state, StageId.COMPOSITION, moved)

    if tool == "mask_edit":
        if event.mask is None:
            raise ValueError("mask_edit needs a mask")
        patch = decode_raster(payload["patch"])
        merged = masked_composite(state.composition, patch, event.mask)
        return propagate(state, StageId.COMPOSITION, merged)

    if tool == "brush_fill":
        color = PaletteColor.from_json(payload["color"])
        cover = _cover_from(state, event, payload.get("stroke"))
        painted = masked_composite(state.chroma, _solid_chroma(state, color.rgb), cover)
        return propagate(state, StageId.COLOR, painted)

    if tool == "palette_editor":
        palette = tuple(PaletteColor.from_json(c) for c in payload["palette"])
        return replace(state, palette=palette, visited=state.visited | {StageId.COLOR})

    if tool == "light_rig_editor":
        lights = tuple(LightSpec.from_json(l) for l in payload["lights"])
        shaded = shade_map(state.width, state.height, lights)
        next_state = propagate(state, StageId.LIGHTING, shaded)
        return replace(
            next_state, lights=lights, visited=next_state.visited | {StageId.LIGHTING}
        )

    if tool == "preset_picker":
        style = StyleSpec.from_json(payload["style"])
        next_state = propagate(state, StageId.STYLE, style)
        return replace(next_state, visited=next_state.visited | {StageId.STYLE})

    if tool in BACKEND_TOOLS:
        return _apply_backend_tool(state, event)

    raise ToolStageMismatch(f"unknown tool {tool!r}")


def _apply_backend_tool(state: DecisionState, event: EditEvent) -> DecisionState:
    diff = decode_diff(event.payload["diff"])
    stage = event.stage

    if stage is StageId.COMPOSITION:
        merged = masked_composite(state.composition, diff.patch, diff.mask)
        return propagate(state, StageId.COMPOSITION, merged)
    if stage is StageId.COLOR:
        merged = masked_composite(state.chroma, diff.patch, diff.mask)
        return propagate(state, StageId.COLOR, merged)
    if stage is StageId.LIGHTING:
        merged = masked_composite(state.shading, diff.patch, diff.mask)
        next_state = propagate(state, StageId.LIGHTING, merged)
        vibe = event.payload.get("vibe")
        if vibe in LIGHT_RIGS:
            next_state = replace(
                next_state,
                lights=LIGHT_RIGS[vibe],
                visited=next_state.visited | {StageId.LIGHTING},
            )
        return next_state
    if stage is StageId.STYLE:
        # The styled patch is a rendering artifact; the recorded decision is
        # the StyleSpec already in state.
        return replace(state, visited=state.visited | {StageId.STYLE})
    return state


def _apply_lock(state: DecisionState, event: EditEvent) -> DecisionState:
    kind = event.payload.get("kind", "stage")
    if kind == "stage":
        return replace(state, locks=state.locks.with_stage_lock(event.stage))
    if kind == "region":
        if event.mask is None:
            raise ValueError("region locks need a mask")
        lock = RegionLock(
            lock_id=event.payload.get("lock_id", f"L{event.event_id}"),
            stage=event.stage,
            mask=event.mask,
        )
        return replace(state, locks=state.locks.with_region_lock(lock))
    raise ValueError(f"unknown lock kind {kind!r}")


def _apply_unlock(state: DecisionState, event: EditEvent) -> DecisionState:
    lock_id = event.payload["lock_id"]
    locks = state.locks
    if lock_id.startswith("stage:"):
        stage = StageId.parse(lock_id.split(":", 1)[1])
        if stage not in locks.stage_locks:
            raise UnknownLock(f"stage lock {lock_id!r} not held")
        return replace(state, locks=locks.without_stage_lock(stage))
    if lock_id not in [rl.lock_id for rl in locks.region_locks]:
        raise UnknownLock(f"region lock {lock_id!r} not held")
    return replace(state, locks=locks.without_region_lock(lock_id))


# --- caching engine ---------------------------------------------------------------


class SessionEngine:
    """Incremental snapshot access over one session.

    Caches snapshots keyed by event id; the cache is semantically invisible
    (immutable states, immutable events), which the dual-path tests assert.
    """

    def __init__(self, session: Session, max_cached: int = 64):
        self.session = session
        self.max_cached = max_cached
        self._cache: dict[int, DecisionState] = {}

    def update(self, session: Session) -> None:
        if session.session_id != self.session.session_id:
            raise ValueError("engine is bound to one session")
        self.session = session

    def snapshot(self, event_id: int) -> DecisionState:
        if event_id in self._cache:
            return self._cache[event_id]
        path = self.session.path_to(event_id)
        start = 0
        state = blank_state(self.session.width, self.session.height)
        for i in range(len(path) - 1, -1, -1):
            cached = self._cache.get(path[i].event_id)
            if cached is not None:
                state = cached
                start = i + 1
                break
        for event in path[start:]:
            state = apply_event(state, event, self.session)
            self._remember(event.event_id, state)
        return state

    def head_state(self, branch: Optional[str] = None) -> DecisionState:
        return self.snapshot(self.session.head(branch))

    def _remember(self, event_id: int, state: DecisionState) -> None:
        if len(self._cache) >= self.max_cached:
            self._cache.pop(next(iter(self._cache)))
        self._cache[event_id] = state
