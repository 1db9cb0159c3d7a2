"""Operational wrapper: session registry, edit serialization, REST endpoints.

Each session has a single-writer lock; reads run on immutable snapshots.
submit_edit is atomic - every validation and the full state application
happen before the session value is swapped, so a failed edit leaves the head
snapshot bit-identical. Violation reports are advisory: returned and logged,
never auto-reverted.
"""

from __future__ import annotations

import base64
import json
import os
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .engine import (
    BACKEND_TOOLS,
    SessionEngine,
    append_event,
    branch_from,
    candidates_of,
    check_tool,
    decode_diff,
    encode_diff,
    new_session,
    revert_to,
    snapshot_at,
)
from .errors import (
    CreoError,
    BackendUnavailable,
    DimensionMismatch,
    DuplicateBranchName,
    DuplicateEventId,
    LockedRegionRequested,
    MissingImage,
    MissingPrompt,
    StageLocked,
    ToolStageMismatch,
    UnknownBranch,
    UnknownEvent,
    UnknownInstruction,
    UnknownLock,
    UnknownParent,
    UnknownSession,
)
from .generators import (
    GenerationRequest,
    MockBackend,
    RemoteBackend,
    generate_viewpoints,
    stage_edit,
)
from .model import DecisionState, EditEvent, Session, StageId
from .ops import Stroke, flood_region, stroke_coverage
from .pipeline import ViolationReport, compose_base, compose_preview, detect_violation
from .raster import Mask, Raster, mask_from_png, raster_from_png, raster_to_png
from .store import SessionRecord, export_archive, load_session, save_session

__all__ = ["ServiceConfig", "SessionService", "create_app"]

DEFAULT_TAU = 1.0 / 255.0


@dataclass
class ServiceConfig:
    listen_address: str = "127.0.0.1:8321"
    data_dir: Optional[Path] = None
    canvas_size: int = 512
    backend: str = "mock"
    backend_url: Optional[str] = None
    violation_tau: float = DEFAULT_TAU

    def __post_init__(self):
        if self.backend not in ("mock", "remote"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "remote" and not self.backend_url:
            raise ValueError("remote backend requires backend_url")
        if self.data_dir is not None:
            self.data_dir = Path(self.data_dir)

    @classmethod
    def from_file(cls, path: Optional[Path] = None) -> "ServiceConfig":
        """Config file values overridden by CREO_BACKEND_URL / CREO_DATA_DIR."""
        raw = {}
        if path is not None:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        env_url = os.environ.get("CREO_BACKEND_URL")
        env_dir = os.environ.get("CREO_DATA_DIR")
        if env_url:
            raw["backend_url"] = env_url
            raw.setdefault("backend", "remote")
        if env_dir:
            raw["data_dir"] = env_dir
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in raw.items() if k in known})

    @property
    def host(self) -> str:
        return self.listen_address.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_address.rsplit(":", 1)[1])


@dataclass
class _Managed:
    record: SessionRecord
    engine: SessionEngine
    lock: threading.Lock = field(default_factory=threading.Lock)
    violations: dict = field(default_factory=dict)  # event_id -> violated flag


#: Tools whose edit scope is the whole canvas (they own global attributes or
#: carry no spatial footprint).
_GLOBAL_SCOPE_TOOLS = frozenset(
    {"palette_editor", "light_rig_editor", "preset_picker", "pick_candidate", "regenerate", "apply"}
)


class SessionService:
    """Multi-session registry with per-session single-writer serialization."""

    def __init__(self, config: Optional[ServiceConfig] = None):
        self.config = config or ServiceConfig()
        self._sessions: dict[str, _Managed] = {}
        self._registry_lock = threading.Lock()
        if self.config.backend == "remote":
            self.backend = RemoteBackend(self.config.backend_url)
        else:
            self.backend = MockBackend()
        if self.config.data_dir is not None:
            self._load_existing()

    # -- registry -----------------------------------------------------------

    def _load_existing(self) -> None:
        for meta in sorted(self.config.data_dir.glob("*/meta.json")):
            record = load_session(meta.parent)
            managed = _Managed(record=record, engine=SessionEngine(record.session))
            self._sessions[record.session.session_id] = managed

    def _managed(self, session_id: str) -> _Managed:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(f"session {session_id!r} does not exist") from None

    def _persist(self, managed: _Managed) -> None:
        if self.config.data_dir is not None:
            save_session(managed.record, self.config.data_dir / managed.record.session.session_id)

    def session(self, session_id: str) -> Session:
        return self._managed(session_id).record.session

    def session_ids(self) -> list:
        return sorted(self._sessions)

    # -- lifecycle ------------------------------------------------------------

    def create_session(
        self,
        mode: str,
        prompt: Optional[str] = None,
        image: Optional[Raster] = None,
        n_viewpoints: int = 6,
        seed: Optional[int] = None,
        session_id: Optional[str] = None,
        canvas_size: Optional[int] = None,
    ) -> Session:
        if mode == "prompt_first" and not prompt:
            raise MissingPrompt("prompt_first sessions require a prompt")
        if mode == "image_first" and image is None:
            raise MissingImage("image_first sessions require a source image")
        if seed is None:
            seed = random.getrandbits(63)
        if session_id is None:
            session_id = f"s{random.getrandbits(48):012x}"
        if image is not None:
            width, height = image.width, image.height
        else:
            size = canvas_size or self.config.canvas_size
            width = height = size

        session = new_session(
            session_id=session_id,
            mode=mode,
            prompt=prompt,
            image=image,
            n_viewpoints=n_viewpoints,
            seed=seed,
            width=width,
            height=height,
            wall_time=time.time(),
        )
        record = SessionRecord(session=session)
        record.note_append(session.root_id(), violated=False)
        managed = _Managed(record=record, engine=SessionEngine(session))
        with self._registry_lock:
            if session_id in self._sessions:
                raise DuplicateEventId(f"session id {session_id!r} already in use")
            self._sessions[session_id] = managed
        self._persist(managed)
        return session

    # -- edits ------------------------------------------------------------------

    def submit_edit(
        self,
        session_id: str,
        stage: StageId,
        tool: str,
        payload: Optional[dict] = None,
        mask: Optional[Mask] = None,
        seed: Optional[int] = None,
        branch: Optional[str] = None,
    ) -> dict:
        """Apply one stage tool, append its event, return the new preview and
        the advisory violation report. Atomic: any error leaves the session
        untouched."""
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.record.session
            branch_name = branch or session.active_branch
            head = session.head(branch_name)
            stage = StageId.parse(stage) if not isinstance(stage, StageId) else stage
            check_tool(stage, tool)
            state = managed.engine.snapshot(head)
            if tool not in ("lock", "unlock") and state.locks.is_stage_locked(stage):
                raise StageLocked(f"{stage.value} is fully locked")
            if seed is None:
                seed = random.getrandbits(63)

            downstream = {StageId.COLOR, StageId.LIGHTING, StageId.STYLE}
            forked_from = None
            if tool == "pick_candidate" and state.visited & downstream:
                # Re-selecting a viewpoint over downstream work forks the
                # timeline instead of discarding it.
                branch_name = f"viewpoint-{session.next_event_id()}"
                session = branch_from(session, head, branch_name)
                session = session.with_changes(active_branch=branch_name)
                forked_from = head

            event_payload = dict(payload or {})
            if tool in BACKEND_TOOLS:
                event_payload = self._prepare_backend_payload(
                    session, state, stage, tool, event_payload, mask, seed
                )

            event = EditEvent(
                event_id=session.next_event_id(),
                parent_id=head,
                branch=branch_name,
                stage=stage,
                tool=tool,
                payload=event_payload,
                mask=mask,
                seed=seed,
                wall_time=time.time(),
            )

            from .engine import apply_event

            new_state = apply_event(state, event, session)
            violation = self._check_violation(state, new_state, event)
            new_session_value = append_event(session, event)

            managed.record.session = new_session_value
            managed.engine.update(new_session_value)
            managed.violations[event.event_id] = violation.violated
            if forked_from is not None:
                managed.record.note_branch(branch_name, forked_from)
            managed.record.note_append(event.event_id, violation.violated)
            self._persist(managed)

            return {
                "event_id": event.event_id,
                "branch": branch_name,
                "preview": compose_preview(new_state),
                "violation": violation,
            }

    def _prepare_backend_payload(
        self,
        session: Session,
        state: DecisionState,
        stage: StageId,
        tool: str,
        payload: dict,
        mask: Optional[Mask],
        seed: int,
    ) -> dict:
        """Run the generation now and pin its diff into the event payload."""
        if tool == "regenerate":
            if not session.prompt:
                raise MissingPrompt("viewpoint regeneration needs a prompt-first session")
            n = int(payload.get("n_viewpoints", 6))
            candidates = generate_viewpoints(session.prompt, n, seed, session.width, session.height)
            from .engine import encode_raster

            payload["n_viewpoints"] = n
            payload["candidates"] = [encode_raster(c) for c in candidates]
            return payload

        if tool == "ai_cleanup":
            instruction = "cleanup"
            request_mask = mask
        elif tool == "ai_fill":
            index = int(payload["color_index"])
            instruction = f"fill:{index}"
            scribble = mask_from_png(base64.b64decode(payload["scribble"]))
            if not scribble.matches(state.composition):
                raise DimensionMismatch("scribble mask does not match canvas")
            region = flood_region(state.composition, scribble)
            locked = state.locks.combined_mask(stage, state.width, state.height)
            region = Mask(region.data & ~locked.data)
            if mask is not None:
                region = region.intersection(mask)
            request_mask = region
        elif tool == "vibe_preset":
            instruction = f"vibe:{payload['vibe']}"
            request_mask = mask
        elif tool == "apply":
            instruction = "apply"
            request_mask = mask
        else:  # pragma: no cover - registry and BACKEND_TOOLS stay in sync
            raise ToolStageMismatch(f"backend tool {tool!r} not recognized")

        request = GenerationRequest(
            state=state, stage=stage, instruction=instruction, mask=request_mask, seed=seed
        )
        diff = stage_edit(request, self.backend)
        payload["instruction"] = instruction
        payload["diff"] = encode_diff(diff)
        payload["request_mask_px"] = int(request_mask.data.sum()) if request_mask is not None else None
        return payload

    def _check_violation(
        self, state: DecisionState, new_state: DecisionState, event: EditEvent
    ) -> ViolationReport:
        """Advisory out-of-scope check on the pre-style previews.

        The style pass is global (and non-local for some presets), so it is
        excluded here; style ownership of global appearance makes whole-canvas
        change its legitimate scope.
        """
        scope = self._edit_scope(state, event)
        return detect_violation(
            compose_base(state), compose_base(new_state), scope, self.config.violation_tau
        )

    def _edit_scope(self, state: DecisionState, event: EditEvent) -> Mask:
        full = Mask.full(state.width, state.height)
        if event.stage is StageId.STYLE or event.tool in _GLOBAL_SCOPE_TOOLS:
            return full
        if event.tool in ("lock", "unlock"):
            return full
        if event.tool in BACKEND_TOOLS:
            diff = decode_diff(event.payload["diff"])
            scope = event.mask if event.mask is not None else full
            return scope.union(diff.mask)
        covers = []
        if event.mask is not None:
            covers.append(event.mask)
        stroke_payload = event.payload.get("stroke")
        if stroke_payload is not None:
            stroke = Stroke.from_json(stroke_payload)
            covers.append(stroke_coverage(state.width, state.height, stroke))
        if not covers:
            return full
        scope = covers[0]
        for extra in covers[1:]:
            scope = scope.union(extra)
        return scope

    # -- locks ---------------------------------------------------------------------

    def add_lock(
        self,
        session_id: str,
        stage: StageId,
        kind: str = "stage",
        mask: Optional[Mask] = None,
        branch: Optional[str] = None,
    ) -> dict:
        stage = StageId.parse(stage) if not isinstance(stage, StageId) else stage
        managed = self._managed(session_id)
        next_id = managed.record.session.next_event_id()
        lock_id = f"stage:{stage.value}" if kind == "stage" else f"L{next_id}"
        payload = {"kind": kind, "lock_id": lock_id}
        result = self.submit_edit(
            session_id, stage, "lock", payload=payload, mask=mask, branch=branch, seed=0
        )
        result["lock_id"] = lock_id
        return result

    def remove_lock(self, session_id: str, lock_id: str, branch: Optional[str] = None) -> dict:
        managed = self._managed(session_id)
        session = managed.record.session
        branch_name = branch or session.active_branch
        state = managed.engine.snapshot(session.head(branch_name))
        if lock_id.startswith("stage:"):
            stage = StageId.parse(lock_id.split(":", 1)[1])
            if stage not in state.locks.stage_locks:
                raise UnknownLock(f"lock {lock_id!r} not held")
        else:
            match = [rl for rl in state.locks.region_locks if rl.lock_id == lock_id]
            if not match:
                raise UnknownLock(f"lock {lock_id!r} not held")
            stage = match[0].stage
        return self.submit_edit(
            session_id, stage, "unlock", payload={"lock_id": lock_id}, branch=branch_name, seed=0
        )

    # -- history ----------------------------------------------------------------------

    def revert(self, session_id: str, event_id: int, branch: Optional[str] = None) -> dict:
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.record.session
            branch_name = branch or session.active_branch
            from_head = session.head(branch_name)
            new_session_value = revert_to(session, event_id, branch_name)
            repair = bool(managed.violations.get(from_head, False)) and event_id != from_head
            managed.record.session = new_session_value
            managed.engine.update(new_session_value)
            managed.record.note_revert(branch_name, from_head, event_id, repair)
            self._persist(managed)
            return {"branch": branch_name, "head": event_id}

    def create_branch(self, session_id: str, from_event_id: int, name: str) -> dict:
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.record.session
            new_session_value = branch_from(session, from_event_id, name)
            new_session_value = new_session_value.with_changes(active_branch=name)
            managed.record.session = new_session_value
            managed.engine.update(new_session_value)
            managed.record.note_branch(name, from_event_id)
            self._persist(managed)
            return {"branch": name, "head": from_event_id}

    def set_active_branch(self, session_id: str, name: str) -> None:
        managed = self._managed(session_id)
        with managed.lock:
            session = managed.record.session
            if name not in session.heads:
                raise UnknownBranch(f"branch {name!r} does not exist")
            managed.record.session = session.with_changes(active_branch=name)
            self._persist(managed)

    # -- reads -------------------------------------------------------------------------

    def state_at(
        self, session_id: str, branch: Optional[str] = None, event_id: Optional[int] = None
    ) -> DecisionState:
        managed = self._managed(session_id)
        session = managed.record.session
        target = event_id if event_id is not None else session.head(branch)
        return managed.engine.snapshot(target)

    def preview_png(
        self, session_id: str, branch: Optional[str] = None, event_id: Optional[int] = None
    ) -> bytes:
        return raster_to_png(compose_preview(self.state_at(session_id, branch, event_id)))

    def stage_png(
        self,
        session_id: str,
        stage: StageId,
        branch: Optional[str] = None,
        event_id: Optional[int] = None,
    ) -> bytes:
        state = self.state_at(session_id, branch, event_id)
        stage = StageId.parse(stage) if not isinstance(stage, StageId) else stage
        if stage in (StageId.VIEWPOINT, StageId.COMPOSITION):
            layer = state.composition
        elif stage is StageId.COLOR:
            layer = state.chroma
        elif stage is StageId.LIGHTING:
            layer = state.shading
        else:
            layer = compose_preview(state)
        return raster_to_png(layer)

    def info(self, session_id: str) -> dict:
        managed = self._managed(session_id)
        session = managed.record.session
        head = session.head()
        state = managed.engine.snapshot(head)
        locks = [
            {"lock_id": f"stage:{s.value}", "stage": s.value, "kind": "stage", "pixels": None}
            for s in sorted(state.locks.stage_locks, key=lambda s: s.value)
        ] + [
            {
                "lock_id": rl.lock_id,
                "stage": rl.stage.value,
                "kind": "region",
                "pixels": int(rl.mask.data.sum()),
            }
            for rl in state.locks.region_locks
        ]
        info = {
            "session_id": session.session_id,
            "entry_mode": session.entry_mode,
            "prompt": session.prompt,
            "canvas": {"width": session.width, "height": session.height},
            "active_branch": session.active_branch,
            "branches": dict(session.heads),
            "head": head,
            "event_count": len(session.events),
            "visited": sorted(s.value for s in state.visited),
            "locks": locks,
            "palette": [c.to_json() for c in state.palette],
            "lights": [l.to_json() for l in state.lights],
            "style": state.style.to_json(),
        }
        root = session.event(session.root_id())
        if "candidates" in root.payload:
            info["candidates"] = root.payload["candidates"]
        return info

    def export_session(self, session_id: str) -> bytes:
        managed = self._managed(session_id)
        with managed.lock:
            record = managed.record
            state = snapshot_at(record.session, record.session.head())
            return export_archive(record, state)


# --- REST application ------------------------------------------------------------

from pydantic import BaseModel


class CreateSessionBody(BaseModel):
    mode: str
    prompt: Optional[str] = None
    image_png: Optional[str] = None  # base64 PNG
    n_viewpoints: int = 6
    seed: Optional[int] = None
    canvas_size: Optional[int] = None


class EditBody(BaseModel):
    stage: str
    tool: str
    payload: dict = {}
    mask_png: Optional[str] = None  # base64 PNG
    seed: Optional[int] = None
    branch: Optional[str] = None


class LockBody(BaseModel):
    stage: str
    kind: str = "stage"
    mask_png: Optional[str] = None
    branch: Optional[str] = None


class BranchBody(BaseModel):
    from_event_id: int
    name: str


class RevertBody(BaseModel):
    event_id: int
    branch: Optional[str] = None


_STATUS_BY_ERROR = (
    ((UnknownSession, UnknownEvent, UnknownParent, UnknownBranch, UnknownLock), 404),
    ((DuplicateBranchName, DuplicateEventId, StageLocked, LockedRegionRequested), 409),
    ((BackendUnavailable,), 503),
    (
        (
            ToolStageMismatch,
            DimensionMismatch,
            MissingPrompt,
            MissingImage,
            UnknownInstruction,
        ),
        400,
    ),
)


def _status_for(exc: CreoError) -> int:
    for types, status in _STATUS_BY_ERROR:
        if isinstance(exc, types):
            return status
    return 400


def create_app(service: Optional[SessionService] = None, config: Optional[ServiceConfig] = None):
    """FastAPI application over a session service."""
    from fastapi import FastAPI, Response
    from fastapi.responses import JSONResponse

    svc = service or SessionService(config)
    app = FastAPI(title="creo", version="0.1.0")
    app.state.service = svc

    @app.exception_handler(CreoError)
    async def _creo_error(request, exc: CreoError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    def _decode_mask_field(text: Optional[str]) -> Optional[Mask]:
        if not text:
            return None
        return mask_from_png(base64.b64decode(text))

    @app.post("/sessions")
    def post_session(body: CreateSessionBody):
        image = raster_from_png(base64.b64decode(body.image_png)) if body.image_png else None
        session = svc.create_session(
            mode=body.mode,
            prompt=body.prompt,
            image=image,
            n_viewpoints=body.n_viewpoints,
            seed=body.seed,
            canvas_size=body.canvas_size,
        )
        return svc.info(session.session_id)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        return svc.info(session_id)

    @app.post("/sessions/{session_id}/edits")
    def post_edit(session_id: str, body: EditBody):
        result = svc.submit_edit(
            session_id,
            stage=StageId.parse(body.stage),
            tool=body.tool,
            payload=body.payload,
            mask=_decode_mask_field(body.mask_png),
            seed=body.seed,
            branch=body.branch,
        )
        return {
            "event_id": result["event_id"],
            "branch": result["branch"],
            "violation": result["violation"].to_json(),
        }

    @app.get("/sessions/{session_id}/preview.png")
    def get_preview(session_id: str, branch: Optional[str] = None, event_id: Optional[int] = None):
        return Response(content=svc.preview_png(session_id, branch, event_id), media_type="image/png")

    @app.get("/sessions/{session_id}/stages/{stage}.png")
    def get_stage_layer(
        session_id: str, stage: str, branch: Optional[str] = None, event_id: Optional[int] = None
    ):
        blob = svc.stage_png(session_id, StageId.parse(stage), branch, event_id)
        return Response(content=blob, media_type="image/png")

    @app.post("/sessions/{session_id}/locks")
    def post_lock(session_id: str, body: LockBody):
        result = svc.add_lock(
            session_id,
            stage=StageId.parse(body.stage),
            kind=body.kind,
            mask=_decode_mask_field(body.mask_png),
            branch=body.branch,
        )
        return {"lock_id": result["lock_id"], "event_id": result["event_id"]}

    @app.delete("/sessions/{session_id}/locks/{lock_id}")
    def delete_lock(session_id: str, lock_id: str, branch: Optional[str] = None):
        result = svc.remove_lock(session_id, lock_id, branch)
        return {"event_id": result["event_id"]}

    @app.post("/sessions/{session_id}/branches")
    def post_branch(session_id: str, body: BranchBody):
        return svc.create_branch(session_id, body.from_event_id, body.name)

    @app.post("/sessions/{session_id}/revert")
    def post_revert(session_id: str, body: RevertBody):
        return svc.revert(session_id, body.event_id, body.branch)

    @app.get("/sessions/{session_id}/export")
    def get_export(session_id: str):
        blob = svc.export_session(session_id)
        return Response(
            content=blob,
            media_type="application/zip",
            headers={"Content-Disposition": f'attachment; filename="{session_id}.zip"'},
        )

    return app
