"""Session persistence: NDJSON event logs, metadata, and export archives.

A session directory holds ``events.ndjson`` (one event per line, field names
matching the event type, masks base64-encoded), ``meta.json`` (branch heads
plus the operation journal), and optional ``snapshots/<event_id>/`` cached
PNG layers. Export archives are fully deterministic: pinned zip timestamps,
sorted entries, and content derived only from recorded events.
"""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Optional

from .engine import (
    BACKEND_TOOLS,
    ROOT_TOOL,
    decode_mask,
    decode_raster,
    encode_mask,
    snapshot_at,
)
from .model import DecisionState, EditEvent, Session, StageId
from .pipeline import compose_preview
from .raster import raster_to_png

__all__ = [
    "SessionRecord",
    "event_to_json",
    "event_from_json",
    "dump_events",
    "load_events",
    "save_session",
    "load_session",
    "derive_action_log",
    "export_archive",
    "import_archive",
    "save_snapshot",
]

_ZIP_EPOCH = (1980, 1, 1, 0, 0, 0)


@dataclass
class SessionRecord:
    """A session plus the operational journal the service accumulates."""

    session: Session
    journal: list = dataclass_field(default_factory=list)

    def note_append(self, event_id: int, violated: bool) -> None:
        self.journal.append({"op": "append", "event_id": event_id, "violated": bool(violated)})

    def note_revert(self, branch: str, from_event: int, to_event: int, repair: bool) -> None:
        self.journal.append(
            {
                "op": "revert",
                "branch": branch,
                "from_event_id": from_event,
                "to_event_id": to_event,
                "repair": bool(repair),
            }
        )

    def note_branch(self, name: str, from_event: int) -> None:
        self.journal.append({"op": "branch", "name": name, "from_event_id": from_event})


# --- event codec ---------------------------------------------------------------


def event_to_json(event: EditEvent) -> dict:
    return {
        "event_id": event.event_id,
        "parent_id": event.parent_id,
        "branch": event.branch,
        "stage": event.stage.value,
        "tool": event.tool,
        "payload": event.payload,
        "mask": encode_mask(event.mask) if event.mask is not None else None,
        "seed": event.seed,
        "wall_time": event.wall_time,
    }


def event_from_json(obj: dict) -> EditEvent:
    return EditEvent(
        event_id=int(obj["event_id"]),
        parent_id=None if obj["parent_id"] is None else int(obj["parent_id"]),
        branch=obj["branch"],
        stage=StageId.parse(obj["stage"]),
        tool=obj["tool"],
        payload=obj["payload"],
        mask=decode_mask(obj["mask"]) if obj.get("mask") else None,
        seed=int(obj["seed"]),
        wall_time=float(obj["wall_time"]),
    )


def dump_events(session: Session) -> str:
    lines = [
        json.dumps(event_to_json(e), sort_keys=True, separators=(",", ":"))
        for e in sorted(session.events.values(), key=lambda e: e.event_id)
    ]
    return "\n".join(lines) + ("\n" if lines else "")


def load_events(text: str) -> list:
    events = []
    for line in text.splitlines():
        line = line.strip()
        if line:
            events.append(event_from_json(json.loads(line)))
    return events


def _meta_json(record: SessionRecord) -> dict:
    s = record.session
    return {
        "session_id": s.session_id,
        "entry_mode": s.entry_mode,
        "prompt": s.prompt,
        "canvas": {"width": s.width, "height": s.height},
        "heads": dict(sorted(s.heads.items())),
        "active_branch": s.active_branch,
        "journal": record.journal,
    }


def _session_from_parts(meta: dict, events: list) -> Session:
    root = next(e for e in events if e.parent_id is None)
    source = None
    if meta["entry_mode"] == "image_first":
        source = decode_raster(root.payload["source"])
    session = Session(
        session_id=meta["session_id"],
        entry_mode=meta["entry_mode"],
        prompt=meta.get("prompt"),
        source_image=source,
        width=meta["canvas"]["width"],
        height=meta["canvas"]["height"],
        events={e.event_id: e for e in events},
        heads=dict(meta["heads"]),
        active_branch=meta.get("active_branch", "main"),
    )
    return session


# --- directory persistence -------------------------------------------------------


def save_session(record: SessionRecord, directory: Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "events.ndjson").write_text(dump_events(record.session), encoding="utf-8")
    (directory / "meta.json").write_text(
        json.dumps(_meta_json(record), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def load_session(directory: Path) -> SessionRecord:
    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    events = load_events((directory / "events.ndjson").read_text(encoding="utf-8"))
    session = _session_from_parts(meta, events)
    return SessionRecord(session=session, journal=list(meta.get("journal", [])))


def save_snapshot(directory: Path, event_id: int, state: DecisionState) -> Path:
    """Optional cached PNG layers for one snapshot."""
    target = Path(directory) / "snapshots" / str(event_id)
    target.mkdir(parents=True, exist_ok=True)
    (target / "composition.png").write_bytes(raster_to_png(state.composition))
    (target / "chroma.png").write_bytes(raster_to_png(state.chroma))
    (target / "shading.png").write_bytes(raster_to_png(state.shading))
    (target / "preview.png").write_bytes(raster_to_png(compose_preview(state)))
    return target


# --- derived action log ----------------------------------------------------------


def derive_action_log(record: SessionRecord, condition: str = "creo") -> list:
    """Mechanical action records from the journal: direct tools map to
    construct, backend tools to generate, a revert over a violation-flagged
    edit to repair. Intent and agency stay blank for external annotation.
    """
    session = record.session
    branch_order: dict[str, int] = {}

    def iteration_of(branch: str) -> int:
        if branch not in branch_order:
            branch_order[branch] = len(branch_order) + 1
        return branch_order[branch]

    rows = []
    for entry in record.journal:
        if entry["op"] == "append":
            event = session.event(entry["event_id"])
            if event.tool == ROOT_TOOL or event.tool in BACKEND_TOOLS:
                action = "generate"
            else:
                action = "construct"
            rows.append(
                {
                    "action_type": action,
                    "stage": event.stage.value,
                    "tool": event.tool,
                    "iteration_id": iteration_of(event.branch),
                    "invariant_violation": bool(entry.get("violated", False)),
                }
            )
        elif entry["op"] == "revert":
            rows.append(
                {
                    "action_type": "repair" if entry.get("repair") else "evaluate",
                    "stage": session.event(entry["from_event_id"]).stage.value,
                    "tool": "revert",
                    "iteration_id": iteration_of(entry["branch"]),
                    "invariant_violation": False,
                }
            )
        # branch creation itself touches no content; its edits carry the new id

    records = []
    for index, row in enumerate(rows):
        records.append(
            {
                "session_id": session.session_id,
                "condition": condition,
                "index": index,
                "action_type": row["action_type"],
                "intent": "",
                "agency": "",
                "direction_change": False,
                "invariant_violation": row["invariant_violation"],
                "iteration_id": row["iteration_id"],
                "stage": row["stage"],
                "tool": row["tool"],
                "annotation_source": "mechanical",
            }
        )
    return records


# --- export / import --------------------------------------------------------------


def export_archive(record: SessionRecord, state: Optional[DecisionState] = None) -> bytes:
    """Deterministic zip of the session: events, meta, head layers, preview,
    and the metrics-ready action log."""
    session = record.session
    if state is None:
        state = snapshot_at(session, session.head())

    actions = derive_action_log(record)
    action_text = "".join(
        json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in actions
    )

    entries = {
        "events.ndjson": dump_events(session).encode("utf-8"),
        "meta.json": (
            json.dumps(_meta_json(record), sort_keys=True, indent=2) + "\n"
        ).encode("utf-8"),
        "actions.ndjson": action_text.encode("utf-8"),
        "stages/composition.png": raster_to_png(state.composition),
        "stages/color.png": raster_to_png(state.chroma),
        "stages/lighting.png": raster_to_png(state.shading),
        "preview.png": raster_to_png(compose_preview(state)),
    }

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        for name in sorted(entries):
            info = zipfile.ZipInfo(name, date_time=_ZIP_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, entries[name])
    return buf.getvalue()


def import_archive(blob: bytes) -> SessionRecord:
    with zipfile.ZipFile(io.BytesIO(blob)) as zf:
        meta = json.loads(zf.read("meta.json").decode("utf-8"))
        events = load_events(zf.read("events.ndjson").decode("utf-8"))
    session = _session_from_parts(meta, events)
    return SessionRecord(session=session, journal=list(meta.get("journal", [])))
