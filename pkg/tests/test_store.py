import json

import numpy as np
import pytest

from creo.engine import append_event, new_session, snapshot_at
from creo.model import EditEvent, StageId
from creo.ops import Stroke
from creo.pipeline import compose_preview
from creo.raster import Mask
from creo.store import (
    SessionRecord,
    derive_action_log,
    dump_events,
    event_from_json,
    event_to_json,
    export_archive,
    import_archive,
    load_events,
    load_session,
    save_session,
    save_snapshot,
)


def session_with_edits():
    session = new_session(
        session_id="st",
        mode="prompt_first",
        prompt="harbor at dawn",
        n_viewpoints=2,
        seed=5,
        width=12,
        height=12,
    )
    record = SessionRecord(session=session)
    record.note_append(0, violated=False)
    mask = Mask(np.eye(12, dtype=bool))
    events = [
        EditEvent(1, 0, "main", StageId.VIEWPOINT, "pick_candidate",
                  {"index": 0, "source_event_id": 0}, None, 9, 1.0),
        EditEvent(2, 1, "main", StageId.COMPOSITION, "draw",
                  {"stroke": Stroke(points=((2.5, 3.5), (8.0, 8.0)), radius=1.25, ink=0.9).to_json()},
                  None, 10, 2.0),
        EditEvent(3, 2, "main", StageId.COMPOSITION, "erase", {}, mask, 11, 3.0),
    ]
    for event in events:
        record.session = append_event(record.session, event)
        record.note_append(event.event_id, violated=False)
    return record


def test_event_json_roundtrip_exact_fields():
    record = session_with_edits()
    for event in record.session.events.values():
        obj = event_to_json(event)
        assert set(obj) == {
            "event_id", "parent_id", "branch", "stage", "tool",
            "payload", "mask", "seed", "wall_time",
        }
        back = event_from_json(json.loads(json.dumps(obj)))
        assert back == event


def test_ndjson_roundtrip_preserves_replay():
    record = session_with_edits()
    text = dump_events(record.session)
    events = load_events(text)
    assert events == sorted(record.session.events.values(), key=lambda e: e.event_id)
    # stroke coordinates survive JSON exactly
    stroke = events[2].payload["stroke"]
    assert stroke["points"][0] == [2.5, 3.5]
    assert stroke["radius"] == 1.25


def test_save_load_session_dir(tmp_path):
    record = session_with_edits()
    save_session(record, tmp_path / "st")
    assert (tmp_path / "st" / "events.ndjson").exists()
    assert (tmp_path / "st" / "meta.json").exists()
    loaded = load_session(tmp_path / "st")
    assert loaded.session.heads == record.session.heads
    assert loaded.journal == record.journal
    head = record.session.head()
    assert snapshot_at(loaded.session, head) == snapshot_at(record.session, head)


def test_export_import_replay_bit_exact():
    record = session_with_edits()
    blob = export_archive(record)
    loaded = import_archive(blob)
    head = record.session.head()
    original = compose_preview(snapshot_at(record.session, head))
    replayed = compose_preview(snapshot_at(loaded.session, head))
    assert original == replayed


def test_export_is_byte_idempotent():
    record = session_with_edits()
    assert export_archive(record) == export_archive(record)


def test_export_contains_expected_entries():
    import io
    import zipfile

    record = session_with_edits()
    with zipfile.ZipFile(io.BytesIO(export_archive(record))) as zf:
        names = set(zf.namelist())
    assert names == {
        "events.ndjson", "meta.json", "actions.ndjson",
        "stages/composition.png", "stages/color.png", "stages/lighting.png",
        "preview.png",
    }


def test_fresh_session_exports_single_event():
    session = new_session(
        session_id="fresh", mode="prompt_first", prompt="x", n_viewpoints=1,
        seed=1, width=8, height=8,
    )
    record = SessionRecord(session=session)
    record.note_append(0, violated=False)
    import io
    import zipfile

    with zipfile.ZipFile(io.BytesIO(export_archive(record))) as zf:
        lines = [l for l in zf.read("events.ndjson").decode().splitlines() if l.strip()]
    assert len(lines) == 1


def test_archive_preview_matches_quantized_compose():
    from creo.raster import raster_to_png

    record = session_with_edits()
    state = snapshot_at(record.session, record.session.head())
    import io
    import zipfile

    with zipfile.ZipFile(io.BytesIO(export_archive(record))) as zf:
        assert zf.read("preview.png") == raster_to_png(compose_preview(state))


def test_action_log_mechanical_mapping():
    record = session_with_edits()
    # add one backend-style edit and one violation-flagged edit + revert
    diff_event = EditEvent(
        4, 3, "main", StageId.COMPOSITION, "ai_cleanup",
        {"instruction": "cleanup",
         "diff": {"mask": _empty_mask_b64(), "patch": _blank_raster_b64(), "target_stage": "Composition"}},
        None, 12, 4.0,
    )
    record.session = append_event(record.session, diff_event)
    record.note_append(4, violated=True)
    record.note_revert("main", from_event=4, to_event=3, repair=True)

    actions = derive_action_log(record)
    by_tool = {a["tool"]: a for a in actions}
    assert by_tool["create"]["action_type"] == "generate"
    assert by_tool["draw"]["action_type"] == "construct"
    assert by_tool["erase"]["action_type"] == "construct"
    assert by_tool["ai_cleanup"]["action_type"] == "generate"
    assert by_tool["ai_cleanup"]["invariant_violation"] is True
    assert by_tool["revert"]["action_type"] == "repair"
    assert [a["index"] for a in actions] == list(range(len(actions)))
    # intent and agency left blank for external annotation
    assert all(a["intent"] == "" and a["agency"] == "" for a in actions)
    assert all(a["annotation_source"] == "mechanical" for a in actions)


def test_plain_revert_maps_to_evaluate():
    record = session_with_edits()
    record.note_revert("main", from_event=3, to_event=2, repair=False)
    actions = derive_action_log(record)
    assert actions[-1]["action_type"] == "evaluate"


def test_save_snapshot_writes_layer_pngs(tmp_path):
    record = session_with_edits()
    state = snapshot_at(record.session, record.session.head())
    target = save_snapshot(tmp_path, record.session.head(), state)
    for name in ("composition.png", "chroma.png", "shading.png", "preview.png"):
        assert (target / name).exists()


def _empty_mask_b64():
    from creo.engine import encode_mask

    return encode_mask(Mask.empty(12, 12))


def _blank_raster_b64():
    from creo.engine import encode_raster
    from creo.raster import Raster

    return encode_raster(Raster.blank(12, 12))
