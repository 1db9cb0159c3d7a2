import numpy as np
import pytest

from creo.engine import (
    SessionEngine,
    append_event,
    branch_from,
    candidates_of,
    new_session,
    revert_to,
    snapshot_at,
)
from creo.errors import (
    DuplicateBranchName,
    DuplicateEventId,
    UnknownEvent,
    UnknownParent,
)
from creo.model import EditEvent, StageId, blank_state
from creo.ops import Stroke, render_stroke, stroke_coverage
from creo.raster import Raster


def make_session(**kwargs):
    defaults = dict(
        session_id="t",
        mode="prompt_first",
        prompt="a reading nook",
        n_viewpoints=3,
        seed=11,
        width=16,
        height=16,
    )
    defaults.update(kwargs)
    return new_session(**defaults)


def draw_event(session, event_id, parent_id, points=((1.0, 1.0),), branch="main", seed=1):
    stroke = Stroke(points=points, radius=1.0, ink=1.0)
    return EditEvent(
        event_id=event_id,
        parent_id=parent_id,
        branch=branch,
        stage=StageId.COMPOSITION,
        tool="draw",
        payload={"stroke": stroke.to_json()},
        seed=seed,
        wall_time=float(event_id),
    )


# --- append_event -----------------------------------------------------------------


def test_root_append_base_case():
    session = make_session()
    assert len(session.events) == 1
    assert session.head() == session.root_id() == 0


def test_unknown_parent_rejected():
    session = make_session()
    with pytest.raises(UnknownParent):
        append_event(session, draw_event(session, 1, parent_id=99))


def test_duplicate_event_id_rejected():
    session = make_session()
    with pytest.raises(DuplicateEventId):
        append_event(session, draw_event(session, 0, parent_id=0))


def test_second_root_rejected():
    session = make_session()
    bogus_root = EditEvent(
        event_id=5,
        parent_id=None,
        branch="main",
        stage=StageId.VIEWPOINT,
        tool="create",
        payload={"mode": "prompt_first", "prompt": "x", "canvas": {"width": 16, "height": 16}},
        seed=0,
        wall_time=0.0,
    )
    with pytest.raises(UnknownParent):
        append_event(session, bogus_root)


def test_append_is_pure_and_append_only():
    session = make_session()
    before = dict(session.events)
    out = append_event(session, draw_event(session, 1, parent_id=0, points=((2, 2),)))
    assert session.events == before  # original untouched
    assert len(out.events) == len(before) + 1
    assert out.head() == 1


def test_replay_equals_incremental_application():
    session = make_session()
    strokes = (((2.0, 2.0),), ((5.0, 5.0), (9.0, 9.0)), ((12.0, 3.0),))
    state = blank_state(16, 16)
    for i, pts in enumerate(strokes, start=1):
        event = draw_event(session, i, parent_id=i - 1, points=pts)
        session = append_event(session, event)
        state = render_stroke_state(state, pts)
    replayed = snapshot_at(session, session.head())
    assert replayed.composition == state.composition


def render_stroke_state(state, points):
    from dataclasses import replace

    stroke = Stroke(points=points, radius=1.0, ink=1.0)
    drawn = render_stroke(state.composition, stroke)
    return replace(state, composition=drawn, visited=state.visited | {StageId.COMPOSITION})


# --- snapshot_at -----------------------------------------------------------------------


def test_root_snapshot_is_blank():
    session = make_session()
    state = snapshot_at(session, 0)
    assert state == blank_state(16, 16)
    assert state.visited == frozenset()


def test_snapshot_after_stroke_matches_coverage_oracle():
    session = make_session()
    pts = ((3.0, 4.0), (10.0, 4.0))
    session = append_event(session, draw_event(session, 1, parent_id=0, points=pts))
    state = snapshot_at(session, 1)
    covered = stroke_coverage(16, 16, Stroke(points=pts, radius=1.0, ink=1.0))
    assert np.array_equal(state.composition.data > 0, covered.data)
    assert (state.composition.data[covered.data] == 1.0).all()


def test_snapshot_unknown_event():
    with pytest.raises(UnknownEvent):
        snapshot_at(make_session(), 42)


def test_engine_cache_matches_pure_replay():
    session = make_session()
    for i in range(1, 6):
        session = append_event(
            session, draw_event(session, i, parent_id=i - 1, points=((float(i), float(i)),))
        )
    engine = SessionEngine(session)
    for event_id in (3, 5, 1, 5, 2):
        assert engine.snapshot(event_id) == snapshot_at(session, event_id)


# --- revert_to --------------------------------------------------------------------------


def build_linear_session(n=5):
    session = make_session()
    for i in range(1, n + 1):
        session = append_event(
            session, draw_event(session, i, parent_id=i - 1, points=((float(i), float(i)),))
        )
    return session


def test_revert_to_head_is_identity():
    session = build_linear_session()
    out = revert_to(session, session.head())
    assert out.heads == session.heads
    assert out.events == session.events


def test_revert_moves_head_keeps_events():
    session = build_linear_session(5)
    out = revert_to(session, 3)
    assert out.head() == 3
    assert len(out.events) == 6  # root + 5, nothing deleted
    assert snapshot_at(out, out.head()) == snapshot_at(out, 3)


def test_revert_then_append_creates_implicit_branch_point():
    session = build_linear_session(5)
    session = revert_to(session, 3)
    event = draw_event(session, 6, parent_id=session.head(), points=((1.0, 14.0),))
    session = append_event(session, event)
    assert session.event(6).parent_id == 3
    assert session.head() == 6
    # redo target still reachable
    session = revert_to(session, 5)
    assert session.head() == 5


def test_revert_unknown_event():
    with pytest.raises(UnknownEvent):
        revert_to(build_linear_session(), 77)


# --- branch_from -------------------------------------------------------------------------


def test_branch_from_root_snapshots_blank():
    session = build_linear_session(3)
    session = branch_from(session, 0, "b")
    assert snapshot_at(session, session.head("b")) == blank_state(16, 16)


def test_duplicate_branch_name_rejected():
    session = branch_from(build_linear_session(2), 1, "b")
    with pytest.raises(DuplicateBranchName):
        branch_from(session, 0, "b")


def test_branch_isolation():
    session = build_linear_session(3)
    main_head = session.head("main")
    before = snapshot_at(session, main_head)
    session = branch_from(session, 1, "b")
    event = draw_event(session, 4, parent_id=1, points=((14.0, 14.0),), branch="b")
    session = append_event(session, event)
    after = snapshot_at(session, session.head("main"))
    assert session.head("main") == main_head
    assert after == before
    # and the branch did change its own snapshot
    assert snapshot_at(session, session.head("b")) != snapshot_at(session, 1)


# --- candidates and identity defaults ------------------------------------------------------


def test_candidates_pinned_on_root():
    session = make_session()
    candidates = candidates_of(session, 0)
    assert len(candidates) == 3
    assert all(isinstance(c, Raster) and c.channels == 1 for c in candidates)


def test_pick_candidate_sets_composition():
    session = make_session()
    pick = EditEvent(
        event_id=1,
        parent_id=0,
        branch="main",
        stage=StageId.VIEWPOINT,
        tool="pick_candidate",
        payload={"index": 1, "source_event_id": 0},
        seed=2,
        wall_time=1.0,
    )
    session = append_event(session, pick)
    state = snapshot_at(session, 1)
    assert state.composition == candidates_of(session, 0)[1]
    assert {StageId.VIEWPOINT, StageId.COMPOSITION} <= state.visited


def test_identity_defaults_for_unvisited():
    session = make_session()
    state = snapshot_at(session, 0)
    assert (state.chroma.data == 1.0).all()
    assert (state.shading.data == 1.0).all()
    assert state.style.is_identity()


def test_image_first_root_decomposes():
    rng = np.random.default_rng(8)
    image = Raster(rng.random((16, 16, 3)))
    session = new_session(
        session_id="img", mode="image_first", image=image, width=16, height=16, seed=3
    )
    state = snapshot_at(session, 0)
    assert state.visited == {StageId.COMPOSITION, StageId.COLOR, StageId.LIGHTING}
    # layers reproduce the decomposition of the PNG-quantized source
    from creo.engine import decode_raster
    from creo.ops import decompose_image

    stored = decode_raster(session.event(0).payload["source"])
    layers = decompose_image(stored)
    assert state.chroma == layers.chroma
    assert state.shading == layers.shading
