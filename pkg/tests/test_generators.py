import base64
import json
from dataclasses import replace

import numpy as np
import pytest

from creo.errors import (
    BackendUnavailable,
    EmptyPrompt,
    LockedRegionRequested,
    UnknownInstruction,
    ZeroCount,
)
from creo.generators import (
    Diff,
    GenerationRequest,
    LIGHT_RIGS,
    MockBackend,
    RemoteBackend,
    apply_diff,
    build_prompt,
    effective_mask,
    generate_viewpoints,
    stage_edit,
)
from creo.model import LockSet, RegionLock, StageId
from creo.ops import masked_composite, shade_map
from creo.pipeline import compose_base
from creo.raster import Mask, Raster, mask_to_png, raster_to_png

from conftest import random_mask, random_raster, random_state

BACKEND = MockBackend()


# --- generate_viewpoints --------------------------------------------------------


def test_viewpoints_count_and_determinism():
    a = generate_viewpoints("a close up of my main character", 6, 42, 32, 32)
    b = generate_viewpoints("a close up of my main character", 6, 42, 32, 32)
    assert len(a) == 6
    assert all(x == y for x, y in zip(a, b))


def test_viewpoints_distinct_across_seeds():
    a = generate_viewpoints("kitchen", 4, 7, 32, 32)
    b = generate_viewpoints("kitchen", 4, 8, 32, 32)
    assert any(x != y for x, y in zip(a, b))


def test_viewpoints_distinct_across_indices():
    sketches = generate_viewpoints("living room", 6, 3, 32, 32)
    blobs = {s.data.tobytes() for s in sketches}
    assert len(blobs) > 1


def test_viewpoints_validation():
    with pytest.raises(EmptyPrompt):
        generate_viewpoints("", 3, 1)
    with pytest.raises(ZeroCount):
        generate_viewpoints("x", 0, 1)


# --- effective mask / locks -------------------------------------------------------


def test_effective_mask_defaults_to_unlocked_canvas(rng):
    state = random_state(rng)
    hold = random_mask(rng, state.width, state.height, 0.2)
    state = replace(state, locks=LockSet(region_locks=(RegionLock("L1", StageId.COLOR, hold),)))
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0")
    eff = effective_mask(request)
    assert not (eff.data & hold.data).any()
    assert (eff.data | hold.data).all()


def test_explicit_mask_overlapping_lock_rejected(rng):
    state = random_state(rng)
    hold = Mask.full(state.width, state.height)
    state = replace(state, locks=LockSet(region_locks=(RegionLock("L1", StageId.COLOR, hold),)))
    request = GenerationRequest(
        state=state, stage=StageId.COLOR, instruction="fill:0", mask=Mask.full(state.width, state.height)
    )
    with pytest.raises(LockedRegionRequested):
        stage_edit(request, BACKEND)


def test_fully_locked_stage_rejected(rng):
    state = random_state(rng)
    state = replace(state, locks=LockSet(stage_locks=frozenset({StageId.COMPOSITION})))
    request = GenerationRequest(state=state, stage=StageId.COMPOSITION, instruction="cleanup")
    with pytest.raises(LockedRegionRequested):
        stage_edit(request, BACKEND)


# --- mock registry -------------------------------------------------------------------


def test_unknown_instruction_rejected(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.COMPOSITION, instruction="sharpen")
    with pytest.raises(UnknownInstruction):
        stage_edit(request, BACKEND)


def test_fill_diff_confined_to_mask(rng):
    state = random_state(rng)
    mask = random_mask(rng, state.width, state.height, 0.5)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0", mask=mask)
    diff = stage_edit(request, BACKEND)
    assert not (diff.mask.data & ~mask.data).any()
    filled = apply_diff(state.chroma, diff)
    color = np.array(state.palette[0].rgb)
    assert (filled.data[diff.mask.data] == color).all()


def test_fill_bad_index_rejected(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:9")
    with pytest.raises(UnknownInstruction):
        stage_edit(request, BACKEND)


def test_cleanup_fixpoint_on_thin_strokes():
    ink = np.zeros((9, 9))
    ink[4, 1:8] = 1.0
    from creo.model import blank_state

    state = replace(blank_state(9, 9), composition=Raster(ink))
    request = GenerationRequest(state=state, stage=StageId.COMPOSITION, instruction="cleanup")
    diff = stage_edit(request, BACKEND)
    assert diff.is_empty()


def test_vibe_preset_produces_rig_map(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.LIGHTING, instruction="vibe:sunset")
    diff = stage_edit(request, BACKEND)
    rig_map = shade_map(state.width, state.height, LIGHT_RIGS["sunset"])
    shaded = apply_diff(state.shading, diff)
    assert np.array_equal(shaded.data[diff.mask.data], rig_map.data[diff.mask.data])


def test_sunset_rig_matches_published_parameters():
    directional = [l for l in LIGHT_RIGS["sunset"] if l.kind == "directional"]
    ambient = [l for l in LIGHT_RIGS["sunset"] if l.kind == "ambient"]
    assert directional[0].azimuth == 180.0
    assert directional[0].elevation == 10.0
    assert directional[0].intensity == 0.8
    assert ambient[0].intensity == 0.2


def test_style_apply_matches_filter(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.STYLE, instruction="apply")
    diff = stage_edit(request, BACKEND)
    from creo.ops import apply_style

    base = compose_base(state)
    styled = apply_style(base, state.style)
    patched = apply_diff(base, diff)
    assert np.array_equal(patched.data[diff.mask.data], styled.data[diff.mask.data])


def test_mock_outputs_deterministic(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:1", seed=5)
    one = stage_edit(request, BACKEND)
    two = stage_edit(request, BACKEND)
    assert one.mask == two.mask and one.patch == two.patch


def test_diff_locality_over_random_requests(rng):
    for _ in range(25):
        state = random_state(rng)
        mask = random_mask(rng, state.width, state.height, float(rng.uniform(0.1, 0.9)))
        stage, instruction = [
            (StageId.COMPOSITION, "cleanup"),
            (StageId.COLOR, "fill:0"),
            (StageId.LIGHTING, "vibe:noon"),
            (StageId.STYLE, "apply"),
        ][int(rng.integers(0, 4))]
        request = GenerationRequest(state=state, stage=stage, instruction=instruction, mask=mask)
        diff = stage_edit(request, BACKEND)
        assert not (diff.mask.data & ~mask.data).any()


# --- apply_diff ------------------------------------------------------------------------


def test_apply_diff_equals_masked_composite(rng):
    for _ in range(10):
        layer = random_raster(rng, 8, 8, 3)
        patch = random_raster(rng, 8, 8, 3)
        mask = random_mask(rng, 8, 8, 0.5)
        diff = Diff(mask=mask, patch=patch, target_stage=StageId.COLOR)
        assert apply_diff(layer, diff) == masked_composite(layer, patch, mask)


def test_empty_and_full_diffs(rng):
    layer = random_raster(rng, 6, 6, 1)
    patch = random_raster(rng, 6, 6, 1)
    empty = Diff(mask=Mask.empty(6, 6), patch=patch, target_stage=StageId.COMPOSITION)
    full = Diff(mask=Mask.full(6, 6), patch=patch, target_stage=StageId.COMPOSITION)
    assert apply_diff(layer, empty) == layer
    assert apply_diff(layer, full) == patch


# --- build_prompt -----------------------------------------------------------------------


def test_color_prompt_freezes_other_attributes(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0")
    bundle = build_prompt(request)
    frozen_clause = bundle.stage_text.split("Frozen attributes", 1)[1]
    for attr in ("ink_geometry", "shading", "global_style"):
        assert attr in frozen_clause
    assert "chroma" in bundle.stage_text.split("Frozen attributes", 1)[0]


def test_prompt_deterministic(rng):
    state = random_state(rng)
    request = GenerationRequest(state=state, stage=StageId.LIGHTING, instruction="vibe:studio")
    a = build_prompt(request)
    b = build_prompt(request)
    assert a.system_text == b.system_text
    assert a.stage_text == b.stage_text
    assert a.lock_description == b.lock_description
    assert a.reference_images["preview"] == b.reference_images["preview"]


def test_lock_description_enumerates_locks(rng):
    state = random_state(rng)
    hold = random_mask(rng, state.width, state.height, 0.2)
    state = replace(
        state,
        locks=LockSet(
            stage_locks=frozenset({StageId.STYLE}),
            region_locks=(RegionLock("L7", StageId.COLOR, hold),),
        ),
    )
    request = GenerationRequest(state=state, stage=StageId.COMPOSITION, instruction="cleanup")
    bundle = build_prompt(request)
    assert "Style fully locked" in bundle.lock_description
    assert "L7" in bundle.lock_description


# --- remote adapter ------------------------------------------------------------------------


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"http {self.status_code}")

    def json(self):
        return self._payload


class FakeHttp:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = []

    def post(self, url, data=None, files=None, headers=None, timeout=None):
        self.calls.append({"url": url, "data": data, "headers": headers})
        result = self.responses.pop(0)
        if isinstance(result, Exception):
            raise result
        return result


def _remote_payload(state, mask):
    patch = Raster(np.full((state.height, state.width, 3), 0.25))
    return {
        "patch": base64.b64encode(raster_to_png(patch)).decode(),
        "mask": base64.b64encode(mask_to_png(mask)).decode(),
    }


def test_remote_clips_spillover_to_request_mask(rng):
    state = random_state(rng)
    request_mask = random_mask(rng, state.width, state.height, 0.3)
    spilled = Mask.full(state.width, state.height)
    http = FakeHttp([FakeResponse(_remote_payload(state, spilled))])
    backend = RemoteBackend("http://backend.test/generate", session=http)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0", mask=request_mask)
    diff = stage_edit(request, backend)
    assert not (diff.mask.data & ~request_mask.data).any()


def test_remote_retries_then_succeeds(rng):
    state = random_state(rng)
    mask = random_mask(rng, state.width, state.height, 0.4)
    http = FakeHttp([RuntimeError("boom"), FakeResponse(_remote_payload(state, mask))])
    backend = RemoteBackend("http://backend.test/generate", session=http)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0", mask=mask)
    diff = stage_edit(request, backend)
    assert len(http.calls) == 2
    keys = {c["headers"]["Idempotency-Key"] for c in http.calls}
    assert len(keys) == 2  # fresh key per attempt
    assert not diff.mask.data[~mask.data].any()


def test_remote_exhausted_retries_raise(rng):
    state = random_state(rng)
    http = FakeHttp([RuntimeError("a"), RuntimeError("b"), RuntimeError("c")])
    backend = RemoteBackend("http://backend.test/generate", retries=2, session=http)
    request = GenerationRequest(state=state, stage=StageId.COLOR, instruction="fill:0")
    with pytest.raises(BackendUnavailable):
        stage_edit(request, backend)
    assert len(http.calls) == 3
