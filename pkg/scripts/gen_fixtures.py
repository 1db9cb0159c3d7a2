#!/usr/bin/env python3
"""Regenerate the committed test fixtures, deterministically.

Produces, under tests/fixtures/:
  metrics_corpus/*.ndjson   annotated synthetic action logs (2 conditions x 6 sessions)
  natural/img0*.png         five smooth, scene-like images for decomposition tests
  sessions/comic/           scripted webcomic-cover session (events + meta)
  sessions/interior/        scripted living-room session with a branch and a revert

Run from the repo root: python scripts/gen_fixtures.py
"""

import base64
import itertools
import json
import math
from pathlib import Path
from unittest import mock

import numpy as np

from creo.model import StageId
from creo.raster import Mask, Raster, mask_to_png, raster_to_png
from creo.service import ServiceConfig, SessionService
from creo.store import save_session

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "tests" / "fixtures"

ACTION_TYPES = ("construct", "evaluate", "generate", "refine", "repair")
INTENTS = ("on_intent", "pivot", "drift")
STAGES = ("Viewpoint", "Composition", "Color", "Lighting", "Style")


def gen_metrics_corpus():
    out_dir = FIXTURES / "metrics_corpus"
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(424242)

    profiles = {
        "creo": {
            "type_p": (0.18, 0.36, 0.20, 0.16, 0.10),
            "intent_p": (0.82, 0.04, 0.14),
            "user_p": 0.55,
            "direction_p": 0.06,
            "violation_p": 0.11,
            "stages": True,
        },
        "gpt": {
            "type_p": (0.05, 0.40, 0.38, 0.14, 0.03),
            "intent_p": (0.83, 0.03, 0.14),
            "user_p": 0.26,
            "direction_p": 0.015,
            "violation_p": 0.0,
            "stages": False,
        },
    }

    for condition, prof in profiles.items():
        lines = []
        for s in range(1, 7):
            sid = f"{condition}-{s:02d}"
            n_actions = int(rng.integers(20, 61))
            iteration = 1
            stage_idx = 0
            for i in range(n_actions):
                if rng.random() < 0.08:
                    iteration += 1
                if prof["stages"]:
                    step = rng.random()
                    if step < 0.25:
                        stage_idx = int(rng.integers(0, 5))  # jump anywhere
                    elif step < 0.55 and stage_idx < 4:
                        stage_idx += 1
                rec = {
                    "session_id": sid,
                    "condition": condition,
                    "index": i,
                    "action_type": str(rng.choice(ACTION_TYPES, p=prof["type_p"])),
                    "intent": str(rng.choice(INTENTS, p=prof["intent_p"])),
                    "agency": "user_driven" if rng.random() < prof["user_p"] else "model_led",
                    "direction_change": bool(rng.random() < prof["direction_p"]),
                    "invariant_violation": bool(rng.random() < prof["violation_p"]),
                    "iteration_id": iteration,
                }
                if prof["stages"]:
                    rec["stage"] = STAGES[stage_idx]
                lines.append(json.dumps(rec, sort_keys=True))
        path = out_dir / f"{condition}_sessions.ndjson"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(lines)} actions)")


def _bump(xs, ys, cx, cy, sx, sy):
    return np.exp(-(((xs - cx) / sx) ** 2 + ((ys - cy) / sy) ** 2))


def gen_natural_images(size=64):
    out_dir = FIXTURES / "natural"
    out_dir.mkdir(parents=True, exist_ok=True)
    ys, xs = np.mgrid[0:size, 0:size].astype(float) / (size - 1)

    scenes = []

    # sunset over hills
    sky = np.stack([0.9 - 0.5 * ys, 0.55 - 0.25 * ys, 0.45 + 0.1 * ys], axis=2)
    sun = _bump(xs, ys, 0.7, 0.3, 0.08, 0.08)
    sky += np.stack([0.9 * sun, 0.7 * sun, 0.3 * sun], axis=2)
    hills = (ys > 0.62 + 0.06 * np.sin(xs * 9.0)).astype(float)
    ground = np.stack([0.18 + 0.1 * ys, 0.30 + 0.1 * ys, 0.16 * np.ones_like(ys)], axis=2)
    scenes.append(np.where(hills[:, :, None] > 0, ground, sky))

    # room with a bright window
    wall = np.stack([0.62 + 0.1 * xs, 0.55 + 0.08 * xs, 0.50 + 0.05 * xs], axis=2) * (1 - 0.3 * ys[:, :, None])
    window = ((xs > 0.55) & (xs < 0.85) & (ys > 0.15) & (ys < 0.55)).astype(float)
    glow = np.stack([0.95 * window, 0.97 * window, 1.0 * window], axis=2)
    scenes.append(np.where(window[:, :, None] > 0, glow, wall))

    # lakeside reflection
    water = np.stack([0.2 + 0.1 * ys, 0.35 + 0.2 * ys, 0.55 + 0.25 * ys], axis=2)
    ripple = 0.05 * np.sin(ys * 40.0) * (ys > 0.5)
    scenes.append(np.clip(water + ripple[:, :, None], 0, 1))

    # warm interior gradient with lamps
    warm = np.stack([0.45 + 0.3 * (1 - ys), 0.32 + 0.2 * (1 - ys), 0.22 + 0.1 * (1 - ys)], axis=2)
    lamp = _bump(xs, ys, 0.25, 0.35, 0.1, 0.12) + _bump(xs, ys, 0.8, 0.5, 0.09, 0.1)
    scenes.append(np.clip(warm + 0.35 * lamp[:, :, None] * np.array([1.0, 0.85, 0.5]), 0, 1))

    # soft pastel blobs
    blob = (
        0.6 * _bump(xs, ys, 0.3, 0.4, 0.2, 0.25)[:, :, None] * np.array([0.9, 0.5, 0.6])
        + 0.6 * _bump(xs, ys, 0.7, 0.6, 0.25, 0.2)[:, :, None] * np.array([0.5, 0.7, 0.9])
        + np.array([0.25, 0.28, 0.3])
    )
    scenes.append(np.clip(blob, 0, 1))

    for i, scene in enumerate(scenes, start=1):
        path = out_dir / f"img{i:02d}.png"
        path.write_bytes(raster_to_png(Raster(np.clip(scene, 0.0, 1.0))))
        print(f"wrote {path}")


def _stroke(points, radius=1.5, ink=1.0):
    return {"stroke": {"points": [list(p) for p in points], "radius": radius, "ink": ink, "mode": "draw"}}


def _mask_b64(mask):
    return base64.b64encode(mask_to_png(mask)).decode()


def _rect_mask(size, x0, y0, x1, y1):
    m = np.zeros((size, size), dtype=bool)
    m[y0:y1, x0:x1] = True
    return Mask(m)


def gen_scenario_sessions(size=96):
    out_dir = FIXTURES / "sessions"
    out_dir.mkdir(parents=True, exist_ok=True)

    ticker = itertools.count(1_700_000_000)
    fake_time = mock.Mock()
    fake_time.time = lambda: float(next(ticker))

    with mock.patch("creo.service.time", fake_time):
        svc = SessionService(ServiceConfig(canvas_size=size))

        # -- webcomic cover ------------------------------------------------
        sid = "comic"
        svc.create_session(
            "prompt_first", prompt="a close up of my main character",
            n_viewpoints=6, seed=101, session_id=sid,
        )
        svc.submit_edit(sid, StageId.VIEWPOINT, "pick_candidate", payload={"index": 2}, seed=102)
        svc.submit_edit(sid, StageId.COMPOSITION, "draw",
                        payload=_stroke([(30, 60), (40, 68), (55, 66)]), seed=103)  # jawline
        svc.submit_edit(sid, StageId.COMPOSITION, "draw",
                        payload=_stroke([(42, 52), (50, 54)], radius=1.0), seed=104)  # mouth
        svc.submit_edit(sid, StageId.COMPOSITION, "erase",
                        payload={"stroke": {"points": [[62, 30], [70, 34]], "radius": 2.0,
                                            "ink": 1.0, "mode": "erase"}}, seed=105)
        svc.submit_edit(sid, StageId.COMPOSITION, "ai_cleanup", payload={},
                        mask=_rect_mask(size, 20, 40, 70, 80), seed=106)
        svc.submit_edit(sid, StageId.COLOR, "palette_editor", payload={"palette": [
            {"rgb": [0.42, 0.55, 0.45], "label": "muted green"},
            {"rgb": [0.36, 0.45, 0.58], "label": "muted blue"},
            {"rgb": [0.87, 0.83, 0.74], "label": "paper"},
        ]}, seed=107)
        svc.submit_edit(sid, StageId.COLOR, "brush_fill",
                        payload={"color": {"rgb": [0.36, 0.45, 0.58], "label": "muted blue"}},
                        mask=_rect_mask(size, 28, 8, 64, 30), seed=108)  # hair
        scribble = np.zeros((size, size), dtype=bool)
        scribble[70:74, 70:74] = True  # rough stroke over the phone
        svc.submit_edit(sid, StageId.COLOR, "ai_fill",
                        payload={"color_index": 0, "scribble": _mask_b64(Mask(scribble))}, seed=109)
        svc.submit_edit(sid, StageId.LIGHTING, "vibe_preset",
                        payload={"vibe": "neon-backlight"}, seed=110)
        svc.submit_edit(sid, StageId.STYLE, "preset_picker",
                        payload={"style": {"preset": "digital-paint", "params": {"levels": 7}, "seed": 7}},
                        seed=111)
        svc.submit_edit(sid, StageId.STYLE, "apply", payload={}, seed=112)
        save_session(svc._managed(sid).record, out_dir / sid)
        print(f"wrote {out_dir / sid}")

        # -- living-room study re-enactment ---------------------------------
        sid = "interior"
        svc.create_session(
            "prompt_first",
            prompt="my ideal living room with a view of the Charles River",
            n_viewpoints=6, seed=201, session_id=sid,
        )
        svc.submit_edit(sid, StageId.VIEWPOINT, "pick_candidate", payload={"index": 0}, seed=202)
        # accepted AI suggestion: a carpet, merged in through a masked edit
        carpet = np.zeros((size, size))
        carpet[70:86, 20:76] = 1.0
        carpet_patch = base64.b64encode(raster_to_png(Raster(carpet))).decode()
        svc.submit_edit(sid, StageId.COMPOSITION, "mask_edit",
                        payload={"patch": carpet_patch},
                        mask=_rect_mask(size, 20, 70, 76, 86), seed=203)
        svc.submit_edit(sid, StageId.COMPOSITION, "draw",
                        payload=_stroke([(10, 20), (10, 50), (34, 50), (34, 20), (10, 20)], radius=1.0),
                        seed=204)  # window frame
        svc.submit_edit(sid, StageId.COLOR, "palette_editor", payload={"palette": [
            {"rgb": [0.25, 0.38, 0.65], "label": "couch blue"},
            {"rgb": [0.88, 0.52, 0.18], "label": "accent orange"},
        ]}, seed=205)
        svc.submit_edit(sid, StageId.COLOR, "brush_fill",
                        payload={"color": {"rgb": [0.25, 0.38, 0.65], "label": "couch blue"}},
                        mask=_rect_mask(size, 44, 52, 80, 68), seed=206)
        accent = np.zeros((size, size), dtype=bool)
        accent[74:78, 30:34] = True
        svc.submit_edit(sid, StageId.COLOR, "ai_fill",
                        payload={"color_index": 1, "scribble": _mask_b64(Mask(accent))}, seed=207)
        svc.submit_edit(sid, StageId.LIGHTING, "light_rig_editor", payload={"lights": [
            {"kind": "directional", "azimuth": 200.0, "elevation": 35.0, "intensity": 0.55},
            {"kind": "directional", "azimuth": 80.0, "elevation": 20.0, "intensity": 0.3},
            {"kind": "ambient", "azimuth": 0.0, "elevation": 0.0, "intensity": 0.25},
        ]}, seed=208)
        # compare an alternative lighting direction on a branch
        palette_event = 4
        svc.create_branch(sid, palette_event, "alt-light")
        svc.submit_edit(sid, StageId.LIGHTING, "vibe_preset", payload={"vibe": "noon"},
                        branch="alt-light", seed=209)
        svc.set_active_branch(sid, "main")
        main_head = svc.session(sid).head("main")
        svc.submit_edit(
            sid, StageId.STYLE, "preset_picker",
            payload={"style": {"preset": "photoreal-mock", "params": {"vignette": 0.25}, "seed": 5}},
            seed=210,
        )
        svc.revert(sid, main_head)  # second thoughts about the vignette
        svc.submit_edit(sid, StageId.STYLE, "preset_picker",
                        payload={"style": {"preset": "photoreal-mock", "params": {"vignette": 0.4}, "seed": 5}},
                        seed=211)
        save_session(svc._managed(sid).record, out_dir / sid)
        print(f"wrote {out_dir / sid}")


if __name__ == "__main__":
    gen_metrics_corpus()
    gen_natural_images()
    gen_scenario_sessions()
