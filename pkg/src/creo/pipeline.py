"""Staged semantics: preview composition, propagation, locks, violations.

The preview is a multiplicative stack - style(shading * chroma * (1 - ink)) -
so stage independence, order independence, and the grayscale-before-color
invariant hold by construction: each preview pixel depends only on the
same-pixel layer samples, and the factors commute.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, StageLocked
from .model import DecisionState, LockSet, StageId, StyleSpec
from .ops import apply_style
from .raster import Mask, Raster

__all__ = [
    "EDITABLE_ATTRIBUTES",
    "editable_attributes",
    "compose_preview",
    "compose_base",
    "propagate",
    "enforce_locks",
    "ViolationReport",
    "detect_violation",
]

#: Attribute ownership per stage. Viewpoint acts on the same ink substrate it
#: hands to Composition; every downstream attribute has a single owner.
EDITABLE_ATTRIBUTES = {
    StageId.VIEWPOINT: frozenset({"ink_geometry"}),
    StageId.COMPOSITION: frozenset({"ink_geometry"}),
    StageId.COLOR: frozenset({"chroma", "palette"}),
    StageId.LIGHTING: frozenset({"shading", "lights"}),
    StageId.STYLE: frozenset({"global_style"}),
}

ALL_ATTRIBUTES = ("ink_geometry", "chroma", "palette", "shading", "lights", "global_style")


def editable_attributes(stage: StageId) -> frozenset:
    """The attributes a stage may change; total and fixed."""
    return EDITABLE_ATTRIBUTES[stage]


def compose_base(state: DecisionState) -> Raster:
    """Preview before the style pass: shading * chroma * (1 - ink)."""
    paper = 1.0 - state.composition.data
    stacked = state.chroma.data * paper[:, :, None] * state.shading.data[:, :, None]
    return Raster(stacked)


def compose_preview(state: DecisionState) -> Raster:
    """The persistent final-image preview; pure and deterministic."""
    return apply_style(compose_base(state), state.style)


def _layer_of(state: DecisionState, stage: StageId):
    if stage in (StageId.VIEWPOINT, StageId.COMPOSITION):
        return state.composition
    if stage is StageId.COLOR:
        return state.chroma
    if stage is StageId.LIGHTING:
        return state.shading
    return state.style


def propagate(state: DecisionState, edited_stage: StageId, new_layer) -> DecisionState:
    """Replace one stage's layer, preserving every other stage verbatim.

    Downstream appearance follows automatically from re-composition, so new
    ink renders under the previously chosen palette and illumination while
    uncolored regions stay at identity chroma. Region locks on the edited
    stage hold their pixels; a fully locked stage rejects the edit.
    """
    if state.locks.is_stage_locked(edited_stage):
        raise StageLocked(f"{edited_stage.value} is fully locked")

    old = _layer_of(state, edited_stage)

    if edited_stage is StageId.STYLE:
        if not isinstance(new_layer, StyleSpec):
            raise TypeError("style stage takes a StyleSpec")
        if new_layer == old:
            return state
        return replace(state, style=new_layer, visited=state.visited | {edited_stage})

    if not isinstance(new_layer, Raster):
        raise TypeError(f"{edited_stage.value} stage takes a Raster layer")
    if new_layer.data.shape != old.data.shape:
        raise DimensionMismatch("replacement layer does not match canvas")

    kept = enforce_locks(old, new_layer, state.locks, edited_stage)
    if edited_stage is StageId.VIEWPOINT:
        # A viewpoint pick writes the composition substrate, so composition
        # locks bind it as well.
        if state.locks.is_stage_locked(StageId.COMPOSITION):
            raise StageLocked("Composition is fully locked")
        kept = enforce_locks(old, kept, state.locks, StageId.COMPOSITION)
    if kept == old:
        return state

    touched = {edited_stage}
    field = {
        StageId.VIEWPOINT: "composition",
        StageId.COMPOSITION: "composition",
        StageId.COLOR: "chroma",
        StageId.LIGHTING: "shading",
    }[edited_stage]
    if edited_stage is StageId.VIEWPOINT:
        # Picking a viewpoint writes the initial composition sketch.
        touched.add(StageId.COMPOSITION)
    return replace(state, **{field: kept}, visited=state.visited | touched)


def enforce_locks(pre: Raster, post: Raster, locks: LockSet, stage: StageId) -> Raster:
    """post everywhere except the stage's locked coverage, which stays pre."""
    if pre.data.shape != post.data.shape:
        raise DimensionMismatch("pre and post rasters must share shape")
    if locks.is_stage_locked(stage):
        return pre
    masks = locks.masks_for(stage)
    if not masks:
        return post
    hold = np.zeros(pre.data.shape[:2], dtype=bool)
    for m in masks:
        if m.data.shape != hold.shape:
            raise DimensionMismatch("region lock mask does not match rasters")
        hold |= m.data
    cover = hold if pre.channels == 1 else hold[:, :, None]
    return Raster(np.where(cover, pre.data, post.data))


@dataclass(frozen=True)
class ViolationReport:
    """Out-of-scope pixel damage from one edit; advisory, never auto-reverted."""

    violated: bool
    changed_fraction: float
    max_delta: float
    offending_mask: Mask

    def to_json(self) -> dict:
        return {
            "violated": self.violated,
            "changed_fraction": self.changed_fraction,
            "max_delta": self.max_delta,
            "offending_pixels": int(self.offending_mask.data.sum()),
        }


def detect_violation(pre_preview: Raster, post_preview: Raster, scope: Mask, tau: float) -> ViolationReport:
    """Flag out-of-scope pixels (scope = 0) whose max-channel delta exceeds tau."""
    if pre_preview.data.shape != post_preview.data.shape:
        raise DimensionMismatch("pre and post previews must share shape")
    if not scope.matches(pre_preview):
        raise DimensionMismatch("scope mask does not match previews")
    if tau < 0:
        raise ValueError("tau must be non-negative")

    delta = np.abs(post_preview.data - pre_preview.data)
    if pre_preview.channels == 3:
        delta = delta.max(axis=2)
    outside = ~scope.data
    offending = outside & (delta > tau)
    n_outside = int(outside.sum())
    n_offending = int(offending.sum())
    max_delta = float(delta[outside].max()) if n_outside else 0.0
    fraction = (n_offending / n_outside) if n_outside else 0.0
    return ViolationReport(
        violated=n_offending > 0,
        changed_fraction=fraction,
        max_delta=max_delta,
        offending_mask=Mask(offending),
    )
