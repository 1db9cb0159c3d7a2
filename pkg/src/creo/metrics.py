"""Interaction-log analysis: per-session metrics, condition summaries,
embedding-space anchoring, and stage usage patterns.

Input logs are newline-delimited JSON, one annotated action per line.
Parsing is strict: one malformed record fails the whole file with its line
number. All statistics are computed per session first and only then
aggregated per condition (mean and sample standard deviation over sessions,
never pooled actions).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateImage,
    EmptyInput,
    EmptySession,
    InsufficientData,
    MalformedRecord,
    MissingField,
    MixedConditions,
    MixedSessions,
    NonMonotonicIndex,
)
from .model import STAGE_ORDER, StageId
from .raster import Raster

__all__ = [
    "ActionRecord",
    "MetricsRow",
    "ConditionSummary",
    "parse_action_log",
    "group_by_session",
    "session_metrics",
    "aggregate_condition",
    "toy_embed",
    "anchoring_distance",
    "AnchoringStats",
    "anchoring_stats",
    "homogenization_spread",
    "stage_usage_report",
    "StageUsageReport",
    "metrics_rows_to_csv",
    "format_report",
    "REPORT_ROWS",
]

ACTION_TYPES = ("construct", "evaluate", "generate", "refine", "repair")
INTENTS = ("on_intent", "pivot", "drift")
AGENCIES = ("user_driven", "model_led")

_REQUIRED_FIELDS = (
    "session_id",
    "condition",
    "index",
    "action_type",
    "intent",
    "agency",
    "direction_change",
    "invariant_violation",
    "iteration_id",
)


@dataclass(frozen=True)
class ActionRecord:
    session_id: str
    condition: str
    index: int
    action_type: str
    intent: str
    agency: str
    direction_change: bool
    invariant_violation: bool
    iteration_id: int
    stage: Optional[StageId] = None


@dataclass(frozen=True)
class MetricsRow:
    session_id: str
    condition: str
    direction_changes: int
    breadth: int
    drift_pct: float
    pivot_pct: float
    construct_pct: float
    evaluate_pct: float
    agency_pct: float
    violation_pct: float
    revision_burden: float


#: Metric fields aggregated into condition summaries, in report order.
METRIC_FIELDS = (
    "direction_changes",
    "breadth",
    "drift_pct",
    "pivot_pct",
    "construct_pct",
    "evaluate_pct",
    "agency_pct",
    "revision_burden",
    "violation_pct",
)


@dataclass(frozen=True)
class ConditionSummary:
    condition: str
    n_sessions: int
    stats: dict  # metric name -> (mean, sample sd)


def parse_action_log(stream) -> list:
    """Parse an annotated NDJSON action log; strict, whole-file failure.

    ``stream`` may be a file-like object, a string of NDJSON text, or an
    iterable of lines.
    """
    if hasattr(stream, "read"):
        lines = stream.read().splitlines()
    elif isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = [str(line) for line in stream]

    records: list[ActionRecord] = []
    last_index: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text:
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise MalformedRecord(lineno, "record must be a JSON object")
        for name in _REQUIRED_FIELDS:
            if name not in obj or obj[name] is None or obj[name] == "":
                raise MissingField(lineno, name)
        if obj["action_type"] not in ACTION_TYPES:
            raise MalformedRecord(lineno, f"unknown action_type {obj['action_type']!r}")
        if obj["intent"] not in INTENTS:
            raise MalformedRecord(lineno, f"unknown intent {obj['intent']!r}")
        if obj["agency"] not in AGENCIES:
            raise MalformedRecord(lineno, f"unknown agency {obj['agency']!r}")
        if not isinstance(obj["direction_change"], bool) or not isinstance(
            obj["invariant_violation"], bool
        ):
            raise MalformedRecord(lineno, "direction_change and invariant_violation must be booleans")
        try:
            index = int(obj["index"])
            iteration = int(obj["iteration_id"])
        except (TypeError, ValueError):
            raise MalformedRecord(lineno, "index and iteration_id must be integers") from None

        sid = str(obj["session_id"])
        if sid in last_index and index <= last_index[sid]:
            raise NonMonotonicIndex(
                f"line {lineno}: index {index} not above {last_index[sid]} for session {sid!r}"
            )
        last_index[sid] = index

        stage = None
        if obj.get("stage"):
            try:
                stage = StageId.parse(obj["stage"])
            except ValueError:
                raise MalformedRecord(lineno, f"unknown stage {obj['stage']!r}") from None

        records.append(
            ActionRecord(
                session_id=sid,
                condition=str(obj["condition"]),
                index=index,
                action_type=obj["action_type"],
                intent=obj["intent"],
                agency=obj["agency"],
                direction_change=obj["direction_change"],
                invariant_violation=obj["invariant_violation"],
                iteration_id=iteration,
                stage=stage,
            )
        )
    return records


def group_by_session(records: Sequence[ActionRecord]) -> dict:
    sessions: dict[str, list] = {}
    for record in records:
        sessions.setdefault(record.session_id, []).append(record)
    return sessions


def session_metrics(records: Sequence[ActionRecord]) -> MetricsRow:
    """Counts and percentages for one session's actions."""
    if not records:
        raise EmptySession("no actions in session")
    session_ids = {r.session_id for r in records}
    if len(session_ids) != 1:
        raise MixedSessions(f"records span sessions {sorted(session_ids)}")

    total = len(records)

    def pct(count: int) -> float:
        return 100.0 * count / total

    n_repair = sum(r.action_type == "repair" for r in records)
    return MetricsRow(
        session_id=records[0].session_id,
        condition=records[0].condition,
        direction_changes=sum(r.direction_change for r in records),
        breadth=len({r.iteration_id for r in records}),
        drift_pct=pct(sum(r.intent == "drift" for r in records)),
        pivot_pct=pct(sum(r.intent == "pivot" for r in records)),
        construct_pct=pct(sum(r.action_type == "construct" for r in records)),
        evaluate_pct=pct(sum(r.action_type == "evaluate" for r in records)),
        agency_pct=pct(sum(r.agency == "user_driven" for r in records)),
        violation_pct=pct(sum(r.invariant_violation for r in records)),
        revision_burden=n_repair / total,
    )


def _mean_sd(values: Sequence[float]) -> tuple:
    # fsum is exactly rounded, which keeps the aggregate permutation-invariant
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def aggregate_condition(rows: Sequence[MetricsRow]) -> ConditionSummary:
    """Per-metric mean and sample sd over the per-session rows of one condition."""
    if not rows:
        raise EmptyInput("no metrics rows to aggregate")
    conditions = {r.condition for r in rows}
    if len(conditions) != 1:
        raise MixedConditions(f"rows span conditions {sorted(conditions)}")
    stats = {
        name: _mean_sd([float(getattr(r, name)) for r in rows]) for name in METRIC_FIELDS
    }
    return ConditionSummary(condition=rows[0].condition, n_sessions=len(rows), stats=stats)


# --- embedding-space anchoring ----------------------------------------------------


def _luminance(raster: Raster) -> np.ndarray:
    if raster.channels == 1:
        return raster.data
    return raster.data.mean(axis=2)


def _block_means(grid: np.ndarray, blocks: int = 8) -> np.ndarray:
    rows = np.array_split(np.arange(grid.shape[0]), blocks)
    cols = np.array_split(np.arange(grid.shape[1]), blocks)
    out = np.empty((blocks, blocks), dtype=np.float64)
    for i, ri in enumerate(rows):
        for j, cj in enumerate(cols):
            block = grid[np.ix_(ri, cj)] if ri.size and cj.size else np.zeros(1)
            out[i, j] = block.mean()
    return out


def toy_embed(image: Raster) -> np.ndarray:
    """Deterministic stand-in embedder: 8x8 box-downsampled luminance plus
    value-weighted 8-bin channel histograms, L2-normalized to a unit vector."""
    lum = _luminance(image)
    pooled = _block_means(lum).ravel()

    channels = (
        [image.data[:, :, c] for c in range(3)] if image.channels == 3 else [image.data] * 3
    )
    n_pixels = image.width * image.height
    hists = []
    for chan in channels:
        flat = chan.ravel()
        weighted, _ = np.histogram(flat, bins=8, range=(0.0, 1.0), weights=flat)
        hists.append(weighted / n_pixels)

    features = np.concatenate([pooled] + hists)
    norm = float(np.linalg.norm(features))
    if norm == 0.0:
        raise DegenerateImage("image produced an all-zero feature vector")
    return features / norm


def anchoring_distance(first: Raster, last: Raster, embedder: Callable = toy_embed) -> float:
    """L2 distance between unit-norm embeddings of the first and final images."""
    return float(np.linalg.norm(embedder(first) - embedder(last)))


@dataclass(frozen=True)
class AnchoringStats:
    """Per-session first-to-final embedding distances plus their mean and sd."""

    distances: dict  # session_id -> distance in [0, 2]
    mean: float
    sd: float


def anchoring_stats(image_pairs: dict, embedder: Callable = toy_embed) -> AnchoringStats:
    """Anchoring over one condition: ``image_pairs`` maps session id to a
    (first image, final image) tuple."""
    if not image_pairs:
        raise EmptyInput("no image pairs")
    distances = {
        sid: anchoring_distance(first, last, embedder)
        for sid, (first, last) in image_pairs.items()
    }
    mean, sd = _mean_sd(list(distances.values()))
    return AnchoringStats(distances=distances, mean=mean, sd=sd)


def homogenization_spread(embeddings: Sequence[np.ndarray]) -> float:
    """Mean pairwise L2 distance; the condition-level dispersion scalar."""
    if len(embeddings) < 2:
        raise InsufficientData("spread needs at least two embeddings")
    total = 0.0
    count = 0
    for i in range(len(embeddings)):
        for j in range(i + 1, len(embeddings)):
            total += float(np.linalg.norm(np.asarray(embeddings[i]) - np.asarray(embeddings[j])))
            count += 1
    return total / count


# --- stage usage -------------------------------------------------------------------


@dataclass(frozen=True)
class StageUsageReport:
    action_share: dict  # stage value -> % of actions
    adoption: dict  # stage value -> % of sessions using the stage
    revisit_rate: float  # % of sessions with a non-monotone stage sequence
    skip_rate: float  # % of sessions that skipped an earlier stage


def stage_usage_report(records: Sequence[ActionRecord]) -> StageUsageReport:
    """Stage shares, adoption, revisit and skip rates for stage-labeled logs."""
    if not records:
        raise EmptyInput("no stage-labeled records")
    if any(r.stage is None for r in records):
        raise ValueError("every record must carry a stage label")

    order = {stage: i for i, stage in enumerate(STAGE_ORDER)}
    total = len(records)
    share = {
        stage.value: 100.0 * sum(r.stage is stage for r in records) / total
        for stage in STAGE_ORDER
    }

    sessions = group_by_session(records)
    n_sessions = len(sessions)
    adoption = {
        stage.value: 100.0
        * sum(any(r.stage is stage for r in recs) for recs in sessions.values())
        / n_sessions
        for stage in STAGE_ORDER
    }

    revisits = 0
    skips = 0
    for recs in sessions.values():
        seq = [order[r.stage] for r in recs]
        if any(b < a for a, b in zip(seq, seq[1:])):
            revisits += 1
        used = {r.stage for r in recs}
        last_used = max(order[s] for s in used)
        if any(order[s] < last_used and s not in used for s in STAGE_ORDER):
            skips += 1

    return StageUsageReport(
        action_share=share,
        adoption=adoption,
        revisit_rate=100.0 * revisits / n_sessions,
        skip_rate=100.0 * skips / n_sessions,
    )


# --- output formats ----------------------------------------------------------------

_CSV_COLUMNS = (
    "session_id",
    "condition",
    "direction_changes",
    "breadth",
    "drift_pct",
    "pivot_pct",
    "construct_pct",
    "evaluate_pct",
    "agency_pct",
    "violation_pct",
    "revision_burden",
)


def metrics_rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    lines = [",".join(_CSV_COLUMNS)]
    for row in rows:
        cells = []
        for col in _CSV_COLUMNS:
            value = getattr(row, col)
            cells.append(repr(value) if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


#: (section, row label, metric field) in published-table order.
REPORT_ROWS = (
    ("Exploration & Anchoring", "Direction changes (# changes per session)", "direction_changes"),
    ("Exploration & Anchoring", "Exploration breadth (# iterations per branch)", "breadth"),
    ("Exploration & Anchoring", "Concept drift (% unintended drift actions)", "drift_pct"),
    ("Exploration & Anchoring", "Intentional pivots (% pivot actions)", "pivot_pct"),
    ("Control & Predictability", "Constructive engagement (% construct actions)", "construct_pct"),
    ("Control & Predictability", "Evaluation-heavy behavior (% evaluate actions)", "evaluate_pct"),
    ("Control & Predictability", "Behavioral agency (% user-driven actions)", "agency_pct"),
    ("Control & Predictability", "Revision burden (ratio of repairs to total actions)", "revision_burden"),
    ("Control & Predictability", "Unintended changes (% invariant violations)", "violation_pct"),
)


def format_cell(mean: float, sd: float) -> str:
    """mean(sd) with the sd expressed in units of the mean's last digit,
    e.g. 1.6(10) reads as 1.6 +/- 1.0."""
    return f"{mean:.1f}({round(sd * 10)})"


def format_report(summaries: Sequence[ConditionSummary]) -> str:
    """Text table mirroring the published layout, one column per condition."""
    if not summaries:
        raise EmptyInput("no condition summaries")
    conditions = [s.condition for s in summaries]
    label_width = max(len(label) for _, label, _ in REPORT_ROWS) + 2
    col_width = max(12, max(len(c) for c in conditions) + 2)

    lines = []
    header = "Metric".ljust(label_width) + "".join(c.rjust(col_width) for c in conditions)
    lines.append(header)
    lines.append("-" * len(header))
    current_section = None
    for section, label, metric in REPORT_ROWS:
        if section != current_section:
            lines.append(section)
            current_section = section
        cells = []
        for summary in summaries:
            mean, sd = summary.stats[metric]
            cells.append(format_cell(mean, sd).rjust(col_width))
        lines.append("  " + label.ljust(label_width - 2) + "".join(cells))
    lines.append("")
    lines.append(
        "Cells are mean(sd) over per-session rows; sd is sample (n-1), 0 for n = 1."
    )
    lines.append(
        "Values here are computed from the supplied logs; behavioral comparisons "
        "require human sessions and are not reproduced by this tool."
    )
    return "\n".join(lines) + "\n"


def format_stage_usage(usage: StageUsageReport, condition: str) -> str:
    """Per-stage share/adoption plus revisit and skip rates for one condition."""
    lines = [f"Stage usage ({condition})"]
    for stage in STAGE_ORDER:
        share = usage.action_share[stage.value]
        adoption = usage.adoption[stage.value]
        lines.append(
            f"  {stage.value:<12} {share:5.1f}% of actions, used by {adoption:5.1f}% of sessions"
        )
    lines.append(f"  Revisited earlier stages: {usage.revisit_rate:.1f}% of sessions")
    lines.append(f"  Skipped a stage:          {usage.skip_rate:.1f}% of sessions")
    return "\n".join(lines) + "\n"
