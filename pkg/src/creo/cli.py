"""Command-line entry points: serve, render, analyze."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .metrics import (
    aggregate_condition,
    format_report,
    format_stage_usage,
    group_by_session,
    metrics_rows_to_csv,
    parse_action_log,
    session_metrics,
    stage_usage_report,
)


@click.group()
def main():
    """Staged image ideation engine."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path), default=None)
def serve(config_path):
    """Run the REST service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig.from_file(config_path)
    app = create_app(config=config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")


@main.command()
@click.argument("events", type=click.Path(exists=True, path_type=Path))
@click.option("--at", "at_event", type=int, default=None, help="Event id to render (default: last).")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def render(events, at_event, out_path):
    """Replay an event log and write the composed preview PNG."""
    from .engine import snapshot_at
    from .model import Session
    from .pipeline import compose_preview
    from .raster import raster_to_png
    from .store import load_events
    from .engine import decode_raster

    event_list = load_events(events.read_text(encoding="utf-8"))
    if not event_list:
        raise click.ClickException("event log is empty")
    root = next(e for e in event_list if e.parent_id is None)
    canvas = root.payload["canvas"]
    source = decode_raster(root.payload["source"]) if root.payload["mode"] == "image_first" else None
    session = Session(
        session_id="render",
        entry_mode=root.payload["mode"],
        prompt=root.payload.get("prompt"),
        source_image=source,
        width=canvas["width"],
        height=canvas["height"],
        events={e.event_id: e for e in event_list},
        heads={"main": max(e.event_id for e in event_list)},
    )
    target = at_event if at_event is not None else max(session.events)
    state = snapshot_at(session, target)
    out_path.write_bytes(raster_to_png(compose_preview(state)))
    click.echo(f"wrote {out_path} (event {target})")


@main.command()
@click.argument("logs", nargs=-1, required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--csv", "csv_path", type=click.Path(path_type=Path), default=None,
              help="MetricsRow CSV path (default: report path with .csv suffix).")
def analyze(logs, out_path, csv_path):
    """Compute per-session metrics and condition summaries from action logs."""
    records = []
    for path in logs:
        with open(path, "r", encoding="utf-8") as handle:
            records.extend(parse_action_log(handle))

    rows = [session_metrics(recs) for recs in group_by_session(records).values()]
    rows.sort(key=lambda r: (r.condition, r.session_id))

    by_condition: dict[str, list] = {}
    for row in rows:
        by_condition.setdefault(row.condition, []).append(row)
    summaries = [aggregate_condition(by_condition[c]) for c in sorted(by_condition)]

    report = format_report(summaries)
    for condition in sorted(by_condition):
        labeled = [r for r in records if r.condition == condition and r.stage is not None]
        if labeled:
            report += "\n" + format_stage_usage(stage_usage_report(labeled), condition)

    csv_target = csv_path or out_path.with_suffix(".csv")
    csv_target.write_text(metrics_rows_to_csv(rows), encoding="utf-8")
    out_path.write_text(report, encoding="utf-8")
    click.echo(f"wrote {out_path} and {csv_target} ({len(rows)} sessions)")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
