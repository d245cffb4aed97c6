"""Render results trees as JSON or CSV, one row per configuration."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any

from .metrics import RepetitionMetrics, RunReport, aggregate

CSV_COLUMNS = (
    "platform_label",
    "node_count",
    "speed",
    "compute_ns",
    "sim_drop_mean",
    "cloud_drop_mean",
    "trans_time_ms_mean",
)


class ReportError(ValueError):
    pass


def load_run(run_dir: Path) -> RunReport:
    """Aggregate every ``rep_*/run.json`` under *run_dir*."""
    reps: list[RepetitionMetrics] = []
    pooled: list[int] = []
    config: dict[str, Any] | None = None
    digests = set()
    for path in sorted(run_dir.glob("rep_*/run.json"), key=lambda p: _rep_index(p.parent)):
        data = json.loads(path.read_text())
        reps.append(RepetitionMetrics(**data["metrics"]))
        pooled += data.get("trans_samples_ns", [])
        digests.add(data["config"]["topology_digest"])
        if config is None or data["metrics"]["valid"]:
            config = data["config"]
    if not reps:
        raise ReportError(f"no run ledgers under {run_dir}")
    if len(digests) > 1:
        raise ReportError(f"inconsistent runs in {run_dir}: {len(digests)} different topologies")
    return aggregate(reps, config, pooled)


def _rep_index(rep_dir: Path) -> int:
    try:
        return int(rep_dir.name.split("_", 1)[1])
    except (IndexError, ValueError):
        return -1


def find_runs(results_dir: Path) -> list[Path]:
    """Directories holding ``rep_<k>/run.json``, *results_dir* itself included."""
    return sorted({p.parent.parent for p in Path(results_dir).rglob("rep_*/run.json")})


def collect(results_dir: Path) -> list[RunReport]:
    runs = find_runs(results_dir)
    if not runs:
        raise ReportError(f"no run ledgers found under {results_dir}")
    return [load_run(r) for r in runs]


def csv_row(report: RunReport) -> dict[str, Any]:
    cfg = report.config
    trans = report.trans_time_mean_ns
    return {
        "platform_label": cfg.get("platform_label"),
        "node_count": cfg.get("node_count"),
        "speed": cfg.get("speed"),
        "compute_ns": cfg.get("compute_ns"),
        "sim_drop_mean": report.sim_drop,
        "cloud_drop_mean": report.cloud_drop,
        "trans_time_ms_mean": None if trans is None else round(trans / 1e6, 6),
    }


def render(reports: list[RunReport], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in reports:
            writer.writerow(csv_row(r))
        return buf.getvalue()
    raise ReportError(f"unknown report format {fmt!r}")


def report(results_dir: Path, fmt: str = "csv") -> str:
    return render(collect(Path(results_dir)), fmt)


def write_reports(run_dir: Path, run_report: RunReport) -> tuple[Path, Path]:
    """Write ``report.json`` and ``report.csv`` for one run directory."""
    run_dir = Path(run_dir)
    json_path = run_dir / "report.json"
    csv_path = run_dir / "report.csv"
    json_path.write_text(render([run_report], "json"))
    csv_path.write_text(render([run_report], "csv"))
    return json_path, csv_path
