"""Run a resolved topology end to end: one OS process per simulation node.

Per repetition ``k`` the results land in ``<out>/rep_<k>/``::

    node_<id>.json   node ledger written by the node process
    cloud.json       cloud counters before and after the window, clock offsets
    run.json         repetition metrics plus the configuration they belong to

Node slices, logs and other scratch files live in ``rep_<k>/scratch`` and are
removed when the repetition ends.
"""

from __future__ import annotations

import json
import logging
import os
import select
import shutil
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .cloud import ControlClient, ControlError
from .metrics import RunLedger, RunReport, aggregate, compute_metrics, failed_repetition
from .runtime.node import NodeLedger, cloud_key
from .topology import ResolvedTopology, expected_sends, node_to_dict

log = logging.getLogger(__name__)

CONTROL_PORT_OFFSET = 1


class RunError(RuntimeError):
    """The run cannot proceed (cloud control unreachable, nodes cannot start)."""


@dataclass
class RunOptions:
    out_dir: Path
    repetitions: int = 1
    seed: int = 0
    drain_ns: int | None = None  # default: two steps
    trans_mode: str = "auto"
    control_ports: dict[str, int] = field(default_factory=dict)  # cloud name -> control port
    start_lead_ns: int = 300_000_000
    ready_timeout_s: float = 30.0
    grace_s: float = 10.0
    retry_failed: bool = True
    python: str = sys.executable

    def drain(self, topo: ResolvedTopology) -> int:
        return 2 * topo.step_ns if self.drain_ns is None else self.drain_ns


@dataclass
class _Cloud:
    name: str
    key: str
    control: ControlClient


def _clouds(topo: ResolvedTopology, options: RunOptions) -> list[_Cloud]:
    """Clouds actually referenced by some edge, one per control endpoint."""
    seen: dict[tuple[str, int], _Cloud] = {}
    out = []
    for _, edge in topo.edges():
        c = edge.cloud
        ctrl = options.control_ports.get(c.name, c.port + CONTROL_PORT_OFFSET)
        if (c.ip, ctrl) in seen:
            continue
        cloud = _Cloud(c.name, cloud_key(c.ip, c.port), ControlClient(c.ip, ctrl))
        seen[(c.ip, ctrl)] = cloud
        out.append(cloud)
    return out


def run_config(topo: ResolvedTopology, clouds_after: dict[str, dict[str, Any]] | None = None) -> dict[str, Any]:
    """Row labels for reports: platform label, node count, speed, cloud compute time."""
    labels = sorted({n.platform.label for n in topo.nodes})
    speeds = sorted({str(e.speed) for _, e in topo.edges()})
    computes = sorted({int(s.get("compute_ns", 0)) for s in (clouds_after or {}).values()})
    return {
        "topology_digest": topo.digest(),
        "platform_label": labels[0] if len(labels) == 1 else "+".join(labels),
        "node_count": len(topo.nodes),
        "edge_count": topo.edge_count,
        "device_count": topo.device_count,
        "speed": speeds[0] if len(speeds) == 1 else "+".join(speeds),
        "compute_ns": computes[0] if len(computes) == 1 else (computes or [None])[-1],
        "step_ns": topo.step_ns,
        "duration_ns": topo.duration_ns,
    }


def cleanup(rep_dir: Path) -> list[Path]:
    """Remove scratch files of one repetition; returns what was removed."""
    removed: list[Path] = []
    scratch = rep_dir / "scratch"
    if scratch.exists():
        shutil.rmtree(scratch)
        removed.append(scratch)
    for tmp in rep_dir.glob("*.tmp"):
        tmp.unlink()
        removed.append(tmp)
    return removed


class _NodeProcs:
    def __init__(self) -> None:
        self.procs: dict[int, subprocess.Popen] = {}
        self.logs: list[Any] = []

    def kill_all(self) -> list[int]:
        stragglers = [nid for nid, p in self.procs.items() if p.poll() is None]
        for nid in stragglers:
            self.procs[nid].terminate()
        deadline = time.monotonic() + 2.0
        for nid in stragglers:
            try:
                self.procs[nid].wait(max(0.0, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                self.procs[nid].kill()
                self.procs[nid].wait()
        for p in self.procs.values():
            for stream in (p.stdin, p.stdout):
                if stream is not None:
                    try:
                        stream.close()
                    except OSError:
                        pass
        for f in self.logs:
            f.close()
        return stragglers


def _await_ready(procs: dict[int, subprocess.Popen], timeout_s: float) -> dict[int, dict[str, Any]]:
    """Collect the READY line of every node; raises RunError on exit or timeout."""
    ready: dict[int, dict[str, Any]] = {}
    by_fd = {p.stdout.fileno(): nid for nid, p in procs.items()}
    poller = select.poll()
    for fd in by_fd:
        poller.register(fd, select.POLLIN | select.POLLHUP)
    deadline = time.monotonic() + timeout_s
    while len(ready) < len(procs):
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            missing = sorted(set(procs) - set(ready))
            raise RunError(f"node(s) {missing} did not report ready within {timeout_s:.0f}s")
        for fd, _ in poller.poll(remaining * 1000):
            nid = by_fd[fd]
            line = procs[nid].stdout.readline()
            poller.unregister(fd)
            if not line:
                code = procs[nid].wait()
                raise RunError(f"node {nid} exited with code {code} before starting")
            ready[nid] = json.loads(line)
    return ready


def _run_repetition(
    topo: ResolvedTopology, options: RunOptions, clouds: list[_Cloud], rep_dir: Path, seed: int
) -> tuple[RunLedger, list[str]]:
    """One repetition. Returns the ledger and a list of node problems (empty when clean)."""
    drain_ns = options.drain(topo)
    scratch = rep_dir / "scratch"
    scratch.mkdir(parents=True, exist_ok=True)
    for f in rep_dir.glob("node_*.json"):
        f.unlink()

    offsets: dict[str, int] = {}
    epochs: dict[str, int] = {}
    before: dict[str, dict[str, Any]] = {}
    for c in clouds:
        epochs[c.name], offsets[c.key] = c.control.reset()
        before[c.name] = c.control.snapshot()

    procs = _NodeProcs()
    problems: list[str] = []
    try:
        for node in topo.nodes:
            slice_path = scratch / f"node_{node.node_id}.slice.json"
            slice_path.write_text(
                json.dumps(
                    {
                        "node": node_to_dict(node),
                        "duration_ns": topo.duration_ns,
                        "step_ns": topo.step_ns,
                        "step_count": topo.step_count,
                    }
                )
            )
            log_file = open(scratch / f"node_{node.node_id}.log", "wb")
            procs.logs.append(log_file)
            cmd = [
                options.python, "-m", "iotecs.runtime.node",
                "--slice", str(slice_path),
                "--out", str(rep_dir / f"node_{node.node_id}.json"),
                "--seed", str(seed),
                "--drain-ns", str(drain_ns),
            ]
            procs.procs[node.node_id] = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=log_file, text=True, env=_child_env()
            )
        ready = _await_ready(procs.procs, options.ready_timeout_s)
        failed_edges = sum(r.get("failed_edges", 0) for r in ready.values())
        if failed_edges:
            problems.append(f"{failed_edges} edge(s) could not connect to their cloud")

        epoch = time.time_ns() + options.start_lead_ns
        start = json.dumps({"epoch_ns": epoch, "clock_offsets": offsets}) + "\n"
        for p in procs.procs.values():
            p.stdin.write(start)
            p.stdin.flush()

        end = epoch + topo.duration_ns + drain_ns
        time.sleep(max(0.0, (end - time.time_ns()) / 1e9))
        deadline = time.monotonic() + options.grace_s
        for p in procs.procs.values():
            try:
                p.wait(max(0.0, deadline - time.monotonic()))
            except subprocess.TimeoutExpired:
                pass
    finally:
        stragglers = procs.kill_all()
    for nid in stragglers:
        problems.append(f"node {nid} still running after the drain window; terminated")
    wall = time.time_ns() - epoch

    after = {c.name: c.control.snapshot(samples=True) for c in clouds}
    per_node: list[NodeLedger] = []
    for node in topo.nodes:
        code = procs.procs[node.node_id].returncode
        path = rep_dir / f"node_{node.node_id}.json"
        if code != 0 or not path.exists():
            tail = _tail(scratch / f"node_{node.node_id}.log")
            problems.append(f"node {node.node_id} exited with code {code}" + (f": {tail}" if tail else ""))
            continue
        per_node.append(NodeLedger.from_dict(json.loads(path.read_text())))

    (rep_dir / "cloud.json").write_text(
        json.dumps(
            {
                c.name: {"epoch_ns": epochs[c.name], "offset_ns": offsets[c.key], "before": before[c.name], "after": after[c.name]}
                for c in clouds
            }
        )
    )
    ledger = RunLedger(
        topology_digest=topo.digest(),
        per_node=per_node,
        cloud_stats_before=before,
        cloud_stats_after=after,
        epoch_offset_ns=offsets,
        wall_duration_ns=wall,
    )
    return ledger, problems


def _child_env() -> dict[str, str]:
    # Make the node processes import this very package even when it is not installed.
    env = dict(os.environ)
    src = str(Path(__file__).resolve().parent.parent)
    env["PYTHONPATH"] = src + (os.pathsep + env["PYTHONPATH"] if env.get("PYTHONPATH") else "")
    return env


def _tail(path: Path, lines: int = 3) -> str:
    try:
        text = path.read_text(errors="replace").strip().splitlines()
    except OSError:
        return ""
    return " | ".join(text[-lines:])


def _write_run(rep_dir: Path, config: dict[str, Any], metrics, problems: list[str], samples: list[int]) -> None:
    payload = {"config": config, "metrics": metrics.to_dict(), "problems": problems, "trans_samples_ns": samples}
    tmp = rep_dir / "run.json.tmp"
    tmp.write_text(json.dumps(payload))
    os.replace(tmp, rep_dir / "run.json")


def run_simulation(topo: ResolvedTopology, options: RunOptions) -> RunReport:
    """Run every repetition and aggregate. Raises :class:`ControlError` if a cloud is unreachable up front."""
    out = Path(options.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    oracle = expected_sends(topo)
    clouds = _clouds(topo, options)
    for c in clouds:
        c.control.request("SNAPSHOT")  # fail fast before any process is spawned

    reps = []
    pooled: list[int] = []
    config = run_config(topo)
    aborted = None
    try:
        for k in range(options.repetitions):
            rep_dir = out / f"rep_{k}"
            rep_dir.mkdir(parents=True, exist_ok=True)
            attempts = 2 if options.retry_failed else 1
            for attempt in range(attempts):
                try:
                    ledger, problems = _run_repetition(topo, options, clouds, rep_dir, options.seed + k)
                except ControlError as exc:
                    ledger, problems = None, [f"cloud control: {exc}"]
                except RunError as exc:
                    ledger, problems = None, [str(exc)]
                finally:
                    cleanup(rep_dir)
                if ledger is not None and not problems:
                    break
                log.warning("repetition %d attempt %d failed: %s", k, attempt + 1, "; ".join(problems))
            if ledger is not None and not problems:
                config = run_config(topo, ledger.cloud_stats_after)
                metrics = compute_metrics(ledger, oracle, options.trans_mode)
                samples = _samples(ledger)
            else:
                metrics = failed_repetition("; ".join(problems))
                samples = []
                if ledger is None and any(p.startswith("cloud control") for p in problems):
                    aborted = problems[0]
            _write_run(rep_dir, config, metrics, problems, samples)
            reps.append(metrics)
            pooled += samples
            if aborted:
                break
    finally:
        for c in clouds:
            c.control.close()
    report = aggregate(reps, config, pooled, aborted)
    return report


def _samples(ledger: RunLedger) -> list[int]:
    out: list[int] = []
    for stats in ledger.cloud_stats_after.values():
        out += stats.get("trans_samples_ns", [])
    if not out:
        out = [s // 2 for e in ledger.edges() for s in e.rtt_samples_ns]
    return out
