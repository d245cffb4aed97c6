"""A simulation node: a group of edge devices run concurrently in one process.

Run as a program this is the per-node worker launched by the orchestrator::

    python -m iotecs.runtime.node --slice node_3.json --out node_3.json

It connects every edge, prints ``READY`` on stdout, then waits for one JSON
line on stdin carrying the shared run epoch and per-cloud clock offsets.
Passing ``--epoch-ns`` skips the handshake, which is how deploy descriptors
start nodes by hand.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from ..topology import NodeInstance, node_from_dict
from .edge import EdgeDevice, EdgeLedger
from .timing import StepClock

log = logging.getLogger(__name__)


@dataclass
class NodeLedger:
    node_id: int
    edges: dict[int, EdgeLedger] = field(default_factory=dict)
    max_late_ns: int = 0
    wall_duration_ns: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "node_id": self.node_id,
            "max_late_ns": self.max_late_ns,
            "wall_duration_ns": self.wall_duration_ns,
            "edges": {str(k): v.to_dict() for k, v in sorted(self.edges.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NodeLedger:
        return cls(
            node_id=d["node_id"],
            edges={int(k): EdgeLedger.from_dict(v) for k, v in d["edges"].items()},
            max_late_ns=d.get("max_late_ns", 0),
            wall_duration_ns=d.get("wall_duration_ns", 0),
        )

    def write(self, path: Path) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(self.to_dict()))
        os.replace(tmp, path)


def cloud_key(ip: str, port: int) -> str:
    return f"{ip}:{port}"


class SimulationNode:
    """Initialize all edges first, then run them in parallel from a shared epoch."""

    def __init__(
        self,
        node: NodeInstance,
        *,
        duration_ns: int,
        step_ns: int,
        step_count: int,
        seed: int = 0,
        drain_ns: int | None = None,
        clock_offsets: dict[str, int] | None = None,
    ) -> None:
        self.node = node
        self.duration_ns = duration_ns
        self.step_ns = step_ns
        self.step_count = step_count
        self.drain_ns = 2 * step_ns if drain_ns is None else drain_ns
        self.seed = seed
        self.devices = [
            EdgeDevice(edge, node.node_id, duration_ns, seed=seed, drain_ns=self.drain_ns) for edge in node.edges
        ]
        self.set_clock_offsets(clock_offsets or {})

    def set_clock_offsets(self, offsets: dict[str, int]) -> None:
        for dev in self.devices:
            dev.clock_offset_ns = offsets.get(cloud_key(dev.edge.cloud.ip, dev.edge.cloud.port), 0)

    def connect(self) -> int:
        """Open every edge's transport; returns how many failed."""
        return sum(0 if dev.connect() else 1 for dev in self.devices)

    def run(self, epoch_wall_ns: int) -> NodeLedger:
        started = time.monotonic_ns()
        clocks = [StepClock(epoch_wall_ns, self.step_ns, self.step_count) for _ in self.devices]
        threads = [
            threading.Thread(target=dev.run, args=(clock,), name=f"edge-{dev.edge.edge_id}", daemon=True)
            for dev, clock in zip(self.devices, clocks)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        return NodeLedger(
            node_id=self.node.node_id,
            edges={dev.edge.edge_id: dev.ledger for dev in self.devices},
            max_late_ns=max((c.max_late_ns for c in clocks), default=0),
            wall_duration_ns=time.monotonic_ns() - started,
        )


def run_simulation_node(
    node: NodeInstance,
    *,
    duration_ns: int,
    step_ns: int,
    step_count: int,
    epoch_wall_ns: int | None = None,
    seed: int = 0,
    drain_ns: int | None = None,
    clock_offsets: dict[str, int] | None = None,
    start_delay_ns: int = 50_000_000,
) -> NodeLedger:
    """Connect and run one node in the calling process."""
    sim = SimulationNode(
        node,
        duration_ns=duration_ns,
        step_ns=step_ns,
        step_count=step_count,
        seed=seed,
        drain_ns=drain_ns,
        clock_offsets=clock_offsets,
    )
    sim.connect()
    if epoch_wall_ns is None:
        epoch_wall_ns = time.time_ns() + start_delay_ns
    return sim.run(epoch_wall_ns)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="iotecs-node", description="Run one simulation node.")
    ap.add_argument("--slice", required=True, type=Path, help="node slice JSON written by the orchestrator")
    ap.add_argument("--out", required=True, type=Path, help="where to write the node ledger")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--drain-ns", type=int, default=None)
    ap.add_argument("--epoch-ns", type=int, default=None, help="start at this wall-clock time; skips the handshake")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr, format="%(name)s: %(message)s")

    spec = json.loads(args.slice.read_text())
    sim = SimulationNode(
        node_from_dict(spec["node"]),
        duration_ns=spec["duration_ns"],
        step_ns=spec["step_ns"],
        step_count=spec["step_count"],
        seed=args.seed,
        drain_ns=args.drain_ns,
    )
    failed = sim.connect()
    if args.epoch_ns is not None:
        epoch = args.epoch_ns
    else:
        print(json.dumps({"ready": True, "failed_edges": failed}), flush=True)
        line = sys.stdin.readline()
        if not line:
            return 3
        start = json.loads(line)
        epoch = start["epoch_ns"]
        sim.set_clock_offsets(start.get("clock_offsets", {}))
    ledger = sim.run(epoch)
    ledger.write(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
