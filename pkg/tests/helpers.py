"""Builders for small simulation documents used across the tests."""

from __future__ import annotations

from pathlib import Path

SPECS = Path(__file__).resolve().parent.parent / "specs"
FIGURES = SPECS / "figures.iotecs"


def single_edge_spec(
    *,
    port: int = 47000,
    protocol: str = "UDP",
    speed: str | int = "MAX",
    devices: int = 10,
    period: int = 1,
    payload: str = "8B",
    duration: str = "2s",
    step: str = "500ms",
    edges: int = 1,
    nodes: int = 1,
    workload: str | None = None,
) -> str:
    work = f" workload: {workload}" if workload else ""
    return f"""
Cloud: C1 {{ IP: 127.0.0.1 port: {port} }}
Device: D1 {{ period: {period} payload: {payload} }}
EdgeDevice: E1 {{ protocol: {protocol} speed: {speed} cloud: C1 devices: {{D1[{devices}]}}{work} }}
Platform: P1 {{ type: Native }}
SimulationNode: SN1 {{ platform: P1 EdgeDevices: {{E1[{edges}]}} }}
Simulator: {{ duration: {duration} step: {step} simulationNodes: {{SN1[{nodes}]}} }}
"""

