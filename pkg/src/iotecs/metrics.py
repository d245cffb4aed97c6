"""Drop and transmission-time accounting for one run and across repetitions.

Per repetition::

    sim_drop       = expected - actual
    cloud_drop_in  = actual - received_by_cloud
    cloud_drop_out = received_by_cloud - responses - in_flight_discarded
    cloud_drop     = cloud_drop_in + cloud_drop_out

so ``expected = actual + sim_drop`` and
``actual = responses + cloud_drop_in + cloud_drop_out + in_flight_discarded``
hold exactly by construction.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from statistics import fmean
from typing import Any, Iterable

import numpy as np

from .runtime.node import NodeLedger

ONE_WAY = "one-way"
RTT_HALF = "rtt/2"


@dataclass
class RunLedger:
    """Everything collected from one repetition."""

    topology_digest: str
    per_node: list[NodeLedger]
    cloud_stats_before: dict[str, dict[str, Any]]
    cloud_stats_after: dict[str, dict[str, Any]]
    epoch_offset_ns: dict[str, int] = field(default_factory=dict)
    wall_duration_ns: int = 0

    def edges(self):
        for node in self.per_node:
            yield from node.edges.values()


@dataclass
class RepetitionMetrics:
    expected: int
    actual: int
    sim_drop: int
    cloud_received: int
    responses: int
    cloud_drop_in: int
    cloud_drop_out: int
    in_flight_discarded: int
    cloud_drop: int
    trans_time_mean_ns: float | None
    trans_time_p50_ns: float | None
    trans_time_p95_ns: float | None
    trans_time_p99_ns: float | None
    trans_mode: str
    trans_samples: int
    trans_discarded: int
    step_budget_breaks: int = 0
    valid: bool = True
    failure: str | None = None

    def identity_holds(self) -> bool:
        return (
            self.expected == self.actual + self.sim_drop
            and self.actual
            == self.responses + self.cloud_drop_in + self.cloud_drop_out + self.in_flight_discarded
        )

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _counter(stats: dict[str, Any], key: str) -> int:
    return int(stats.get(key, 0))


def compute_metrics(
    ledger: RunLedger, oracle: dict[tuple[int, int], int], trans_mode: str = "auto"
) -> RepetitionMetrics:
    """Reduce a :class:`RunLedger` to drop counts and transmission-time statistics.

    *trans_mode* is ``"auto"`` (one-way when the cloud reported processing
    samples, else half the round trip), ``"one-way"`` or ``"rtt/2"``.
    """
    expected = sum(oracle.values())
    edges = list(ledger.edges())
    actual = sum(e.actual_sends for e in edges)
    responses = sum(e.responses_received for e in edges)
    in_flight = sum(e.in_flight_discarded for e in edges)
    received = 0
    for name, after in ledger.cloud_stats_after.items():
        before = ledger.cloud_stats_before.get(name, {})
        received += _counter(after, "packets_received") - _counter(before, "packets_received")

    cloud_samples: list[int] | None = None
    for after in ledger.cloud_stats_after.values():
        if "trans_samples_ns" in after:
            cloud_samples = (cloud_samples or []) + list(after["trans_samples_ns"])
    if trans_mode == "auto":
        trans_mode = ONE_WAY if cloud_samples is not None else RTT_HALF
    if trans_mode == ONE_WAY:
        raw = cloud_samples or []
    else:
        raw = [s // 2 for e in edges for s in e.rtt_samples_ns]
    samples = [s for s in raw if s >= 0]
    mean, p50, p95, p99 = summarize(samples)

    drop_in = actual - received
    drop_out = received - responses - in_flight
    return RepetitionMetrics(
        expected=expected,
        actual=actual,
        sim_drop=expected - actual,
        cloud_received=received,
        responses=responses,
        cloud_drop_in=drop_in,
        cloud_drop_out=drop_out,
        in_flight_discarded=in_flight,
        cloud_drop=drop_in + drop_out,
        trans_time_mean_ns=mean,
        trans_time_p50_ns=p50,
        trans_time_p95_ns=p95,
        trans_time_p99_ns=p99,
        trans_mode=trans_mode,
        trans_samples=len(samples),
        trans_discarded=len(raw) - len(samples),
        step_budget_breaks=sum(e.step_budget_breaks for e in edges),
    )


def summarize(samples: Iterable[int]) -> tuple[float | None, float | None, float | None, float | None]:
    arr = np.fromiter(samples, dtype=np.float64)
    if arr.size == 0:
        return None, None, None, None
    p50, p95, p99 = np.percentile(arr, [50, 95, 99])
    return float(arr.mean()), float(p50), float(p95), float(p99)


@dataclass
class RunReport:
    """Means over valid repetitions plus the per-repetition detail."""

    repetitions: int
    failed_repetitions: int
    expected: float | None
    sim_drop: float | None
    cloud_drop: float | None
    cloud_drop_in: float | None
    cloud_drop_out: float | None
    in_flight_discarded: float | None
    trans_time_mean_ns: float | None
    trans_time_p50_ns: float | None
    trans_time_p95_ns: float | None
    trans_time_p99_ns: float | None
    trans_mode: str | None
    per_repetition: list[RepetitionMetrics]
    config: dict[str, Any] = field(default_factory=dict)
    aborted: str | None = None

    @property
    def ok(self) -> bool:
        return self.failed_repetitions == 0 and self.aborted is None and self.repetitions > 0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["per_repetition"] = [m.to_dict() for m in self.per_repetition]
        return d


def aggregate(
    reps: list[RepetitionMetrics],
    config: dict[str, Any] | None = None,
    pooled_trans_ns: list[int] | None = None,
    aborted: str | None = None,
) -> RunReport:
    """Arithmetic means over valid repetitions; percentiles pooled when samples are given."""
    valid = [m for m in reps if m.valid]

    def mean_of(attr: str) -> float | None:
        values = [getattr(m, attr) for m in valid if getattr(m, attr) is not None]
        return fmean(values) if values else None

    if pooled_trans_ns:
        _, p50, p95, p99 = summarize(s for s in pooled_trans_ns if s >= 0)
    else:
        p50, p95, p99 = (mean_of("trans_time_p50_ns"), mean_of("trans_time_p95_ns"), mean_of("trans_time_p99_ns"))
    modes = {m.trans_mode for m in valid}
    return RunReport(
        repetitions=len(valid),
        failed_repetitions=len(reps) - len(valid),
        expected=mean_of("expected"),
        sim_drop=mean_of("sim_drop"),
        cloud_drop=mean_of("cloud_drop"),
        cloud_drop_in=mean_of("cloud_drop_in"),
        cloud_drop_out=mean_of("cloud_drop_out"),
        in_flight_discarded=mean_of("in_flight_discarded"),
        trans_time_mean_ns=mean_of("trans_time_mean_ns"),
        trans_time_p50_ns=p50,
        trans_time_p95_ns=p95,
        trans_time_p99_ns=p99,
        trans_mode=modes.pop() if len(modes) == 1 else ("mixed" if modes else None),
        per_repetition=list(reps),
        config=dict(config or {}),
        aborted=aborted,
    )


def failed_repetition(reason: str) -> RepetitionMetrics:
    return RepetitionMetrics(
        expected=0,
        actual=0,
        sim_drop=0,
        cloud_received=0,
        responses=0,
        cloud_drop_in=0,
        cloud_drop_out=0,
        in_flight_discarded=0,
        cloud_drop=0,
        trans_time_mean_ns=None,
        trans_time_p50_ns=None,
        trans_time_p95_ns=None,
        trans_time_p99_ns=None,
        trans_mode="none",
        trans_samples=0,
        trans_discarded=0,
        valid=False,
        failure=reason,
    )
