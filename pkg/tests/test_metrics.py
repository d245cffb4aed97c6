import pytest
from hypothesis import given
from hypothesis import strategies as st

from iotecs.metrics import ONE_WAY, RTT_HALF, RunLedger, aggregate, compute_metrics, failed_repetition
from iotecs.runtime.edge import EdgeLedger
from iotecs.runtime.node import NodeLedger


def _ledger(actual, received, responses, in_flight=0, expected_edges=1, samples=None, rtt=()):
    edge = EdgeLedger(0, 0, attempted_sends=actual, actual_sends=actual, responses_received=responses,
                      in_flight_discarded=in_flight, rtt_samples_ns=list(rtt))
    after = {"packets_received": received}
    if samples is not None:
        after["trans_samples_ns"] = samples
    return RunLedger("d", [NodeLedger(0, {0: edge})], {"C1": {"packets_received": 0}}, {"C1": after})


def test_lossless():
    m = compute_metrics(_ledger(800, 800, 800, samples=[10] * 800), {(0, 0): 800})
    assert (m.sim_drop, m.cloud_drop_in, m.cloud_drop_out, m.cloud_drop) == (0, 0, 0, 0)
    assert m.identity_holds() and m.trans_mode == ONE_WAY and m.trans_time_mean_ns == 10


def test_overloaded_cloud_magnitude():
    m = compute_metrics(_ledger(48000, 977, 977, samples=[]), {(0, 0): 48000})
    assert m.sim_drop == 0 and m.cloud_drop == 47023 and m.cloud_drop_in == 47023


def test_lost_echoes_are_outbound_drops():
    m = compute_metrics(_ledger(100, 100, 90), {(0, 0): 100})
    assert (m.cloud_drop_in, m.cloud_drop_out) == (0, 10)


def test_in_flight_is_separate_from_drops():
    m = compute_metrics(_ledger(100, 100, 90, in_flight=4), {(0, 0): 100})
    assert (m.cloud_drop_out, m.in_flight_discarded) == (6, 4)
    assert m.identity_holds()


@given(
    st.integers(0, 10_000).flatmap(
        lambda exp: st.tuples(st.just(exp), st.integers(0, exp)).flatmap(
            lambda t: st.tuples(st.just(t[0]), st.just(t[1]), st.integers(0, t[1])).flatmap(
                lambda u: st.tuples(*map(st.just, u), st.integers(0, u[2])).flatmap(
                    lambda v: st.tuples(*map(st.just, v), st.integers(0, v[2] - v[3]))
                )
            )
        )
    )
)
def test_accounting_identity(counts):
    expected, actual, received, responses, in_flight = counts
    m = compute_metrics(_ledger(actual, received, responses, in_flight), {(0, 0): expected})
    assert m.identity_holds()
    assert min(m.sim_drop, m.cloud_drop_in, m.cloud_drop_out) >= 0


def test_negative_samples_discarded_and_counted():
    m = compute_metrics(_ledger(4, 4, 4, samples=[5, -1, 7, -3]), {(0, 0): 4})
    assert (m.trans_samples, m.trans_discarded, m.trans_time_mean_ns) == (2, 2, 6)


def test_rtt_fallback_when_cloud_has_no_samples():
    m = compute_metrics(_ledger(2, 2, 2, rtt=[10, 30]), {(0, 0): 2})
    assert m.trans_mode == RTT_HALF and m.trans_time_mean_ns == 10
    forced = compute_metrics(_ledger(2, 2, 2, samples=[100, 100], rtt=[10, 30]), {(0, 0): 2}, trans_mode=RTT_HALF)
    assert forced.trans_time_mean_ns == 10


def test_percentiles():
    m = compute_metrics(_ledger(100, 100, 100, samples=list(range(1, 101))), {(0, 0): 100})
    assert m.trans_time_p50_ns == pytest.approx(50.5)
    assert m.trans_time_p99_ns == pytest.approx(99.01)


def test_aggregate_means_over_valid_repetitions():
    reps = [
        compute_metrics(_ledger(10, 10, 10, samples=[1]), {(0, 0): 12}),
        compute_metrics(_ledger(12, 8, 8, samples=[3]), {(0, 0): 12}),
        failed_repetition("node 0 exited with code 1"),
    ]
    report = aggregate(reps, {"node_count": 1}, pooled_trans_ns=[1, 3])
    assert (report.repetitions, report.failed_repetitions) == (2, 1)
    assert (report.sim_drop, report.cloud_drop, report.trans_time_mean_ns) == (1.0, 2.0, 2.0)
    assert report.trans_time_p50_ns == 2.0
    assert not report.ok
    assert len(report.to_dict()["per_repetition"]) == 3
