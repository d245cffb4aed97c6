import json

import pytest

from helpers import single_edge_spec
from iotecs.cloud import ControlError
from iotecs.dsl import parse
from iotecs.orchestrator import RunOptions, cleanup, run_simulation
from iotecs.topology import expected_sends, resolve


def _options(tmp_path, cloud, **kwargs):
    return RunOptions(out_dir=tmp_path, control_ports={"C1": cloud.control_port}, **kwargs)


def test_lossless_loopback_run(cloud, tmp_path):
    topo = resolve(parse(single_edge_spec(port=cloud.port, speed=250, devices=20, edges=5, nodes=2)))
    assert sum(expected_sends(topo).values()) == 800
    report = run_simulation(topo, _options(tmp_path, cloud))
    (rep,) = report.per_repetition
    assert rep.valid and rep.expected == rep.actual == rep.responses == 800
    assert rep.sim_drop == rep.cloud_drop == rep.in_flight_discarded == 0
    assert rep.identity_holds()
    assert rep.trans_mode == "one-way" and rep.trans_samples == 800
    rep_dir = tmp_path / "rep_0"
    assert sorted(p.name for p in rep_dir.iterdir()) == ["cloud.json", "node_0.json", "node_1.json", "run.json"]
    cloud_json = json.loads((rep_dir / "cloud.json").read_text())
    assert cloud_json["C1"]["after"]["packets_received"] == 800
    run = json.loads((rep_dir / "run.json").read_text())
    assert run["config"]["node_count"] == 2 and run["config"]["platform_label"] == "Native"
    assert cleanup(rep_dir) == []


def test_repetitions_are_independent(cloud, tmp_path):
    topo = resolve(parse(single_edge_spec(port=cloud.port, devices=5, duration="1s", step="250ms")))
    report = run_simulation(topo, _options(tmp_path, cloud, repetitions=3))
    assert report.repetitions == 3 and report.ok
    assert [m.cloud_received for m in report.per_repetition] == [20, 20, 20]


def test_cleanup_is_idempotent(tmp_path):
    rep = tmp_path / "rep_0"
    (rep / "scratch").mkdir(parents=True)
    (rep / "scratch" / "node_0.slice.json").write_text("{}")
    (rep / "node_0.json.tmp").write_text("")
    assert len(cleanup(rep)) == 2
    assert cleanup(rep) == []


def test_crashing_node_is_retried_then_reported(cloud, tmp_path, caplog):
    topo = resolve(parse(single_edge_spec(port=cloud.port, devices=1, duration="500ms", step="500ms")))
    report = run_simulation(topo, _options(tmp_path, cloud, python="/bin/false"))
    (rep,) = report.per_repetition
    assert not rep.valid and "exited with code 1" in rep.failure
    assert report.failed_repetitions == 1 and not report.ok
    assert sum("attempt" in r.message for r in caplog.records) == 2
    assert not (tmp_path / "rep_0" / "scratch").exists()


def test_unreachable_cloud_aborts_before_spawning(tmp_path):
    topo = resolve(parse(single_edge_spec(port=1, devices=1)))
    with pytest.raises(ControlError):
        run_simulation(topo, RunOptions(out_dir=tmp_path))
    assert not list(tmp_path.glob("rep_*"))
