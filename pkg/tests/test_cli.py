import csv
import json
import socket

import pytest

from helpers import FIGURES, single_edge_spec
from iotecs.cli import main


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_validate_reference(capsys):
    code, out, _ = _run(capsys, "validate", FIGURES)
    summary = json.loads(out)
    assert code == 0 and summary["nodes"] == 6 and summary["edges"] == 80


def test_validate_dangling_reference(tmp_path, capsys):
    spec = tmp_path / "bad.iotecs"
    spec.write_text(FIGURES.read_text().replace("cloud:C2", "cloud:C9"))
    code, out, err = _run(capsys, "validate", spec)
    assert code == 1 and json.loads(out)["ok"] is False
    assert f"{spec}:43:2: error:" in err and "C9" in err


def test_mqtt_warns_unless_strict(tmp_path, capsys):
    spec = tmp_path / "mqtt.iotecs"
    spec.write_text(single_edge_spec(protocol="MQTT"))
    code, _, err = _run(capsys, "validate", spec)
    assert code == 0 and "warning: EdgeDevice E1: MQTT" in err
    code, _, err = _run(capsys, "validate", "--strict", spec)
    assert code == 1
    code, _, err = _run(capsys, "run", spec, "--out", tmp_path / "out")
    assert code == 1 and "error: EdgeDevice E1: MQTT" in err


def test_strict_rejects_warnings(tmp_path, capsys):
    spec = tmp_path / "slow.iotecs"
    spec.write_text(single_edge_spec(speed=10, devices=100))
    assert _run(capsys, "validate", spec)[0] == 0
    assert _run(capsys, "validate", "--strict", spec)[0] == 1


def test_recommend_step(capsys):
    assert _run(capsys, "recommend-step", "4s", "6s")[:2] == (0, "2s\n")
    assert _run(capsys, "recommend-step", "1500ms", "1s")[1] == "500ms\n"
    assert _run(capsys, "recommend-step")[0] == 1
    assert _run(capsys, "recommend-step", "4x")[0] == 1


def test_expected(tmp_path, capsys):
    spec = tmp_path / "s.iotecs"
    spec.write_text(single_edge_spec(devices=3, edges=2, period=3, duration="2s", step="250ms"))
    code, out, _ = _run(capsys, "expected", spec)
    assert code == 0 and json.loads(out) == {"0/0": 9, "0/1": 9}


def test_cloud_busy_port(capsys):
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("0.0.0.0", 0))
        code, _, err = _run(capsys, "cloud", "--port", s.getsockname()[1])
    assert code == 2 and "cannot bind" in err


def test_cloud_bad_compute(capsys):
    assert _run(capsys, "cloud", "--compute", "5 parsecs")[0] == 1


def test_run_unreachable_cloud(tmp_path, capsys):
    spec = tmp_path / "s.iotecs"
    spec.write_text(single_edge_spec(port=1))
    code, _, err = _run(capsys, "run", spec, "--out", tmp_path / "out")
    assert code == 2 and "unreachable" in err and "--auto-cloud" in err


def test_run_auto_cloud_writes_report(tmp_path, capsys):
    spec = tmp_path / "s.iotecs"
    spec.write_text(single_edge_spec(devices=4, duration="500ms", step="250ms"))
    out_dir = tmp_path / "out"
    code, out, _ = _run(capsys, "run", spec, "--auto-cloud", "--reps", 2, "--seed", 42, "--out", out_dir)
    summary = json.loads(out)
    assert code == 0 and summary["repetitions"] == 2 and summary["sim_drop_mean"] == 0
    row = next(csv.DictReader((out_dir / "report.csv").open()))
    assert (row["platform_label"], row["node_count"], row["speed"], row["compute_ns"]) == ("Native", "1", "MAX", "0")
    code, out, _ = _run(capsys, "report", out_dir, "--format", "json")
    assert code == 0 and len(json.loads(out)[0]["per_repetition"]) == 2


def test_report_empty(tmp_path, capsys):
    assert _run(capsys, "report", tmp_path)[0] == 2


def test_deploy(tmp_path, capsys):
    code, out, _ = _run(capsys, "deploy", FIGURES, "--out", tmp_path)
    assert code == 0 and str(tmp_path / "node_5.docker.json") in out.split()


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run"], ["run", "x", "--reps", "0"]])
def test_usage_errors(argv, capsys):
    assert _run(capsys, *argv)[0] == 1


def test_missing_file(tmp_path, capsys):
    code, _, err = _run(capsys, "validate", tmp_path / "nope.iotecs")
    assert code == 1 and "cannot read" in err
