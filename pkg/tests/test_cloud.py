import socket
import time

import pytest

from iotecs.cloud import CloudConfig, CloudServer, ControlClient, ControlError
from iotecs.runtime.wire import PacketHeader, encode

MS = 1_000_000


def _packet(seq=0, ts=None, payload=b"xyz", node=0, edge=0):
    ts = time.time_ns() if ts is None else ts
    return encode(PacketHeader(node, edge, 0, 0, seq, ts, len(payload)), payload)


def _udp(timeout=2.0):
    s = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
    s.settimeout(timeout)
    return s


def _wait_for(pred, timeout=2.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if pred():
            return True
        time.sleep(0.01)
    return pred()


def test_udp_echo_is_verbatim(cloud):
    s = _udp()
    pkt = _packet(seq=5, node=1, edge=2)
    s.sendto(pkt, ("127.0.0.1", cloud.port))
    assert s.recvfrom(65535)[0] == pkt
    assert _wait_for(lambda: cloud.snapshot()["responses_sent"] == 1)
    snap = cloud.snapshot()
    assert (snap["packets_received"], snap["packets_processed"], snap["per_source"]) == (1, 1, {"1/2": 1})


def test_malformed_datagrams_are_counted_not_echoed(cloud):
    s = _udp(timeout=0.3)
    s.sendto(b"garbage", ("127.0.0.1", cloud.port))
    s.sendto(_packet()[:-1], ("127.0.0.1", cloud.port))
    with pytest.raises(socket.timeout):
        s.recvfrom(100)
    snap = cloud.snapshot()
    assert (snap["malformed"], snap["packets_received"]) == (2, 0)


def test_tcp_echo_across_split_writes(cloud_factory):
    cloud = cloud_factory(protocol="TCP")
    conn = socket.create_connection(("127.0.0.1", cloud.port), timeout=2)
    stream = b"".join(_packet(seq=i) for i in range(3))
    for i in range(0, len(stream), 7):
        conn.sendall(stream[i : i + 7])
        time.sleep(0.001)
    got = b""
    while len(got) < len(stream):
        got += conn.recv(4096)
    assert got == stream
    conn.close()


def test_compute_time_limits_throughput(cloud_factory):
    cloud = cloud_factory(compute_ns=20 * MS, workers=1)
    s = _udp()
    t0 = time.monotonic_ns()
    for i in range(5):
        s.sendto(_packet(seq=i), ("127.0.0.1", cloud.port))
    for _ in range(5):
        s.recvfrom(100)
    assert time.monotonic_ns() - t0 >= 100 * MS
    samples = cloud.snapshot(samples=True)["trans_samples_ns"]
    assert len(samples) == 5 and all(s >= 20 * MS for s in samples)
    assert samples == sorted(samples)


def test_tcp_workers_bound_concurrency(cloud_factory):
    cloud = cloud_factory(protocol="TCP", compute_ns=30 * MS, workers=2)
    conns = [socket.create_connection(("127.0.0.1", cloud.port), timeout=3) for _ in range(4)]
    t0 = time.monotonic_ns()
    for c in conns:
        c.sendall(_packet())
    for c in conns:
        assert len(c.recv(4096)) > 0
    # four jobs on two slots need two rounds
    assert time.monotonic_ns() - t0 >= 60 * MS
    for c in conns:
        c.close()


def test_control_reset_snapshot_stop(cloud):
    s = _udp()
    s.sendto(_packet(), ("127.0.0.1", cloud.port))
    s.recvfrom(100)
    with ControlClient("127.0.0.1", cloud.control_port) as ctl:
        assert ctl.snapshot()["packets_received"] == 1
        before = time.time_ns()
        epoch, offset = ctl.reset()
        assert before <= epoch <= time.time_ns()
        assert abs(offset) < 5 * MS
        snap = ctl.snapshot(samples=True)
        assert snap["packets_received"] == 0 and snap["trans_samples_ns"] == []
        assert "trans_samples_ns" not in ctl.snapshot()
        with pytest.raises(ControlError):
            ctl.request("FLY")
        ctl.stop()
    assert cloud.wait(3)


def test_bare_text_commands(cloud):
    reply, stop = cloud.handle_command("snapshot\n")
    assert reply["ok"] and reply["protocol"] == "UDP" and not stop
    reply, _ = cloud.handle_command("{not json")
    assert reply["ok"] is False
    assert cloud.handle_command("STOP")[1] is True


def test_reset_discards_queued_packets(cloud_factory):
    cloud = cloud_factory(compute_ns=50 * MS, workers=1)
    s = _udp()
    for i in range(10):
        s.sendto(_packet(seq=i), ("127.0.0.1", cloud.port))
    time.sleep(0.02)
    cloud.reset()
    time.sleep(0.15)
    snap = cloud.snapshot()
    # at most the packet in progress at reset time survives, and it is not counted
    assert snap["packets_received"] == 0 and snap["responses_sent"] == 0


def test_busy_port_raises(cloud):
    with pytest.raises(OSError):
        CloudServer(CloudConfig(port=cloud.port, host="127.0.0.1")).start()


def test_bad_configs():
    for kwargs in ({"protocol": "MQTT"}, {"workers": 0}, {"compute_ns": -1}, {"port": 5, "control_port": 5}):
        with pytest.raises(ValueError):
            CloudConfig(**kwargs)


def test_unreachable_control_channel():
    with pytest.raises(ControlError):
        ControlClient("127.0.0.1", 1, timeout=0.5).snapshot()


def test_stop_closes_open_control_sessions(cloud):
    ctl = ControlClient("127.0.0.1", cloud.control_port)
    ctl.snapshot()
    cloud.stop()
    with pytest.raises(ControlError):
        ctl.snapshot()
def test_time_command(cloud):
    reply, _ = cloud.handle_command("TIME")
    assert reply["ok"] and reply["now_ns"] > 0
    with ControlClient("127.0.0.1", cloud.control_port) as ctl:
        assert ctl.clock_offset() == 0
