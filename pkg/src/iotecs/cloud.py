"""Baseline cloud application: receive a packet, compute, echo it back.

Data plane: the simulator's packet format over UDP or TCP. Every valid packet
is counted as received, held for ``compute_ns`` of busy CPU work, counted as
processed, echoed verbatim to its sender and counted as a response. At most
``workers`` packets are processed at once, so the service saturates at about
``workers / compute`` packets per second.

Control plane: newline-delimited JSON over TCP. Commands are ``RESET`` (zero
the counters, purge queued packets, report the server clock), ``SNAPSHOT``,
``TIME`` (server clock only) and ``STOP``. A command may be sent bare
(``SNAPSHOT``) or as an object (``{"cmd": "SNAPSHOT", "samples": true}``).
"""

from __future__ import annotations

import json
import logging
import select
import socket
import threading
import time
from collections import Counter
from dataclasses import dataclass
from typing import Any

from .runtime.timing import busy_compute
from .runtime.transport import _grow_rcvbuf
from .runtime.wire import HEADER_SIZE, MalformedPacket, StreamDecoder, check_datagram, peek_send_ts, peek_source

log = logging.getLogger(__name__)

DEFAULT_UDP_RCVBUF = 4 << 20
MAX_TRANS_SAMPLES = 2_000_000
_POLL_S = 0.2


@dataclass
class CloudConfig:
    protocol: str = "UDP"
    port: int = 0
    control_port: int = 0
    compute_ns: int = 0
    workers: int = 1
    host: str = "0.0.0.0"
    udp_rcvbuf: int | None = DEFAULT_UDP_RCVBUF

    def __post_init__(self) -> None:
        self.protocol = self.protocol.upper()
        if self.protocol not in ("UDP", "TCP"):
            raise ValueError(f"baseline cloud serves UDP or TCP, not {self.protocol}")
        if self.port and self.port == self.control_port:
            raise ValueError("data port and control port must differ")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.compute_ns < 0:
            raise ValueError("compute time must be non-negative")


class CloudStats:
    """Counters for one measurement window; reset by the control channel."""

    def __init__(self) -> None:
        self.lock = threading.Lock()
        self.generation = 0
        self.clear()

    def clear(self) -> None:
        self.packets_received = 0
        self.packets_processed = 0
        self.responses_sent = 0
        self.malformed = 0
        self.send_errors = 0
        self.per_source: Counter[tuple[int, int]] = Counter()
        self.trans_samples_ns: list[int] = []

    def as_dict(self, samples: bool = False) -> dict[str, Any]:
        with self.lock:
            out: dict[str, Any] = {
                "packets_received": self.packets_received,
                "packets_processed": self.packets_processed,
                "responses_sent": self.responses_sent,
                "malformed": self.malformed,
                "send_errors": self.send_errors,
                "per_source": {f"{n}/{e}": c for (n, e), c in sorted(self.per_source.items())},
                "trans_sample_count": len(self.trans_samples_ns),
            }
            if samples:
                out["trans_samples_ns"] = list(self.trans_samples_ns)
        return out


class CloudServer:
    def __init__(self, config: CloudConfig) -> None:
        self.config = config
        self.stats = CloudStats()
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []
        self._tcp_conns: set[socket.socket] = set()
        self._control_conns: set[socket.socket] = set()
        self._conn_lock = threading.Lock()
        self._slots = threading.BoundedSemaphore(config.workers)
        self.data_sock: socket.socket | None = None
        self.control_sock: socket.socket | None = None
        self.udp_rcvbuf: int | None = None

    # -- lifecycle ----------------------------------------------------------------

    def start(self) -> CloudServer:
        """Bind both ports and start serving. Raises OSError if a port is taken."""
        cfg = self.config
        if cfg.protocol == "UDP":
            self.data_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            if cfg.udp_rcvbuf:
                self.udp_rcvbuf = _grow_rcvbuf(self.data_sock, cfg.udp_rcvbuf)
            else:
                self.udp_rcvbuf = self.data_sock.getsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF)
        else:
            self.data_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            self.data_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.control_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.control_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self.data_sock.bind((cfg.host, cfg.port))
            self.control_sock.bind((cfg.host, cfg.control_port))
        except OSError:
            self.data_sock.close()
            self.control_sock.close()
            raise
        self.control_sock.listen(16)
        if cfg.protocol == "UDP":
            for k in range(cfg.workers):
                self._spawn(self._udp_worker, f"udp-worker-{k}")
        else:
            self.data_sock.listen(1024)
            self._spawn(self._tcp_acceptor, "tcp-accept")
        self._spawn(self._control_acceptor, "control")
        log.info("cloud serving %s on port %d, control on %d", cfg.protocol, self.port, self.control_port)
        return self

    @property
    def port(self) -> int:
        return self.data_sock.getsockname()[1]

    @property
    def control_port(self) -> int:
        return self.control_sock.getsockname()[1]

    def wait(self, timeout: float | None = None) -> bool:
        return self._stop.wait(timeout)

    def stop(self) -> None:
        if self._stop.is_set():
            return
        self._stop.set()
        for sock in (self.control_sock, self.data_sock):
            if sock is not None:
                _close(sock)  # shutdown wakes threads blocked in accept()
        with self._conn_lock:
            conns = list(self._tcp_conns) + list(self._control_conns)
        for conn in conns:
            _close(conn)
        current = threading.current_thread()
        for t in self._threads:
            if t is not current:
                t.join(timeout=2.0)

    def __enter__(self) -> CloudServer:
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()

    def _spawn(self, target, name: str, *args: Any) -> threading.Thread:
        t = threading.Thread(target=target, args=args, name=name, daemon=True)
        t.start()
        self._threads.append(t)
        return t

    # -- measurement window ------------------------------------------------------

    def reset(self) -> int:
        """Zero the counters and purge packets left over from an earlier window."""
        stats = self.stats
        with stats.lock:
            stats.generation += 1
            stats.clear()
        if self.config.protocol == "UDP":
            purged = 0
            try:
                while True:
                    self.data_sock.recv(65535, socket.MSG_DONTWAIT)
                    purged += 1
            except (BlockingIOError, OSError):
                pass
            if purged:
                log.info("reset purged %d queued datagrams", purged)
        else:
            with self._conn_lock:
                conns = list(self._tcp_conns)
                self._tcp_conns.clear()
            for conn in conns:
                _close(conn)
        return time.time_ns()

    def snapshot(self, samples: bool = False) -> dict[str, Any]:
        out = self.stats.as_dict(samples)
        out.update(
            protocol=self.config.protocol,
            compute_ns=self.config.compute_ns,
            workers=self.config.workers,
            udp_rcvbuf=self.udp_rcvbuf,
            now_ns=time.time_ns(),
        )
        return out

    # -- data plane --------------------------------------------------------------

    def _accept(self, data: bytes) -> int | None:
        """Count a packet as received; returns its window generation."""
        stats = self.stats
        with stats.lock:
            stats.packets_received += 1
            stats.per_source[peek_source(data)] += 1
            return stats.generation

    def _process(self, data: bytes, gen: int) -> bool:
        busy_compute(self.config.compute_ns)
        done = time.time_ns()
        stats = self.stats
        with stats.lock:
            if gen != stats.generation:
                return False
            stats.packets_processed += 1
            if len(stats.trans_samples_ns) < MAX_TRANS_SAMPLES:
                stats.trans_samples_ns.append(done - peek_send_ts(data))
        return True

    def _responded(self, gen: int, ok: bool) -> None:
        stats = self.stats
        with stats.lock:
            if gen != stats.generation:
                return
            if ok:
                stats.responses_sent += 1
            else:
                stats.send_errors += 1

    def _malformed(self) -> None:
        with self.stats.lock:
            self.stats.malformed += 1

    def _udp_worker(self) -> None:
        sock = self.data_sock
        poller = select.poll()
        poller.register(sock, select.POLLIN)
        while not self._stop.is_set():
            try:
                if not poller.poll(_POLL_S * 1000):
                    continue
                data, addr = sock.recvfrom(65535, socket.MSG_DONTWAIT)
            except BlockingIOError:
                continue  # another worker took it
            except OSError:
                if self._stop.is_set():
                    return
                continue
            try:
                check_datagram(data)
            except MalformedPacket:
                self._malformed()
                continue
            gen = self._accept(data)
            if not self._process(data, gen):
                continue
            try:
                sock.sendto(data, addr)
                ok = True
            except OSError:
                ok = False
            self._responded(gen, ok)

    def _tcp_acceptor(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self.data_sock.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._conn_lock:
                self._tcp_conns.add(conn)
            self._spawn(self._tcp_connection, "tcp-conn", conn)

    def _tcp_connection(self, conn: socket.socket) -> None:
        decoder = StreamDecoder()
        try:
            while not self._stop.is_set():
                chunk = conn.recv(1 << 16)
                if not chunk:
                    break
                try:
                    packets = decoder.feed(chunk)
                except MalformedPacket:
                    self._malformed()
                    break  # framing is lost; drop the connection
                for data in packets:
                    gen = self._accept(data)
                    with self._slots:
                        processed = self._process(data, gen)
                    if not processed:
                        continue
                    try:
                        conn.sendall(data)
                        ok = True
                    except OSError:
                        ok = False
                    self._responded(gen, ok)
                    if not ok:
                        return
        except OSError:
            pass
        finally:
            with self._conn_lock:
                self._tcp_conns.discard(conn)
            _close(conn)

    # -- control plane -------------------------------------------------------------

    def _control_acceptor(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self.control_sock.accept()
            except OSError:
                return
            self._spawn(self._control_session, "control-session", conn)

    def _control_session(self, conn: socket.socket) -> None:
        with self._conn_lock:
            self._control_conns.add(conn)
        try:
            with conn, conn.makefile("rwb") as f:
                for raw in f:
                    if self._stop.is_set():
                        return
                    reply, stop = self.handle_command(raw.decode("utf-8", "replace"))
                    f.write((json.dumps(reply) + "\n").encode())
                    f.flush()
                    if stop:
                        threading.Thread(target=self.stop, daemon=True).start()
                        return
        except (OSError, ValueError):
            pass
        finally:
            with self._conn_lock:
                self._control_conns.discard(conn)

    def handle_command(self, line: str) -> tuple[dict[str, Any], bool]:
        line = line.strip()
        args: dict[str, Any] = {}
        try:
            if line.startswith("{"):
                args = json.loads(line)
                cmd = str(args.get("cmd", "")).upper()
            else:
                cmd = line.upper()
        except json.JSONDecodeError as exc:
            return {"ok": False, "error": f"bad request: {exc}"}, False
        if cmd == "RESET":
            return {"ok": True, "epoch_ns": self.reset()}, False
        if cmd == "SNAPSHOT":
            return {"ok": True, **self.snapshot(bool(args.get("samples")))}, False
        if cmd == "TIME":
            return {"ok": True, "now_ns": time.time_ns()}, False
        if cmd == "STOP":
            return {"ok": True, "stopping": True}, True
        return {"ok": False, "error": f"unknown command {cmd or line!r}"}, False


def _close(sock: socket.socket) -> None:
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    sock.close()


class ControlError(ConnectionError):
    pass


class ControlClient:
    """Client side of the control channel."""

    def __init__(self, host: str, port: int, timeout: float = 5.0) -> None:
        self.host = host
        self.port = port
        self.timeout = timeout
        self._sock: socket.socket | None = None
        self._file = None

    def _connect(self) -> None:
        try:
            self._sock = socket.create_connection((self.host, self.port), timeout=self.timeout)
        except OSError as exc:
            raise ControlError(f"cloud control channel {self.host}:{self.port} unreachable: {exc}") from exc
        self._file = self._sock.makefile("rwb")

    def request(self, cmd: str, **kwargs: Any) -> dict[str, Any]:
        if self._sock is None:
            self._connect()
        try:
            self._file.write((json.dumps({"cmd": cmd, **kwargs}) + "\n").encode())
            self._file.flush()
            line = self._file.readline()
        except OSError as exc:
            self.close()
            raise ControlError(f"control request {cmd} failed: {exc}") from exc
        if not line:
            self.close()
            raise ControlError(f"control channel closed during {cmd}")
        reply = json.loads(line)
        if not reply.get("ok", False):
            raise ControlError(reply.get("error", f"{cmd} rejected"))
        return reply

    def reset(self, probes: int = 8) -> tuple[int, int]:
        """RESET the cloud; returns (cloud epoch_ns, estimated cloud-minus-local offset)."""
        epoch = self.request("RESET")["epoch_ns"]
        return epoch, self.clock_offset(probes)

    def clock_offset(self, probes: int = 8) -> int:
        """Cloud-minus-local wall clock offset from the fastest of *probes* round trips.

        An estimate within half that round trip of zero is indistinguishable
        from zero and reported as such.
        """
        best_rtt, best = None, 0
        for _ in range(probes):
            t0 = time.time_ns()
            now = self.request("TIME")["now_ns"]
            t1 = time.time_ns()
            if best_rtt is None or t1 - t0 < best_rtt:
                best_rtt, best = t1 - t0, now - (t0 + t1) // 2
        return 0 if abs(best) <= best_rtt // 2 else best

    def snapshot(self, samples: bool = False) -> dict[str, Any]:
        return self.request("SNAPSHOT", samples=samples)

    def stop(self) -> None:
        self.request("STOP")
        self.close()

    def close(self) -> None:
        if self._file is not None:
            try:
                self._file.close()
            except OSError:
                pass
        if self._sock is not None:
            self._sock.close()
        self._sock = None
        self._file = None

    def __enter__(self) -> ControlClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


__all__ = ["CloudConfig", "CloudServer", "CloudStats", "ControlClient", "ControlError", "HEADER_SIZE"]
