"""One simulated edge device: concurrent send, receive and compute activities.

The send activity walks the run step by step. At step ``i`` every owned device
with ``i % period == 0`` contributes one packet, in declaration order. With a
finite speed consecutive sends are spaced ``step / speed`` apart; the spacing
is anchored to the first send of the step so sleep overshoot does not pile up.
Once the step's time is used up the remaining packets of that step are
abandoned and show up as ``attempted - actual``.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Any

from ..dsl.ast import MAX
from ..topology import EdgeInstance
from .payload import make_payload, payload_rng
from .timing import StepClock, busy_compute, sleep_until
from .transport import TcpTransport, TransportError, UdpTransport, open_transport
from .wire import HEADER, HEADER_SIZE, MAGIC, VERSION, MalformedPacket, PacketHeader

log = logging.getLogger(__name__)

_RECV_POLL_S = 0.05


@dataclass
class EdgeLedger:
    node_id: int
    edge_id: int
    attempted_sends: int = 0
    actual_sends: int = 0
    responses_received: int = 0
    in_flight_discarded: int = 0
    step_budget_breaks: int = 0
    duplicates: int = 0
    unexpected: int = 0
    send_errors: int = 0
    rtt_samples_ns: list[int] = field(default_factory=list)
    gap_total_ns: int = 0
    gap_count: int = 0
    compute_ns: int = 0
    failure: str | None = None

    @property
    def mean_gap_ns(self) -> float | None:
        return self.gap_total_ns / self.gap_count if self.gap_count else None

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EdgeLedger:
        return cls(**d)


class EdgeDevice:
    """Runs one :class:`EdgeInstance` against its cloud for a whole run."""

    def __init__(
        self,
        edge: EdgeInstance,
        node_id: int,
        duration_ns: int,
        *,
        seed: int = 0,
        drain_ns: int = 0,
        clock_offset_ns: int = 0,
        transport: UdpTransport | TcpTransport | None = None,
    ) -> None:
        self.edge = edge
        self.node_id = node_id
        self.duration_ns = duration_ns
        self.drain_ns = drain_ns
        self.clock_offset_ns = clock_offset_ns
        self.ledger = EdgeLedger(node_id, edge.edge_id)
        self.payloads = [make_payload(d, payload_rng(seed, node_id, edge.edge_id, d.device_id)) for d in edge.devices]
        self.transport = transport
        self._sent_at: dict[int, int] = {}
        self._seen: set[int] = set()
        self._lock = threading.Lock()
        self._send_done = threading.Event()

    def connect(self) -> bool:
        """Set up the transport (TCP: establish the connection). False on failure."""
        if self.transport is not None:
            return True
        try:
            self.transport = open_transport(self.edge.protocol, self.edge.cloud.ip, self.edge.cloud.port)
        except OSError as exc:
            self.ledger.failure = str(exc)
            log.warning("edge %d: %s", self.edge.edge_id, exc)
            return False
        return True

    # -- activities -------------------------------------------------------------

    def run(self, clock: StepClock) -> EdgeLedger:
        """Run all three activities until the run (plus drain window) ends."""
        if self.transport is None and self.ledger.failure is None:
            self.connect()
        if self.transport is None:
            self._abandon_from(0, clock.step_count)
            return self.ledger
        receiver = threading.Thread(target=self.receive, args=(clock,), daemon=True)
        receiver.start()
        computer = None
        if self.edge.workload_ns > 0:
            computer = threading.Thread(target=self.compute, args=(clock,), daemon=True)
            computer.start()
        try:
            self.send(clock)
        finally:
            self._send_done.set()
        receiver.join()
        if computer is not None:
            computer.join()
        self.transport.close()
        return self.ledger

    def send(self, clock: StepClock) -> None:
        edge = self.edge
        ledger = self.ledger
        devices = edge.devices
        step_ns = clock.step_ns
        gap_ns = 0 if edge.speed == MAX else step_ns // edge.speed
        transport = self.transport
        pack = HEADER.pack
        seq = 0
        for i in range(clock.step_count):
            clock.wait_for_step(i)
            start = time.monotonic_ns()
            step_end = start + step_ns
            due = [j for j, d in enumerate(devices) if i % d.period_steps == 0]
            ledger.attempted_sends += len(due)
            first = last = 0
            sent_this_step = 0
            for k, j in enumerate(due):
                if k:
                    if gap_ns:
                        target = first + k * gap_ns
                        if target >= step_end:
                            break
                        sleep_until(target)
                    if time.monotonic_ns() - start >= step_ns:
                        break
                payload = self.payloads[j]
                now = time.monotonic_ns()
                data = pack(
                    MAGIC,
                    VERSION,
                    self.node_id,
                    edge.edge_id,
                    devices[j].device_id,
                    i,
                    seq,
                    clock.wall_from_mono(now) + self.clock_offset_ns,
                    len(payload),
                ) + payload
                self._sent_at[seq] = now
                try:
                    transport.send(data)
                except OSError as exc:
                    del self._sent_at[seq]
                    ledger.send_errors += 1
                    if isinstance(transport, TcpTransport):
                        ledger.failure = f"send failed at step {i}: {exc}"
                        self._abandon_from(i + 1, clock.step_count)
                        return
                    continue
                seq += 1
                ledger.actual_sends += 1
                if sent_this_step == 0:
                    first = now
                sent_this_step += 1
                last = now
            if sent_this_step < len(due):
                ledger.step_budget_breaks += 1
            if sent_this_step > 1:
                ledger.gap_total_ns += last - first
                ledger.gap_count += sent_this_step - 1

    def _abandon_from(self, step: int, step_count: int) -> None:
        """Count every packet due in steps [step, step_count) as attempted, not sent."""
        for i in range(step, step_count):
            self.ledger.attempted_sends += sum(1 for d in self.edge.devices if i % d.period_steps == 0)

    def receive(self, clock: StepClock) -> None:
        deadline = clock.epoch_mono_ns + self.duration_ns + self.drain_ns
        transport = self.transport
        while True:
            remaining = deadline - time.monotonic_ns()
            if remaining <= 0:
                break
            packets = transport.recv(min(_RECV_POLL_S, remaining / 1e9))
            if packets:
                now = time.monotonic_ns()
                for data in packets:
                    self._on_response(data, now, late=False)
        # Anything still queued locally arrived after the window closed.
        for data in transport.recv(0):
            self._on_response(data, time.monotonic_ns(), late=True)

    def _on_response(self, data: bytes, now: int, late: bool) -> None:
        ledger = self.ledger
        try:
            header = PacketHeader.unpack(data)
        except MalformedPacket:
            ledger.unexpected += 1
            return
        if header.node_id != self.node_id or header.edge_id != self.edge.edge_id or len(data) < HEADER_SIZE:
            ledger.unexpected += 1
            return
        seq = header.seq
        sent = self._sent_at.get(seq)
        if sent is None:
            ledger.unexpected += 1
            return
        with self._lock:
            if seq in self._seen:
                ledger.duplicates += 1
                return
            self._seen.add(seq)
        if late:
            ledger.in_flight_discarded += 1
        else:
            ledger.responses_received += 1
            ledger.rtt_samples_ns.append(now - sent)

    def compute(self, clock: StepClock) -> None:
        for i in range(clock.step_count):
            if self._send_done.is_set() and self.ledger.failure:
                return
            sleep_until(clock.step_start_mono(i))
            self.ledger.compute_ns += busy_compute(self.edge.workload_ns)


def run_edge_device(edge: EdgeInstance, node_id: int, clock: StepClock, duration_ns: int, **kwargs) -> EdgeLedger:
    """Convenience wrapper: connect, run and return the ledger of one edge."""
    device = EdgeDevice(edge, node_id, duration_ns, **kwargs)
    device.connect()
    return device.run(clock)


__all__ = ["EdgeDevice", "EdgeLedger", "TransportError", "run_edge_device"]
