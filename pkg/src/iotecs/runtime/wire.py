"""Binary packet format shared by the simulator and the baseline cloud.

Every packet is a fixed big-endian header followed by ``payload_len`` bytes::

    magic "EC" | version u8 | node u16 | edge u16 | device u16 |
    step u32 | seq u32 | send_ts_ns u64 | payload_len u16

The same framing is used for UDP datagrams and TCP streams; on TCP the header
is self-delimiting through ``payload_len``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"EC"
VERSION = 1
HEADER = struct.Struct(">2sBHHHIIQH")
HEADER_SIZE = HEADER.size  # 27

_SEQ_OFFSET = 2 + 1 + 2 + 2 + 2 + 4
_SEQ = struct.Struct(">I")
_SOURCE = struct.Struct(">HH")
_TS = struct.Struct(">Q")


class MalformedPacket(ValueError):
    pass


@dataclass(frozen=True)
class PacketHeader:
    node_id: int
    edge_id: int
    device_id: int
    step_index: int
    seq: int
    send_ts_ns: int
    payload_len: int

    def pack(self) -> bytes:
        return HEADER.pack(
            MAGIC,
            VERSION,
            self.node_id,
            self.edge_id,
            self.device_id,
            self.step_index,
            self.seq,
            self.send_ts_ns,
            self.payload_len,
        )

    @classmethod
    def unpack(cls, data: bytes | bytearray | memoryview) -> PacketHeader:
        if len(data) < HEADER_SIZE:
            raise MalformedPacket(f"short packet ({len(data)} bytes)")
        magic, version, node, edge, device, step, seq, ts, plen = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise MalformedPacket(f"bad magic {magic!r}")
        if version != VERSION:
            raise MalformedPacket(f"unsupported version {version}")
        return cls(node, edge, device, step, seq, ts, plen)


def encode(header: PacketHeader, payload: bytes) -> bytes:
    if len(payload) != header.payload_len:
        raise ValueError("payload length does not match header")
    return header.pack() + payload


def check_datagram(data: bytes) -> PacketHeader:
    """Validate a whole UDP datagram: header plus exactly ``payload_len`` bytes."""
    header = PacketHeader.unpack(data)
    if len(data) != HEADER_SIZE + header.payload_len:
        raise MalformedPacket(f"length mismatch: header says {header.payload_len}, got {len(data) - HEADER_SIZE}")
    return header


# Cheap field access for hot paths that only need one value.


def peek_seq(data: bytes) -> int:
    return _SEQ.unpack_from(data, _SEQ_OFFSET)[0]


def peek_source(data: bytes) -> tuple[int, int]:
    return _SOURCE.unpack_from(data, 3)


def peek_send_ts(data: bytes) -> int:
    return _TS.unpack_from(data, _SEQ_OFFSET + 4)[0]


class StreamDecoder:
    """Reassembles packets from a TCP byte stream, tolerating partial reads."""

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, chunk: bytes) -> list[bytes]:
        self._buf += chunk
        out: list[bytes] = []
        while len(self._buf) >= HEADER_SIZE:
            header = PacketHeader.unpack(self._buf)
            total = HEADER_SIZE + header.payload_len
            if len(self._buf) < total:
                break
            out.append(bytes(self._buf[:total]))
            del self._buf[:total]
        return out

    @property
    def pending(self) -> int:
        return len(self._buf)
