"""Edge-side UDP and TCP transports carrying framed packets to one cloud."""

from __future__ import annotations

import select
import socket

from .wire import StreamDecoder

EDGE_RCVBUF = 1 << 20


class TransportError(OSError):
    pass


class UdpTransport:
    def __init__(self, host: str, port: int) -> None:
        self.addr = (host, port)
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        _grow_rcvbuf(self.sock, EDGE_RCVBUF)
        self.sock.bind(("", 0))

    def send(self, data: bytes) -> None:
        self.sock.sendto(data, self.addr)

    def recv(self, timeout: float) -> list[bytes]:
        """Packets that arrive within *timeout* seconds (0 polls without blocking)."""
        out: list[bytes] = []
        if timeout > 0 and not _readable(self.sock, timeout):
            return out
        try:
            while True:
                out.append(self.sock.recv(65535, socket.MSG_DONTWAIT))
        except BlockingIOError:
            pass
        except ConnectionRefusedError:
            # ICMP port-unreachable from an earlier send; not fatal for UDP.
            pass
        return out

    def close(self) -> None:
        self.sock.close()


class TcpTransport:
    def __init__(self, host: str, port: int, connect_timeout: float = 3.0) -> None:
        try:
            self.sock = socket.create_connection((host, port), timeout=connect_timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        _grow_rcvbuf(self.sock, EDGE_RCVBUF)
        self.sock.settimeout(None)
        self.decoder = StreamDecoder()
        self.closed_by_peer = False

    def send(self, data: bytes) -> None:
        self.sock.sendall(data)

    def recv(self, timeout: float) -> list[bytes]:
        if self.closed_by_peer:
            return []
        out: list[bytes] = []
        if timeout > 0 and not _readable(self.sock, timeout):
            return out
        try:
            while True:
                chunk = self.sock.recv(1 << 16, socket.MSG_DONTWAIT)
                if not chunk:
                    self.closed_by_peer = True
                    break
                out += self.decoder.feed(chunk)
        except BlockingIOError:
            pass
        except (OSError, ValueError):
            # reset by peer, or a corrupt frame that makes the stream unusable
            self.closed_by_peer = True
        return out

    def close(self) -> None:
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


def open_transport(protocol: str, host: str, port: int) -> UdpTransport | TcpTransport:
    if protocol == "UDP":
        return UdpTransport(host, port)
    if protocol == "TCP":
        return TcpTransport(host, port)
    raise TransportError(f"protocol {protocol} is not supported by the runtime")


def _readable(sock: socket.socket, timeout: float) -> bool:
    poller = select.poll()
    poller.register(sock, select.POLLIN)
    return bool(poller.poll(timeout * 1000))


def _grow_rcvbuf(sock: socket.socket, size: int) -> int:
    """Ask for *size* bytes of receive buffer, forcing past rmem_max when allowed."""
    force = getattr(socket, "SO_RCVBUFFORCE", None)
    if force is not None:
        try:
            sock.setsockopt(socket.SOL_SOCKET, force, size)
            return sock.getsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF)
        except OSError:
            pass
    try:
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF, size)
    except OSError:
        pass
    return sock.getsockopt(socket.SOL_SOCKET, socket.SO_RCVBUF)
