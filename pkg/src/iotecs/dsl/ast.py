"""Syntax tree for specification documents.

Nodes are frozen dataclasses. Source locations ride along for diagnostics but
are excluded from equality, so a pretty-printed and re-parsed document compares
equal to the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

from .units import MemorySize

MAX = "MAX"
PROTOCOLS = ("UDP", "TCP", "MQTT")
PLATFORM_KINDS = ("Native", "VM", "Docker")


@dataclass(frozen=True)
class Loc:
    line: int = 1
    column: int = 1


NOWHERE = Loc()


def _loc() -> Loc:
    return field(default=NOWHERE, compare=False, repr=False)


@dataclass(frozen=True)
class Ref:
    """``E1[7]``: a reference to a named type with a multiplicity."""

    name: str
    count: int = 1
    loc: Loc = _loc()


@dataclass(frozen=True)
class PayloadSize:
    size: int


@dataclass(frozen=True)
class PayloadLiteral:
    text: str

    @property
    def data(self) -> bytes:
        return self.text.encode("utf-8")

    @property
    def size(self) -> int:
        return len(self.data)


Payload = Union[PayloadSize, PayloadLiteral]


@dataclass(frozen=True)
class CloudSpec:
    name: str
    ip: str
    port: int
    loc: Loc = _loc()


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    period: int
    payload: Payload
    loc: Loc = _loc()


@dataclass(frozen=True)
class EdgeDeviceSpec:
    name: str
    protocol: str
    speed: int | str
    cloud: str
    devices: tuple[Ref, ...]
    workload_ns: int = 0
    loc: Loc = _loc()
    cloud_loc: Loc = _loc()


@dataclass(frozen=True)
class PlatformSpec:
    name: str
    kind: str
    ip: str | None = None
    username: str | None = None
    password: str | None = None
    cpu: int | None = None
    memory: MemorySize | None = None
    loc: Loc = _loc()

    @property
    def constrained(self) -> bool:
        return self.cpu is not None or self.memory is not None

    @property
    def remote(self) -> bool:
        return self.ip is not None

    @property
    def label(self) -> str:
        """Short label used in reports: Native, VM, CDC or UDC."""
        if self.kind == "Docker":
            return "CDC" if self.constrained else "UDC"
        return self.kind


@dataclass(frozen=True)
class SimNodeSpec:
    name: str
    platform: str
    edge_devices: tuple[Ref, ...]
    loc: Loc = _loc()
    platform_loc: Loc = _loc()


@dataclass(frozen=True)
class SimulatorSpec:
    duration_ns: int
    step_ns: int
    simulation_nodes: tuple[Ref, ...]
    loc: Loc = _loc()


@dataclass(frozen=True)
class SpecAst:
    clouds: tuple[CloudSpec, ...]
    devices: tuple[DeviceSpec, ...]
    edge_devices: tuple[EdgeDeviceSpec, ...]
    platforms: tuple[PlatformSpec, ...]
    simulation_nodes: tuple[SimNodeSpec, ...]
    simulator: SimulatorSpec

    def cloud(self, name: str) -> CloudSpec | None:
        return next((c for c in self.clouds if c.name == name), None)

    def device(self, name: str) -> DeviceSpec | None:
        return next((d for d in self.devices if d.name == name), None)

    def edge_device(self, name: str) -> EdgeDeviceSpec | None:
        return next((e for e in self.edge_devices if e.name == name), None)

    def platform(self, name: str) -> PlatformSpec | None:
        return next((p for p in self.platforms if p.name == name), None)

    def simulation_node(self, name: str) -> SimNodeSpec | None:
        return next((s for s in self.simulation_nodes if s.name == name), None)
