"""Expansion of a parsed document into numbered instances, plus static checks.

``resolve`` unrolls every ``Type[k]`` multiplicity. Node and edge IDs are
assigned densely from 0 across the whole run in document order; device IDs
restart at 0 inside each edge. Each tier is capped at 65536 instances so IDs
fit the 16-bit fields of the packet header.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Any, Iterable

from .dsl.ast import MAX, CloudSpec, Loc, PayloadLiteral, PlatformSpec, SpecAst
from .dsl.diagnostics import ERROR, WARNING, Diagnostic, SpecError, has_errors
from .dsl.parser import platform_problems
from .dsl.units import MemorySize

MAX_TIER_INSTANCES = 1 << 16
MAX_PAYLOAD = 0xFFFF
# 65507 is the largest UDP payload over IPv4; the packet header shares it.
MAX_UDP_DATAGRAM = 65507


@dataclass(frozen=True)
class DeviceInstance:
    device_id: int
    name: str
    period_steps: int
    payload: int | bytes  # size in bytes, or literal content

    @property
    def payload_size(self) -> int:
        return self.payload if isinstance(self.payload, int) else len(self.payload)


@dataclass(frozen=True)
class EdgeInstance:
    edge_id: int
    name: str
    protocol: str
    speed: int | str
    workload_ns: int
    cloud: CloudSpec
    devices: tuple[DeviceInstance, ...]
    loc: Loc = field(default=Loc(), compare=False, repr=False)


@dataclass(frozen=True)
class NodeInstance:
    node_id: int
    name: str
    platform: PlatformSpec
    edges: tuple[EdgeInstance, ...]


@dataclass(frozen=True)
class ResolvedTopology:
    duration_ns: int
    step_ns: int
    step_count: int
    nodes: tuple[NodeInstance, ...]
    clouds: tuple[CloudSpec, ...]

    def edges(self) -> Iterable[tuple[NodeInstance, EdgeInstance]]:
        for node in self.nodes:
            for edge in node.edges:
                yield node, edge

    @property
    def edge_count(self) -> int:
        return sum(len(n.edges) for n in self.nodes)

    @property
    def device_count(self) -> int:
        return sum(len(e.devices) for _, e in self.edges())

    def node(self, node_id: int) -> NodeInstance:
        return self.nodes[node_id]

    def digest(self) -> str:
        blob = json.dumps(topology_to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# -- resolution ---------------------------------------------------------------


def resolve(ast: SpecAst) -> ResolvedTopology:
    """Expand *ast*; raises :class:`SpecError` on dangling references or limits."""
    topo, diags = resolve_with_diagnostics(ast)
    if topo is None:
        raise SpecError(diags)
    return topo


def resolve_with_diagnostics(ast: SpecAst) -> tuple[ResolvedTopology | None, list[Diagnostic]]:
    diags: list[Diagnostic] = []

    def err(msg: str, loc: Loc, code: str = "reference") -> None:
        diags.append(Diagnostic(ERROR, loc.line, loc.column, msg, code))

    sim = ast.simulator
    if sim.step_ns > sim.duration_ns:
        err("step is longer than the simulation duration", sim.loc, "step")

    for edge in ast.edge_devices:
        if ast.cloud(edge.cloud) is None:
            err(f"EdgeDevice {edge.name} refers to unknown Cloud {edge.cloud!r}", edge.cloud_loc)
        for ref in edge.devices:
            if ast.device(ref.name) is None:
                err(f"EdgeDevice {edge.name} refers to unknown Device {ref.name!r}", ref.loc)
        per_edge = sum(r.count for r in edge.devices)
        if per_edge > MAX_TIER_INSTANCES:
            err(f"EdgeDevice {edge.name} has {per_edge} devices; at most {MAX_TIER_INSTANCES} allowed", edge.loc, "limit")
    for sn in ast.simulation_nodes:
        if ast.platform(sn.platform) is None:
            err(f"SimulationNode {sn.name} refers to unknown Platform {sn.platform!r}", sn.platform_loc)
        for ref in sn.edge_devices:
            if ast.edge_device(ref.name) is None:
                err(f"SimulationNode {sn.name} refers to unknown EdgeDevice {ref.name!r}", ref.loc)
    for ref in sim.simulation_nodes:
        if ast.simulation_node(ref.name) is None:
            err(f"Simulator refers to unknown SimulationNode {ref.name!r}", ref.loc)
    if has_errors(diags):
        return None, diags

    node_total = sum(r.count for r in sim.simulation_nodes)
    edge_total = sum(
        r.count * sum(e.count for e in ast.simulation_node(r.name).edge_devices) for r in sim.simulation_nodes
    )
    if node_total > MAX_TIER_INSTANCES:
        err(f"{node_total} simulation nodes exceed the limit of {MAX_TIER_INSTANCES}", sim.loc, "limit")
    if edge_total > MAX_TIER_INSTANCES:
        err(f"{edge_total} edge devices exceed the limit of {MAX_TIER_INSTANCES}", sim.loc, "limit")
    if has_errors(diags):
        return None, diags

    nodes: list[NodeInstance] = []
    edge_id = 0
    for ref in sim.simulation_nodes:
        sn = ast.simulation_node(ref.name)
        platform = ast.platform(sn.platform)
        for _ in range(ref.count):
            edges: list[EdgeInstance] = []
            for eref in sn.edge_devices:
                spec = ast.edge_device(eref.name)
                devices = _expand_devices(ast, spec.devices)
                for _ in range(eref.count):
                    edges.append(
                        EdgeInstance(
                            edge_id=edge_id,
                            name=spec.name,
                            protocol=spec.protocol,
                            speed=spec.speed,
                            workload_ns=spec.workload_ns,
                            cloud=ast.cloud(spec.cloud),
                            devices=devices,
                            loc=spec.loc,
                        )
                    )
                    edge_id += 1
            nodes.append(NodeInstance(len(nodes), sn.name, platform, tuple(edges)))

    topo = ResolvedTopology(
        duration_ns=sim.duration_ns,
        step_ns=sim.step_ns,
        step_count=sim.duration_ns // sim.step_ns,
        nodes=tuple(nodes),
        clouds=ast.clouds,
    )
    return topo, diags


def _expand_devices(ast: SpecAst, refs) -> tuple[DeviceInstance, ...]:
    out: list[DeviceInstance] = []
    for ref in refs:
        dev = ast.device(ref.name)
        payload = dev.payload.data if isinstance(dev.payload, PayloadLiteral) else dev.payload.size
        for _ in range(ref.count):
            out.append(DeviceInstance(len(out), dev.name, dev.period, payload))
    return tuple(out)


# -- oracle and advisory queries ----------------------------------------------


def recommend_step(intervals_ns: Iterable[int]) -> int:
    """Greatest common divisor of the device intervals, in nanoseconds."""
    values = list(intervals_ns)
    if not values:
        raise ValueError("recommend_step needs at least one interval")
    if any(v <= 0 for v in values):
        raise ValueError("intervals must be positive")
    return reduce(math.gcd, values)


def sends_for_period(step_count: int, period: int) -> int:
    """Number of steps i in [0, step_count) with i % period == 0."""
    return -(-step_count // period)


def expected_sends(topo: ResolvedTopology) -> dict[tuple[int, int], int]:
    """Packets each edge is scheduled to send over the run, keyed by (node, edge)."""
    return {
        (node.node_id, edge.edge_id): sum(sends_for_period(topo.step_count, d.period_steps) for d in edge.devices)
        for node, edge in topo.edges()
    }


def expected_sends_json(expected: dict[tuple[int, int], int]) -> dict[str, int]:
    return {f"{n}/{e}": count for (n, e), count in sorted(expected.items())}


def worst_step_demand(edge: EdgeInstance, step_count: int) -> int:
    """Largest number of packets due in any single step."""
    # Step 0 is due for every device (0 % period == 0), so it is the maximum.
    return len(edge.devices) if step_count > 0 else 0


# -- validation ---------------------------------------------------------------


def validate(topo: ResolvedTopology) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    seen_edges: set[tuple[str, Any]] = set()

    def emit(severity: str, loc: Loc, msg: str, code: str) -> None:
        diags.append(Diagnostic(severity, loc.line, loc.column, msg, code))

    for _, edge in topo.edges():
        key = (edge.name, edge.loc)
        if key in seen_edges:
            continue
        seen_edges.add(key)
        if edge.protocol == "MQTT":
            emit(ERROR, edge.loc, f"EdgeDevice {edge.name}: MQTT not supported by runtime", "mqtt-unsupported")
        demand = worst_step_demand(edge, topo.step_count)
        if edge.speed != MAX and demand > edge.speed:
            emit(
                WARNING,
                edge.loc,
                f"EdgeDevice {edge.name}: speed below worst-case per-step demand "
                f"({demand} packets due, speed {edge.speed}); expect SimDrop",
                "speed-infeasible",
            )
        for dev in {d.name: d for d in edge.devices}.values():
            size = dev.payload_size
            if size > MAX_PAYLOAD:
                emit(ERROR, edge.loc, f"Device {dev.name}: payload of {size} B exceeds {MAX_PAYLOAD} B", "payload")
            elif edge.protocol == "UDP" and size + _header_size() > MAX_UDP_DATAGRAM:
                emit(
                    ERROR,
                    edge.loc,
                    f"Device {dev.name}: {size} B payload does not fit one UDP datagram "
                    f"(max {MAX_UDP_DATAGRAM - _header_size()} B)",
                    "payload",
                )

    by_endpoint: dict[tuple[str, int], CloudSpec] = {}
    for cloud in topo.clouds:
        other = by_endpoint.get((cloud.ip, cloud.port))
        if other is not None:
            emit(
                ERROR,
                cloud.loc,
                f"Cloud {cloud.name} uses {cloud.ip}:{cloud.port}, already taken by Cloud {other.name}",
                "port-collision",
            )
        else:
            by_endpoint[(cloud.ip, cloud.port)] = cloud

    platforms = {n.platform.name: n.platform for n in topo.nodes}
    for p in platforms.values():
        for msg in platform_problems(p):
            emit(ERROR, p.loc, msg, "platform")
    return sorted(diags, key=lambda d: (d.line, d.column))


def _header_size() -> int:
    from .runtime.wire import HEADER_SIZE

    return HEADER_SIZE


# -- serialization ------------------------------------------------------------


def _platform_to_dict(p: PlatformSpec) -> dict[str, Any]:
    return {
        "name": p.name,
        "kind": p.kind,
        "ip": p.ip,
        "username": p.username,
        "password": p.password,
        "cpu": p.cpu,
        "memory": str(p.memory) if p.memory else None,
    }


def _cloud_to_dict(c: CloudSpec) -> dict[str, Any]:
    return {"name": c.name, "ip": c.ip, "port": c.port}


def _device_to_dict(d: DeviceInstance) -> dict[str, Any]:
    out: dict[str, Any] = {"device_id": d.device_id, "name": d.name, "period_steps": d.period_steps}
    if isinstance(d.payload, int):
        out["payload_size"] = d.payload
    else:
        out["payload_hex"] = d.payload.hex()
    return out


def node_to_dict(node: NodeInstance) -> dict[str, Any]:
    return {
        "node_id": node.node_id,
        "name": node.name,
        "platform": _platform_to_dict(node.platform),
        "edges": [
            {
                "edge_id": e.edge_id,
                "name": e.name,
                "protocol": e.protocol,
                "speed": e.speed,
                "workload_ns": e.workload_ns,
                "cloud": _cloud_to_dict(e.cloud),
                "devices": [_device_to_dict(d) for d in e.devices],
            }
            for e in node.edges
        ],
    }


def topology_to_dict(topo: ResolvedTopology) -> dict[str, Any]:
    return {
        "duration_ns": topo.duration_ns,
        "step_ns": topo.step_ns,
        "step_count": topo.step_count,
        "clouds": [_cloud_to_dict(c) for c in topo.clouds],
        "nodes": [node_to_dict(n) for n in topo.nodes],
    }


def node_from_dict(d: dict[str, Any]) -> NodeInstance:
    p = d["platform"]
    platform = PlatformSpec(
        p["name"],
        p["kind"],
        ip=p.get("ip"),
        username=p.get("username"),
        password=p.get("password"),
        cpu=p.get("cpu"),
        memory=MemorySize.parse(p["memory"]) if p.get("memory") else None,
    )
    edges = []
    for e in d["edges"]:
        devices = tuple(
            DeviceInstance(
                x["device_id"],
                x["name"],
                x["period_steps"],
                x["payload_size"] if "payload_size" in x else bytes.fromhex(x["payload_hex"]),
            )
            for x in e["devices"]
        )
        edges.append(
            EdgeInstance(
                e["edge_id"], e["name"], e["protocol"], e["speed"], e["workload_ns"], CloudSpec(**e["cloud"]), devices
            )
        )
    return NodeInstance(d["node_id"], d["name"], platform, tuple(edges))


def topology_from_dict(d: dict[str, Any]) -> ResolvedTopology:
    return ResolvedTopology(
        duration_ns=d["duration_ns"],
        step_ns=d["step_ns"],
        step_count=d["step_count"],
        nodes=tuple(node_from_dict(n) for n in d["nodes"]),
        clouds=tuple(CloudSpec(**c) for c in d["clouds"]),
    )


def with_cloud_address(topo: ResolvedTopology, mapping: dict[str, tuple[str, int]]) -> ResolvedTopology:
    """Copy of *topo* with named clouds re-pointed at new (ip, port) endpoints."""

    def move(c: CloudSpec) -> CloudSpec:
        if c.name not in mapping:
            return c
        ip, port = mapping[c.name]
        return CloudSpec(c.name, ip, port, loc=c.loc)

    nodes = tuple(
        NodeInstance(
            n.node_id,
            n.name,
            n.platform,
            tuple(
                EdgeInstance(e.edge_id, e.name, e.protocol, e.speed, e.workload_ns, move(e.cloud), e.devices, e.loc)
                for e in n.edges
            ),
        )
        for n in topo.nodes
    )
    return ResolvedTopology(topo.duration_ns, topo.step_ns, topo.step_count, nodes, tuple(move(c) for c in topo.clouds))
