"""Canonical rendering of a :class:`SpecAst` back to source text."""

from __future__ import annotations

import re

from .ast import PayloadLiteral, Ref, SpecAst
from .units import format_duration, format_size

_BARE = re.compile(r"^[A-Za-z0-9_.\-]+$")
_INDENT = "    "


def _quote(text: str) -> str:
    out = ['"']
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif ch == "\n":
            out.append("\\n")
        elif ch == "\t":
            out.append("\\t")
        elif ch == "\r":
            out.append("\\r")
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _text(value: str) -> str:
    return value if _BARE.match(value) else _quote(value)


def _refs(refs: tuple[Ref, ...]) -> str:
    return "{" + ", ".join(f"{r.name}[{r.count}]" for r in refs) + "}"


def _block(header: str, fields: list[tuple[str, str]]) -> str:
    body = "".join(f"{_INDENT}{k}: {v}\n" for k, v in fields)
    return f"{header} {{\n{body}}}\n"


def pretty_print(ast: SpecAst) -> str:
    """Render *ast* with fixed block order, field order and whitespace."""
    blocks: list[str] = []
    for c in ast.clouds:
        blocks.append(_block(f"Cloud: {c.name}", [("IP", c.ip), ("port", str(c.port))]))
    for d in ast.devices:
        payload = _quote(d.payload.text) if isinstance(d.payload, PayloadLiteral) else format_size(d.payload.size)
        blocks.append(_block(f"Device: {d.name}", [("period", str(d.period)), ("payload", payload)]))
    for e in ast.edge_devices:
        fields = [
            ("protocol", e.protocol),
            ("speed", str(e.speed)),
            ("cloud", e.cloud),
            ("devices", _refs(e.devices)),
        ]
        if e.workload_ns:
            fields.append(("workload", format_duration(e.workload_ns)))
        blocks.append(_block(f"EdgeDevice: {e.name}", fields))
    for p in ast.platforms:
        fields = [("type", p.kind)]
        if p.ip is not None:
            fields.append(("IP", p.ip))
        if p.username is not None:
            fields.append(("username", _text(p.username)))
        if p.password is not None:
            fields.append(("password", _text(p.password)))
        if p.cpu is not None:
            fields.append(("CPU", str(p.cpu)))
        if p.memory is not None:
            fields.append(("memory", str(p.memory)))
        blocks.append(_block(f"Platform: {p.name}", fields))
    for s in ast.simulation_nodes:
        blocks.append(
            _block(f"SimulationNode: {s.name}", [("platform", s.platform), ("EdgeDevices", _refs(s.edge_devices))])
        )
    sim = ast.simulator
    blocks.append(
        _block(
            "Simulator:",
            [
                ("duration", format_duration(sim.duration_ns)),
                ("step", format_duration(sim.step_ns)),
                ("simulationNodes", _refs(sim.simulation_nodes)),
            ],
        )
    )
    return "\n".join(blocks)
