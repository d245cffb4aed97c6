"""Recursive-descent parser for specification documents.

A document is a sequence of blocks::

    Cloud: C1 { IP: 192.168.0.2  port: 1883 }
    Simulator: { duration: 10s  step: 1s  simulationNodes: {SN1[5], SN2[1]} }

Keywords and field names are case-insensitive. Fields inside a block may come
in any order, each at most once. The parser recovers after an error so one
pass reports as many located problems as it can.
"""

from __future__ import annotations

import ipaddress
import re
from typing import Any, Callable

from .ast import (
    MAX,
    PLATFORM_KINDS,
    PROTOCOLS,
    CloudSpec,
    DeviceSpec,
    EdgeDeviceSpec,
    Loc,
    PayloadLiteral,
    PayloadSize,
    PlatformSpec,
    Ref,
    SimNodeSpec,
    SimulatorSpec,
    SpecAst,
)
from .diagnostics import ERROR, Diagnostic, SpecError, has_errors
from .lexer import Tok, Token, tokenize
from .units import MemorySize, UnitError, parse_duration, parse_payload_size

_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

BLOCK_KINDS = {
    "cloud": "Cloud",
    "device": "Device",
    "edgedevice": "EdgeDevice",
    "platform": "Platform",
    "simulationnode": "SimulationNode",
    "simulator": "Simulator",
}

# lower-cased field name -> canonical spelling, per block kind
FIELDS: dict[str, dict[str, str]] = {
    "Cloud": {"ip": "IP", "port": "port"},
    "Device": {"period": "period", "payload": "payload"},
    "EdgeDevice": {
        "protocol": "protocol",
        "speed": "speed",
        "cloud": "cloud",
        "devices": "devices",
        "workload": "workload",
    },
    "Platform": {
        "type": "type",
        "ip": "IP",
        "username": "username",
        "password": "password",
        "cpu": "CPU",
        "memory": "memory",
    },
    "SimulationNode": {"platform": "platform", "edgedevices": "EdgeDevices"},
    "Simulator": {"duration": "duration", "step": "step", "simulationnodes": "simulationNodes"},
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "Cloud": ("IP", "port"),
    "Device": ("period", "payload"),
    "EdgeDevice": ("protocol", "speed", "cloud", "devices"),
    "Platform": ("type",),
    "SimulationNode": ("platform", "EdgeDevices"),
    "Simulator": ("duration", "step", "simulationNodes"),
}


class _FieldError(Exception):
    def __init__(self, message: str, token: Token, code: str = "syntax") -> None:
        super().__init__(message)
        self.token = token
        self.code = code


def parse(source: str) -> SpecAst:
    """Parse *source* into a :class:`SpecAst`.

    Raises :class:`SpecError` carrying every located diagnostic when the text
    is not a valid document. No other exception escapes for any input string.
    """
    ast, diags = parse_with_diagnostics(source)
    if ast is None:
        raise SpecError(diags)
    return ast


def parse_with_diagnostics(source: str) -> tuple[SpecAst | None, list[Diagnostic]]:
    tokens, diags = tokenize(source)
    parser = _Parser(tokens)
    ast = parser.document()
    diags = sorted(diags + parser.diags, key=lambda d: (d.line, d.column))
    if has_errors(diags):
        return None, diags
    return ast, diags


class _Parser:
    def __init__(self, tokens: list[Token]) -> None:
        self.tokens = tokens
        self.pos = 0
        self.diags: list[Diagnostic] = []

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind is not Tok.EOF:
            self.pos += 1
        return tok

    def expect(self, kind: Tok, what: str | None = None) -> Token:
        tok = self.tok
        if tok.kind is not kind:
            raise _FieldError(f"expected {what or kind.value}, found {tok.describe()}", tok)
        return self.advance()

    def error(self, message: str, tok: Token | Loc, code: str = "syntax") -> None:
        self.diags.append(Diagnostic(ERROR, tok.line, tok.column, message, code))

    # -- recovery ------------------------------------------------------------

    def sync_block(self) -> None:
        """Skip to just after the closing brace of the current block."""
        depth = 0
        while self.tok.kind is not Tok.EOF:
            tok = self.advance()
            if tok.kind is Tok.LBRACE:
                depth += 1
            elif tok.kind is Tok.RBRACE:
                depth -= 1
                if depth <= 0:
                    return
            elif depth == 0 and self._at_block_start():
                return

    def sync_field(self) -> None:
        """Skip to the next ``key:`` at the current nesting level, or to ``}``."""
        depth = 0
        while self.tok.kind is not Tok.EOF:
            if depth == 0 and self.tok.kind is Tok.RBRACE:
                return
            if depth == 0 and self.tok.kind is Tok.WORD and self.peek().kind is Tok.COLON:
                return
            tok = self.advance()
            if tok.kind is Tok.LBRACE:
                depth += 1
            elif tok.kind is Tok.RBRACE:
                depth -= 1

    def _at_block_start(self) -> bool:
        return (
            self.tok.kind is Tok.WORD
            and self.tok.text.lower() in BLOCK_KINDS
            and self.peek().kind is Tok.COLON
        )

    # -- grammar ---------------------------------------------------------------

    def document(self) -> SpecAst | None:
        blocks: dict[str, list[Any]] = {kind: [] for kind in BLOCK_KINDS.values()}
        seen: dict[tuple[str, str], Token] = {}
        simulator_tokens: list[Token] = []

        while self.tok.kind is not Tok.EOF:
            start = self.tok
            if not (start.kind is Tok.WORD and start.text.lower() in BLOCK_KINDS):
                self.error(
                    f"expected a block keyword ({', '.join(BLOCK_KINDS.values())}), "
                    f"found {start.describe()}",
                    start,
                )
                self.advance()
                while self.tok.kind is not Tok.EOF and not self._at_block_start():
                    if self.tok.kind is Tok.LBRACE:
                        self.sync_block()
                    else:
                        self.advance()
                continue
            kind = BLOCK_KINDS[start.text.lower()]
            try:
                node = self.block(kind)
            except _FieldError as exc:
                self.error(str(exc), exc.token, exc.code)
                self.sync_block()
                continue
            if node is None:
                continue
            if kind == "Simulator":
                simulator_tokens.append(start)
            else:
                key = (kind, node.name)
                if key in seen:
                    first = seen[key]
                    self.error(
                        f"duplicate {kind} name {node.name!r} "
                        f"(first defined at line {first.line})",
                        node.loc,
                        "duplicate",
                    )
                    continue
                seen[key] = start
            blocks[kind].append(node)

        if not simulator_tokens and not has_errors(self.diags):
            self.error("no Simulator block", Loc(1, 1), "missing-simulator")
        for extra in simulator_tokens[1:]:
            self.error("more than one Simulator block", extra, "duplicate")
        if has_errors(self.diags):
            return None
        return SpecAst(
            clouds=tuple(blocks["Cloud"]),
            devices=tuple(blocks["Device"]),
            edge_devices=tuple(blocks["EdgeDevice"]),
            platforms=tuple(blocks["Platform"]),
            simulation_nodes=tuple(blocks["SimulationNode"]),
            simulator=blocks["Simulator"][0],
        )

    def block(self, kind: str) -> Any:
        kw = self.advance()
        self.expect(Tok.COLON, "':' after block keyword")
        name = ""
        name_tok = kw
        if kind != "Simulator":
            name_tok = self.tok
            name = self.ident()
        elif self.tok.kind is Tok.WORD:
            raise _FieldError("the Simulator block takes no name", self.tok)
        self.expect(Tok.LBRACE, "'{'")

        fields: dict[str, tuple[Any, Token]] = {}
        attempted: set[str] = set()
        ok = True
        while self.tok.kind not in (Tok.RBRACE, Tok.EOF):
            key_tok = self.tok
            try:
                if key_tok.kind is not Tok.WORD:
                    raise _FieldError(f"expected a field name, found {key_tok.describe()}", key_tok)
                canonical = FIELDS[kind].get(key_tok.text.lower())
                if canonical is None:
                    allowed = ", ".join(FIELDS[kind].values())
                    raise _FieldError(
                        f"unknown field {key_tok.text!r} in {kind} (expected one of {allowed})",
                        key_tok,
                    )
                attempted.add(canonical)
                self.advance()
                self.expect(Tok.COLON, f"':' after {canonical}")
                value = self.field_value(kind, canonical)
                if canonical in fields:
                    raise _FieldError(f"field {canonical!r} given more than once", key_tok, "duplicate")
                fields[canonical] = (value, key_tok)
            except _FieldError as exc:
                ok = False
                self.error(str(exc), exc.token, exc.code)
                if self.tok is key_tok:
                    self.advance()
                self.sync_field()
        if self.tok.kind is Tok.EOF:
            self.error(f"unterminated {kind} block (missing '}}')", kw)
            return None
        self.advance()  # closing brace

        missing = [f for f in REQUIRED[kind] if f not in attempted]
        for f in missing:
            self.error(f"{kind} {name or ''}".rstrip() + f" is missing required field {f!r}", name_tok)
        if missing or not ok:
            return None
        return self.build(kind, name, name_tok, fields)

    def build(self, kind: str, name: str, at: Token, fields: dict[str, tuple[Any, Token]]) -> Any:
        loc = Loc(at.line, at.column)
        v = {k: val for k, (val, _) in fields.items()}
        if kind == "Cloud":
            return CloudSpec(name, v["IP"], v["port"], loc=loc)
        if kind == "Device":
            return DeviceSpec(name, v["period"], v["payload"], loc=loc)
        if kind == "EdgeDevice":
            cloud_tok = fields["cloud"][1]
            return EdgeDeviceSpec(
                name,
                v["protocol"],
                v["speed"],
                v["cloud"],
                v["devices"],
                v.get("workload", 0),
                loc=loc,
                cloud_loc=Loc(cloud_tok.line, cloud_tok.column),
            )
        if kind == "Platform":
            platform = PlatformSpec(
                name,
                v["type"],
                ip=v.get("IP"),
                username=v.get("username"),
                password=v.get("password"),
                cpu=v.get("CPU"),
                memory=v.get("memory"),
                loc=loc,
            )
            problems = platform_problems(platform)
            for msg in problems:
                self.error(msg, at, "platform")
            return None if problems else platform
        if kind == "SimulationNode":
            ptok = fields["platform"][1]
            return SimNodeSpec(
                name, v["platform"], v["EdgeDevices"], loc=loc, platform_loc=Loc(ptok.line, ptok.column)
            )
        return SimulatorSpec(v["duration"], v["step"], v["simulationNodes"], loc=loc)

    # -- values ----------------------------------------------------------------

    def field_value(self, kind: str, field: str) -> Any:
        readers: dict[str, Callable[[], Any]] = {
            "IP": self.ipv4,
            "port": self.port,
            "period": lambda: self.positive_int("period"),
            "payload": self.payload,
            "protocol": lambda: self.keyword(PROTOCOLS, "protocol"),
            "speed": self.speed,
            "cloud": self.ident,
            "devices": self.ref_list,
            "workload": lambda: self.duration(allow_zero=True, units=("ms", "s", "m")),
            "type": lambda: self.keyword(PLATFORM_KINDS, "platform type"),
            "username": self.text,
            "password": self.text,
            "CPU": lambda: self.positive_int("CPU"),
            "memory": self.memory,
            "platform": self.ident,
            "EdgeDevices": self.ref_list,
            "duration": self.duration,
            "step": self.duration,
            "simulationNodes": self.ref_list,
        }
        return readers[field]()

    def word(self, what: str) -> Token:
        return self.expect(Tok.WORD, what)

    def ident(self) -> str:
        tok = self.word("a name")
        if not _IDENT.match(tok.text):
            raise _FieldError(f"invalid name {tok.text!r}", tok)
        return tok.text

    def positive_int(self, what: str, upper: int | None = None) -> int:
        tok = self.word(f"an integer {what}")
        if not tok.text.isdigit():
            raise _FieldError(f"{what} must be a positive integer, found {tok.text!r}", tok)
        value = int(tok.text)
        if value < 1 or (upper is not None and value > upper):
            bound = f"between 1 and {upper}" if upper else "at least 1"
            raise _FieldError(f"{what} must be {bound}, found {value}", tok)
        return value

    def port(self) -> int:
        return self.positive_int("port", 65535)

    def ipv4(self) -> str:
        tok = self.word("an IPv4 address")
        try:
            addr = ipaddress.IPv4Address(tok.text)
        except ValueError:
            raise _FieldError(f"invalid IPv4 address {tok.text!r}", tok) from None
        return str(addr)

    def keyword(self, choices: tuple[str, ...], what: str) -> str:
        tok = self.word(what)
        for choice in choices:
            if tok.text.lower() == choice.lower():
                return choice
        raise _FieldError(f"unknown {what} {tok.text!r} (expected {', '.join(choices)})", tok)

    def speed(self) -> int | str:
        if self.tok.kind is Tok.WORD and self.tok.text.upper() == MAX:
            self.advance()
            return MAX
        return self.positive_int("speed")

    def duration(self, allow_zero: bool = False, units: tuple[str, ...] = ("ms", "s", "m", "h")) -> int:
        tok = self.word("a duration such as 500ms or 2s")
        try:
            return parse_duration(tok.text, allow_zero=allow_zero, units=units)
        except UnitError as exc:
            raise _FieldError(str(exc), tok, "unit") from None

    def payload(self) -> PayloadSize | PayloadLiteral:
        if self.tok.kind is Tok.STRING:
            tok = self.advance()
            if not tok.text:
                raise _FieldError("literal payload must not be empty", tok)
            return PayloadLiteral(tok.text)
        tok = self.word("a payload size such as 8B or a string literal")
        try:
            return PayloadSize(parse_payload_size(tok.text))
        except UnitError as exc:
            raise _FieldError(str(exc), tok, "unit") from None

    def memory(self) -> MemorySize:
        tok = self.word("a memory size such as 2G")
        try:
            return MemorySize.parse(tok.text)
        except UnitError as exc:
            raise _FieldError(str(exc), tok, "unit") from None

    def text(self) -> str:
        tok = self.tok
        if tok.kind in (Tok.WORD, Tok.STRING):
            return self.advance().text
        raise _FieldError(f"expected a word or string literal, found {tok.describe()}", tok)

    def ref_list(self) -> tuple[Ref, ...]:
        open_tok = self.expect(Tok.LBRACE, "'{' to start a list")
        refs: list[Ref] = []
        if self.tok.kind is Tok.RBRACE:
            raise _FieldError("list must name at least one element", open_tok)
        while True:
            name_tok = self.tok
            name = self.ident()
            count = 1
            if self.tok.kind is Tok.LBRACKET:
                self.advance()
                count = self.positive_int("instance count")
                self.expect(Tok.RBRACKET, "']'")
            refs.append(Ref(name, count, loc=Loc(name_tok.line, name_tok.column)))
            if self.tok.kind is Tok.COMMA:
                self.advance()
                continue
            self.expect(Tok.RBRACE, "',' or '}'")
            return tuple(refs)


def platform_problems(p: PlatformSpec) -> list[str]:
    """Invariants tying a platform's kind to the resource fields it carries."""
    problems = []
    if p.kind == "VM":
        for attr, label in (("cpu", "CPU"), ("memory", "memory")):
            if getattr(p, attr) is None:
                problems.append(f"VM platform {p.name} requires {label}")
    elif p.kind == "Docker" and p.constrained:
        for attr, label in (("cpu", "CPU"), ("memory", "memory")):
            if getattr(p, attr) is None:
                problems.append(f"constrained Docker platform {p.name} requires both CPU and memory ({label} missing)")
    if p.remote:
        for attr in ("username", "password"):
            if getattr(p, attr) is None:
                problems.append(f"remote platform {p.name} (IP {p.ip}) requires {attr}")
    return problems
