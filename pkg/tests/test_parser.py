import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from helpers import FIGURES
from iotecs.dsl import MAX, PayloadLiteral, PayloadSize, SpecError, parse, parse_with_diagnostics, pretty_print

MS = 1_000_000


def test_reference_document_parses():
    ast = parse(FIGURES.read_text())
    assert [c.name for c in ast.clouds] == ["C1", "C2"]
    assert (ast.cloud("C2").ip, ast.cloud("C2").port) == ("192.168.0.3", 2605)
    assert ast.device("D2").period == 2
    assert ast.device("D2").payload == PayloadSize(100)
    e2 = ast.edge_device("E2")
    assert (e2.protocol, e2.speed, e2.cloud, e2.workload_ns) == ("TCP", 1000, "C2", 20 * MS)
    assert [(r.name, r.count) for r in e2.devices] == [("D1", 10), ("D2", 20)]
    p2 = ast.platform("P2")
    assert (p2.kind, p2.cpu, str(p2.memory), p2.username, p2.label) == ("Docker", 4, "2G", "user2", "CDC")
    assert ast.platform("P1").label == "Native"
    assert (ast.simulator.duration_ns, ast.simulator.step_ns) == (10_000 * MS, 1000 * MS)
    assert [(r.name, r.count) for r in ast.simulator.simulation_nodes] == [("SN1", 5), ("SN2", 1)]


def test_reference_document_round_trips():
    ast = parse(FIGURES.read_text())
    text = pretty_print(ast)
    assert parse(text) == ast
    assert pretty_print(parse(text)) == text


def test_keywords_case_insensitive_and_fields_unordered():
    a = parse(
        """
        cloud: C1 { PORT: 9 ip: 10.0.0.1 }
        DEVICE: D1 { Payload: 8B PERIOD: 3 }
        edgedevice: E1 { devices: {D1} cloud: C1 speed: max Protocol: udp }
        platform: P1 { TYPE: native }
        simulationnode: S { edgedevices: {E1[2]} platform: P1 }
        simulator: { simulationnodes: {S} step: 1s duration: 3s }
        """
    )
    assert a.cloud("C1").port == 9
    assert a.device("D1").period == 3
    e = a.edge_device("E1")
    assert (e.speed, e.protocol, e.devices[0].count) == (MAX, "UDP", 1)
    assert a.platform("P1").kind == "Native"


def test_comments_and_literal_payloads():
    a = parse(
        '// header comment\n'
        'Device: D1 { period: 1 // trailing\n payload: "a\\"b\\\\c\\n\\x41" }\n'
        "Simulator: { duration: 1s step: 1s simulationNodes: {S} }\n"
    )
    payload = a.device("D1").payload
    assert isinstance(payload, PayloadLiteral)
    assert payload.data == b'a"b\\c\nA'
    assert payload.size == 7


def test_error_locations():
    text = FIGURES.read_text()
    lines = text.splitlines()
    p1 = next(i for i, line in enumerate(lines) if line.startswith("Platform: P1"))
    lines.insert(p1 + 1, "\tbogus: 1")
    _, diags = parse_with_diagnostics("\n".join(lines))
    assert len(diags) == 1
    assert diags[0].is_error and diags[0].line == p1 + 2 and "bogus" in diags[0].message


def test_recovery_reports_independent_errors():
    src = """
Cloud: C1 { IP: 1.2.3.4 port: notanumber }
Device: D1 { period: 0 payload: 8B }
Device: D2 { period: 1 payload: 8XB }
Simulator: { duration: 2s step: 1s simulationNodes: {S} }
"""
    ast, diags = parse_with_diagnostics(src)
    assert ast is None
    assert sorted({d.line for d in diags}) == [2, 3, 4]


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("Cloud: C1 { IP: 1.2.3.4 port: 1 }", "no Simulator block"),
        ("Cloud: C1 { IP: 1.2.3.4 }\nSimulator: { duration: 1s step: 1s simulationNodes: {S} }", "missing required field 'port'"),
        ("Foo: X {}", "expected a block keyword"),
        (
            "Device: D { period: 1 payload: 1B }\nDevice: D { period: 1 payload: 1B }\n"
            "Simulator: { duration: 1s step: 1s simulationNodes: {S} }",
            "D",
        ),
        ("Simulator: { duration: 1s step: 1s simulationNodes: {} }", ""),
        ("Simulator: { duration: 1s step: 1s simulationNodes: {S} }\nSimulator: { duration: 1s step: 1s simulationNodes: {S} }", "more than one"),
    ],
)
def test_rejected_documents(src, fragment):
    with pytest.raises(SpecError) as info:
        parse(src)
    assert fragment in str(info.value)


# -- generated documents -----------------------------------------------------------

names = st.from_regex(r"[A-Z][a-z0-9_]{0,6}", fullmatch=True)


def _quote(text: str) -> str:
    out = []
    for ch in text:
        if ch in '"\\':
            out.append("\\" + ch)
        elif ch == "\n":
            out.append("\\n")
        elif ord(ch) < 32 or ord(ch) == 127:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return '"' + "".join(out) + '"'


def _case(draw, word: str) -> str:
    return draw(st.sampled_from([word, word.lower(), word.upper()]))


@st.composite
def documents(draw) -> str:
    uniq = draw(st.lists(names, min_size=8, max_size=12, unique=True))
    clouds, devices, edges, platforms, nodes = uniq[0:1], uniq[1:3], uniq[3:5], uniq[5:6], uniq[6:8]
    blocks = []

    def block(kind: str, name: str | None, fields: list[tuple[str, str]]) -> None:
        fields = draw(st.permutations(fields))
        head = _case(draw, kind) + (f": {name}" if name else ":")
        body = " ".join(f"{_case(draw, k)}: {v}" for k, v in fields)
        blocks.append(f"{head} {{ {body} }}")

    for c in clouds:
        block("Cloud", c, [("IP", "127.0.0.1"), ("port", str(draw(st.integers(1, 65535))))])
    for d in devices:
        if draw(st.booleans()):
            payload = draw(st.sampled_from(["8B", "60B", "1kB", "1.5kB", "2MB"]))
        else:
            payload = _quote(draw(st.text(st.characters(min_codepoint=1, max_codepoint=126), min_size=1, max_size=12)))
        block("Device", d, [("period", str(draw(st.integers(1, 9)))), ("payload", payload)])
    for e in edges:
        refs = ", ".join(
            f"{d}[{draw(st.integers(1, 50))}]" if draw(st.booleans()) else d
            for d in draw(st.lists(st.sampled_from(devices), min_size=1, max_size=3, unique=True))
        )
        fields = [
            ("protocol", draw(st.sampled_from(["UDP", "TCP", "MQTT"]))),
            ("speed", draw(st.sampled_from(["MAX", "1", "100", "250"]))),
            ("cloud", clouds[0]),
            ("devices", "{" + refs + "}"),
        ]
        if draw(st.booleans()):
            fields.append(("workload", draw(st.sampled_from(["0", "20ms", "1s"]))))
        block("EdgeDevice", e, fields)
    for p in platforms:
        kind = draw(st.sampled_from(["Native", "Docker", "VM"]))
        fields = [("type", kind)]
        if kind == "VM" or (kind == "Docker" and draw(st.booleans())):
            fields += [("CPU", "2"), ("memory", "512M")]
        block("Platform", p, fields)
    for n in nodes:
        refs = ", ".join(f"{e}[{draw(st.integers(1, 5))}]" for e in edges)
        block("SimulationNode", n, [("platform", platforms[0]), ("EdgeDevices", "{" + refs + "}")])
    block(
        "Simulator",
        None,
        [("duration", "4s"), ("step", draw(st.sampled_from(["1s", "500ms", "0.25s"]))), ("simulationNodes", "{" + ", ".join(nodes) + "}")],
    )
    sep = draw(st.sampled_from(["\n", "\n\n", "\n// note\n"]))
    return sep.join(draw(st.permutations(blocks))) + "\n"


@settings(max_examples=150, suppress_health_check=[HealthCheck.too_slow])
@given(documents())
def test_generated_documents_round_trip(src):
    ast, diags = parse_with_diagnostics(src)
    assert diags == [] and ast is not None
    printed = pretty_print(ast)
    assert parse(printed) == ast
    assert pretty_print(parse(printed)) == printed


@settings(max_examples=300)
@given(st.text(max_size=200))
def test_parser_is_total_on_arbitrary_text(src):
    ast, diags = parse_with_diagnostics(src)
    assert (ast is None) == any(d.is_error for d in diags)


@settings(max_examples=200, suppress_health_check=[HealthCheck.too_slow])
@given(documents(), st.data())
def test_parser_is_total_on_damaged_documents(src, data):
    start = data.draw(st.integers(0, len(src) - 1))
    end = data.draw(st.integers(start, min(len(src), start + 20)))
    ast, diags = parse_with_diagnostics(src[:start] + src[end:])
    assert (ast is None) == any(d.is_error for d in diags)
    for d in diags:
        assert d.line >= 1 and d.column >= 1
