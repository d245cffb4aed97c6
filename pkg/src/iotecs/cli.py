"""``iotecs`` command line: validate, run, cloud, expected, recommend-step, report, deploy.

Machine-readable results go to stdout, diagnostics to stderr. Exit codes:
0 success, 1 validation failure (or usage error), 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
from pathlib import Path

from .dsl import WARNING, Diagnostic, SpecError, UnitError, format_duration, parse_duration, parse_payload_size
from .dsl.parser import parse_with_diagnostics
from .topology import (
    ResolvedTopology,
    expected_sends,
    expected_sends_json,
    recommend_step,
    resolve_with_diagnostics,
    validate,
    with_cloud_address,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_RUNTIME = 2

log = logging.getLogger("iotecs")


def _duration(token: str) -> int:
    try:
        return parse_duration(token, allow_zero=True)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _size(token: str) -> int:
    if token.isdigit():
        return int(token)
    try:
        return parse_payload_size(token)
    except UnitError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _print_diags(diags: list[Diagnostic], filename: str) -> None:
    for d in diags:
        print(d.format(filename), file=sys.stderr)


def load_topology(path: Path, *, strict: bool, for_run: bool) -> tuple[ResolvedTopology | None, list[Diagnostic]]:
    """Parse, resolve and validate *path*. Returns (topology or None, diagnostics)."""
    try:
        source = path.read_text(encoding="utf-8")
    except OSError as exc:
        return None, [Diagnostic("error", 0, 0, f"cannot read {path}: {exc}", "io")]
    ast, diags = parse_with_diagnostics(source)
    if ast is None or any(d.is_error for d in diags):
        return None, diags
    topo, rdiags = resolve_with_diagnostics(ast)
    diags += rdiags
    if topo is None:
        return None, diags
    checked = validate(topo)
    if not for_run and not strict:
        # The language accepts MQTT; only running it is unsupported.
        checked = [
            Diagnostic(WARNING, d.line, d.column, d.message, d.code) if d.code == "mqtt-unsupported" else d
            for d in checked
        ]
    diags += checked
    failed = any(d.is_error for d in diags) or (strict and any(d.severity == WARNING for d in diags))
    return (None if failed else topo), diags


# -- subcommands -----------------------------------------------------------------


def cmd_validate(args: argparse.Namespace) -> int:
    topo, diags = load_topology(args.spec, strict=args.strict, for_run=False)
    _print_diags(diags, str(args.spec))
    summary = {
        "ok": topo is not None,
        "errors": sum(d.is_error for d in diags),
        "warnings": sum(d.severity == WARNING for d in diags),
    }
    if topo is not None:
        summary.update(
            nodes=len(topo.nodes),
            edges=topo.edge_count,
            devices=topo.device_count,
            steps=topo.step_count,
            digest=topo.digest(),
        )
    print(json.dumps(summary))
    return EXIT_OK if topo is not None else EXIT_INVALID


def cmd_expected(args: argparse.Namespace) -> int:
    topo, diags = load_topology(args.spec, strict=False, for_run=False)
    _print_diags(diags, str(args.spec))
    if topo is None:
        return EXIT_INVALID
    print(json.dumps(expected_sends_json(expected_sends(topo)), sort_keys=True))
    return EXIT_OK


def cmd_recommend_step(args: argparse.Namespace) -> int:
    try:
        intervals = [parse_duration(t) for t in args.intervals]
    except UnitError as exc:
        print(f"recommend-step: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(format_duration(recommend_step(intervals)))
    return EXIT_OK


def cmd_cloud(args: argparse.Namespace) -> int:
    from .cloud import CloudConfig, CloudServer

    try:
        config = CloudConfig(
            protocol=args.protocol,
            port=args.port,
            control_port=args.control_port if args.control_port is not None else (args.port + 1 if args.port else 0),
            compute_ns=args.compute,
            workers=args.workers,
            host=args.host,
            udp_rcvbuf=args.udp_buf,
        )
    except ValueError as exc:
        print(f"cloud: {exc}", file=sys.stderr)
        return EXIT_INVALID
    server = CloudServer(config)
    try:
        server.start()
    except OSError as exc:
        print(f"cloud: cannot bind port {config.port} or {config.control_port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    signal.signal(signal.SIGTERM, lambda *_: server.stop())
    print(
        json.dumps(
            {
                "protocol": config.protocol,
                "port": server.port,
                "control_port": server.control_port,
                "compute_ns": config.compute_ns,
                "workers": config.workers,
                "udp_rcvbuf": server.udp_rcvbuf,
            }
        ),
        flush=True,
    )
    try:
        while not server.wait(0.5):
            pass
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    from .cloud import CloudConfig, CloudServer, ControlError
    from .orchestrator import RunOptions, run_simulation
    from .report import write_reports

    topo, diags = load_topology(args.spec, strict=False, for_run=True)
    _print_diags(diags, str(args.spec))
    if topo is None:
        return EXIT_INVALID

    servers: list[CloudServer] = []
    control_ports: dict[str, int] = {}
    try:
        if args.auto_cloud:
            moved: dict[str, tuple[str, int]] = {}
            used = {e.cloud.name: e for _, e in topo.edges()}
            for name, edge in used.items():
                server = CloudServer(
                    CloudConfig(
                        protocol=edge.protocol,
                        host="127.0.0.1",
                        compute_ns=args.compute,
                        workers=args.workers,
                        udp_rcvbuf=args.udp_buf,
                    )
                ).start()
                servers.append(server)
                moved[name] = ("127.0.0.1", server.port)
                control_ports[name] = server.control_port
            topo = with_cloud_address(topo, moved)
        options = RunOptions(
            out_dir=args.out,
            repetitions=args.reps,
            seed=args.seed,
            drain_ns=args.drain,
            control_ports=control_ports,
            trans_mode=args.trans,
        )
        try:
            result = run_simulation(topo, options)
        except ControlError as exc:
            print(
                f"run: {exc}\n"
                "run: start the cloud first (iotecs cloud --port PORT; control port defaults to PORT+1) "
                "or pass --auto-cloud",
                file=sys.stderr,
            )
            return EXIT_RUNTIME
    finally:
        for s in servers:
            s.stop()

    json_path, csv_path = write_reports(args.out, result)
    print(
        json.dumps(
            {
                "ok": result.ok,
                "repetitions": result.repetitions,
                "failed_repetitions": result.failed_repetitions,
                "sim_drop_mean": result.sim_drop,
                "cloud_drop_mean": result.cloud_drop,
                "trans_time_mean_ns": result.trans_time_mean_ns,
                "trans_mode": result.trans_mode,
                "report_json": str(json_path),
                "report_csv": str(csv_path),
            }
        )
    )
    for k, m in enumerate(result.per_repetition):
        if not m.valid:
            print(f"run: repetition {k} failed: {m.failure}", file=sys.stderr)
    if result.aborted:
        print(f"run: aborted: {result.aborted}", file=sys.stderr)
    return EXIT_OK if result.ok else EXIT_RUNTIME


def cmd_report(args: argparse.Namespace) -> int:
    from .report import ReportError, report

    try:
        sys.stdout.write(report(args.results, args.format))
    except ReportError as exc:
        print(f"report: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_deploy(args: argparse.Namespace) -> int:
    from .deploy import emit_deploy_descriptors

    topo, diags = load_topology(args.spec, strict=False, for_run=False)
    _print_diags(diags, str(args.spec))
    if topo is None:
        return EXIT_INVALID
    for path in emit_deploy_descriptors(topo, args.out, image=args.image):
        print(path)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iotecs", description="Edge-to-cloud load simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", help="check a spec file and print diagnostics")
    p.add_argument("spec", type=Path)
    p.add_argument("--strict", action="store_true", help="treat warnings as errors")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run a stress test and write a report tree")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path, default=Path("results"), help="results directory (default: results)")
    p.add_argument("--reps", type=int, default=1, help="repetitions (default: 1)")
    p.add_argument("--seed", type=int, default=0, help="payload seed; repetition k uses seed+k")
    p.add_argument("--drain", type=_duration, default=None, help="drain window after the run (default: two steps)")
    p.add_argument("--trans", choices=("auto", "one-way", "rtt/2"), default="auto", help="transmission time mode")
    p.add_argument("--auto-cloud", action="store_true", help="start a local baseline cloud for each referenced cloud")
    p.add_argument("--compute", type=_duration, default=0, help="auto-cloud compute time per packet (default: 0)")
    p.add_argument("--workers", type=int, default=1, help="auto-cloud worker count (default: 1)")
    p.add_argument("--udp-buf", type=_size, default=4_000_000, help="auto-cloud UDP receive buffer (default: 4MB)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("cloud", help="serve the baseline cloud application")
    p.add_argument("--protocol", type=str.upper, choices=("UDP", "TCP"), default="UDP")
    p.add_argument("--port", type=int, default=1883)
    p.add_argument("--control-port", type=int, default=None, help="control port (default: port+1)")
    p.add_argument("--host", default="0.0.0.0")
    p.add_argument("--compute", type=_duration, default=0, help="busy compute per packet, e.g. 5ms (default: 0)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--udp-buf", type=_size, default=4_000_000, help="UDP receive buffer size (default: 4MB)")
    p.set_defaults(func=cmd_cloud)

    p = sub.add_parser("expected", help="print the expected per-edge send counts as JSON")
    p.add_argument("spec", type=Path)
    p.set_defaults(func=cmd_expected)

    p = sub.add_parser("recommend-step", help="largest step dividing every device interval")
    p.add_argument("intervals", nargs="+", help="device intervals such as 4s 6s")
    p.set_defaults(func=cmd_recommend_step)

    p = sub.add_parser("report", help="render a results tree")
    p.add_argument("results", type=Path)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("deploy", help="write launch descriptors for each simulation node")
    p.add_argument("spec", type=Path)
    p.add_argument("--out", type=Path, default=Path("deploy"))
    p.add_argument("--image", default="iotecs-node:latest", help="container image for Docker nodes")
    p.set_defaults(func=cmd_deploy)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr, format="%(name)s: %(message)s"
    )
    if getattr(args, "reps", 1) < 1:
        print("run: --reps must be at least 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except SpecError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
