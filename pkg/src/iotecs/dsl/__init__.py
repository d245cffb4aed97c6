"""Front end for the edge-to-cloud simulation language (``.iotecs`` files)."""

from .ast import (
    MAX,
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
from .diagnostics import ERROR, WARNING, Diagnostic, SpecError, has_errors
from .parser import parse, parse_with_diagnostics
from .printer import pretty_print
from .units import MemorySize, UnitError, format_duration, parse_duration, parse_payload_size

__all__ = [
    "MAX",
    "ERROR",
    "WARNING",
    "CloudSpec",
    "DeviceSpec",
    "Diagnostic",
    "EdgeDeviceSpec",
    "Loc",
    "MemorySize",
    "PayloadLiteral",
    "PayloadSize",
    "PlatformSpec",
    "Ref",
    "SimNodeSpec",
    "SimulatorSpec",
    "SpecAst",
    "SpecError",
    "UnitError",
    "format_duration",
    "has_errors",
    "parse",
    "parse_duration",
    "parse_payload_size",
    "parse_with_diagnostics",
    "pretty_print",
]
