"""Exact unit arithmetic for durations, payload sizes and memory sizes.

All conversions work on the decimal digits of the token, never on floats.
A magnitude may carry a fractional part (``0.5s``) as long as the result is a
whole number of the base unit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

NS_PER_MS = 1_000_000

DURATION_UNITS: dict[str, int] = {
    "ms": NS_PER_MS,
    "s": 1000 * NS_PER_MS,
    "m": 60 * 1000 * NS_PER_MS,
    "h": 60 * 60 * 1000 * NS_PER_MS,
}

# Decimal units: 1 kB = 1000 B, 1 MB = 1000 kB.
SIZE_UNITS: dict[str, int] = {"B": 1, "kB": 1000, "MB": 1000 * 1000}

MEMORY_UNITS = ("K", "M", "G", "T")

_QUANTITY = re.compile(r"^(?P<int>\d+)(?:\.(?P<frac>\d+))?(?P<unit>[A-Za-z]*)$")


class UnitError(ValueError):
    """A quantity token is malformed, uses an unknown unit, or is out of range."""


def _split(token: str) -> tuple[str, str, str]:
    m = _QUANTITY.match(token.strip())
    if m is None:
        raise UnitError(f"malformed quantity {token!r}")
    return m["int"], m["frac"] or "", m["unit"]


def _scale(int_part: str, frac: str, factor: int, token: str, base: str) -> int:
    numerator = int(int_part + frac) * factor
    denominator = 10 ** len(frac)
    value, rem = divmod(numerator, denominator)
    if rem:
        raise UnitError(f"{token!r} is not a whole number of {base}")
    return value


def parse_duration(
    token: str,
    *,
    allow_zero: bool = False,
    units: tuple[str, ...] = tuple(DURATION_UNITS),
) -> int:
    """Convert ``"500ms"``, ``"10s"``, ``"1h"`` ... to integer nanoseconds.

    The result is always a whole number of milliseconds, the finest unit the
    language offers. A bare ``0`` is accepted only when *allow_zero* is set.
    """
    int_part, frac, unit = _split(token)
    if not unit:
        if allow_zero and int(int_part + frac) == 0:
            return 0
        raise UnitError(f"missing time unit in {token!r} (use one of {', '.join(units)})")
    if unit not in DURATION_UNITS:
        raise UnitError(f"unknown time unit {unit!r} in {token!r}")
    if unit not in units:
        raise UnitError(f"time unit {unit!r} not allowed here (use one of {', '.join(units)})")
    ns = _scale(int_part, frac, DURATION_UNITS[unit], token, "milliseconds")
    if ns % NS_PER_MS:
        raise UnitError(f"{token!r} is not a whole number of milliseconds")
    if ns == 0 and not allow_zero:
        raise UnitError(f"duration {token!r} must be positive")
    return ns


def parse_payload_size(token: str) -> int:
    """Convert ``"8B"``, ``"1kB"``, ``"2MB"`` to a byte count (decimal units)."""
    int_part, frac, unit = _split(token)
    if unit not in SIZE_UNITS:
        raise UnitError(f"unknown size unit {unit!r} in {token!r} (use B, kB or MB)")
    size = _scale(int_part, frac, SIZE_UNITS[unit], token, "bytes")
    if size == 0:
        raise UnitError(f"payload size {token!r} must be at least 1 byte")
    return size


def format_duration(ns: int) -> str:
    """Shortest exact rendering, e.g. 1_500_000_000 -> ``"1500ms"``, 2e9 -> ``"2s"``."""
    if ns == 0:
        return "0ms"
    for unit in ("h", "m", "s", "ms"):
        factor = DURATION_UNITS[unit]
        if ns % factor == 0:
            return f"{ns // factor}{unit}"
    raise ValueError(f"{ns} ns is not a whole number of milliseconds")


def format_size(size: int) -> str:
    for unit in ("MB", "kB", "B"):
        factor = SIZE_UNITS[unit]
        if size % factor == 0:
            return f"{size // factor}{unit}"
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class MemorySize:
    """Memory limit as written in a document (``2G``); binary multiples."""

    amount: int
    unit: str

    @classmethod
    def parse(cls, token: str) -> MemorySize:
        m = re.match(r"^(\d+)([KMGTkmgt])[Bb]?$", token.strip())
        if m is None:
            raise UnitError(f"malformed memory size {token!r} (expected e.g. 512M or 2G)")
        amount = int(m[1])
        if amount == 0:
            raise UnitError(f"memory size {token!r} must be positive")
        return cls(amount, m[2].upper())

    @property
    def bytes(self) -> int:
        return self.amount * 1024 ** (MEMORY_UNITS.index(self.unit) + 1)

    def __str__(self) -> str:
        return f"{self.amount}{self.unit}"
