from __future__ import annotations

from dataclasses import dataclass

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Diagnostic:
    severity: str
    line: int
    column: int
    message: str
    code: str = ""

    @property
    def is_error(self) -> bool:
        return self.severity == ERROR

    def format(self, filename: str = "<spec>") -> str:
        return f"{filename}:{self.line}:{self.column}: {self.severity}: {self.message}"


class SpecError(Exception):
    """Raised when a document cannot be turned into a syntax tree or topology."""

    def __init__(self, diagnostics: list[Diagnostic]) -> None:
        self.diagnostics = diagnostics
        first = diagnostics[0].format() if diagnostics else "invalid specification"
        more = f" (+{len(diagnostics) - 1} more)" if len(diagnostics) > 1 else ""
        super().__init__(first + more)


def has_errors(diagnostics: list[Diagnostic]) -> bool:
    return any(d.is_error for d in diagnostics)
