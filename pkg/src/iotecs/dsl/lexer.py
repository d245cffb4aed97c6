"""Tokenizer for specification documents.

The token set is deliberately small: punctuation, double-quoted strings and
"words". A word is any run of letters, digits, ``_``, ``.`` and ``-``, so
``192.168.0.2``, ``500ms``, ``2G`` and ``SN1`` all lex the same way and the
parser interprets them according to the field they appear in.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .diagnostics import ERROR, Diagnostic


class Tok(enum.Enum):
    WORD = "word"
    STRING = "string"
    COLON = "':'"
    COMMA = "','"
    LBRACE = "'{'"
    RBRACE = "'}'"
    LBRACKET = "'['"
    RBRACKET = "']'"
    EOF = "end of input"


@dataclass(frozen=True)
class Token:
    kind: Tok
    text: str
    line: int
    column: int

    def describe(self) -> str:
        if self.kind is Tok.WORD:
            return repr(self.text)
        if self.kind is Tok.STRING:
            return "string literal"
        return self.kind.value


_PUNCT = {
    ":": Tok.COLON,
    ",": Tok.COMMA,
    "{": Tok.LBRACE,
    "}": Tok.RBRACE,
    "[": Tok.LBRACKET,
    "]": Tok.RBRACKET,
}

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r", "0": "\0"}


def _is_word_char(ch: str) -> bool:
    return ch.isascii() and (ch.isalnum() or ch in "_.-")


def tokenize(source: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def error(msg: str, ln: int, cl: int) -> None:
        diags.append(Diagnostic(ERROR, ln, cl, msg, "syntax"))

    while i < n:
        ch = source[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r\ufeff":
            i += 1
            col += 1
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                i += 1
                col += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            chars: list[str] = []
            closed = False
            while i < n:
                c = source[i]
                if c == '"':
                    i += 1
                    col += 1
                    closed = True
                    break
                if c == "\n":
                    break
                if c == "\\":
                    nxt = source[i + 1] if i + 1 < n else ""
                    if nxt in _ESCAPES:
                        chars.append(_ESCAPES[nxt])
                        i += 2
                        col += 2
                        continue
                    if nxt == "x" and _is_hex(source[i + 2 : i + 4]):
                        chars.append(chr(int(source[i + 2 : i + 4], 16)))
                        i += 4
                        col += 4
                        continue
                    error(f"invalid escape sequence '\\{nxt}'", line, col)
                    i += 1
                    col += 1
                    continue
                chars.append(c)
                i += 1
                col += 1
            if not closed:
                error("unterminated string literal", start_line, start_col)
            tokens.append(Token(Tok.STRING, "".join(chars), start_line, start_col))
            continue
        if _is_word_char(ch):
            start = i
            start_col = col
            while i < n and _is_word_char(source[i]):
                i += 1
                col += 1
            tokens.append(Token(Tok.WORD, source[start:i], line, start_col))
            continue
        error(f"unexpected character {ch!r}", line, col)
        i += 1
        col += 1

    tokens.append(Token(Tok.EOF, "", line, col))
    return tokens, diags


def _is_hex(s: str) -> bool:
    return len(s) == 2 and all(c in "0123456789abcdefABCDEF" for c in s)
