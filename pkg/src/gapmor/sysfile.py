"""
System file module for gapmor.
Reads and writes state-space systems as plain-text coordinate triplets.

Layout::

    % comment lines start with % or #
    lti <n> <m> <p>
    A <n> <n> <nnz>
    <row> <col> <value>      (1-based, nnz lines)
    B <n> <m> <nnz>
    ...
    C <p> <n> <nnz>
    ...
    D <p> <m> <nnz>          (optional, zero when absent)
"""

import sys as _sys
from pathlib import Path
from typing import IO, Iterator, List, Optional, Tuple, Union

import numpy as np

from .lti import StateSpace

PathOrStream = Union[str, Path, IO[str]]

COMMENT_PREFIXES = ("%", "#")
SECTIONS = ("A", "B", "C", "D")


class SystemFileError(Exception):
    """Base exception for system file errors."""
    pass


class ParseError(SystemFileError):
    """Raised when a system file cannot be parsed."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        location = f"line {line}, column {column}: " if line else ""
        super().__init__(f"{location}{message}")


class HeaderMismatchError(SystemFileError):
    """Raised when a section's dimensions disagree with the header."""
    pass


def _tokens(text: str) -> Iterator[Tuple[int, List[Tuple[int, str]]]]:
    """Yield (line number, [(column, token), ...]) for every content line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith(COMMENT_PREFIXES):
            continue
        fields = []
        pos = 0
        for token in raw.split():
            pos = raw.index(token, pos)
            fields.append((pos + 1, token))
            pos += len(token)
        yield lineno, fields


def _int(token: Tuple[int, str], lineno: int) -> int:
    column, text = token
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got '{text}'", lineno, column) from None
    if value < 0:
        raise ParseError(f"expected a nonnegative integer, got {value}", lineno, column)
    return value


def _float(token: Tuple[int, str], lineno: int) -> float:
    column, text = token
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"expected a number, got '{text}'", lineno, column) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite value '{text}'", lineno, column)
    return value


def _expect_fields(fields, count: int, lineno: int, what: str) -> None:
    if len(fields) != count:
        column = fields[min(len(fields), count) - 1][0] if fields else 1
        raise ParseError(f"{what} needs {count} fields, got {len(fields)}", lineno, column)


def parse_system(text: str) -> StateSpace:
    """
    Parse the text of a system file.

    Raises:
        ParseError: On malformed or truncated input
        HeaderMismatchError: If a section's dimensions disagree with the header
    """
    lines = _tokens(text)
    last_line = len(text.splitlines())

    def next_line(what: str):
        try:
            return next(lines)
        except StopIteration:
            raise ParseError(f"unexpected end of file, expected {what}", last_line + 1, 1) from None

    lineno, fields = next_line("header")
    if fields[0][1] != "lti":
        raise ParseError(f"expected header 'lti n m p', got '{fields[0][1]}'", lineno, fields[0][0])
    _expect_fields(fields, 4, lineno, "header")
    n, m, p = (_int(tok, lineno) for tok in fields[1:])
    shapes = {"A": (n, n), "B": (n, m), "C": (p, n), "D": (p, m)}

    matrices = {}
    for name in SECTIONS:
        try:
            lineno, fields = next(lines)
        except StopIteration:
            if name == "D":
                break
            raise ParseError(f"unexpected end of file, expected section {name}", last_line + 1, 1) from None
        if fields[0][1] != name:
            raise ParseError(f"expected section '{name}', got '{fields[0][1]}'", lineno, fields[0][0])
        _expect_fields(fields, 4, lineno, f"section {name}")
        rows, cols, nnz = (_int(tok, lineno) for tok in fields[1:])
        if (rows, cols) != shapes[name]:
            raise HeaderMismatchError(
                f"line {lineno}: section {name} is {rows}x{cols}, header requires "
                f"{shapes[name][0]}x{shapes[name][1]}"
            )

        matrix = np.zeros((rows, cols))
        seen = set()
        for _ in range(nnz):
            lineno, fields = next_line(f"{nnz} entries of {name}")
            _expect_fields(fields, 3, lineno, "entry")
            i, j = _int(fields[0], lineno), _int(fields[1], lineno)
            if not 1 <= i <= rows:
                raise ParseError(f"row index {i} outside 1..{rows}", lineno, fields[0][0])
            if not 1 <= j <= cols:
                raise ParseError(f"column index {j} outside 1..{cols}", lineno, fields[1][0])
            if (i, j) in seen:
                raise ParseError(f"duplicate entry ({i}, {j}) in {name}", lineno, fields[0][0])
            seen.add((i, j))
            matrix[i - 1, j - 1] = _float(fields[2], lineno)
        matrices[name] = matrix

    leftover = next(lines, None)
    if leftover is not None:
        lineno, fields = leftover
        raise ParseError(f"unexpected content '{fields[0][1]}'", lineno, fields[0][0])
    return StateSpace(matrices["A"], matrices["B"], matrices["C"], matrices.get("D"))


def read_system(path: PathOrStream) -> StateSpace:
    """
    Read a system file.

    Args:
        path: File path, "-" for stdin, or an open text stream

    Raises:
        ParseError: If the file cannot be read or parsed
        HeaderMismatchError: If a section disagrees with the header
    """
    if hasattr(path, "read"):
        return parse_system(path.read())
    if str(path) == "-":
        return parse_system(_sys.stdin.read())
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror or e}") from e
    return parse_system(text)


def _stored(matrix: np.ndarray) -> np.ndarray:
    # -0.0 is kept as an explicit entry so that round trips are bit-exact
    return (matrix != 0.0) | np.signbit(matrix)


def _section(name: str, matrix: np.ndarray) -> List[str]:
    rows, cols = np.nonzero(_stored(matrix))
    lines = [f"{name} {matrix.shape[0]} {matrix.shape[1]} {rows.size}"]
    for i, j in zip(rows, cols):
        lines.append(f"{i + 1} {j + 1} {matrix[i, j]:.17g}")
    return lines


def format_system(sys: StateSpace, comment: Optional[str] = None) -> str:
    """Render a system in the coordinate triplet format."""
    lines = []
    if comment:
        lines.extend(f"% {line}" for line in comment.splitlines())
    lines.append(f"lti {sys.n} {sys.m} {sys.p}")
    lines.extend(_section("A", sys.a))
    lines.extend(_section("B", sys.b))
    lines.extend(_section("C", sys.c))
    if np.any(_stored(sys.d)):
        lines.extend(_section("D", sys.d))
    return "\n".join(lines) + "\n"


def write_system(sys: StateSpace, path: PathOrStream, comment: Optional[str] = None) -> None:
    """
    Write a system file; values carry 17 significant digits so that
    reading the file back reproduces every double exactly.

    Args:
        sys: System to write
        path: File path, "-" for stdout, or an open text stream
        comment: Optional leading comment
    """
    text = format_system(sys, comment)
    if hasattr(path, "write"):
        path.write(text)
    elif str(path) == "-":
        _sys.stdout.write(text)
    else:
        Path(path).write_text(text)
