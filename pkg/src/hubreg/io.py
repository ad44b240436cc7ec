"""CSV formats.

Dataset files have header ``y,x1,...,xd`` and one observation per row.
Vector files (coefficients, noise) have header ``index,value``. Any file may
start with ``#`` comment lines, which readers skip. Floats are written with
``repr`` so they round-trip exactly.
"""

import csv
import io
from pathlib import Path

import numpy as np

from .huber import Dataset


class FormatError(ValueError):
    """Malformed input file; the message carries the offending line number."""


def _comment_block(lines) -> str:
    return "".join(f"# {line}\n" for line in lines)


def _fmt(x: float) -> str:
    return repr(float(x))


def dataset_to_csv(data: Dataset, comments=()) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(comments))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["y"] + [f"x{j + 1}" for j in range(data.d)])
    for yi, row in zip(data.y, data.X):
        w.writerow([_fmt(yi)] + [_fmt(v) for v in row])
    return buf.getvalue()


def vector_to_csv(v, comments=()) -> str:
    buf = io.StringIO()
    buf.write(_comment_block(comments))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for i, x in enumerate(np.asarray(v, dtype=float)):
        w.writerow([i, _fmt(x)])
    return buf.getvalue()


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _rows(text: str):
    """Yield ``(line_number, fields)`` for non-comment, non-blank lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        yield lineno, next(csv.reader([line]))


def _parse_floats(fields, lineno):
    try:
        vals = [float(f) for f in fields]
    except ValueError as exc:
        raise FormatError(f"line {lineno}: {exc}") from None
    if not all(np.isfinite(vals)):
        raise FormatError(f"line {lineno}: non-finite value")
    return vals


def parse_dataset(text: str) -> Dataset:
    rows = _rows(text)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise FormatError("line 1: empty file, expected header y,x1,...,xd") from None
    header = [h.strip() for h in header]
    d = len(header) - 1
    expected = ["y"] + [f"x{j + 1}" for j in range(d)]
    if d < 1 or header != expected:
        raise FormatError(f"line {lineno}: expected header {','.join(expected) if d >= 1 else 'y,x1,...,xd'}")
    body = []
    for lineno, fields in rows:
        if len(fields) != d + 1:
            raise FormatError(f"line {lineno}: expected {d + 1} fields, got {len(fields)}")
        body.append(_parse_floats(fields, lineno))
    if not body:
        raise FormatError(f"line {lineno}: no observations after header")
    arr = np.array(body, dtype=float)
    return Dataset(arr[:, 1:], arr[:, 0])


def parse_vector(text: str) -> np.ndarray:
    rows = _rows(text)
    try:
        lineno, header = next(rows)
    except StopIteration:
        raise FormatError("line 1: empty file, expected header index,value") from None
    if [h.strip() for h in header] != ["index", "value"]:
        raise FormatError(f"line {lineno}: expected header index,value")
    vals = []
    for lineno, fields in rows:
        if len(fields) != 2:
            raise FormatError(f"line {lineno}: expected 2 fields, got {len(fields)}")
        idx, val = _parse_floats(fields, lineno)
        if idx != len(vals):
            raise FormatError(f"line {lineno}: index {idx:g} out of order")
        vals.append(val)
    return np.array(vals, dtype=float)


def read_dataset(path) -> Dataset:
    return parse_dataset(Path(path).read_text(encoding="utf-8"))


def read_vector(path) -> np.ndarray:
    return parse_vector(Path(path).read_text(encoding="utf-8"))
