"""Plain-text readers and writers for curves, responses, configs and indices."""

from __future__ import annotations

import csv
import os
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .fda import CurveSet

__all__ = [
    "InputError",
    "read_curves_csv",
    "write_curves_csv",
    "read_response_csv",
    "write_response_csv",
    "read_index_csv",
    "read_config",
]

PathLike = Union[str, "os.PathLike[str]"]


class InputError(ValueError):
    """Unreadable or ill-formed input file; the message names the file and location."""


def _rows(path: PathLike) -> List[List[str]]:
    try:
        with open(path, newline="") as fh:
            return [row for row in csv.reader(fh)]
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"{path}: cannot read ({exc})") from None


def _float(cell: str, path, r: int, c: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise InputError(f"{path}: row {r}, column {c}: not a number: {cell!r}") from None
    if not np.isfinite(v):
        raise InputError(f"{path}: row {r}, column {c}: non-finite value {cell!r}")
    return v


def read_curves_csv(path: PathLike) -> CurveSet:
    """First row holds the grid; each later row is one curve, with empty cells unobserved."""
    rows = [row for row in _rows(path) if any(cell.strip() for cell in row)]
    if len(rows) < 2:
        raise InputError(f"{path}: need a grid row and at least one curve row")
    grid = np.array([_float(cell.strip(), path, 1, c) for c, cell in enumerate(rows[0], start=1)])
    T = grid.size
    values = np.full((len(rows) - 1, T), np.nan)
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != T:
            raise InputError(f"{path}: row {r} has {len(row)} fields, expected {T}")
        for c, cell in enumerate(row, start=1):
            cell = cell.strip()
            if cell:
                values[r - 2, c - 1] = _float(cell, path, r, c)
    mask = ~np.isnan(values)
    try:
        return CurveSet(grid, values, None if mask.all() else mask)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None


def write_curves_csv(path: PathLike, curves: CurveSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([repr(float(t)) for t in curves.grid])
        mask = curves.mask if curves.is_sparse else np.ones(curves.values.shape, dtype=bool)
        for vals, obs in zip(curves.values, mask):
            w.writerow([repr(float(v)) if o else "" for v, o in zip(vals, obs)])


def _column(path: PathLike, convert) -> list:
    rows = [row for row in _rows(path) if any(cell.strip() for cell in row)]
    out = []
    for r, row in enumerate(rows, start=1):
        if len(row) != 1:
            raise InputError(f"{path}: row {r}: expected one value per line, got {len(row)}")
        try:
            out.append(convert(row[0].strip()))
        except ValueError:
            if r == 1:
                continue  # header line
            raise InputError(f"{path}: row {r}, column 1: invalid value {row[0]!r}") from None
    if not out:
        raise InputError(f"{path}: no values")
    return out


def _finite_float(cell: str) -> float:
    v = float(cell)
    if not np.isfinite(v):
        raise ValueError(cell)
    return v


def read_response_csv(path: PathLike) -> NDArray:
    """One float per line, with an optional non-numeric header line."""
    return np.asarray(_column(path, _finite_float), dtype=float)


def write_response_csv(path: PathLike, y: ArrayLike, header: str = "y") -> None:
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for v in np.asarray(y, dtype=float).ravel():
            fh.write(repr(float(v)) + "\n")


def read_index_csv(path: PathLike) -> NDArray:
    """Zero-based integer row indices, one per line, optional header."""
    return np.asarray(_column(path, int), dtype=int)


def read_config(path: PathLike) -> Dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment. Keys are normalised to underscores."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc})") from None
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InputError(f"{path}: line {lineno}: empty key")
        out[key.replace("-", "_")] = value
    return out
