"""CSV ingestion and emission.

Input files are headered CSVs.  By default columns named ``x_*``, ``y_*`` and
``z_*`` form the X, Y and Z blocks; explicit column lists override that.
Floats are written with ``repr`` (shortest round-trip form) so output is
byte-stable and re-reads to identical values.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

from .models import Dataset


class InputError(ValueError):
    """Malformed or inconsistent user input; maps to CLI exit code 2."""


def fmt_float(x) -> str:
    return repr(float(x))


def _select(header, explicit, prefix, path):
    if explicit:
        missing = [c for c in explicit if c not in header]
        if missing:
            raise InputError(f"{path}: unknown column(s) {', '.join(missing)}")
        return [header.index(c) for c in explicit]
    return [i for i, h in enumerate(header) if h.lower().startswith(prefix)]


def read_dataset(path, x_cols=None, y_cols=None, z_cols=None) -> Dataset:
    """Read a headered CSV into a :class:`Dataset`.

    Errors name the file line (the header is line 1) of the offending cell.
    """
    path = os.fspath(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"{path}: cannot open ({exc.strerror})") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        idx = {}
        for block, cols, prefix in (("X", x_cols, "x_"), ("Y", y_cols, "y_"), ("Z", z_cols, "z_")):
            idx[block] = _select(header, cols, prefix, path)
            if not idx[block]:
                raise InputError(f"{path}: no columns selected for {block} "
                                 f"(expected a '{prefix}*' header or an explicit list)")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            vals = []
            for j, cell in enumerate(row):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}:{line}: non-numeric value {cell!r} "
                                     f"in column {header[j]!r} (row {len(rows) + 1})") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}:{line}: non-finite value {cell!r} "
                                     f"in column {header[j]!r} (row {len(rows) + 1})")
                vals.append(v)
            rows.append(vals)
    if len(rows) < 2:
        raise InputError(f"{path}: need at least two data rows")
    data = np.array(rows)
    return Dataset(data[:, idx["X"]], data[:, idx["Y"]], data[:, idx["Z"]])


def write_dataset(path, d: Dataset) -> None:
    header = ([f"x_{k + 1}" for k in range(d.d_x)] + [f"y_{k + 1}" for k in range(d.d_y)]
              + [f"z_{k + 1}" for k in range(d.d_z)])
    block = np.hstack([d.X, d.Y, d.Z])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in block:
            w.writerow([fmt_float(v) for v in row])


POWER_COLUMNS = ["scenario", "r", "beta", "n", "d", "method", "alpha", "B", "n_reps",
                 "rejections", "rejection_rate", "mc_std_err", "seed", "wall_ms"]


def power_row(cell, timing=True) -> list:
    s = cell.scenario
    return [s.name.value, fmt_float(s.r), fmt_float(s.beta), str(s.n), str(s.d),
            cell.method.value, fmt_float(cell.alpha), str(cell.B), str(cell.n_reps),
            str(cell.rejections), fmt_float(cell.rejection_rate), fmt_float(cell.mc_std_err),
            str(cell.seed), str(round(cell.wall_time * 1000)) if timing else ""]


class PowerCsvWriter:
    """Writes one row per finished cell and flushes immediately."""

    def __init__(self, fh, timing=True):
        self._fh = fh
        self._w = csv.writer(fh, lineterminator="\n")
        self._timing = timing
        self._w.writerow(POWER_COLUMNS)
        fh.flush()

    def __call__(self, cell):
        self._w.writerow(power_row(cell, self._timing))
        self._fh.flush()


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys use flag names."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise InputError(f"{path}: cannot open config ({exc.strerror})") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InputError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out
