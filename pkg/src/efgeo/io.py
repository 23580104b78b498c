"""CSV serialization of grid fields (RFC 4180: CRLF rows, header row).

Floats are written with ``repr``, the shortest decimal that round-trips to
the same binary double, so identically configured runs produce byte-identical
files and reading back loses nothing.

Layout: one row per node in C order; the first ``dim`` columns are the node
coordinates ``q1..qd``, the remaining columns hold the field components.
Complex fields get ``_re``/``_im`` column pairs; tensor component axes are
flattened into suffixes like ``a[0,1]``.
"""

from __future__ import annotations

import csv
import itertools

import numpy as np

from .errors import SpecError
from .grids import Grid


def _fmt(x) -> str:
    return repr(float(x))


def _component_labels(label: str, comp_shape: tuple[int, ...]) -> list[str]:
    if not comp_shape:
        return [label]
    return [
        label + "[" + ",".join(str(i) for i in idx) + "]"
        for idx in itertools.product(*(range(n) for n in comp_shape))
    ]


def write_field(path, grid: Grid, values: np.ndarray, label: str) -> None:
    """Write a real or complex field of shape ``grid.shape + comp_shape``."""
    values = np.asarray(values)
    if values.shape[: grid.dim] != grid.shape:
        raise SpecError(
            f"field shape {values.shape} does not start with grid shape {grid.shape}"
        )
    comp_shape = values.shape[grid.dim:]
    labels = _component_labels(label, comp_shape)
    is_complex = np.iscomplexobj(values)
    header = [f"q{i + 1}" for i in range(grid.dim)]
    for lab in labels:
        header += [lab + "_re", lab + "_im"] if is_complex else [lab]
    pts = grid.points().reshape(-1, grid.dim)
    flat = values.reshape(len(pts), -1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row_pt, row_val in zip(pts, flat):
            row = [_fmt(q) for q in row_pt]
            for v in row_val:
                if is_complex:
                    row += [_fmt(v.real), _fmt(v.imag)]
                else:
                    row.append(_fmt(v))
            w.writerow(row)


def write_mask(path, grid: Grid, mask: np.ndarray) -> None:
    """Write a boolean node mask as 0/1 integers."""
    pts = grid.points().reshape(-1, grid.dim)
    flat = np.asarray(mask, dtype=bool).reshape(-1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow([f"q{i + 1}" for i in range(grid.dim)] + ["mask"])
        for row_pt, m in zip(pts, flat):
            w.writerow([_fmt(q) for q in row_pt] + [str(int(m))])


def read_mask(path, grid: Grid) -> np.ndarray:
    rows = _read_rows(path)
    vals = np.array([int(r[-1]) for r in rows[1:]], dtype=bool)
    if vals.size != grid.size:
        raise SpecError(f"mask file has {vals.size} rows, grid has {grid.size} nodes")
    return vals.reshape(grid.shape)


def _read_rows(path) -> list[list[str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        return [row for row in csv.reader(fh) if row]


def read_field(path, grid: Grid) -> np.ndarray:
    """Read a field written by :func:`write_field`; infers shape and dtype
    from the header."""
    rows = _read_rows(path)
    if not rows:
        raise SpecError(f"empty CSV file {path}")
    header = rows[0]
    data_cols = header[grid.dim:]
    if not data_cols:
        raise SpecError(f"CSV {path} has no data columns for a {grid.dim}-d grid")
    is_complex = data_cols[0].endswith("_re")
    n_comp = len(data_cols) // 2 if is_complex else len(data_cols)
    body = rows[1:]
    if len(body) != grid.size:
        raise SpecError(f"CSV {path} has {len(body)} rows, grid has {grid.size} nodes")
    raw = np.array([[float(x) for x in r[grid.dim:]] for r in body])
    if is_complex:
        vals = raw[:, 0::2] + 1j * raw[:, 1::2]
    else:
        vals = raw
    comp_shape = _parse_comp_shape(data_cols, is_complex)
    return vals.reshape(grid.shape + comp_shape)


def _parse_comp_shape(data_cols: list[str], is_complex: bool) -> tuple[int, ...]:
    names = data_cols[::2] if is_complex else data_cols
    last = names[-1]
    if is_complex:
        last = last[: -len("_re")]
    if "[" not in last:
        return (len(names),) if len(names) > 1 else ()
    idx = last[last.index("[") + 1 : -1].split(",")
    return tuple(int(i) + 1 for i in idx)


def write_table(path, header: list[str], rows) -> None:
    """Generic numeric table (e.g. eigenvalues, sweep summaries)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.floating)) else str(v)
                        for v in row])
