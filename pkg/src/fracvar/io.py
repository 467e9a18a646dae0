"""Field files (CSV, PGM) and JSON summaries."""
from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

from .core import Field, GridSpec

_HEADER = re.compile(r"#\s*fracvar-field\s+dim=(\d+)\s+n=(\d+)\s+h=(\S+)\s+rank=(\w+)(?:\s+m=(\d+))?")


def write_field_csv(field: Field, path: str | Path, comment: str | None = None) -> None:
    """One node per row: integer indices, then the components.

    Values are printed with 17 significant digits so a round trip is exact.
    ``comment`` (one line) is written after the header, prefixed by ``#``.
    """
    g = field.grid
    ncomp = int(np.prod(field.component_shape, dtype=int))
    extra = f" m={field.component_shape[0]}" if field.rank == "matrix" else ""
    header = f"# fracvar-field dim={g.dim} n={g.points_per_axis} h={g.spacing!r} rank={field.rank}{extra}"
    # node-major, components contiguous per node
    comps = field.values.reshape((ncomp,) + g.shape).reshape(ncomp, -1).T
    idx = np.indices(g.shape).reshape(g.dim, -1).T
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        if comment:
            fh.write("# " + comment.replace("\n", " ") + "\n")
        for i, row in zip(idx, comps):
            fh.write(",".join(str(int(k)) for k in i) + "," + ",".join(f"{v:.17g}" for v in row) + "\n")


def read_field_csv(path: str | Path) -> Field:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        m = _HEADER.match(first.strip())
        if not m:
            raise ValueError(f"{path}: missing fracvar-field header")
        dim, n, h, rank, mrows = int(m[1]), int(m[2]), float(m[3]), m[4], m[5]
        data = np.loadtxt(fh, delimiter=",", ndmin=2, comments="#")
    grid = GridSpec(dim, n, h * n / 2.0)
    comp_shape = {"scalar": (), "vector": (dim,), "matrix": (int(mrows or 1), dim)}[rank]
    ncomp = int(np.prod(comp_shape, dtype=int))
    if data.shape != (n**dim, dim + ncomp):
        raise ValueError(f"{path}: expected {n**dim} rows of {dim + ncomp} columns")
    idx = data[:, :dim].astype(int)
    vals = np.empty((ncomp,) + grid.shape)
    for c in range(ncomp):
        vals[c][tuple(idx.T)] = data[:, dim + c]
    return Field(grid, vals.reshape(comp_shape + grid.shape), rank)


def write_pgm(field: Field, path: str | Path) -> None:
    """8-bit binary PGM of a 2-D scalar field, min-max normalised (visual only)."""
    if field.grid.dim != 2 or field.rank != "scalar":
        raise ValueError("PGM export needs a 2-D scalar field")
    v = field.values
    lo, hi = float(v.min()), float(v.max())
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    img = np.round(scaled * 255).astype(np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def read_pgm(path: str | Path, box_halfwidth: float = 1.0) -> Field:
    """Read a square binary PGM as a scalar field with values in [0, 1]."""
    raw = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("only binary P5 PGM is supported")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if rows != cols:
        raise ValueError("PGM must be square")
    img = np.frombuffer(raw[pos + 1 : pos + 1 + rows * cols], dtype=np.uint8).reshape(rows, cols)
    return Field(GridSpec(2, rows, box_halfwidth), img.astype(float) / maxval)


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, UTF-8, numpy scalars/arrays unwrapped."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, default=_default)


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(dumps_json(obj) + "\n", encoding="utf-8")


def _default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if hasattr(o, "to_dict"):
        return o.to_dict()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")
