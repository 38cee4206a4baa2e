"""Plain-text artifact files: meshes, nodal solutions and branch tables.

Floats are written with ``repr`` so every value parses back bit-exact.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Mesh

MESH_HEADER = "elcont-mesh v1"
SOLUTION_HEADER = "elcont-solution v1"
BRANCH_COLUMNS = ["idx", "s", "mu", "norm_inf", "norm_l2", "n_neg", "det_sign", "type", "newton_iters", "np"]
EVENT_COLUMNS = ["idx", "type", "mu"]


class FormatError(ValueError):
    pass


def _f(x):
    return repr(float(x))


def _mesh_lines(mesh: Mesh):
    yield f"np {mesh.n_p}"
    yield f"nt {mesh.n_t}"
    for x, y in mesh.points:
        yield f"{_f(x)} {_f(y)}"
    for i, j, k in mesh.triangles:
        yield f"{i} {j} {k}"
    yield f"nb {len(mesh.boundary_edges)}"
    for i, j in mesh.boundary_edges:
        yield f"{i} {j}"


def write_mesh(path, mesh: Mesh):
    path = Path(path)
    path.write_text("\n".join([MESH_HEADER, *_mesh_lines(mesh)]) + "\n")
    return path


class _Lines:
    def __init__(self, path):
        self.path = path
        self.lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
        self.lines = [ln for ln in self.lines if ln and not ln.startswith("#")]
        self.pos = 0

    def next(self):
        if self.pos >= len(self.lines):
            raise FormatError(f"{self.path}: unexpected end of file")
        self.pos += 1
        return self.lines[self.pos - 1]

    def count(self, key):
        ln = self.next()
        parts = ln.split()
        if len(parts) != 2 or parts[0] != key:
            raise FormatError(f"{self.path}: expected '{key} <int>', got {ln!r}")
        try:
            n = int(parts[1])
        except ValueError:
            raise FormatError(f"{self.path}: bad count in {ln!r}") from None
        if n < 0:
            raise FormatError(f"{self.path}: negative count in {ln!r}")
        return n

    def rows(self, n, ncol, dtype):
        out = np.empty((n, ncol), dtype=dtype)
        for r in range(n):
            ln = self.next()
            parts = ln.split()
            if len(parts) != ncol:
                raise FormatError(f"{self.path}: expected {ncol} values, got {ln!r}")
            try:
                out[r] = [dtype(p) for p in parts]
            except ValueError:
                raise FormatError(f"{self.path}: cannot parse {ln!r}") from None
        return out


def _read_mesh_body(rd: _Lines):
    n_p = rd.count("np")
    n_t = rd.count("nt")
    pts = rd.rows(n_p, 2, float)
    tri = rd.rows(n_t, 3, int)
    n_b = rd.count("nb")
    bnd = rd.rows(n_b, 2, int)
    if not np.all(np.isfinite(pts)):
        raise FormatError(f"{rd.path}: non-finite coordinates")
    try:
        return Mesh(pts, tri, bnd)
    except ValueError as exc:
        raise FormatError(f"{rd.path}: {exc}") from None


def read_mesh(path) -> Mesh:
    rd = _Lines(path)
    if rd.next() != MESH_HEADER:
        raise FormatError(f"{path}: not an {MESH_HEADER} file")
    return _read_mesh_body(rd)


@dataclass
class SolutionFile:
    mesh: Mesh
    U: np.ndarray
    mu: float


def write_solution(path, mesh: Mesh, U, mu):
    U = np.asarray(U, dtype=float)
    if U.shape != (mesh.n_p,):
        raise ValueError("solution length must equal the number of mesh points")
    path = Path(path)
    lines = [SOLUTION_HEADER, *_mesh_lines(mesh), f"mu {_f(mu)}", *(_f(u) for u in U)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_solution(path) -> SolutionFile:
    rd = _Lines(path)
    if rd.next() != SOLUTION_HEADER:
        raise FormatError(f"{path}: not an {SOLUTION_HEADER} file")
    mesh = _read_mesh_body(rd)
    ln = rd.next().split()
    if len(ln) != 2 or ln[0] != "mu":
        raise FormatError(f"{path}: expected 'mu <float>'")
    try:
        mu = float(ln[1])
    except ValueError:
        raise FormatError(f"{path}: bad mu value {ln[1]!r}") from None
    U = rd.rows(mesh.n_p, 1, float).ravel()
    if rd.pos != len(rd.lines):
        raise FormatError(f"{path}: trailing data after {mesh.n_p} values")
    if not (np.all(np.isfinite(U)) and np.isfinite(mu)):
        raise FormatError(f"{path}: non-finite values")
    return SolutionFile(mesh, U, mu)


def branch_rows(branch):
    for i, p in enumerate(branch.points):
        yield {
            "idx": i,
            "s": p.s,
            "mu": p.mu,
            "norm_inf": p.norm_inf,
            "norm_l2": p.norm_l2,
            "n_neg": p.n_neg,
            "det_sign": p.det_sign,
            "type": p.point_type,
            "newton_iters": p.newton_iters,
            "np": p.np,
        }


def _cell(v):
    return _f(v) if isinstance(v, (float, np.floating)) else str(v)


def write_branch(path, branch, snapshot_every=0):
    """Branch CSV, the ``.events`` sidecar and solution snapshots.

    Snapshots go next to the CSV as ``<stem>_<idx>.sol`` for every event
    point and its predecessor (the bracketing segment), and for every
    ``snapshot_every``-th point (0 disables the latter). Returns the list of
    written paths.
    """
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BRANCH_COLUMNS)
        for row in branch_rows(branch):
            w.writerow([_cell(row[c]) for c in BRANCH_COLUMNS])
    ev = path.with_suffix(".events")
    with ev.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for i, kind in branch.events:
            w.writerow([i, kind, _f(branch.points[i].mu)])
    written = [path, ev]
    snap = {j for i, _ in branch.events for j in (i - 1, i) if j >= 0}
    if snapshot_every > 0:
        snap |= set(range(0, len(branch), snapshot_every))
    for i in sorted(snap):
        p = branch.points[i]
        written.append(write_solution(path.with_name(f"{path.stem}_{i}.sol"), p.mesh, p.U, p.mu))
    return written


_INT_COLS = {"idx", "n_neg", "det_sign", "newton_iters", "np"}


def read_branch(path):
    """Rows of a branch CSV as dicts with typed values."""
    with Path(path).open(newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != BRANCH_COLUMNS:
            raise FormatError(f"{path}: unexpected header {rd.fieldnames}")
        out = []
        for row in rd:
            out.append({k: (v if k == "type" else int(v) if k in _INT_COLS else float(v)) for k, v in row.items()})
    return out


def read_events(path):
    with Path(path).open(newline="") as fh:
        rd = csv.DictReader(fh)
        if rd.fieldnames != EVENT_COLUMNS:
            raise FormatError(f"{path}: unexpected header {rd.fieldnames}")
        return [(int(r["idx"]), r["type"], float(r["mu"])) for r in rd]


def write_table(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
    return Path(path)
