"""Polygonal domains, triangular meshes, refinement and solution transfer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay, cKDTree


class GeometryError(ValueError):
    """Invalid polygon or mesh operation."""


class OutOfDomainError(GeometryError):
    """A query point does not lie in any triangle of the mesh."""


def _segments_intersect(p1, p2, q1, q2, eps=1e-14):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and (
        (d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)
    ):
        return True

    def on_seg(a, b, c):
        return (
            abs(orient(a, b, c)) <= eps
            and min(a[0], b[0]) - eps <= c[0] <= max(a[0], b[0]) + eps
            and min(a[1], b[1]) - eps <= c[1] <= max(a[1], b[1]) + eps
        )

    return on_seg(q1, q2, p1) or on_seg(q1, q2, p2) or on_seg(p1, p2, q1) or on_seg(p1, p2, q2)


@dataclass(frozen=True, eq=False)
class PolygonDomain:
    """Simple polygon; vertices are stored counterclockwise.

    Clockwise input is reversed. Collinear consecutive vertices and
    self-intersections are rejected.
    """

    vertices: np.ndarray
    name: str = "polygon"

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices given as (x1, x2) pairs")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        m = len(v)
        scale = max(np.ptp(v[:, 0]), np.ptp(v[:, 1]))
        if scale <= 0:
            raise GeometryError("polygon is degenerate (zero extent)")
        for i in range(m):
            a, b, c = v[i - 1], v[i], v[(i + 1) % m]
            if np.linalg.norm(b - a) <= 1e-12 * scale:
                raise GeometryError(f"polygon has repeated vertex {i}")
            cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if abs(cross) <= 1e-12 * scale**2:
                raise GeometryError(f"polygon has collinear vertices around index {i}")
        for i in range(m):
            for j in range(i + 1, m):
                if j == i + 1 or (i == 0 and j == m - 1):
                    continue
                if _segments_intersect(v[i], v[(i + 1) % m], v[j], v[(j + 1) % m], 1e-14 * scale**2):
                    raise GeometryError(f"polygon is self-intersecting (edges {i} and {j})")
        if _signed_area(v) < 0:
            v = v[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, lx1, lx2, name="rectangle"):
        """The box (-lx1, lx1) x (-lx2, lx2)."""
        return cls(np.array([[-lx1, -lx2], [lx1, -lx2], [lx1, lx2], [-lx1, lx2]]), name)

    @property
    def area(self):
        return _signed_area(self.vertices)

    @property
    def edges(self):
        v = self.vertices
        return np.stack([v, np.roll(v, -1, axis=0)], axis=1)

    def contains(self, pts):
        """Even-odd test; points on the boundary give an arbitrary answer."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        inside = np.zeros(len(pts), dtype=bool)
        for (x0, y0), (x1, y1) in self.edges:
            cond = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= cond & (x < xc)
        return inside

    def boundary_distance(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        best = np.full(len(pts), np.inf)
        for a, b in self.edges:
            ab = b - a
            t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
            d = np.linalg.norm(pts - (a + t[:, None] * ab), axis=1)
            best = np.minimum(best, d)
        return best


def _signed_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with counterclockwise triangles.

    ``boundary_edges`` are oriented with the domain on their left, so the
    outward normal points to the right. ``green`` holds, per triangle, the id
    of the green-refinement pair it belongs to (-1 otherwise).
    """

    points: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray = None
    green: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.points, dtype=float)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        if p.ndim != 2 or p.shape[1] != 2:
            raise GeometryError("points must have shape (n_p, 2)")
        if len(t) and (t.min() < 0 or t.max() >= len(p)):
            raise GeometryError("triangle index out of range")
        a = _tri_signed_areas(p, t)
        flip = a < 0
        if np.any(flip):
            t[flip] = t[flip][:, [0, 2, 1]]
        if self.boundary_edges is None:
            b = _boundary_edges(t)
        else:
            b = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        g = np.full(len(t), -1, dtype=np.int64) if self.green is None else np.array(self.green, dtype=np.int64)
        for arr in (p, t, b, g):
            arr.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "boundary_edges", b)
        object.__setattr__(self, "green", g)

    @property
    def n_p(self):
        return len(self.points)

    @property
    def n_t(self):
        return len(self.triangles)

    @cached_property
    def areas(self):
        return _tri_signed_areas(self.points, self.triangles)

    @cached_property
    def boundary_flag(self):
        flag = np.zeros(self.n_p, dtype=bool)
        flag[self.boundary_edges.ravel()] = True
        flag.setflags(write=False)
        return flag

    @cached_property
    def edges(self):
        """Unique edges (sorted pairs), and per-triangle edge ids.

        Local edge k of a triangle joins vertices k and k+1.
        """
        t = self.triangles
        e = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        es = np.sort(e, axis=1)
        uniq, inv = np.unique(es, axis=0, return_inverse=True)
        return uniq, inv.reshape(-1, 3)

    @cached_property
    def edge_triangles(self):
        """For each unique edge the (up to two) adjacent triangles, -1 padded."""
        uniq, t2e = self.edges
        out = np.full((len(uniq), 2), -1, dtype=np.int64)
        flat = t2e.ravel()
        tri = np.repeat(np.arange(self.n_t), 3)
        order = np.argsort(flat, kind="stable")
        fs, ts = flat[order], tri[order]
        first = np.ones(len(fs), dtype=bool)
        first[1:] = fs[1:] != fs[:-1]
        out[fs[first], 0] = ts[first]
        out[fs[~first], 1] = ts[~first]
        return out

    @property
    def edge_lengths(self):
        uniq, _ = self.edges
        return np.linalg.norm(self.points[uniq[:, 0]] - self.points[uniq[:, 1]], axis=1)

    @property
    def hmax(self):
        return float(self.edge_lengths.max())

    @cached_property
    def tri_diameters(self):
        p, t = self.points, self.triangles
        d = [np.linalg.norm(p[t[:, i]] - p[t[:, (i + 1) % 3]], axis=1) for i in range(3)]
        return np.max(d, axis=0)

    @cached_property
    def centroids(self):
        return self.points[self.triangles].mean(axis=1)

    def locate(self, pts, snap=1e-9):
        """Containing triangle and barycentric coordinates of each query point.

        Points within ``snap`` of the mesh (e.g. boundary points that are off by
        round-off) are projected onto the nearest triangle.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        tree = self._cache.get("tree")
        if tree is None:
            tree = self._cache["tree"] = cKDTree(self.centroids)
        k = min(12, self.n_t)
        _, cand = tree.query(pts, k=k)
        cand = cand.reshape(len(pts), k)
        tri = np.full(len(pts), -1, dtype=np.int64)
        bary = np.zeros((len(pts), 3))
        for j in range(k):
            todo = tri < 0
            if not np.any(todo):
                break
            c = cand[todo, j]
            lam = _barycentric(self.points, self.triangles[c], pts[todo])
            ok = np.all(lam >= -1e-12, axis=1)
            idx = np.flatnonzero(todo)[ok]
            tri[idx] = c[ok]
            bary[idx] = lam[ok]
        for i in np.flatnonzero(tri < 0):
            lam = _barycentric(self.points, self.triangles, np.repeat(pts[i : i + 1], self.n_t, axis=0))
            worst = lam.min(axis=1)
            j = int(np.argmax(worst))
            if worst[j] >= -1e-12:
                tri[i], bary[i] = j, lam[j]
                continue
            # nearest point over all triangles for boundary snapping
            lam_c = np.clip(lam, 0.0, None)
            lam_c /= lam_c.sum(axis=1, keepdims=True)
            proj = np.einsum("tk,tkd->td", lam_c, self.points[self.triangles])
            dist = np.linalg.norm(proj - pts[i], axis=1)
            j = int(np.argmin(dist))
            if dist[j] > snap:
                raise OutOfDomainError(f"point {pts[i].tolist()} lies outside the mesh (distance {dist[j]:.3e})")
            tri[i], bary[i] = j, lam_c[j]
        return tri, bary


def _tri_signed_areas(p, t):
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _barycentric(p, tris, x):
    a, b, c = p[tris[:, 0]], p[tris[:, 1]], p[tris[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    l1 = ((x[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (x[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) / det
    l2 = ((b[:, 0] - a[:, 0]) * (x[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (x[:, 0] - a[:, 0])) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def _boundary_edges(t):
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    es = np.sort(e, axis=1)
    _, inv, counts = np.unique(es, axis=0, return_inverse=True, return_counts=True)
    bad = counts > 2
    if np.any(bad):
        raise GeometryError("non-manifold mesh: an edge is shared by more than two triangles")
    return e[counts[inv.ravel()] == 1]


def rectangle_mesh(lx1, lx2, hmax):
    """Structured criss-cross mesh of (-lx1, lx1) x (-lx2, lx2).

    Every cell is split into four triangles through its center, so the mesh
    is invariant under the reflections of the rectangle (and under the full
    square group when lx1 == lx2 and the cell counts agree). Cells are sized
    so that their diagonal is at most ``hmax``.
    """
    if hmax <= 0:
        raise GeometryError("hmax must be positive")
    n1 = max(1, math.ceil(2 * math.sqrt(2) * lx1 / hmax - 1e-9))
    n2 = max(1, math.ceil(2 * math.sqrt(2) * lx2 / hmax - 1e-9))
    xs = np.linspace(-lx1, lx1, n1 + 1)
    ys = np.linspace(-lx2, lx2, n2 + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    corners = np.stack([X.ravel(), Y.ravel()], axis=1)
    cx = 0.5 * (xs[:-1] + xs[1:])
    cy = 0.5 * (ys[:-1] + ys[1:])
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    centers = np.stack([CX.ravel(), CY.ravel()], axis=1)
    pts = np.concatenate([corners, centers])
    # exact symmetry of coordinates
    pts[np.abs(pts) < 1e-15] = 0.0

    def cid(i, j):
        return i * (n2 + 1) + j

    tris = []
    off = len(corners)
    for i in range(n1):
        for j in range(n2):
            c = off + i * n2 + j
            a, b, d, e = cid(i, j), cid(i + 1, j), cid(i + 1, j + 1), cid(i, j + 1)
            tris += [(a, b, c), (b, d, c), (d, e, c), (e, a, c)]
    return Mesh(pts, np.array(tris))


def triangulate(domain: PolygonDomain, hmax: float, max_rounds: int = 60) -> Mesh:
    """Conforming Delaunay mesh of a polygon with every edge no longer than ``hmax``.

    Boundary segments are subdivided uniformly, a triangular lattice fills the
    interior, and midpoints of missing boundary segments or overlong edges are
    inserted until both conditions hold.
    """
    if not hmax > 0:
        raise GeometryError("hmax must be positive")
    verts = domain.vertices
    scale = max(np.ptp(verts[:, 0]), np.ptp(verts[:, 1]))
    lim = hmax * (1 + 1e-6)

    # boundary chain: list of points in CCW order
    bpts = []
    for a, b in domain.edges:
        n = max(1, math.ceil(np.linalg.norm(b - a) / hmax - 1e-12))
        for k in range(n):
            bpts.append(a + (b - a) * (k / n))
    bpts = np.array(bpts)

    hl = 0.85 * hmax
    dy = hl * math.sqrt(3) / 2
    xmin, ymin = verts.min(axis=0)
    xmax, ymax = verts.max(axis=0)
    rows = []
    for r in range(int(math.floor((ymax - ymin) / dy)) + 2):
        y = ymin + r * dy
        x0 = xmin + (0.5 * hl if r % 2 else 0.0)
        xs = np.arange(x0, xmax + hl, hl)
        rows.append(np.stack([xs, np.full_like(xs, y)], axis=1))
    lattice = np.concatenate(rows) if rows else np.zeros((0, 2))
    if len(lattice):
        keep = domain.contains(lattice) & (domain.boundary_distance(lattice) >= 0.5 * hl)
        interior = lattice[keep]
    else:
        interior = np.zeros((0, 2))

    for _ in range(max_rounds):
        nb = len(bpts)
        pts = np.concatenate([bpts, interior])
        dt = Delaunay(pts)
        tris = dt.simplices.astype(np.int64)
        areas = _tri_signed_areas(pts, tris)
        tris[areas < 0] = tris[areas < 0][:, [0, 2, 1]]
        areas = np.abs(areas)
        cen = pts[tris].mean(axis=1)
        keep = domain.contains(cen) & (areas > 1e-12 * scale**2)
        tris = tris[keep]

        edge_set = set()
        for tri in tris:
            for k in range(3):
                i, j = tri[k], tri[(k + 1) % 3]
                edge_set.add((min(i, j), max(i, j)))

        new_b = []  # (position in chain, point)
        for k in range(nb):
            i, j = k, (k + 1) % nb
            if (min(i, j), max(i, j)) not in edge_set:
                new_b.append((k, 0.5 * (bpts[i] + bpts[j])))
        new_i = []
        if not new_b:
            e = np.stack([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]], axis=1)
            lens = np.linalg.norm(pts[e[..., 0]] - pts[e[..., 1]], axis=2)
            for t in np.flatnonzero(lens.max(axis=1) > lim):
                cc = _circumcenter(pts[tris[t]])
                if domain.contains(cc[None])[0] and domain.boundary_distance(cc[None])[0] > 0.25 * hmax:
                    new_i.append(cc)
                    continue
                i, j = e[t, np.argmax(lens[t])]
                if i < nb and j < nb and ((j - i) % nb == 1 or (i - j) % nb == 1):
                    k = i if (j - i) % nb == 1 else j
                    new_b.append((k, 0.5 * (bpts[i] + bpts[j])))
                else:
                    new_i.append(0.5 * (pts[i] + pts[j]))
            new_i = _thin(new_i, 0.3 * hmax)
        if not new_b and not new_i:
            mesh = Mesh(pts, tris)
            _check_boundary_chain(mesh, nb)
            return mesh
        if new_b:
            ins = dict(new_b)
            chain = []
            for k in range(nb):
                chain.append(bpts[k])
                if k in ins:
                    chain.append(ins[k])
            bpts = np.array(chain)
        if new_i:
            add = np.unique(np.round(np.array(new_i), 14), axis=0)
            interior = np.concatenate([interior, add])
    raise GeometryError("mesh generation did not converge")


def _circumcenter(p):
    a, b, c = p
    d = 2 * ((a[0] - c[0]) * (b[1] - c[1]) - (b[0] - c[0]) * (a[1] - c[1]))
    a2, b2 = (a - c) @ (a - c), (b - c) @ (b - c)
    ux = (a2 * (b[1] - c[1]) - b2 * (a[1] - c[1])) / d
    uy = (b2 * (a[0] - c[0]) - a2 * (b[0] - c[0])) / d
    return c + np.array([ux, uy])


def _thin(points, radius):
    """Greedy subset of points with pairwise distance at least ``radius``."""
    kept = []
    for q in points:
        if all(np.hypot(*(q - r)) >= radius for r in kept):
            kept.append(q)
    return kept


def _check_boundary_chain(mesh, nb):
    be = mesh.boundary_edges
    if len(be) != nb:
        raise GeometryError("mesh boundary does not match the polygon")


def d4_maps(center=(0.0, 0.0)):
    """The eight isometries of a square centered at ``center`` as callables."""
    cx, cy = center

    def make(a, b, c, d):
        def f(p):
            x, y = p[..., 0] - cx, p[..., 1] - cy
            return np.stack([a * x + b * y + cx, c * x + d * y + cy], axis=-1)

        return f

    mats = [(1, 0, 0, 1), (-1, 0, 0, 1), (1, 0, 0, -1), (-1, 0, 0, -1),
            (0, 1, 1, 0), (0, -1, -1, 0), (0, -1, 1, 0), (0, 1, -1, 0)]
    return [make(*m) for m in mats]


def symmetry_permutations(mesh: Mesh, maps=None, tol=1e-9):
    """Node permutations realising point maps that send the mesh onto itself.

    ``perm[k]`` is the index of the image of node k. Maps that do not preserve
    the node set are skipped.
    """
    maps = d4_maps() if maps is None else maps
    tree = cKDTree(mesh.points)
    perms = []
    for f in maps:
        img = f(mesh.points)
        d, idx = tree.query(img)
        if np.all(d <= tol) and len(np.unique(idx)) == mesh.n_p:
            perms.append(idx)
    return perms


def refine(mesh: Mesh, marks) -> tuple[Mesh, np.ndarray]:
    """Red-green refinement of the marked triangles.

    Marked triangles are split into four; neighbours with two or more split
    edges are split into four as well, and those with a single split edge are
    bisected (green). A green pair that would be refined again is first merged
    back into its parent, which is then split into four. Existing points keep
    their indices and coordinates.

    Returns the new mesh and, for every new triangle, the index of the input
    triangle it came from.
    """
    marks = np.unique(np.asarray(marks, dtype=np.int64).ravel())
    if len(marks) == 0:
        raise GeometryError("refine needs at least one marked triangle")
    if marks.min() < 0 or marks.max() >= mesh.n_t:
        raise GeometryError("marked triangle index out of range")

    pts = [np.array(p) for p in mesh.points]
    midpoint = {}

    def key(i, j):
        return (i, j) if i < j else (j, i)

    def edges_of(t):
        return [key(t[k], t[(k + 1) % 3]) for k in range(3)]

    def mid(i, j):
        e = key(i, j)
        if e not in midpoint:
            midpoint[e] = len(pts)
            pts.append(0.5 * (pts[i] + pts[j]))
        return midpoint[e]

    # working triangles: [vertices, origin, green id, red flag]
    work = [[tuple(int(v) for v in t), i, int(g), False] for i, (t, g) in enumerate(zip(mesh.triangles, mesh.green))]
    for i in marks:
        work[i][3] = True
    next_gid = int(mesh.green.max()) + 1 if mesh.n_t else 0

    def open_pairs(work):
        groups = {}
        for idx, w in enumerate(work):
            if w[2] >= 0:
                groups.setdefault(w[2], []).append(idx)
        return groups

    while True:
        # closure
        changed = True
        while changed:
            changed = False
            split = {e for w in work if w[3] for e in edges_of(w[0])}
            split |= {e for w in work for e in edges_of(w[0]) if e in midpoint}
            for gid, members in open_pairs(work).items():
                if len(members) != 2:
                    continue
                s1, s2 = (work[m][0] for m in members)
                shared = set(s1) & set(s2)
                others = list(set(s1) ^ set(s2))
                if len(shared) != 2 or len(others) != 2:
                    continue
                inner = key(*shared)
                need = any(work[m][3] for m in members) or any(
                    e in split and e != inner for m in members for e in edges_of(work[m][0])
                )
                if not need:
                    continue
                p_, q_ = others
                c = 0.5 * (pts[p_] + pts[q_])
                m = min(shared, key=lambda v: np.linalg.norm(pts[v] - c))
                apex = (shared - {m}).pop()
                parent = (apex, p_, q_)
                if _tri_signed_areas(np.array([pts[v] for v in parent]), np.array([[0, 1, 2]]))[0] < 0:
                    parent = (apex, q_, p_)
                midpoint[key(p_, q_)] = m
                origin = work[members[0]][1]
                for mm in sorted(members, reverse=True):
                    work.pop(mm)
                work.append([parent, origin, -1, True])
                changed = True
                break
            if changed:
                continue
            for w in work:
                if not w[3] and sum(e in split for e in edges_of(w[0])) >= 2:
                    w[3] = True
                    changed = True
        split = {e for w in work if w[3] for e in edges_of(w[0])}
        split |= {e for w in work for e in edges_of(w[0]) if e in midpoint}
        if not split:
            break
        new = []
        for t, origin, g, is_red in work:
            a, b, c = t
            if is_red:
                mab, mbc, mca = mid(a, b), mid(b, c), mid(c, a)
                for nt in ((a, mab, mca), (mab, b, mbc), (mca, mbc, c), (mab, mbc, mca)):
                    new.append([nt, origin, -1, False])
                continue
            es = edges_of(t)
            hit = [k for k in range(3) if es[k] in split]
            if hit:
                k = hit[0]
                i, j, o = t[k], t[(k + 1) % 3], t[(k + 2) % 3]
                m = mid(i, j)
                new.append([(i, m, o), origin, next_gid, False])
                new.append([(m, j, o), origin, next_gid, False])
                next_gid += 1
            else:
                new.append([t, origin, g, False])
        work = new

    tris = np.array([w[0] for w in work], dtype=np.int64)
    parent_map = np.array([w[1] for w in work], dtype=np.int64)
    green = np.array([w[2] for w in work], dtype=np.int64)
    _, inv = np.unique(green, return_inverse=True)
    green = np.where(green >= 0, inv - (1 if np.any(green < 0) else 0), -1)
    return Mesh(np.array(pts), tris, green=green), parent_map


def interpolate(mesh: Mesh, values, x) -> float:
    """Piecewise-linear interpolant of nodal ``values`` evaluated at ``x``."""
    tri, bary = mesh.locate(np.asarray(x, dtype=float).reshape(1, 2))
    return float(np.asarray(values)[mesh.triangles[tri[0]]] @ bary[0])


def interpolate_many(mesh: Mesh, values, pts, snap=1e-9):
    tri, bary = mesh.locate(pts, snap=snap)
    return np.einsum("nk,nk->n", np.asarray(values)[mesh.triangles[tri]], bary)


def transfer(mesh_from: Mesh, values, mesh_to: Mesh, snap=1e-9):
    """Nodal values of the P1 interpolant of ``values`` on the nodes of ``mesh_to``."""
    if mesh_from is mesh_to:
        return np.array(values, dtype=float, copy=True)
    return interpolate_many(mesh_from, values, mesh_to.points, snap=snap)
