import numpy as np
import pytest

from elcont.geometry import (
    GeometryError,
    Mesh,
    OutOfDomainError,
    PolygonDomain,
    d4_maps,
    interpolate,
    interpolate_many,
    rectangle_mesh,
    refine,
    symmetry_permutations,
    transfer,
    triangulate,
)
from elcont.problems import square, wing_domain


def _conforming(mesh):
    # every interior edge has two triangles, every boundary edge one
    et = mesh.edge_triangles
    n_bnd = np.sum(et[:, 1] < 0)
    return n_bnd == len(mesh.boundary_edges) and np.all(mesh.areas > 0)


def test_polygon_orientation_and_area():
    cw = PolygonDomain(np.array([[0, 0], [0, 1], [1, 1], [1, 0]]))
    x, y = cw.vertices.T
    shoelace = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert shoelace == pytest.approx(1.0)
    assert cw.area == pytest.approx(1.0)


@pytest.mark.parametrize(
    "verts",
    [
        [[0, 0], [1, 0], [2, 0]],
        [[0, 0], [1, 1], [1, 0], [0, 1]],
        [[0, 0], [1, 0], [1, 0], [0, 1]],
        [[0, 0], [1, 0], [np.nan, 1]],
    ],
)
def test_degenerate_polygons_rejected(verts):
    with pytest.raises(GeometryError):
        PolygonDomain(np.array(verts, dtype=float))


def test_square_large_h_gives_two_triangles():
    mesh = triangulate(square(0.5), 1.5)
    assert mesh.n_p == 4 and mesh.n_t == 2


def test_point_count_scaling():
    n1 = triangulate(square(0.5), 0.1).n_p
    n2 = triangulate(square(0.5), 0.05).n_p
    assert 3 <= n2 / n1 <= 5


def test_edge_bound_on_big_square():
    mesh = triangulate(square(1.0), 0.07)
    assert mesh.hmax <= 0.0735
    assert _conforming(mesh)
    assert mesh.areas.sum() == pytest.approx(4.0, rel=1e-12)


def test_wing_mesh():
    dom = wing_domain()
    mesh = triangulate(dom, 0.05)
    assert mesh.hmax <= 0.05 * (1 + 1e-6)
    assert mesh.areas.sum() == pytest.approx(dom.area, rel=1e-10)
    assert _conforming(mesh)


def test_rectangle_mesh_symmetric():
    mesh = rectangle_mesh(0.5, 0.5, 0.1)
    assert mesh.hmax <= 0.1 + 1e-12
    assert len(symmetry_permutations(mesh, d4_maps())) == 8
    assert mesh.areas.sum() == pytest.approx(1.0, rel=1e-12)


def test_refine_single_triangle():
    mesh = triangulate(square(0.5), 1.5)
    new, parent = refine(mesh, [0])
    # red split of triangle 0 (4), green bisection of its neighbour (2)
    assert new.n_t == 6 and new.n_p == 7
    assert _conforming(new)
    assert np.allclose(new.points[: mesh.n_p], mesh.points)
    assert np.bincount(parent).tolist() == [4, 2]


def test_refine_all_quadruples(unit_mesh):
    new, _ = refine(unit_mesh, np.arange(unit_mesh.n_t))
    assert new.n_t == 4 * unit_mesh.n_t
    assert new.areas.sum() == pytest.approx(1.0, rel=1e-12)


def test_refine_empty_marks():
    mesh = triangulate(square(0.5), 1.5)
    with pytest.raises(GeometryError):
        refine(mesh, [])


def test_repeated_refinement_stays_conforming(unit_mesh):
    mesh = unit_mesh
    for _ in range(4):
        d = np.linalg.norm(mesh.centroids - 0.2, axis=1)
        mesh, _ = refine(mesh, np.flatnonzero(d < 0.1))
        assert _conforming(mesh)
    assert mesh.areas.sum() == pytest.approx(1.0, rel=1e-12)


def test_interpolate_affine_exact(unit_mesh, rng):
    vals = unit_mesh.points[:, 0] + 2 * unit_mesh.points[:, 1]
    pts = rng.uniform(-0.5, 0.5, (50, 2))
    got = interpolate_many(unit_mesh, vals, pts)
    assert np.allclose(got, pts[:, 0] + 2 * pts[:, 1], atol=1e-13)


def test_interpolate_node_and_centroid(unit_mesh):
    vals = np.arange(unit_mesh.n_p, dtype=float)
    k = 17
    assert interpolate(unit_mesh, vals, unit_mesh.points[k]) == pytest.approx(vals[k])
    tri = unit_mesh.triangles[5]
    one = np.zeros(unit_mesh.n_p)
    one[tri[0]] = 1.0
    assert interpolate(unit_mesh, one, unit_mesh.centroids[5]) == pytest.approx(1 / 3)


def test_interpolate_outside(unit_mesh):
    with pytest.raises(OutOfDomainError):
        interpolate(unit_mesh, np.zeros(unit_mesh.n_p), [0.7, 0.0])


def test_transfer_same_mesh_identity(unit_mesh, rng):
    v = rng.standard_normal(unit_mesh.n_p)
    assert np.array_equal(transfer(unit_mesh, v, unit_mesh), v)


def test_transfer_affine_between_meshes(unit_mesh):
    other = triangulate(square(0.5), 0.13)
    g = lambda p: 3 * p[:, 0] - p[:, 1] + 0.5
    out = transfer(unit_mesh, g(unit_mesh.points), other)
    assert np.max(np.abs(out - g(other.points))) <= 1e-12


def test_transfer_roundtrip_second_order():
    f = lambda p: np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])
    errs = []
    for h in (0.1, 0.05):
        a = rectangle_mesh(0.5, 0.5, h)
        b = triangulate(square(0.5), 0.9 * h)
        back = transfer(b, transfer(a, f(a.points), b), a)
        errs.append(np.max(np.abs(back - f(a.points))))
    assert 2.5 <= errs[0] / errs[1] <= 6


def test_mesh_validation():
    with pytest.raises(GeometryError):
        Mesh(np.zeros((3, 2)), np.array([[0, 1, 5]]))
    m = Mesh(np.array([[0, 0], [0, 1], [1, 0]], dtype=float), np.array([[0, 1, 2]]))
    assert m.areas[0] > 0  # clockwise input reoriented
