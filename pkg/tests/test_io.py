import numpy as np
import pytest

from elcont.continuation import ContSettings, continue_branch
from elcont.geometry import rectangle_mesh, triangulate
from elcont.io import (
    BRANCH_COLUMNS,
    FormatError,
    read_branch,
    read_events,
    read_mesh,
    read_solution,
    write_branch,
    write_mesh,
    write_solution,
)
from elcont.problems import lef_test, wing_domain


def test_mesh_roundtrip_bit_exact(tmp_path):
    for mesh in (rectangle_mesh(0.5, 0.5, 0.1), triangulate(wing_domain(), 0.07)):
        path = write_mesh(tmp_path / "m.txt", mesh)
        back = read_mesh(path)
        assert np.array_equal(back.points, mesh.points)
        assert np.array_equal(back.triangles, mesh.triangles)
        assert np.array_equal(back.boundary_edges, mesh.boundary_edges)


def test_solution_roundtrip_bit_exact(tmp_path, unit_mesh, rng):
    U = rng.standard_normal(unit_mesh.n_p) * 1e-3
    mu = np.pi * 7
    back = read_solution(write_solution(tmp_path / "s.sol", unit_mesh, U, mu))
    assert np.array_equal(back.U, U) and back.mu == mu
    assert np.array_equal(back.mesh.points, unit_mesh.points)


def test_solution_length_checked(tmp_path, unit_mesh):
    with pytest.raises(ValueError):
        write_solution(tmp_path / "s.sol", unit_mesh, np.zeros(3), 0.0)


@pytest.mark.parametrize(
    "mangle",
    [
        lambda t: t.replace("elcont-solution v1", "something else"),
        lambda t: "\n".join(t.splitlines()[:-5]),
        lambda t: t + "1.0\n",
        lambda t: t.replace("mu ", "nu "),
        lambda t: t[: t.rfind("\n", 0, -1)] + "\nnan\n",
    ],
)
def test_corrupt_solution(tmp_path, unit_mesh, mangle):
    path = write_solution(tmp_path / "s.sol", unit_mesh, np.zeros(unit_mesh.n_p), 1.0)
    path.write_text(mangle(path.read_text()))
    with pytest.raises(FormatError):
        read_solution(path)


def test_branch_files(tmp_path):
    mesh = rectangle_mesh(0.5, 0.5, 0.25)
    br = continue_branch(lef_test(), mesh, np.zeros(mesh.n_p), 0.0, ContSettings(ds=1.0, dsmax=3.0, mu_max=30.0, neig=4))
    written = write_branch(tmp_path / "b.csv", br, snapshot_every=5)
    header = (tmp_path / "b.csv").read_text().splitlines()[0]
    assert header == ",".join(BRANCH_COLUMNS)
    rows = read_branch(tmp_path / "b.csv")
    assert len(rows) == len(br)
    for r, p in zip(rows, br.points):
        assert r["mu"] == p.mu and r["n_neg"] == p.n_neg and r["type"] == p.point_type
    ev = read_events(tmp_path / "b.events")
    assert [(i, k) for i, k, _ in ev] == br.events
    i = ev[0][0]
    for j in (i - 1, i, 0, 5):
        assert tmp_path / f"b_{j}.sol" in written
        assert read_solution(tmp_path / f"b_{j}.sol").mu == br.points[j].mu


def test_branch_header_checked(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(FormatError):
        read_branch(p)
