import numpy as np
import pytest

from elcont.fem import (
    FemError,
    adapt,
    assemble_jacobian,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    error_estimate,
    get_system,
    l2_error,
    newton_solve,
    norm_inf,
    norm_l2,
    poisson_dirichlet,
    residual,
)
from elcont.geometry import Mesh, rectangle_mesh, refine
from elcont.problems import EllipticProblem, _poisson_problem, lef_test, square

REF = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def _problem(f, f_du, F=None, c=1.0, a=0.0, **kw):
    return EllipticProblem("t", c, a, f, f_du, square(0.5), F=F, **kw)


def test_reference_stiffness():
    K = assemble_stiffness(REF).toarray()
    assert np.allclose(K, 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)


def test_reference_mass():
    M = assemble_mass(REF).toarray()
    assert np.allclose(M, np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-15)


def test_stiffness_properties(unit_mesh):
    K = assemble_stiffness(unit_mesh)
    assert np.max(np.abs(K.sum(axis=1))) <= 1e-12
    assert np.allclose((assemble_stiffness(unit_mesh, 2.0) - 2 * K).toarray(), 0)
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()


def test_mass_properties(unit_mesh):
    M = assemble_mass(unit_mesh)
    one = np.ones(unit_mesh.n_p)
    assert one @ (M @ one) == pytest.approx(1.0, abs=1e-12)
    assert abs(M - M.T).max() <= 1e-12 * abs(M).max()


def test_reduced_stiffness_positive_definite():
    mesh = rectangle_mesh(0.5, 0.5, 0.2)
    S = get_system(mesh, lef_test())
    assert np.linalg.eigvalsh(S.K_red.toarray())[0] > 0


def test_load_constant_and_linear(unit_mesh, rng):
    M = assemble_mass(unit_mesh)
    one = _problem(lambda u, x, m: np.ones_like(u), lambda u, x, m: np.zeros_like(u))
    assert np.allclose(assemble_load(unit_mesh, one, np.zeros(unit_mesh.n_p), 0.0), M.sum(axis=1).A1, atol=1e-14)
    lin = _problem(lambda u, x, m: u, lambda u, x, m: np.ones_like(u))
    U = rng.standard_normal(unit_mesh.n_p)
    assert np.allclose(assemble_load(unit_mesh, lin, U, 0.0), M @ U, atol=1e-12)


def test_load_cubic_constant(unit_mesh):
    cub = _problem(lambda u, x, m: u**3, lambda u, x, m: 3 * u**2)
    F = assemble_load(unit_mesh, cub, np.full(unit_mesh.n_p, 2.0), 0.0)
    assert F.sum() == pytest.approx(8.0, abs=1e-10)


def test_nonfinite_nonlinearity_named(unit_mesh):
    bad = _problem(lambda u, x, m: np.where(x[..., 0] > 0.4, np.nan, u), lambda u, x, m: np.ones_like(u))
    with pytest.raises(FemError, match="triangle"):
        assemble_load(unit_mesh, bad, np.zeros(unit_mesh.n_p), 0.0)


def test_jacobian_linear_part(unit_mesh, lef):
    S = get_system(unit_mesh, lef)
    zero = _problem(lambda u, x, m: np.zeros_like(u), lambda u, x, m: np.zeros_like(u), c=2.0, a=3.0)
    J0 = get_system(unit_mesh, zero).jacobian(np.zeros(S.n_free), 0.0)
    ref = (2 * S.K + 3 * S.M)[S.free][:, S.free]
    assert abs(J0 - ref).max() <= 1e-12
    Jc = S.jacobian(np.zeros(S.n_free), 0.0)
    assert abs(Jc - S.K_red).max() <= 1e-12


def test_jacobian_finite_difference(coarse_mesh, lef, rng):
    S = get_system(coarse_mesh, lef)
    y = rng.standard_normal(S.n_free)
    J = S.jacobian(y, 3.0).toarray()
    eps = 1e-6
    g0 = S.G(y, 3.0)
    worst = 0.0
    for k in range(S.n_free):
        e = np.zeros(S.n_free)
        e[k] = eps
        worst = max(worst, np.max(np.abs((S.G(y + e, 3.0) - g0) / eps - J[:, k])))
    assert worst <= 1e-5


def test_full_jacobian_matches_reduced(coarse_mesh, lef, rng):
    S = get_system(coarse_mesh, lef)
    U = S.expand(rng.standard_normal(S.n_free))
    Jf = S.jacobian_full(U, 1.0)
    assert abs(Jf[S.free][:, S.free] - assemble_jacobian(coarse_mesh, lef, U, 1.0)).max() <= 1e-12


def test_residual_trivial_and_microforce(unit_mesh, lef, micro):
    assert np.all(residual(unit_mesh, lef, np.zeros(unit_mesh.n_p), 7.0) == 0)
    mesh = rectangle_mesh(1.0, 1.0, 0.2)
    r = residual(mesh, micro, np.zeros(mesh.n_p), 0.0)
    assert np.max(np.abs(r)) > 1e-3


def test_newton_contract(unit_mesh, micro):
    mesh = rectangle_mesh(1.0, 1.0, 0.2)
    S = get_system(mesh, micro)
    U, its = newton_solve(S, np.zeros(mesh.n_p), -5.0, tol=1e-10)
    assert np.max(np.abs(S.G(S.restrict(U), -5.0))) <= 1e-10
    assert np.all(U[mesh.boundary_flag] == 0)


def test_norms(unit_mesh, rng):
    M = assemble_mass(unit_mesh)
    assert norm_l2(M, np.ones(unit_mesh.n_p)) == pytest.approx(1.0)
    assert norm_l2(M, np.zeros(unit_mesh.n_p)) == 0 and norm_inf(np.zeros(3)) == 0
    p = rectangle_mesh(0.5, 0.5, 0.02).points
    fine = rectangle_mesh(0.5, 0.5, 0.02)
    v = np.sin(np.pi * p[:, 0]) * np.cos(np.pi * p[:, 1])
    assert norm_l2(assemble_mass(fine), v) == pytest.approx(0.5, rel=2e-3)


def test_manufactured_convergence():
    exact = lambda x: np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
    src = lambda x: 2 * np.pi**2 * exact(x)
    errs = []
    for h in (0.2, 0.1, 0.05, 0.025):
        mesh = rectangle_mesh(0.5, 0.5, h)
        U = poisson_dirichlet(mesh, 1.0, src, exact)
        errs.append(l2_error(mesh, U, exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios >= 3.4) & (ratios <= 4.6)), ratios


def test_quadrature_rules_agree_on_quadratics(unit_mesh, rng):
    U = rng.standard_normal(unit_mesh.n_p)
    kw = dict(f=lambda u, x, m: u, f_du=lambda u, x, m: np.ones_like(u))
    a = assemble_load(unit_mesh, _problem(**kw), U, 0.0)
    b = assemble_load(unit_mesh, _problem(**kw, quadrature="degree4"), U, 0.0)
    assert np.allclose(a, b, atol=1e-13)


def test_estimator_affine_zero(unit_mesh):
    prob = _problem(lambda u, x, m: np.zeros_like(u), lambda u, x, m: np.zeros_like(u))
    U = 0.3 * unit_mesh.points[:, 0] - unit_mesh.points[:, 1]
    assert np.max(error_estimate(unit_mesh, prob, U, 0.0).values) <= 1e-12


def test_refining_worst_reduces_estimate():
    prob = _poisson_problem(1.0)
    mesh = rectangle_mesh(0.5, 0.5, 0.2)
    S = get_system(mesh, prob)
    U, _ = newton_solve(S, np.zeros(mesh.n_p), 0.0)
    E = error_estimate(mesh, prob, U, 0.0).values
    # the symmetric mesh has several triangles tied for the maximum
    new, _ = refine(mesh, np.flatnonzero(E >= (1 - 1e-9) * E.max()))
    U2, _ = newton_solve(get_system(new, prob), np.zeros(new.n_p), 0.0)
    assert error_estimate(new, prob, U2, 0.0).values.max() < E.max()


def test_adapt_noop_at_cap(unit_mesh, lef):
    U = np.zeros(unit_mesh.n_p)
    res = adapt(unit_mesh, lef, U, 0.0, maxt=unit_mesh.n_t)
    assert res.mesh is unit_mesh and res.generations == 0
    assert np.array_equal(res.U, U)


def test_adapt_respects_cap_and_focuses(micro):
    mesh = rectangle_mesh(1.0, 1.0, 0.3)
    S = get_system(mesh, micro)
    U, _ = newton_solve(S, np.zeros(mesh.n_p), -10.0)
    res = adapt(mesh, micro, U, -10.0, ngen=4, maxt=600)
    assert mesh.n_t < res.mesh.n_t <= 600
    Sa = get_system(res.mesh, micro)
    assert np.max(np.abs(Sa.G(Sa.restrict(res.U), -10.0))) <= 1e-8
