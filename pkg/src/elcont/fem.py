"""P1 finite elements for -c Lap u + a u - f(u, x, mu) = 0 with zero Dirichlet or Neumann data."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import Mesh, refine, transfer
from .linsolve import LuFactorization, SingularMatrixError


class FemError(RuntimeError):
    """Assembly failure (degenerate element, non-finite nonlinearity)."""


class NewtonError(RuntimeError):
    pass


# barycentric coordinates and weights (summing to 1) of triangle rules
QUADRATURE = {
    # edge midpoints, exact for degree 2
    "midpoint": (
        np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]),
        np.full(3, 1.0 / 3.0),
    ),
    # Dunavant 6-point, exact for degree 4
    "degree4": (
        np.array(
            [
                [0.108103018168070, 0.445948490915965, 0.445948490915965],
                [0.445948490915965, 0.108103018168070, 0.445948490915965],
                [0.445948490915965, 0.445948490915965, 0.108103018168070],
                [0.816847572980459, 0.091576213509771, 0.091576213509771],
                [0.091576213509771, 0.816847572980459, 0.091576213509771],
                [0.091576213509771, 0.091576213509771, 0.816847572980459],
            ]
        ),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
    ),
}


def _gradients(mesh: Mesh):
    """Constant gradients of the three hat functions on every triangle, (n_t, 3, 2)."""
    p = mesh.points[mesh.triangles]
    area = mesh.areas
    if np.any(area < 1e-14):
        bad = int(np.argmin(area))
        raise FemError(f"degenerate triangle {bad} (area {area[bad]:.3e})")
    # gradient of lambda_i = rot90(opposite edge) / (2 area)
    g = np.empty((mesh.n_t, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        e = p[:, k] - p[:, j]
        g[:, i, 0] = -e[:, 1]
        g[:, i, 1] = e[:, 0]
    return g / (2 * area[:, None, None])


def _local_stiffness(mesh):
    g = _gradients(mesh)
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", g, g)


def _local_mass(mesh):
    base = (np.ones((3, 3)) + np.eye(3)) / 12.0
    return mesh.areas[:, None, None] * base[None]


def _coo(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n_p, mesh.n_p)).tocsr()


def assemble_stiffness(mesh: Mesh, c: float = 1.0):
    """``c * integral grad phi_i . grad phi_j`` as a CSR matrix."""
    if c == 0:
        raise ValueError("diffusion coefficient c must be nonzero")
    A = _coo(mesh, c * _local_stiffness(mesh))
    A.sort_indices()
    return A


def assemble_mass(mesh: Mesh):
    """``integral phi_i phi_j`` as a CSR matrix."""
    A = _coo(mesh, _local_mass(mesh))
    A.sort_indices()
    return A


class _Pattern:
    """Scatter map from local element matrices into a fixed CSR pattern."""

    def __init__(self, tri, n, keep=None, relabel=None):
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        mask = np.ones(len(rows), dtype=bool) if keep is None else keep[rows] & keep[cols]
        if relabel is not None:
            rows, cols = relabel[rows], relabel[cols]
        self.mask = mask
        keys = rows[mask] * n + cols[mask]
        uniq, self.pos = np.unique(keys, return_inverse=True)
        self.indices = (uniq % n).astype(np.int32)
        r = uniq // n
        self.indptr = np.searchsorted(r, np.arange(n + 1)).astype(np.int32)
        self.n = n
        self.nnz = len(uniq)

    def build(self, local):
        data = np.bincount(self.pos, weights=local.ravel()[self.mask], minlength=self.nnz)
        return self.matrix(data)

    def data(self, local):
        return np.bincount(self.pos, weights=local.ravel()[self.mask], minlength=self.nnz)

    def matrix(self, data):
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


class FemSystem:
    """Discrete operators of one problem on one mesh.

    Dirichlet problems are reduced to the free (interior) nodes; vectors named
    ``y`` live on free nodes, vectors named ``U`` are full length with zero
    boundary values.
    """

    def __init__(self, mesh: Mesh, problem, quadrature: str | None = None):
        self.mesh = mesh
        self.problem = problem
        self.c = float(problem.c)
        self.a = float(problem.a)
        rule = quadrature or getattr(problem, "quadrature", "midpoint")
        self.qbary, qw = QUADRATURE[rule]
        self.qweights = mesh.areas[:, None] * qw[None, :]  # (n_t, nq)
        p = mesh.points[mesh.triangles]  # (n_t, 3, 2)
        self.qx = np.einsum("qk,tkd->tqd", self.qbary, p)
        self.qx.setflags(write=False)
        self.local_K = _local_stiffness(mesh)
        self.local_M = _local_mass(mesh)
        n = mesh.n_p
        self.dirichlet = problem.bc == "dirichlet"
        if self.dirichlet:
            self.free = np.flatnonzero(~mesh.boundary_flag)
        else:
            self.free = np.arange(n)
        self.n_free = len(self.free)
        relabel = np.full(n, -1, dtype=np.int64)
        relabel[self.free] = np.arange(self.n_free)
        keep = relabel >= 0
        self.full_pattern = _Pattern(mesh.triangles, n)
        self.red_pattern = _Pattern(mesh.triangles, self.n_free, keep, relabel)
        self.K = self.full_pattern.build(self.local_K)  # unit coefficient
        self.M = self.full_pattern.build(self.local_M)
        self._K_red = self.red_pattern.data(self.local_K)
        self._M_red = self.red_pattern.data(self.local_M)
        self.K_red = self.red_pattern.matrix(self._K_red)
        self.M_red = self.red_pattern.matrix(self._M_red)
        self.linear_red = self.red_pattern.matrix(self.c * self._K_red + self.a * self._M_red)
        self.linear_full = self.c * self.K + self.a * self.M
        self._K_lu = None

    # vector helpers -----------------------------------------------------
    @property
    def n_p(self):
        return self.mesh.n_p

    def expand(self, y):
        U = np.zeros(self.mesh.n_p)
        U[self.free] = y
        return U

    def restrict(self, U):
        return np.asarray(U, dtype=float)[self.free]

    def at_quadrature(self, U):
        return np.asarray(U)[self.mesh.triangles] @ self.qbary.T  # (n_t, nq)

    def _eval(self, fn, uq, mu, what):
        val = np.asarray(fn(uq, self.qx, mu), dtype=float)
        val = np.broadcast_to(val, uq.shape)
        if not np.all(np.isfinite(val)):
            bad = int(np.argwhere(~np.isfinite(val))[0, 0])
            raise FemError(f"{what} is not finite on triangle {bad}")
        return val

    # assembly -----------------------------------------------------------
    def load(self, U, mu):
        """Full-length F(U, mu): integral of phi_k f(u_h, x, mu)."""
        uq = self.at_quadrature(U)
        fq = self._eval(self.problem.f, uq, mu, "nonlinearity") * self.qweights
        local = fq @ self.qbary  # (n_t, 3)
        return np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.mesh.n_p)

    def residual_full(self, U, mu):
        U = np.asarray(U, dtype=float)
        r = self.linear_full @ U - self.load(U, mu)
        if self.dirichlet:
            r[self.mesh.boundary_flag] = 0.0
        return r

    def G(self, y, mu):
        U = self.expand(y)
        return (self.linear_full @ U - self.load(U, mu))[self.free]

    def _fu_local(self, U, mu):
        uq = self.at_quadrature(U)
        d = self._eval(self.problem.f_du, uq, mu, "nonlinearity derivative") * self.qweights
        return np.einsum("tq,qi,qj->tij", d, self.qbary, self.qbary)

    def jacobian(self, y, mu):
        """Reduced Jacobian D_u G on the free nodes."""
        local = self._fu_local(self.expand(y), mu)
        data = self.c * self._K_red + self.a * self._M_red - self.red_pattern.data(local)
        return self.red_pattern.matrix(data)

    def jacobian_full(self, U, mu):
        return self.linear_full - self.full_pattern.build(self._fu_local(U, mu))

    def G_mu(self, y, mu, eps=1e-6):
        U = self.expand(y)
        fmu = getattr(self.problem, "f_dmu", None)
        if fmu is not None:
            uq = self.at_quadrature(U)
            fq = self._eval(fmu, uq, mu, "mu-derivative") * self.qweights
            local = fq @ self.qbary
            full = np.bincount(self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.mesh.n_p)
            return -full[self.free]
        h = eps * max(1.0, abs(mu))
        return -(self.load(U, mu + h) - self.load(U, mu - h))[self.free] / (2 * h)

    def energy(self, U, mu):
        """Discrete J(U) = c/2 U'KU + a/2 U'MU - integral F(u_h, x, mu)."""
        U = np.asarray(U, dtype=float)
        uq = self.at_quadrature(U)
        Fq = self._eval(self.problem.F, uq, mu, "antiderivative")
        return 0.5 * U @ (self.linear_full @ U) - float(np.sum(Fq * self.qweights))

    def K_lu(self):
        if self._K_lu is None:
            self._K_lu = LuFactorization(self.K_red)
        return self._K_lu


@lru_cache(maxsize=32)
def get_system(mesh: Mesh, problem) -> FemSystem:
    return FemSystem(mesh, problem)


def assemble_load(mesh, problem, U, mu):
    return get_system(mesh, problem).load(U, mu)


def assemble_jacobian(mesh, problem, U, mu):
    """Jacobian restricted to the free nodes (all nodes for Neumann problems)."""
    S = get_system(mesh, problem)
    return S.jacobian(S.restrict(U), mu)


def residual(mesh, problem, U, mu):
    """G(U, mu) = (cK + aM) U - F(U, mu), Dirichlet rows set to zero."""
    return get_system(mesh, problem).residual_full(U, mu)


def norm_inf(U):
    return float(np.max(np.abs(U))) if len(U) else 0.0


def norm_l2(mass, U):
    U = np.asarray(U, dtype=float)
    return float(np.sqrt(max(U @ (mass @ U), 0.0)))


def newton_solve(system: FemSystem, U0, mu, tol=1e-8, maxit=30):
    """Damped Newton iteration for G(U, mu) = 0 at fixed mu.

    Returns (U, iterations). Raises NewtonError on failure.
    """
    y = system.restrict(U0).copy()
    r = system.G(y, mu)
    rn = np.max(np.abs(r)) if len(r) else 0.0
    for it in range(maxit + 1):
        if rn <= tol:
            return system.expand(y), it
        if it == maxit:
            break
        J = system.jacobian(y, mu)
        try:
            step = LuFactorization(J).solve(r)
        except SingularMatrixError as exc:
            raise NewtonError(f"singular Jacobian at iteration {it}") from exc
        lam = 1.0
        while True:
            y_new = y - lam * step
            r_new = system.G(y_new, mu)
            rn_new = np.max(np.abs(r_new))
            if np.isfinite(rn_new) and (rn_new < rn or lam < 1 / 64):
                break
            lam *= 0.5
        if not np.isfinite(rn_new):
            break
        y, r, rn = y_new, r_new, rn_new
    raise NewtonError(f"Newton did not converge (residual {rn:.3e} after {maxit} iterations)")


def poisson_dirichlet(mesh, c, source, boundary):
    """P1 solution of -c Lap u = source(x) with u = boundary(x) on the boundary nodes.

    ``source`` is integrated with the degree-4 rule; boundary data is imposed
    nodally and lifted into the right-hand side.
    """
    bary, qw = QUADRATURE["degree4"]
    p = mesh.points[mesh.triangles]
    qx = np.einsum("qk,tkd->tqd", bary, p)
    fq = source(qx) * (mesh.areas[:, None] * qw[None, :])
    b = np.bincount(mesh.triangles.ravel(), weights=(fq @ bary).ravel(), minlength=mesh.n_p)
    K = assemble_stiffness(mesh, c)
    bnd = mesh.boundary_flag
    U = np.zeros(mesh.n_p)
    U[bnd] = boundary(mesh.points[bnd])
    free = np.flatnonzero(~bnd)
    rhs = b[free] - K[free][:, bnd] @ U[bnd]
    U[free] = LuFactorization(K[free][:, free]).solve(rhs)
    return U


def l2_error(mesh, U, exact):
    """L2 norm of u_h - exact with the degree-4 rule."""
    bary, qw = QUADRATURE["degree4"]
    qx = np.einsum("qk,tkd->tqd", bary, mesh.points[mesh.triangles])
    err = U[mesh.triangles] @ bary.T - exact(qx)
    return float(np.sqrt(np.sum(err**2 * mesh.areas[:, None] * qw[None, :])))


# error estimation and adaptation -----------------------------------------


@dataclass
class ErrorField:
    values: np.ndarray
    alpha: float
    beta: float

    def marks(self, fraction=0.7):
        """Maximum strategy: triangles with E_i >= fraction * max E."""
        if len(self.values) == 0 or self.values.max() <= 0:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.values >= fraction * self.values.max())


def error_estimate(mesh, problem, U, mu, alpha=0.15, beta=0.15, system=None):
    """Residual estimator: interior residual plus normal-flux jumps on interior edges."""
    S = system if system is not None else get_system(mesh, problem)
    U = np.asarray(U, dtype=float)
    uq = S.at_quadrature(U)
    fq = S._eval(problem.f, uq, mu, "nonlinearity") - problem.a * uq
    h = mesh.tri_diameters
    interior = alpha * h * np.sqrt(np.sum(fq**2 * S.qweights, axis=1))

    grads = np.einsum("tk,tkd->td", U[mesh.triangles], _gradients(mesh))
    uniq, _ = mesh.edges
    et = mesh.edge_triangles
    inner = et[:, 1] >= 0
    e = mesh.points[uniq[inner, 1]] - mesh.points[uniq[inner, 0]]
    length = np.linalg.norm(e, axis=1)
    normal = np.stack([e[:, 1], -e[:, 0]], axis=1) / length[:, None]
    t1, t2 = et[inner, 0], et[inner, 1]
    jump = np.einsum("ed,ed->e", grads[t1] - grads[t2], normal)
    contrib = length**2 * jump**2
    acc = np.bincount(t1, weights=contrib, minlength=mesh.n_t) + np.bincount(t2, weights=contrib, minlength=mesh.n_t)
    flux = beta * abs(problem.c) * np.sqrt(0.5 * acc)
    return ErrorField(interior + flux, alpha, beta)


@dataclass
class AdaptResult:
    mesh: Mesh
    U: np.ndarray
    converged: bool
    generations: int

    def __iter__(self):
        return iter((self.mesh, self.U))


def adapt(mesh, problem, U, mu, ngen=10, maxt=4000, tol=1e-8, alpha=0.15, beta=0.15, fraction=0.7, maxit=30):
    """Estimate, mark, refine, transfer and re-solve, up to ``ngen`` times.

    The mesh never exceeds ``maxt`` triangles. If Newton fails after a
    refinement the last converged (mesh, U) pair is returned with
    ``converged=False``.
    """
    U = np.asarray(U, dtype=float)
    gens = 0
    for _ in range(ngen):
        if mesh.n_t >= maxt:
            break
        S = get_system(mesh, problem)
        E = error_estimate(mesh, problem, U, mu, alpha, beta, system=S)
        marks = E.marks(fraction)
        budget = (maxt - mesh.n_t) // 3
        if budget < 1 or len(marks) == 0:
            break
        marks = marks[np.argsort(-E.values[marks])[:budget]]
        new_mesh, _ = refine(mesh, marks)
        # closure can overshoot the budget: shrink the marked set until it fits
        while new_mesh.n_t > maxt and len(marks) > 1:
            marks = marks[: len(marks) // 2]
            new_mesh, _ = refine(mesh, marks)
        if new_mesh.n_t > maxt:
            break
        U_new = transfer(mesh, U, new_mesh)
        try:
            U_new, _ = newton_solve(get_system(new_mesh, problem), U_new, mu, tol=tol, maxit=maxit)
        except NewtonError:
            warnings.warn("Newton failed after refinement; keeping the previous mesh", RuntimeWarning)
            return AdaptResult(mesh, U, False, gens)
        mesh, U = new_mesh, U_new
        gens += 1
    return AdaptResult(mesh, U, True, gens)
