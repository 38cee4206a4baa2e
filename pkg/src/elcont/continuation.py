"""Pseudo-arclength continuation with stability monitoring, event detection,
branch-point location and branch switching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .fem import NewtonError, adapt, assemble_mass, get_system, newton_solve, norm_inf, norm_l2
from .geometry import transfer
from .linsolve import (
    BorderedSingularError,
    LuFactorization,
    SingularMatrixError,
    eigs_generalized,
    solve_bordered,
)


class ContinuationError(RuntimeError):
    pass


class TangentError(ContinuationError):
    pass


class CorrectionError(ContinuationError):
    pass


class MultiplicityError(ContinuationError):
    """Several eigenvalues vanish at a branch point (symmetry-induced multiple bifurcation)."""

    def __init__(self, eigenvalues, gap):
        self.eigenvalues = np.asarray(eigenvalues)
        self.gap = gap
        super().__init__(
            f"kernel is not simple: {len(self.eigenvalues)} eigenvalues within gap {gap:.3e} "
            f"of zero ({', '.join(f'{x:.3e}' for x in self.eigenvalues)})"
        )


@dataclass
class ContSettings:
    ds: float = 0.1
    dsmax: float = 0.5
    dsmin: float = 1e-6
    tol: float = 1e-6
    maxit: int = 10
    xi: float | None = None  # None: 1 / n_p of the current mesh
    neig: int = 20
    amod: int = 0
    ngen: int = 10
    maxt: int = 4000
    max_steps: int = 500
    direction: int = 1
    mu_min: float = -math.inf
    mu_max: float = math.inf
    stop: Callable | None = None
    stability: bool = True
    max_secant: float = 2.0  # reject steps whose secant exceeds this multiple of ds

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.dsmin <= self.ds <= self.dsmax:
            raise ValueError("need 0 < dsmin <= ds <= dsmax")
        if self.xi is not None and not 0 < self.xi < 1:
            raise ValueError("xi must lie in (0, 1)")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if not self.max_secant > 1:
            raise ValueError("max_secant must exceed 1")
        if self.tol <= 0 or self.maxit < 1 or self.neig < 1:
            raise ValueError("tol, maxit and neig must be positive")

    def xi_for(self, n_p):
        return self.xi if self.xi is not None else 1.0 / n_p


@dataclass
class BranchPoint:
    U: np.ndarray
    mu: float
    s: float
    tangent: np.ndarray  # (U_dot on all nodes, mu_dot)
    n_neg: int
    det_sign: int
    point_type: str = "regular"
    newton_iters: int = 0
    mesh: object = None
    eigenvalues: np.ndarray | None = None

    @property
    def np(self):
        return self.mesh.n_p if self.mesh is not None else len(self.U)

    @property
    def norm_inf(self):
        return norm_inf(self.U)

    @property
    def norm_l2(self):
        M = self.mesh._cache.get("mass")
        if M is None:
            M = self.mesh._cache["mass"] = assemble_mass(self.mesh)
        return norm_l2(M, self.U)


@dataclass
class Branch:
    points: list
    settings: ContSettings
    problem: str
    events: list = field(default_factory=list)  # (index, type)
    status: str = "ok"

    def __len__(self):
        return len(self.points)

    @property
    def mu(self):
        return np.array([p.mu for p in self.points])

    @property
    def s(self):
        return np.array([p.s for p in self.points])

    @property
    def norms_inf(self):
        return np.array([p.norm_inf for p in self.points])

    @property
    def norms_l2(self):
        return np.array([p.norm_l2 for p in self.points])

    def events_of(self, kind):
        return [(i, t) for i, t in self.events if t == kind]


# elementary pieces ---------------------------------------------------------


def xi_inner(xi, Z, W):
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    return float(xi * (Z[:-1] @ W[:-1]) + (1 - xi) * Z[-1] * W[-1])


def xi_norm(xi, Z):
    return math.sqrt(max(xi_inner(xi, Z, Z), 0.0))


def tangent(jac_u, jac_mu, prev_tangent, xi, lu=None):
    """Unit tangent (in the xi-norm) of the solution curve, oriented along ``prev_tangent``."""
    prev = np.asarray(prev_tangent, dtype=float)
    n = len(prev) - 1
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    try:
        z = solve_bordered(jac_u, jac_mu, xi * prev[:-1], (1 - xi) * prev[-1], rhs, lu=lu)
    except (BorderedSingularError, SingularMatrixError) as exc:
        raise TangentError("bordered tangent system is singular") from exc
    z /= xi_norm(xi, z)
    if xi_inner(xi, z, prev) < 0:
        z = -z
    return z


def predict(Z0, ds):
    """Tangent predictor; ``Z0`` is a BranchPoint or a (U, mu, tangent) triple."""
    if isinstance(Z0, BranchPoint):
        U0, mu0, t = Z0.U, Z0.mu, Z0.tangent
    else:
        U0, mu0, t = Z0
    return np.asarray(U0) + ds * t[:-1], mu0 + ds * t[-1]


def step_control(ok, iters, ds, settings):
    """Next step length, or None when a failure happens at the minimal step."""
    if not ok:
        if ds <= settings.dsmin * (1 + 1e-12):
            return None
        return max(ds / 2, settings.dsmin)
    if iters <= 3:
        return min(1.3 * ds, settings.dsmax)
    return ds


def _arclength(system, xi, y, mu, y0, mu0, t0, ds):
    return xi * (t0[:-1] @ (y - y0)) + (1 - xi) * t0[-1] * (mu - mu0) - ds


def correct(system, y_guess, mu_guess, y0, mu0, t0, ds, settings, xi):
    """Newton corrector on (G, p) in free-node coordinates.

    ``t0`` is the reduced tangent (free-node part plus mu component).
    Returns (y, mu, iterations, lu_of_jacobian).
    """
    y, mu = np.array(y_guess, dtype=float), float(mu_guess)
    hist = []
    step = math.inf
    for it in range(settings.maxit + 1):
        g = system.G(y, mu)
        p = _arclength(system, xi, y, mu, y0, mu0, t0, ds)
        gn = float(np.max(np.abs(g))) if len(g) else 0.0
        if not np.isfinite(gn):
            raise CorrectionError("residual is not finite")
        # at least one Newton step, and a small last update: with loose
        # tolerances a small residual alone lets the curve drift near folds
        if it > 0 and gn <= settings.tol and abs(p) <= settings.tol and step <= settings.tol:
            return y, mu, it, hist
        hist.append(gn)
        if len(hist) >= 3 and hist[-1] > hist[-2] > hist[-3]:
            raise CorrectionError("corrector diverging")
        if it == settings.maxit:
            break
        J = system.jacobian(y, mu)
        try:
            dz = solve_bordered(J, system.G_mu(y, mu), xi * t0[:-1], (1 - xi) * t0[-1], np.concatenate([g, [p]]))
        except (BorderedSingularError, SingularMatrixError) as exc:
            raise CorrectionError("singular bordered matrix in corrector") from exc
        y -= dz[:-1]
        mu -= dz[-1]
        step = xi_norm(xi, dz)
    raise CorrectionError(f"corrector did not converge in {settings.maxit} iterations")


def stability(system, y, mu, neig, J=None, lu=None):
    """(n_neg, det_sign, eigenvalues) of the Jacobian on free nodes."""
    J = system.jacobian(y, mu) if J is None else J
    lu = LuFactorization(J) if lu is None else lu
    det = lu.det_sign()
    n = J.shape[0]
    k = min(neig, n)
    while True:
        w = eigs_generalized(J, system.M_red, k).eigenvalues
        if k < n and (len(w) == 0 or np.all(w < 0)):
            k = min(2 * k, n)
            continue
        return int(np.sum(w < 0)), det, w


def detect_events(prev, cur):
    """Fold / branch-point classification between two consecutive points."""
    dn = cur.n_neg - prev.n_neg
    det_flip = prev.det_sign * cur.det_sign < 0
    fold_tan = prev.tangent[-1] * cur.tangent[-1] < 0
    if dn == 0 and not det_flip:
        return []
    if fold_tan and abs(dn) == 1:
        return ["fold"]
    return ["branch"]


# the continuation loop -------------------------------------------------------


class _State:
    """Working copy of the current point in free-node coordinates."""

    def __init__(self, problem, mesh):
        self.problem = problem
        self.set_mesh(mesh)

    def set_mesh(self, mesh):
        self.mesh = mesh
        self.system = get_system(mesh, self.problem)

    def reduce_tangent(self, t):
        return np.concatenate([self.system.restrict(t[:-1]), [t[-1]]])

    def expand_tangent(self, t):
        return np.concatenate([self.system.expand(t[:-1]), [t[-1]]])


def _make_point(state, y, mu, s, t_red, iters, settings, kind="regular"):
    S = state.system
    J = S.jacobian(y, mu)
    lu = LuFactorization(J)
    if settings.stability:
        n_neg, det, w = stability(S, y, mu, settings.neig, J, lu)
    else:
        n_neg, det, w = 0, lu.det_sign(), None
    return BranchPoint(S.expand(y), mu, s, state.expand_tangent(t_red), n_neg, det, kind, iters, state.mesh, w), J, lu


def continue_branch(problem, mesh, U0, mu0, settings=None, tangent0=None, base_mesh=None):
    """Trace the solution curve through (U0, mu0).

    ``tangent0`` (full length plus mu component) orients the start; without
    it the curve leaves in the direction of ``settings.direction`` in mu.
    With ``settings.amod > 0`` the mesh is re-adapted from ``base_mesh``
    (default: the starting mesh) every ``amod`` steps.
    """
    settings = settings or ContSettings()
    state = _State(problem, mesh)
    base_mesh = base_mesh or mesh
    S = state.system
    try:
        U0, its = newton_solve(S, U0, mu0, tol=settings.tol, maxit=max(settings.maxit, 20))
    except NewtonError as exc:
        raise ContinuationError(f"starting point does not converge: {exc}") from exc
    y = S.restrict(U0)
    xi = settings.xi_for(mesh.n_p)
    if tangent0 is None:
        prev = np.zeros(S.n_free + 1)
        prev[-1] = settings.direction
    else:
        prev = settings.direction * state.reduce_tangent(np.asarray(tangent0, dtype=float))
    J = S.jacobian(y, mu0)
    lu = LuFactorization(J)
    t = tangent(J, S.G_mu(y, mu0), prev, xi, lu=lu)
    first, _, _ = _make_point(state, y, mu0, 0.0, t, its, settings, "start")
    branch = Branch([first], settings, problem.name)
    ds = settings.ds
    cur = first
    y_cur, mu_cur, t_cur = y, mu0, t
    for step in range(1, settings.max_steps + 1):
        while True:
            y_pred = y_cur + ds * t_cur[:-1]
            mu_pred = mu_cur + ds * t_cur[-1]
            try:
                y_new, mu_new, iters, _ = correct(S, y_pred, mu_pred, y_cur, mu_cur, t_cur, ds, settings, xi)
                if xi_norm(xi, np.concatenate([y_new - y_cur, [mu_new - mu_cur]])) > settings.max_secant * ds:
                    raise CorrectionError("corrector jumped away from the predicted point")
                J = S.jacobian(y_new, mu_new)
                lu = LuFactorization(J)
                t_new = tangent(J, S.G_mu(y_new, mu_new), t_cur, xi, lu=lu)
                ok = True
            except ContinuationError:
                ok, iters = False, settings.maxit
            new_ds = step_control(ok, iters, ds, settings)
            if ok:
                break
            if new_ds is None:
                branch.status = "dsmin"
                cur.point_type = "endpoint"
                return _finish(branch)
            ds = new_ds
        s_new = cur.s + ds
        point, J, lu = _make_point(state, y_new, mu_new, s_new, t_new, iters, settings)
        ds = new_ds

        crossed = _crossed_bound(mu_new, settings)
        if crossed is not None:
            point = _land_on_bound(state, point, cur, crossed, settings) or point
        branch.points.append(point)
        for ev in detect_events(cur, point):
            branch.events.append((len(branch.points) - 1, ev))
            if point.point_type == "regular":
                point.point_type = ev
        if crossed is not None:
            point.point_type = "endpoint"
            branch.status = "bound"
            break
        if settings.stop is not None and settings.stop(point):
            point.point_type = "endpoint"
            branch.status = "stopped"
            break
        cur = point
        y_cur, mu_cur, t_cur = S.restrict(point.U), point.mu, state.reduce_tangent(point.tangent)

        if settings.amod > 0 and step % settings.amod == 0:
            res = adapt(
                base_mesh,
                problem,
                transfer(state.mesh, point.U, base_mesh),
                point.mu,
                ngen=settings.ngen,
                maxt=settings.maxt,
                tol=settings.tol,
            )
            if res.converged or res.generations > 0:
                old_mesh = state.mesh
                state.set_mesh(res.mesh)
                S = state.system
                t_full = np.concatenate([transfer(old_mesh, point.tangent[:-1], res.mesh), [point.tangent[-1]]])
                y_cur = S.restrict(res.U)
                xi = settings.xi_for(res.mesh.n_p)
                J = S.jacobian(y_cur, mu_cur)
                try:
                    t_cur = tangent(J, S.G_mu(y_cur, mu_cur), state.reduce_tangent(t_full), xi)
                except TangentError:
                    t_cur = state.reduce_tangent(t_full)
                    t_cur /= xi_norm(xi, t_cur)
                adapted, _, _ = _make_point(state, y_cur, mu_cur, point.s, t_cur, 0, settings)
                adapted.n_neg, adapted.det_sign = point.n_neg, point.det_sign
                branch.points[-1] = adapted
                cur = adapted
    else:
        branch.status = "max_steps"
        branch.points[-1].point_type = "endpoint"
    return _finish(branch)


def _finish(branch):
    if branch.points[-1].point_type == "regular":
        branch.points[-1].point_type = "endpoint"
    return branch


def _crossed_bound(mu, settings):
    if mu < settings.mu_min:
        return settings.mu_min
    if mu > settings.mu_max:
        return settings.mu_max
    return None


def _land_on_bound(state, point, prev, bound, settings):
    """Re-solve at mu = bound from the interpolated state (natural parameter)."""
    w = (bound - prev.mu) / (point.mu - prev.mu)
    U_guess = (1 - w) * prev.U + w * point.U
    try:
        U, its = newton_solve(state.system, U_guess, bound, tol=settings.tol, maxit=max(settings.maxit, 20))
    except NewtonError:
        return None
    S = state.system
    y = S.restrict(U)
    t = tangent(S.jacobian(y, bound), S.G_mu(y, bound), state.reduce_tangent(point.tangent), settings.xi_for(state.mesh.n_p))
    s = prev.s + w * (point.s - prev.s)
    p, _, _ = _make_point(state, y, bound, s, t, its, settings)
    return p


# locating and switching ----------------------------------------------------------


@dataclass
class LocatedPoint:
    U: np.ndarray
    mu: float
    s: float
    eigenvalue: float
    eigenvalues: np.ndarray
    tangent: np.ndarray
    index: int  # position of the crossing eigenvalue
    iterations: int
    mesh: object = None


def findbif(problem, mesh, branch, index, settings=None, rtol=1e-6, stol=1e-8, max_iter=60):
    """Locate the eigenvalue zero crossing between points index-1 and index of ``branch``.

    Illinois-type regula falsi in arclength with bisection safeguard; every
    trial point is corrected onto the hyperplane through the earlier point.
    """
    settings = settings or branch.settings
    A, B = branch.points[index - 1], branch.points[index]
    if A.n_neg == B.n_neg:
        raise ContinuationError("segment endpoints have equal n_neg; nothing to locate")
    if A.mesh is not B.mesh:
        raise ContinuationError("segment spans a mesh change")
    mesh = A.mesh
    S = get_system(mesh, problem)
    xi = settings.xi_for(mesh.n_p)
    k = min(A.n_neg, B.n_neg)
    neig = max(settings.neig, k + 3)
    yA = S.restrict(A.U)
    tA = np.concatenate([S.restrict(A.tangent[:-1]), [A.tangent[-1]]])
    length = xi_inner(xi, np.concatenate([S.restrict(B.U) - yA, [B.mu - A.mu]]), tA)
    tight = replace(settings, tol=min(settings.tol, 1e-9), maxit=max(settings.maxit, 20), stop=None)

    def evaluate(sig, guess):
        y, mu, _, _ = correct(S, guess[0], guess[1], yA, A.mu, tA, sig, tight, xi)
        J = S.jacobian(y, mu)
        res = eigs_generalized(J, S.M_red, min(neig, S.n_free))
        return y, mu, res

    def lam(res):
        return res.eigenvalues[k]

    lo, hi = 0.0, length
    flo = A.eigenvalues[k] if A.eigenvalues is not None and len(A.eigenvalues) > k else None
    fhi = B.eigenvalues[k] if B.eigenvalues is not None and len(B.eigenvalues) > k else None
    if flo is None:
        flo = lam(evaluate(0.0, (yA, A.mu))[2])
    if fhi is None:
        fhi = lam(evaluate(length, (S.restrict(B.U), B.mu))[2])
    best = None
    side = 0
    for it in range(1, max_iter + 1):
        if fhi != flo and flo * fhi < 0:
            sig = hi - fhi * (hi - lo) / (fhi - flo)
        else:
            sig = 0.5 * (lo + hi)
        if not lo < sig < hi or min(sig - lo, hi - sig) < 1e-3 * (hi - lo):
            sig = 0.5 * (lo + hi)
        w = sig / length if length else 0.5
        guess = ((1 - w) * yA + w * S.restrict(B.U), (1 - w) * A.mu + w * B.mu)
        y, mu, res = evaluate(sig, guess)
        f = lam(res)
        best = (y, mu, sig, res)
        scale = np.max(np.abs(res.eigenvalues))
        if abs(f) <= rtol * scale or hi - lo < stol:
            break
        if (f < 0) == (flo < 0):
            lo, flo = sig, f
            if side == -1:
                fhi *= 0.5
            side = -1
        else:
            hi, fhi = sig, f
            if side == 1:
                flo *= 0.5
            side = 1
    y, mu, sig, res = best
    J = S.jacobian(y, mu)
    try:
        t = tangent(J, S.G_mu(y, mu), tA, xi)
    except TangentError:
        t = tA
    return LocatedPoint(
        S.expand(y), mu, A.s + sig, float(res.eigenvalues[k]), res.eigenvalues, np.concatenate([S.expand(t[:-1]), [t[-1]]]), k, it, mesh
    )


def kernel_modes(problem, mesh, point, neig=None, gap=1e-6):
    """Eigenpairs of the Jacobian at a located point whose eigenvalues vanish within ``gap``.

    ``gap`` is relative to the largest returned eigenvalue magnitude.
    """
    S = get_system(mesh, problem)
    y = S.restrict(point.U)
    J = S.jacobian(y, point.mu)
    k = min(S.n_free, max(neig or 0, point.index + 4 if hasattr(point, "index") else 6))
    res = eigs_generalized(J, S.M_red, k)
    w = res.eigenvalues
    i0 = int(np.argmin(np.abs(w)))
    tol = gap * max(np.max(np.abs(w)), 1.0)
    near = np.flatnonzero(np.abs(w - w[i0]) <= tol)
    return w[near], res.eigenvectors[:, near], tol


def _amplitude_newton(S, y_star, mu_star, phi, delta, tol, maxit=30):
    """Solve G = 0 with the mass-weighted amplitude along ``phi`` fixed to ``delta``."""
    Mphi = S.M_red @ phi
    target = delta * (phi @ Mphi)
    y, mu = y_star + delta * phi, mu_star
    for _ in range(maxit):
        g = S.G(y, mu)
        c = Mphi @ (y - y_star) - target
        if np.max(np.abs(g)) <= tol and abs(c) <= tol * max(1.0, abs(target)):
            return y, mu
        J = S.jacobian(y, mu)
        dz = solve_bordered(J, S.G_mu(y, mu), Mphi, 0.0, np.concatenate([g, [c]]))
        y = y - dz[:-1]
        mu = mu - dz[-1]
        if not np.all(np.isfinite(y)):
            break
    raise NewtonError("amplitude-constrained Newton failed")


@dataclass
class SwitchStart:
    U: np.ndarray
    mu: float
    tangent: np.ndarray  # full-length direction away from the branch point
    sign: int
    mesh: object = None


def switch_branch(problem, mesh, point, delta_sw=0.05, tol=1e-8, gap=1e-6, directions=None):
    """Starting solutions on the bifurcating branch(es) at a located branch point.

    The kernel eigenvector phi (scaled to unit max norm) perturbs U* by
    +-delta_sw; each perturbation is corrected with mu free and the amplitude
    along phi held fixed. A multiple kernel raises MultiplicityError unless
    explicit ``directions`` (free-node vectors in the kernel) are supplied.
    """
    if not delta_sw > 0:
        raise ValueError("delta_sw must be positive")
    S = get_system(mesh, problem)
    y_star = S.restrict(point.U)
    if directions is None:
        w, V, tol_gap = kernel_modes(problem, mesh, point, gap=gap)
        if len(w) > 1:
            raise MultiplicityError(w, tol_gap)
        directions = [V[:, 0]]
    out = []
    for phi in directions:
        phi = phi / np.max(np.abs(phi))
        for sign in (1, -1):
            try:
                y, mu = _amplitude_newton(S, y_star, point.mu, sign * phi, delta_sw, tol)
            except (NewtonError, SingularMatrixError):
                continue
            dU = S.expand(y - y_star)
            if norm_inf(dU) <= 10 * delta_sw * tol:
                continue
            t = np.concatenate([dU, [mu - point.mu]])
            out.append(SwitchStart(S.expand(y), mu, t, sign, mesh))
    return out


def symmetric_kernel_directions(problem, mesh, point, perms, gap=1e-6, atol=1e-6):
    """Symmetry-adapted kernel directions at a multiple branch point.

    ``perms`` are node permutations of the mesh symmetry group. Within the
    kernel, every axis fixed by some group element (or by its negative when
    the problem is odd) is a candidate; one representative is kept per group
    orbit.
    """
    S = get_system(mesh, problem)
    w, V, _ = kernel_modes(problem, mesh, point, gap=gap)
    if len(w) == 1:
        return [V[:, 0]]
    free = S.free
    pos = np.full(mesh.n_p, -1)
    pos[free] = np.arange(len(free))
    red = [pos[np.asarray(p)[free]] for p in perms]
    M = S.M_red
    # action on the kernel: R_g = V^T M P_g V
    acts = []
    for r in red:
        PV = np.empty_like(V)
        PV[r] = V
        acts.append(V.T @ (M @ PV))
    signs = (1, -1) if problem.odd else (1,)
    cands = []
    for R in acts:
        for sgn in signs:
            A = sgn * R
            if np.allclose(A, np.eye(len(A)), atol=atol):
                continue
            ev, vec = np.linalg.eigh(0.5 * (A + A.T))
            for j in np.flatnonzero(np.abs(ev - 1) < 1e-4):
                # keep fixed axes that form a one-dimensional fixed space
                if np.sum(np.abs(ev - 1) < 1e-4) == 1:
                    cands.append(vec[:, j])
    reps = []
    for c in cands:
        images = [sgn * (R @ c) for R in acts for sgn in (1, -1)]
        if not any(any(np.allclose(im, r, atol=1e-4) for im in images) for r in reps):
            reps.append(c)
    return [V @ c for c in reps]
