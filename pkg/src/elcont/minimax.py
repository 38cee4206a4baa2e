"""Local minimax search for multiple saddle-type solutions of variational problems."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .fem import NewtonError, get_system, newton_solve, norm_inf
from .geometry import d4_maps, symmetry_permutations
from .linsolve import eigs_generalized


class MinimaxError(RuntimeError):
    pass


class UnboundedError(MinimaxError):
    pass


class DegeneratePeakError(MinimaxError):
    pass


class NonConvergenceError(MinimaxError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


class UnresolvedMorseIndex(MinimaxError):
    pass


class SupportSpace:
    """K-orthonormal basis of previously found solutions (free-node vectors)."""

    def __init__(self, K, solutions=()):
        self.K = K
        self.basis = []
        self.raw = []
        for u in solutions:
            self.add(u)

    def __len__(self):
        return len(self.basis)

    def project(self, v):
        """Remove the components along the basis (K inner product), twice for stability."""
        v = np.array(v, dtype=float)
        for _ in range(2):
            for b in self.basis:
                v -= (b @ (self.K @ v)) * b
        return v

    def add(self, u):
        w = self.project(u)
        nrm = math.sqrt(max(w @ (self.K @ w), 0.0))
        unrm = math.sqrt(max(u @ (self.K @ u), 0.0))
        if nrm <= 1e-8 * max(unrm, 1e-300):
            raise MinimaxError("solution lies in the support space already")
        self.basis.append(w / nrm)
        self.raw.append(np.array(u, dtype=float))

    def gram_error(self):
        if not self.basis:
            return 0.0
        B = np.column_stack(self.basis)
        return float(np.max(np.abs(B.T @ (self.K @ B) - np.eye(len(self.basis)))))


@dataclass
class PeakResult:
    u: np.ndarray
    coefficients: np.ndarray  # (t0, t1, ..., tn)
    J_value: float
    iterations: int


@dataclass
class MinimaxSettings:
    tol_grad: float = 1e-4
    max_outer: int = 500
    max_inner: int = 60
    armijo_c: float = 0.25
    alpha0: float = 1.0
    alpha_max: float = 8.0
    newton_tol: float = 1e-8
    neig: int = 20
    seeds: list = field(default_factory=list)

    def __post_init__(self):
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")


class _Functional:
    """Energy, gradient and Hessian restricted to free nodes at a fixed mu."""

    def __init__(self, problem, mesh, mu):
        if not problem.variational or problem.F is None:
            raise MinimaxError(f"{problem.name}: minimax needs a variational problem with an antiderivative")
        if problem.bc != "dirichlet":
            raise MinimaxError("minimax is implemented for zero Dirichlet data")
        self.S = get_system(mesh, problem)
        self.mu = mu
        self.K = self.S.K_red * problem.c

    def J(self, y):
        return self.S.energy(self.S.expand(y), self.mu)

    def grad(self, y):
        return self.S.G(y, self.mu)

    def hess(self, y):
        return self.S.jacobian(y, self.mu)


def normalize(K, v):
    return v / math.sqrt(v @ (K @ v))


def peak_select(problem, mesh, L, v, warm=None, mu=0.0, max_iter=60, tol=1e-10, _fun=None):
    """Local maximizer of (t0, t) -> J(t0 v + sum t_i L_i) with t0 >= 0.

    Newton ascent in the small coefficient space with a negative-definite
    modification of the reduced Hessian and backtracking.
    """
    fun = _fun or _Functional(problem, mesh, mu)
    E = np.column_stack([v] + list(L.basis))
    n = E.shape[1]
    if warm is not None and len(warm) == n and warm[0] > 0:
        t = np.array(warm, dtype=float)
    else:
        t = np.zeros(n)
        t[0] = _ray_peak(fun, v)
    y = E @ t
    Jv = fun.J(y)
    for it in range(1, max_iter + 1):
        g = E.T @ fun.grad(y)
        gscale = max(1.0, math.sqrt(t @ t))
        if np.max(np.abs(g)) <= tol * gscale:
            break
        H = E.T @ (fun.hess(y) @ E)
        # dJ/dt = g; Newton ascent with the Hessian made negative definite
        w, Q = np.linalg.eigh(0.5 * (H + H.T))
        w = np.maximum(np.abs(w), 1e-8 * max(1.0, np.max(np.abs(w))))
        step = Q @ ((Q.T @ g) / w)
        lam = 1.0
        if t[0] + step[0] <= 0:
            lam = min(1.0, 0.9 * t[0] / max(-step[0], 1e-300))
        while lam > 1e-12:
            t_new = t + lam * step
            y_new = E @ t_new
            J_new = fun.J(y_new)
            if J_new >= Jv + 1e-4 * lam * (g @ step):
                break
            lam *= 0.5
        else:
            break
        t, y, Jv = t_new, y_new, J_new
        if Jv > 1e12:
            raise UnboundedError("energy grows without bound along the peak search")
        if t[0] < 1e-10:
            raise DegeneratePeakError("peak collapsed onto the support space (t0 -> 0)")
    if t[0] < 1e-10:
        raise DegeneratePeakError("peak collapsed onto the support space (t0 -> 0)")
    return PeakResult(y, t, Jv, it)


def _ray_peak(fun, v, t=1.0):
    """Maximize J(t v) over t > 0 by a safeguarded Newton iteration on dJ/dt."""
    lo = 0.0
    while v @ fun.grad(t * v) < 0:
        lo = t
        t *= 2
        if t > 1e8:
            raise UnboundedError("J(t v) increases without bound")
    hi = t
    t = 0.5 * (lo + hi) if lo > 0 else hi
    for _ in range(100):
        d1 = v @ fun.grad(t * v)
        if abs(d1) <= 1e-13 * max(1.0, abs(t)):
            break
        d2 = v @ (fun.hess(t * v) @ v)
        if d1 < 0:
            hi = t
        else:
            lo = t
        tn = t - d1 / d2 if d2 != 0 else 0.5 * (lo + hi)
        t = tn if lo < tn < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * hi:
            break
    return t


def minimax_search(problem, mesh, L, v0, settings=None, mu=0.0):
    """Descent on the solution manifold from the sphere direction ``v0``.

    Returns (U, iterations) with U polished by Newton to ``settings.newton_tol``.
    """
    settings = settings or MinimaxSettings()
    fun = _Functional(problem, mesh, mu)
    S = fun.S
    K = fun.K
    Klu = S.K_lu()
    v = normalize(K, L.project(_reduce(S, v0)))
    peak = peak_select(problem, mesh, L, v, _fun=fun)
    alpha = settings.alpha0
    for it in range(1, settings.max_outer + 1):
        g = fun.grad(peak.u)
        d = Klu.solve(g) / problem.c
        dn = math.sqrt(max(d @ (K @ d), 0.0))
        if dn <= settings.tol_grad * max(1.0, math.sqrt(peak.u @ (K @ peak.u))):
            break
        t0 = peak.coefficients[0]
        while True:
            v_new = normalize(K, L.project(v - (alpha / t0) * d))
            try:
                cand = peak_select(problem, mesh, L, v_new, warm=peak.coefficients, _fun=fun)
            except DegeneratePeakError:
                cand = None
            if cand is not None and cand.J_value <= peak.J_value - settings.armijo_c * alpha * dn**2:
                break
            alpha *= 0.5
            if alpha < 1e-12:
                raise NonConvergenceError("line search failed", last=S.expand(peak.u))
        v, peak = v_new, cand
        alpha = min(2 * alpha, settings.alpha_max)
    else:
        raise NonConvergenceError(f"no convergence in {settings.max_outer} outer iterations", last=S.expand(peak.u))
    try:
        U, _ = newton_solve(S, S.expand(peak.u), mu, tol=settings.newton_tol, maxit=30)
    except NewtonError as exc:
        raise NonConvergenceError(f"Newton polish failed: {exc}", last=S.expand(peak.u)) from exc
    return U, it


def _reduce(S, v):
    v = np.asarray(v, dtype=float)
    return S.restrict(v) if len(v) == S.mesh.n_p else v


def morse_index(problem, mesh, U, mu, neig=20):
    """Number of negative eigenvalues of the second variation (generalized with M)."""
    S = get_system(mesh, problem)
    J = S.jacobian(S.restrict(U), mu)
    k = min(neig, S.n_free)
    w = eigs_generalized(J, S.M_red, k).eigenvalues
    if len(w) == k and w[-1] < 0 and k < S.n_free:
        raise UnresolvedMorseIndex(f"all {k} computed eigenvalues are negative; raise neig")
    return int(np.sum(w < 0))


# seeds ---------------------------------------------------------------------


@dataclass
class Bump:
    x: float
    y: float
    sign: float
    width: float


@dataclass
class Seed:
    name: str
    bumps: list
    support: list | None = None  # indices of earlier results spanning L; None = all so far

    def field(self, mesh, domain=None):
        p = mesh.points
        u = np.zeros(mesh.n_p)
        for b in self.bumps:
            u += b.sign * np.exp(-((p[:, 0] - b.x) ** 2 + (p[:, 1] - b.y) ** 2) / (2 * b.width**2))
        u[mesh.boundary_flag] = 0.0
        m = np.max(np.abs(u))
        return u / m if m > 0 else u


_BUMP = re.compile(r"bump\(\s*([^,]+),\s*([^,]+),\s*([^,]+),\s*([^)]+)\)")


def parse_seed(text, name="seed", support=None):
    """Parse ``bump(x, y, sign, width) [+ bump(...)]*``."""
    parts = [s.strip() for s in text.split("+ bump")]
    bumps = []
    for i, part in enumerate(parts):
        part = part if i == 0 else "bump" + part
        m = _BUMP.fullmatch(part.strip())
        if not m:
            raise ValueError(f"bad seed term {part!r}")
        x, y, sgn, w = (float(eval_number(g)) for g in m.groups())
        if w <= 0:
            raise ValueError("bump width must be positive")
        bumps.append(Bump(x, y, sgn, w))
    if not bumps:
        raise ValueError("empty seed")
    return Seed(name, bumps, support)


def eval_number(s):
    s = s.strip()
    if s in ("+", "+1"):
        return 1.0
    if s == "-":
        return -1.0
    return float(s)


def default_seeds(problem_id, half_length=0.5):
    """Named signed-Gaussian seeds for the square problems."""
    r = 0.5 * half_length
    w = 0.15 * half_length * 2
    if problem_id == "lef_test":
        return [
            Seed("center", [Bump(0, 0, 1, w)], []),
            Seed("diag", [Bump(r, r, 1, w), Bump(-r, -r, -1, w)], [0]),
            Seed("antidiag", [Bump(-r, r, 1, w), Bump(r, -r, -1, w)], [0]),
            Seed("x-axis", [Bump(r, 0, 1, w), Bump(-r, 0, -1, w)], [0]),
            Seed("y-axis", [Bump(0, r, 1, w), Bump(0, -r, -1, w)], [0]),
            Seed("quadrants", [Bump(r, r, 1, w), Bump(-r, r, -1, w), Bump(-r, -r, 1, w), Bump(r, -r, -1, w)], [0, 1, 2]),
            Seed("axes4", [Bump(r, 0, 1, w), Bump(0, r, -1, w), Bump(-r, 0, 1, w), Bump(0, -r, -1, w)], [0, 1, 2]),
        ]
    if problem_id == "lef_microforce":
        c = 0.5 * half_length
        w = 0.3 * half_length
        return [
            Seed("center", [Bump(0, 0, -1, w)], []),
            Seed("diag", [Bump(c, c, -1, w), Bump(-c, -c, 1, w)], [0]),
            Seed("antidiag", [Bump(-c, c, 1, w), Bump(c, -c, -1, w)], [0]),
        ]
    raise KeyError(f"no default seeds for {problem_id!r}")


# search over many seeds ------------------------------------------------------


@dataclass
class Solution:
    U: np.ndarray
    morse_index: int
    energy: float
    seed: str
    iterations: int
    level: int = 1  # dim of the support space + 1

    @property
    def norm_inf(self):
        return norm_inf(self.U)


@dataclass
class SearchResult:
    solutions: list
    failures: list  # (seed name, message)

    def __iter__(self):
        return iter([(s.U, s.morse_index) for s in self.solutions])

    def __len__(self):
        return len(self.solutions)


def find_multiple(problem, mesh, mu0, seeds, settings=None):
    """Run the minimax search from every seed, growing the support space.

    Each seed may name the earlier solutions spanning its support space;
    otherwise all solutions found so far are used. Solutions equal (up to
    sign) to an earlier one are discarded.
    """
    if problem.name.startswith("caginalp") or not problem.variational:
        raise MinimaxError(f"{problem.name}: the minimax search does not apply to this functional")
    settings = settings or MinimaxSettings()
    S = get_system(mesh, problem)
    K = S.K_red * problem.c
    found, failures = [], []
    for k, seed in enumerate(seeds):
        seed = seed if isinstance(seed, Seed) else Seed(f"seed{k}", [], None)
        v0 = seed.field(mesh) if seed.bumps else None
        if v0 is None:
            failures.append((seed.name, "empty seed"))
            continue
        idx = range(len(found)) if seed.support is None else [i for i in seed.support if i < len(found)]
        try:
            L = SupportSpace(K, [S.restrict(found[i].U) for i in idx])
            U, its = minimax_search(problem, mesh, L, v0, settings, mu=mu0)
        except MinimaxError as exc:
            failures.append((seed.name, str(exc)))
            continue
        if norm_inf(U) < 1e-6 or any(same_solution(U, f.U) for f in found):
            failures.append((seed.name, "duplicate or trivial solution"))
            continue
        try:
            mi = morse_index(problem, mesh, U, mu0, settings.neig)
        except UnresolvedMorseIndex as exc:
            mi = -1
            failures.append((seed.name, str(exc)))
        found.append(Solution(U, mi, S.energy(U, mu0), seed.name, its, len(L) + 1))
    return SearchResult(found, failures)


def same_solution(U, V, rtol=1e-3, perms=None, odd=True):
    """True if V (or -V, or a symmetric image) equals U within rtol in the max norm."""
    scale = rtol * max(norm_inf(U), norm_inf(V))
    images = [V] if perms is None else [V[p] for p in perms]
    for W in images:
        if np.max(np.abs(U - W)) <= scale or (odd and np.max(np.abs(U + W)) <= scale):
            return True
    return False


def symmetry_classes(mesh, solutions, rtol=1e-2, center=(0.0, 0.0)):
    """Group solutions that are images of each other under the square group (and sign)."""
    perms = symmetry_permutations(mesh, d4_maps(center))
    classes = []
    for i, s in enumerate(solutions):
        U = s.U if hasattr(s, "U") else s
        for cl in classes:
            V = solutions[cl[0]]
            V = V.U if hasattr(V, "U") else V
            if same_solution(U, V, rtol, perms):
                cl.append(i)
                break
        else:
            classes.append([i])
    return classes
