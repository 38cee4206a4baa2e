"""Elliptic problem definitions: the Lane-Emden-Fowler test problem, the microforce
variant, the reduced Caginalp phase-field equation, and their energies."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .fem import get_system
from .geometry import Mesh, PolygonDomain, interpolate_many, rectangle_mesh, transfer, triangulate
from .linsolve import LuFactorization


class ProblemError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """-c Lap u + a u - f(u, x, mu) = 0 with zero Dirichlet or Neumann data.

    Callbacks are vectorized: ``u`` is an array of values at quadrature
    points and ``x`` has one more trailing axis of length 2.
    ``F`` is an antiderivative of ``f`` in ``u`` (used for the energy).
    """

    name: str
    c: float
    a: float
    f: Callable
    f_du: Callable
    domain: PolygonDomain
    bc: str = "dirichlet"
    F: Callable | None = None
    f_dmu: Callable | None = None
    params: dict = field(default_factory=dict)
    quadrature: str = "midpoint"
    symmetric: bool = False  # invariant under the square's symmetry group
    odd: bool = False  # f(-u) = -f(u)
    variational: bool = True

    def __post_init__(self):
        if self.c == 0:
            raise ProblemError("diffusion coefficient c must be nonzero")
        if self.bc not in ("dirichlet", "neumann"):
            raise ProblemError(f"unknown boundary condition {self.bc!r}")
        check_derivative(self)

    def mesh(self, hmax):
        """Default mesh: structured symmetric mesh for centered rectangles, Delaunay otherwise."""
        v = self.domain.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        centered = np.allclose(lo, -hi) and len(v) == 4 and np.isclose(self.domain.area, np.prod(hi - lo))
        if centered:
            return rectangle_mesh(hi[0], hi[1], hmax)
        return triangulate(self.domain, hmax)

    def with_params(self, **kw):
        """Rebuild a built-in problem with modified parameters."""
        builder = BUILTINS[self.params["builtin"]]
        p = {k: v for k, v in self.params.items() if k != "builtin"}
        p.update(kw)
        return builder(**p)


def check_derivative(problem, samples=100, eps=1e-6, tol=1e-5, seed=0):
    """Central-difference check that f_du is the u-derivative of f and F' = f."""
    rng = np.random.default_rng(seed)
    v = problem.domain.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    x = lo + rng.random((4 * samples, 2)) * (hi - lo)
    x = x[problem.domain.contains(x)][:samples]
    u = rng.uniform(-1.5, 1.5, len(x))
    mu = float(problem.params.get("mu") or 0.5)
    fd = (problem.f(u + eps, x, mu) - problem.f(u - eps, x, mu)) / (2 * eps)
    an = problem.f_du(u, x, mu)
    err = np.abs(fd - an) / np.maximum(1.0, np.abs(an))
    if np.any(err > tol):
        raise ProblemError(f"{problem.name}: f_du disagrees with finite differences of f (max err {err.max():.2e})")
    if problem.F is not None:
        fdF = (problem.F(u + eps, x, mu) - problem.F(u - eps, x, mu)) / (2 * eps)
        ref = problem.f(u, x, mu)
        err = np.abs(fdF - ref) / np.maximum(1.0, np.abs(ref))
        if np.any(err > tol):
            raise ProblemError(f"{problem.name}: F is not an antiderivative of f (max err {err.max():.2e})")


def square(l1, l2=None, name="square"):
    l2 = l1 if l2 is None else l2
    return PolygonDomain.rectangle(l1, l2, name)


def lef_test(mu=0.0):
    """-Lap u - mu u - u^3 = 0 on (-0.5, 0.5)^2 with zero Dirichlet data."""
    return EllipticProblem(
        name="lef_test",
        c=1.0,
        a=0.0,
        f=lambda u, x, m: m * u + u**3,
        f_du=lambda u, x, m: m + 3 * u**2,
        F=lambda u, x, m: 0.5 * m * u**2 + 0.25 * u**4,
        f_dmu=lambda u, x, m: u,
        domain=square(0.5),
        params={"builtin": "lef_test", "mu": mu},
        symmetric=True,
        odd=True,
    )


@dataclass(frozen=True)
class MicroforceParams:
    gamma_a: float = 10.0
    gamma_b: float = 0.1
    gamma_1: float = 0.5
    gamma_2: float = 0.5

    def __post_init__(self):
        if self.gamma_b <= 0:
            raise ProblemError("gamma_b must be positive")


def microforce_gamma(x, p=MicroforceParams(), domain=None):
    """Gaussian force centered at (gamma_1, gamma_2); zero on the domain boundary if given."""
    x = np.asarray(x, dtype=float)
    r2 = (x[..., 0] - p.gamma_1) ** 2 + (x[..., 1] - p.gamma_2) ** 2
    g = p.gamma_a * np.exp(-r2 / p.gamma_b)
    if domain is not None:
        on = domain.boundary_distance(x.reshape(-1, 2)).reshape(g.shape) < 1e-12
        g = np.where(on, 0.0, g)
    return g


class _PointCache:
    """Memoizes a field evaluated on a fixed (read-only) point array."""

    def __init__(self, fn):
        self.fn = fn
        self.store = {}

    def __call__(self, x):
        key = id(x)
        hit = self.store.get(key)
        if hit is not None and hit[0] is x:
            return hit[1]
        val = self.fn(x)
        if not x.flags.writeable:
            if len(self.store) > 16:
                self.store.clear()
            self.store[key] = (x, val)
        return val


def lef_microforce(mu=0.0, p=None, gamma_a=None, gamma_b=None, gamma_1=None, gamma_2=None):
    """-Lap u - mu u - u^3 + gamma(x) = 0 on (-1, 1)^2 with zero Dirichlet data."""
    p = p or MicroforceParams()
    kw = {k: v for k, v in dict(gamma_a=gamma_a, gamma_b=gamma_b, gamma_1=gamma_1, gamma_2=gamma_2).items() if v is not None}
    if kw:
        p = MicroforceParams(**{**p.__dict__, **kw})
    dom = square(1.0)
    gamma = _PointCache(lambda x: microforce_gamma(x, p, dom))
    return EllipticProblem(
        name="lef_microforce",
        c=1.0,
        a=0.0,
        f=lambda u, x, m: m * u + u**3 - gamma(x),
        f_du=lambda u, x, m: m + 3 * u**2,
        F=lambda u, x, m: 0.5 * m * u**2 + 0.25 * u**4 - gamma(x) * u,
        f_dmu=lambda u, x, m: u,
        domain=dom,
        params={"builtin": "lef_microforce", "mu": mu, **p.__dict__},
        symmetric=p.gamma_a == 0,
        odd=p.gamma_a == 0,
    )


def lef_microforce_scaled(mu, p=None):
    """The microforce problem divided by mu: -(1/mu) Lap u - u - (u^3 - gamma)/mu = 0."""
    if mu == 0:
        raise ProblemError("scaled form needs mu != 0")
    p = p or MicroforceParams()
    dom = square(1.0)
    gamma = _PointCache(lambda x: microforce_gamma(x, p, dom))
    return EllipticProblem(
        name="lef_microforce_scaled",
        c=1.0 / mu,
        a=0.0,
        f=lambda u, x, m: u + (u**3 - gamma(x)) / mu,
        f_du=lambda u, x, m: 1 + 3 * u**2 / mu,
        F=lambda u, x, m: 0.5 * u**2 + (0.25 * u**4 - gamma(x) * u) / mu,
        domain=dom,
        params={"mu": mu, **p.__dict__},
    )


# Caginalp -------------------------------------------------------------

# blunt nose bulge at x=0, thin spar, small bulge near the tip at x=1;
# chord 1, thickness 0.18
WING_VERTICES = np.array(
    [
        [0.0, 0.0],
        [0.02, -0.09],
        [0.06, -0.09],
        [0.12, -0.02],
        [0.6, -0.02],
        [0.8, -0.05],
        [1.0, 0.0],
        [0.8, 0.05],
        [0.6, 0.02],
        [0.12, 0.02],
        [0.06, 0.09],
        [0.02, 0.09],
    ]
)


def wing_domain(vertices=None):
    """A 12-vertex wing-like polygon, blunt nose on the left and pointed tip on the right."""
    return PolygonDomain(np.array(WING_VERTICES if vertices is None else vertices, dtype=float), name="wing")


def poisson_presolve(mesh: Mesh, f_const):
    """Solve -Lap theta = f_const with theta = 0 on the boundary; nodal values."""
    prob = _poisson_problem(f_const)
    S = get_system(mesh, prob)
    rhs = f_const * np.asarray(S.M_red.sum(axis=1)).ravel()
    if f_const == 0:
        return np.zeros(mesh.n_p)
    return S.expand(LuFactorization(S.K_red).solve(rhs))


def _poisson_problem(f_const):
    return EllipticProblem(
        name="poisson",
        c=1.0,
        a=0.0,
        f=lambda u, x, m: np.full_like(u, f_const),
        f_du=lambda u, x, m: np.zeros_like(u),
        F=lambda u, x, m: f_const * u,
        domain=square(0.5),
    )


@dataclass(frozen=True, eq=False)
class CaginalpParams:
    theta_mesh: Mesh
    theta: np.ndarray
    c1: float = 1.0
    c2: float = 0.05

    def __post_init__(self):
        if not np.all(np.isfinite(self.theta)):
            raise ProblemError("theta field has non-finite values")


def caginalp_reduced(p: CaginalpParams, domain=None, mu=1.0):
    """-Lap chi + W'(chi) - lambda'(chi) theta(x) = 0, Neumann, W = (chi^2 - 1)^2,
    lambda(chi) = mu (c1 chi + c2 chi^2)."""
    c1, c2 = p.c1, p.c2
    theta = _PointCache(lambda x: interpolate_many(p.theta_mesh, p.theta, x.reshape(-1, 2), snap=1e-6).reshape(x.shape[:-1]))
    return EllipticProblem(
        name="caginalp",
        c=1.0,
        a=0.0,
        f=lambda u, x, m: -4 * u * (u**2 - 1) + m * (c1 + 2 * c2 * u) * theta(x),
        f_du=lambda u, x, m: -4 * (3 * u**2 - 1) + 2 * m * c2 * theta(x),
        F=lambda u, x, m: -((u**2 - 1) ** 2) + m * (c1 * u + c2 * u**2) * theta(x),
        f_dmu=lambda u, x, m: (c1 + 2 * c2 * u) * theta(x),
        domain=domain if domain is not None else wing_domain(),
        bc="neumann",
        params={"mu": mu, "c1": c1, "c2": c2},
        variational=False,
    )


def caginalp_setup(hmax=0.03, f_const=2000.0, c1=1.0, c2=0.05, vertices=None):
    """Wing mesh, Poisson temperature on it, and the reduced Caginalp problem."""
    dom = wing_domain(vertices)
    mesh = triangulate(dom, hmax)
    theta = poisson_presolve(mesh, f_const)
    prob = caginalp_reduced(CaginalpParams(mesh, theta, c1, c2), dom)
    return prob, mesh, theta


# energies ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EnergyFunctional:
    problem: EllipticProblem

    def __post_init__(self):
        if self.problem.F is None:
            raise ProblemError(f"{self.problem.name} has no antiderivative")


def energy(functional, mesh, U, mu):
    """J(U) = c/2 |grad u|^2 + a/2 u^2 - F(u, x, mu), integrated on the mesh."""
    prob = functional.problem if isinstance(functional, EnergyFunctional) else functional
    return get_system(mesh, prob).energy(U, mu)


def energy_gradient_h10(mesh, functional, U, mu):
    """H1_0 Riesz representative of J'(U): solves K d = G(U, mu) on free nodes."""
    prob = functional.problem if isinstance(functional, EnergyFunctional) else functional
    if prob.bc != "dirichlet":
        raise ProblemError("H1_0 gradient needs Dirichlet data")
    S = get_system(mesh, prob)
    g = S.G(S.restrict(U), mu)
    return S.expand(S.K_lu().solve(g))


BUILTINS = {"lef_test": lef_test, "lef_microforce": lef_microforce}


def retransfer_theta(p: CaginalpParams, mesh: Mesh):
    """Theta interpolated onto another mesh of the same wing."""
    return transfer(p.theta_mesh, p.theta, mesh, snap=1e-6)
