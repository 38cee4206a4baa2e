"""Experiment drivers: cross-validation of the two solution strategies on the
test problem, microforce branch runs, performance and robustness sweeps."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .continuation import (
    ContinuationError,
    ContSettings,
    MultiplicityError,
    continue_branch,
    findbif,
    switch_branch,
    symmetric_kernel_directions,
)
from .fem import NewtonError, get_system, newton_solve, norm_inf
from .geometry import d4_maps, symmetry_permutations
from .minimax import MinimaxError, default_seeds, find_multiple, same_solution


def analytic_eigenvalues(side=1.0, count=6):
    """Distinct Dirichlet eigenvalues pi^2 (m^2 + n^2) / side^2 of a square, ascending."""
    vals = sorted({(m * m + n * n) for m in range(1, 8) for n in range(1, 8)})
    return [math.pi**2 * v / side**2 for v in vals[:count]]


def nearest_relative(value, targets):
    t = min(targets, key=lambda x: abs(x - value))
    return t, abs(value - t) / abs(t)


def _pmap(fn, items, jobs):
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# field diagnostics ---------------------------------------------------------


def count_extrema(mesh, U, rel=1e-3):
    """Number of strict local extrema of nodal data over interior nodes.

    A node counts if it exceeds (or falls below) every edge neighbor by more
    than ``rel * max|U|``, so that flat plateaus are not counted.
    """
    U = np.asarray(U, dtype=float)
    e = mesh.edges[0]
    n = mesh.n_p
    thr = rel * norm_inf(U)
    nb_min = np.full(n, np.inf)
    nb_max = np.full(n, -np.inf)
    for a, b in (e.T, e[:, ::-1].T):
        np.minimum.at(nb_min, a, U[b])
        np.maximum.at(nb_max, a, U[b])
    interior = ~mesh.boundary_flag
    is_max = interior & (U - nb_max > thr)
    is_min = interior & (nb_min - U > thr)
    return int(np.sum(is_max) + np.sum(is_min))


def fold_mu(branch, index):
    """Turning-point parameter from a parabola through the three points around ``index``.

    Uses the raw branch data only (no extra solves), so it reflects the
    corrector tolerance of the run.
    """
    mu, s = branch.mu, branch.s
    i = int(np.clip(index, 1, len(mu) - 2))
    j = i - 1 + int(np.argmax(np.abs(mu[i - 1 : i + 2] - mu[i - 1 : i + 2].mean())))
    j = int(np.clip(j, 1, len(mu) - 2))
    c = np.polyfit(s[j - 1 : j + 2] - s[j], mu[j - 1 : j + 2], 2)
    if c[0] == 0:
        return float(mu[j])
    sv = -c[1] / (2 * c[0])
    if abs(sv) > abs(s[j + 1] - s[j - 1]):
        return float(mu[j])
    return float(np.polyval(c, sv))


def monotone_segments(branch):
    """Split a branch where mu changes direction; returns (mu, norm_inf) arrays per segment."""
    mu, nrm = branch.mu, branch.norms_inf
    d = np.sign(np.diff(mu))
    cuts = [0] + [k + 1 for k in range(1, len(d)) if d[k] != 0 and d[k] != d[k - 1]] + [len(mu)]
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        a0 = max(a - 1, 0) if a else a
        m, v = mu[a0:b], nrm[a0:b]
        if len(m) >= 2:
            order = np.argsort(m)
            out.append((m[order], v[order]))
    return out


def compare_norms(ref, other):
    """Largest relative difference in max norm between two runs of the same branch.

    Both branches are split into monotone-in-mu segments; the k-th segments
    are compared on their common mu range, shrunk at each end by the
    mismatch of the two end values: next to a fold the norm has a square-root
    profile in mu, so a slightly shifted fold alone would dominate.
    """
    worst = 0.0
    for (m1, v1), (m2, v2) in zip(monotone_segments(ref), monotone_segments(other)):
        lo = max(m1[0], m2[0]) + abs(m1[0] - m2[0])
        hi = min(m1[-1], m2[-1]) - abs(m1[-1] - m2[-1])
        if hi <= lo:
            continue
        grid = m1[(m1 >= lo) & (m1 <= hi)]
        a = np.interp(grid, m1, v1)
        b = np.interp(grid, m2, v2)
        worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(np.abs(a), 1e-12))))
    return worst


# cross-validation on the test problem ----------------------------------------


@dataclass
class StrategyOneBranch:
    seed: str
    mu_end: float
    analytic: float
    rel_error: float
    status: str


@dataclass
class Pairing:
    label: str
    norm: float
    partner: str | None
    partner_norm: float
    mismatch: float
    branch_events: int


@dataclass
class CrossReport:
    passed: bool
    one: list
    two: list
    located: list  # (mu, event type or "findbif")
    lines: list = field(default_factory=list)

    def __str__(self):
        return "\n".join(self.lines)


def _approach_trivial(problem, mesh, sol, settings, mu0=0.0):
    """Continue a nontrivial solution towards increasing mu until it reaches u = 0.

    Returns the extrapolated crossing parameter: near the trivial branch
    mu = mu* - c a^2 with a the amplitude along the starting shape.
    """
    U0 = sol.U
    n0 = norm_inf(U0)
    ref = U0 / (U0 @ U0)

    def stop(p):
        return norm_inf(p.U) < 0.05 * n0 or p.U @ U0 < 0

    st = replace(settings, direction=1, stop=stop, stability=False)
    br = continue_branch(problem, mesh, U0, mu0, st)
    if br.status != "stopped":
        return math.nan, br.status
    p1, p2 = br.points[-2], br.points[-1]
    a1, a2 = p1.U @ ref, p2.U @ ref
    if abs(a1**2 - a2**2) < 1e-14:
        return p2.mu, "stopped"
    c = (p2.mu - p1.mu) / (a1**2 - a2**2)
    return p1.mu + c * a1**2, "stopped"


def strategy_one(problem, mesh, solutions, settings, jobs=1):
    """Continue every minimax solution to the trivial branch and compare with analytic crossings."""
    targets = analytic_eigenvalues()

    def run(sol):
        try:
            mu_end, status = _approach_trivial(problem, mesh, sol, settings)
        except ContinuationError as exc:
            return StrategyOneBranch(sol.seed, math.nan, math.nan, math.inf, f"failed: {exc}")
        if not math.isfinite(mu_end):
            return StrategyOneBranch(sol.seed, mu_end, math.nan, math.inf, status)
        t, rel = nearest_relative(mu_end, targets)
        return StrategyOneBranch(sol.seed, mu_end, t, rel, status)

    return _pmap(run, list(solutions), jobs)


def strategy_two(problem, mesh, settings, mu_max=110.0, jobs=1):
    """Trivial branch, branch points, switching and continuation back to mu = 0.

    Returns (trivial branch, located points, list of (label, U at mu=0, branch events)).
    """
    st = replace(settings, direction=1, mu_min=-1.0, mu_max=mu_max)
    triv = continue_branch(problem, mesh, np.zeros(mesh.n_p), 0.0, st)
    located = [findbif(problem, mesh, triv, i, st) for i, _ in triv.events]
    perms = symmetry_permutations(mesh, d4_maps()) if problem.symmetric else None
    starts = []
    for k, pt in enumerate(located):
        try:
            sw = switch_branch(problem, mesh, pt)
        except MultiplicityError:
            if perms is None:
                raise
            sw = switch_branch(problem, mesh, pt, directions=symmetric_kernel_directions(problem, mesh, pt, perms))
        plus = [s for s in sw if s.sign == 1]
        for j, s in enumerate(plus):
            starts.append((f"bp{k + 1}.{j + 1}", s))

    back = replace(settings, direction=1, mu_min=0.0, mu_max=mu_max + 10, stability=True)

    def run(item):
        label, s = item
        br = continue_branch(problem, mesh, s.U, s.mu, back, tangent0=s.tangent)
        end = br.points[-1]
        ok = br.status == "bound" and abs(end.mu) < 1e-9
        return label, end.U if ok else None, len(br.events_of("branch")), br.status

    return triv, located, _pmap(run, starts, jobs)


def crossvalidate(problem, mesh, settings=None, minimax_settings=None, seeds=None, jobs=1, mu_tol=0.03, norm_tol=0.02):
    """Cross-check minimax + continuation against trivial branch + switching.

    PASS iff every strategy (I) branch ends within ``mu_tol`` of an analytic
    crossing and every strategy (II) solution reached without passing other
    branches matches a strategy (I) solution modulo symmetry within
    ``norm_tol`` in the max norm. (II) solutions whose branches crossed other
    branches are listed but not paired.
    """
    settings = settings or ContSettings(ds=0.1, dsmax=1.0, tol=1e-8, max_steps=2000)
    seeds = seeds if seeds is not None else default_seeds(problem.params.get("builtin", problem.name))
    found = find_multiple(problem, mesh, 0.0, seeds, minimax_settings)
    sols = found.solutions
    one = strategy_one(problem, mesh, sols, settings, jobs)
    triv, located, two_raw = strategy_two(problem, mesh, settings, jobs=jobs)
    perms = symmetry_permutations(mesh, d4_maps()) if problem.symmetric else None

    lines = ["strategy (I): minimax solutions continued to the trivial branch"]
    ok = bool(one) and len(one) == len(sols)
    for b, s in zip(one, sols):
        good = b.rel_error <= mu_tol
        ok &= good
        lines.append(
            f"  {b.seed:10s} MI={s.morse_index} |u|={s.norm_inf:9.4f} -> mu={b.mu_end:9.4f}"
            f" analytic={b.analytic:9.4f} rel={b.rel_error:.4f} {'ok' if good else 'FAIL'}"
        )
    lines.append("strategy (II): trivial branch events and located branch points")
    det_found = {i for i, t in triv.events}
    for (i, kind), pt in zip(triv.events, located):
        t, rel = nearest_relative(pt.mu, analytic_eigenvalues())
        lines.append(f"  event at step {i} ({kind}) located mu={pt.mu:.4f} analytic={t:.4f} rel={rel:.4f}")
    lines.append(f"  {len(det_found)} events on the trivial branch")

    pairs = []
    for label, U, n_branch, status in two_raw:
        if U is None:
            ok = False
            lines.append(f"  {label}: did not reach mu=0 ({status}) FAIL")
            continue
        nrm = norm_inf(U)
        best, bestmis = None, math.inf
        for s in sols:
            if same_solution(U, s.U, rtol=norm_tol, perms=perms, odd=problem.odd):
                mis = abs(nrm - s.norm_inf) / s.norm_inf
                if mis < bestmis:
                    best, bestmis = s, mis
        if best is None:
            cand = min(sols, key=lambda s: abs(s.norm_inf - nrm)) if sols else None
            bestmis = abs(nrm - cand.norm_inf) / cand.norm_inf if cand else math.inf
        pr = Pairing(label, nrm, best.seed if best else None, best.norm_inf if best else math.nan, bestmis, n_branch)
        pairs.append(pr)
        if n_branch:
            lines.append(f"  {label}: |u|={nrm:.4f} crossed {n_branch} branch point(s); not paired")
            continue
        good = best is not None and bestmis <= norm_tol
        ok &= good
        lines.append(
            f"  {label}: |u|={nrm:.4f} paired with {pr.partner} (|u|={pr.partner_norm:.4f})"
            f" mismatch={bestmis:.4f} {'ok' if good else 'FAIL'}"
        )
    paired = [p for p in pairs if p.branch_events == 0]
    if paired:
        lines.append(f"max |u| mismatch over pairs: {max(p.mismatch for p in paired):.4f}")
    lines.append("PASS" if ok else "FAIL")
    return CrossReport(ok, one, pairs, [(pt.mu, kind) for (i, kind), pt in zip(triv.events, located)], lines)


# microforce runs --------------------------------------------------------------


def microforce_starts(problem, mesh, settings=None):
    """Minimax starts for the microforce problem at mu = 0 (center, diag, antidiag seeds)."""
    half = float(np.abs(problem.domain.vertices).max())
    return find_multiple(problem, mesh, 0.0, default_seeds("lef_microforce", half), settings)


def both_directions(problem, mesh, U, mu, settings):
    """Branches through (U, mu) in both directions of mu."""
    return [continue_branch(problem, mesh, U, mu, replace(settings, direction=d)) for d in (1, -1)]


# benchmarks and sweeps -----------------------------------------------------------


@dataclass
class BenchmarkRecord:
    h: float
    np: int
    nt: int
    tau: float
    branch: str
    value: float = math.nan  # fold mu, or the swept quantity's outcome

    def row(self):
        return [self.h, self.np, self.nt, self.tau, self.branch, self.value]


BENCH_HEADER = ["h", "np", "nt", "tau", "branch", "value"]
MICRO_SETTINGS = ContSettings(ds=0.1, dsmax=0.5, tol=1e-6, mu_min=-20.0, max_steps=1000)


def _mi1_start(problem, mesh):
    res = microforce_starts(problem, mesh)
    for s in res.solutions:
        if s.seed == "center":
            return s.U
    raise MinimaxError("no MI=1 start found")


def _fold_of(problem, mesh, branches):
    """Parameter of the first fold, located by findbif on its bracketing segment."""
    for br in branches:
        for i, kind in br.events:
            if kind == "fold":
                try:
                    return findbif(problem, mesh, br, i).mu
                except ContinuationError:
                    return math.nan
    return math.nan


def bench(problem, h_list=(0.3, 0.2, 0.15, 0.1, 0.07), settings=MICRO_SETTINGS, jobs=1):
    """Time the MI=1 microforce branch (both directions) per mesh size.

    Timing covers continuation only. Failed runs give tau = -1.
    """

    def run(h):
        mesh = problem.mesh(h)
        try:
            U = _mi1_start(problem, mesh)
            t0 = time.perf_counter()
            brs = both_directions(problem, mesh, U, 0.0, settings)
            tau = time.perf_counter() - t0
            return BenchmarkRecord(h, mesh.n_p, mesh.n_t, tau, "mi1", _fold_of(problem, mesh, brs))
        except (ContinuationError, MinimaxError):
            return BenchmarkRecord(h, mesh.n_p, mesh.n_t, -1.0, "mi1")

    return _pmap(run, list(h_list), jobs)


def sweep(problem, h, key, values, settings=MICRO_SETTINGS, jobs=1):
    """Recompute the MI=1 branch for each value of a ContSettings field.

    ``value`` in each record is the fold parameter (NaN if the run did not
    complete to both mu bounds).
    """
    mesh = problem.mesh(h)
    U = _mi1_start(problem, mesh)

    def run(v):
        st = replace(settings, **{key: v})
        try:
            t0 = time.perf_counter()
            brs = both_directions(problem, mesh, U, 0.0, st)
            tau = time.perf_counter() - t0
        except ContinuationError:
            return BenchmarkRecord(h, mesh.n_p, mesh.n_t, -1.0, f"{key}={v:g}")
        done = all(b.status == "bound" for b in brs)
        return BenchmarkRecord(h, mesh.n_p, mesh.n_t, tau, f"{key}={v:g}", _fold_of(problem, mesh, brs) if done else math.nan)

    return _pmap(run, list(values), jobs)


# phase-field branch -------------------------------------------------------------


@dataclass
class CaginalpCensus:
    folds: list  # fold parameters
    crossings: list  # max norms of the branch where it crosses mu = mu0
    inside: int  # crossings with max norm <= 1
    branches: list
    start_guess: float


def mu_crossings(branch, mu0):
    """Max norms interpolated where the branch crosses mu = mu0 (the start point excluded)."""
    mu, nrm = branch.mu, branch.norms_inf
    out = []
    for i in range(len(mu) - 1):
        a, b = mu[i] - mu0, mu[i + 1] - mu0
        if a * b < 0 or (b == 0 and i + 1 < len(mu) - 1):
            w = a / (a - b)
            out.append(float((1 - w) * nrm[i] + w * nrm[i + 1]))
    return out


def caginalp_census(problem, mesh, mu0=1.0, guesses=(1.0, 0.0, -1.0), settings=None):
    """Branch through the solution found from the first converging constant guess at mu0.

    Both directions are continued; folds and crossings of mu = mu0 are
    counted over the whole curve, the start counted once.
    """
    settings = settings or ContSettings(ds=0.01, dsmax=0.05, mu_min=-4.0, mu_max=4.0, max_steps=3000)
    S = get_system(mesh, problem)
    for g in guesses:
        try:
            U, _ = newton_solve(S, np.full(mesh.n_p, g), mu0)
            break
        except NewtonError:
            continue
    else:
        raise ContinuationError("no constant guess converges at the start parameter")
    brs = both_directions(problem, mesh, U, mu0, settings)
    folds = [fold_mu(b, i) for b in brs for i, kind in b.events if kind == "fold"]
    cross = [norm_inf(U)] + [c for b in brs for c in mu_crossings(b, mu0)]
    inside = sum(1 for c in cross if c <= 1.0)
    return CaginalpCensus(folds, cross, inside, brs, g)
