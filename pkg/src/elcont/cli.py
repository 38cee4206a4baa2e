"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__
from .config import ConfigError, parse_config
from .continuation import Branch, BranchPoint, ContinuationError, continue_branch, findbif, switch_branch, symmetric_kernel_directions
from .experiments import BENCH_HEADER, bench, crossvalidate, sweep
from .fem import FemError, NewtonError, get_system, newton_solve
from .geometry import GeometryError, d4_maps, symmetry_permutations
from .io import FormatError, read_branch, read_events, read_solution, write_branch, write_mesh, write_solution, write_table
from .linsolve import SingularMatrixError
from .minimax import MinimaxError, find_multiple
from .problems import ProblemError, poisson_presolve

log = logging.getLogger("elcont")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2


class CliError(Exception):
    def __init__(self, msg, code=EXIT_USAGE):
        super().__init__(msg)
        self.code = code


def _out(cfg):
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _check_mesh(cfg, mesh):
    """The loaded mesh must discretize the configured domain."""
    prob = cfg.build_problem()
    v = prob.domain.vertices
    lo, hi = v.min(axis=0), v.max(axis=0)
    p = mesh.points
    if np.any(p < lo - 1e-9) or np.any(p > hi + 1e-9):
        raise CliError("start file mesh does not lie in the configured domain")
    return prob


def _load_start(cfg, path, tol):
    """Read a start solution, re-polish it if its residual is small, reject it otherwise."""
    try:
        sol = read_solution(path)
    except (OSError, FormatError) as exc:
        raise CliError(f"cannot read start file: {exc}") from None
    prob = _check_mesh(cfg, sol.mesh)
    S = get_system(sol.mesh, prob)
    try:
        r = float(np.max(np.abs(S.G(S.restrict(sol.U), sol.mu))))
    except FemError as exc:
        raise CliError(f"start file: {exc}", EXIT_NUMERIC) from None
    if not math.isfinite(r) or r > 100 * tol:
        raise CliError(f"start file residual {r:.3e} exceeds 100 x tol = {100 * tol:.1e}; rejected", EXIT_NUMERIC)
    U = sol.U
    if r > tol:
        U, _ = newton_solve(S, U, sol.mu, tol=tol)
        log.info("start re-polished (residual was %.3e)", r)
    return prob, sol.mesh, U, sol.mu


def cmd_mesh(cfg, args):
    mesh = cfg.build_mesh()
    path = write_mesh(_out(cfg) / args.name, mesh)
    print(f"wrote {path}: np={mesh.n_p} nt={mesh.n_t}")
    return EXIT_OK


def cmd_minimax(cfg, args):
    prob = cfg.build_problem()
    mesh = cfg.build_mesh()
    mu = cfg.mu if args.mu is None else args.mu
    settings = cfg.minimax()
    try:
        res = find_multiple(prob, mesh, mu, settings.seeds, settings)
    except MinimaxError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    out = _out(cfg)
    rows = []
    for k, s in enumerate(res.solutions):
        write_solution(out / f"start_{k}_MI{s.morse_index}.sol", mesh, s.U, mu)
        rows.append([k, s.seed, s.morse_index, s.level, s.norm_inf, s.energy, s.iterations])
    header = ["k", "seed", "MI", "level", "norm_inf", "J", "iterations"]
    write_table(out / "minimax_summary.csv", header, rows)
    print(f"{'k':>2} {'seed':10s} {'MI':>3} {'level':>5} {'norm_inf':>12} {'J':>14}")
    for k, name, mi, lev, nrm, J, _ in rows:
        print(f"{k:>2} {name:10s} {mi:>3} {lev:>5} {nrm:12.6f} {J:14.6f}")
    for name, msg in res.failures:
        print(f"seed {name}: {msg}", file=sys.stderr)
    if not res.solutions:
        raise CliError("no solution found", EXIT_NUMERIC)
    return EXIT_OK


def cmd_cont(cfg, args):
    settings = cfg.continuation(**({"direction": args.direction} if args.direction else {}))
    if args.start == "trivial":
        prob, mesh = cfg.build_problem(), cfg.build_mesh()
        U0, mu0 = np.zeros(mesh.n_p), cfg.mu
    else:
        prob, mesh, U0, mu0 = _load_start(cfg, args.start, settings.tol)
    branch = continue_branch(prob, mesh, U0, mu0, settings)
    path = _out(cfg) / f"{args.name}.csv"
    write_branch(path, branch, cfg.snapshot_every)
    print(f"wrote {path}: {len(branch)} points, status {branch.status}")
    for i, kind in branch.events:
        print(f"  event {kind} at idx {i}, mu={branch.points[i].mu:.6f}")
    return EXIT_OK


def _load_segment(cfg, csv_path, event):
    """Rebuild the two branch points around the ``event``-th event from snapshots."""
    csv_path = Path(csv_path)
    try:
        rows = read_branch(csv_path)
        events = read_events(csv_path.with_suffix(".events"))
    except (OSError, FormatError, ValueError) as exc:
        raise CliError(f"cannot read branch: {exc}") from None
    if not 1 <= event <= len(events):
        raise CliError(f"event index must lie in 1..{len(events)}")
    idx = events[event - 1][0]
    pts = []
    for i in (idx - 1, idx):
        snap = csv_path.with_name(f"{csv_path.stem}_{i}.sol")
        try:
            sol = read_solution(snap)
        except (OSError, FormatError) as exc:
            raise CliError(f"missing snapshot for point {i}: {exc}") from None
        row = rows[i]
        pts.append(BranchPoint(sol.U, sol.mu, row["s"], None, row["n_neg"], row["det_sign"], row["type"], row["newton_iters"], sol.mesh))
    a, b = pts
    if b.mesh.n_p != a.mesh.n_p or np.any(b.mesh.points != a.mesh.points):
        raise CliError("event segment spans a mesh change")
    b.mesh = a.mesh
    prob = _check_mesh(cfg, a.mesh)
    settings = cfg.continuation()
    xi = settings.xi_for(a.mesh.n_p)
    d = np.concatenate([b.U - a.U, [b.mu - a.mu]])
    d /= math.sqrt(xi * (d[:-1] @ d[:-1]) + (1 - xi) * d[-1] ** 2)
    a.tangent = b.tangent = d
    return prob, a.mesh, Branch([a, b], settings, prob.name, [(1, events[event - 1][1])])


def cmd_findbif(cfg, args):
    prob, mesh, br = _load_segment(cfg, args.branch, args.event)
    try:
        pt = findbif(prob, mesh, br, 1, br.settings)
    except ContinuationError as exc:
        raise CliError(str(exc), EXIT_NUMERIC) from None
    path = write_solution(_out(cfg) / f"bif_{args.event}.sol", mesh, pt.U, pt.mu)
    print(f"located mu* = {pt.mu:.6f} (eigenvalue {pt.eigenvalue:.3e}, index {pt.index}, {pt.iterations} iterations)")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_switch(cfg, args):
    try:
        sol = read_solution(args.point)
    except (OSError, FormatError) as exc:
        raise CliError(f"cannot read branch point: {exc}") from None
    prob = _check_mesh(cfg, sol.mesh)
    point = SimpleNamespace(U=sol.U, mu=sol.mu)
    directions = None
    if args.symmetric:
        perms = symmetry_permutations(sol.mesh, d4_maps())
        directions = symmetric_kernel_directions(prob, sol.mesh, point, perms)
    starts = switch_branch(prob, sol.mesh, point, delta_sw=args.delta, directions=directions)
    if not starts:
        raise CliError("no switching start converged", EXIT_NUMERIC)
    out = _out(cfg)
    for k, s in enumerate(starts):
        tag = "p" if s.sign > 0 else "m"
        path = write_solution(out / f"switch_{k // 2}{tag}.sol", sol.mesh, s.U, s.mu)
        print(f"wrote {path}: mu={s.mu:.6f}")
    return EXIT_OK


def cmd_poisson(cfg, args):
    prob = cfg.build_problem()
    mesh = cfg.build_mesh()
    f = cfg.f_const if args.f_const is None else args.f_const
    theta = poisson_presolve(mesh, f)
    path = write_solution(_out(cfg) / "theta.sol", mesh, theta, f)
    print(f"wrote {path}: max theta = {theta.max():.6g} ({prob.domain.name})")
    return EXIT_OK


def cmd_crossvalidate(cfg, args):
    prob = cfg.build_problem()
    if prob.name != "lef_test":
        raise CliError("crossvalidate needs the lef_test problem")
    report = crossvalidate(prob, cfg.build_mesh(), cfg.continuation(), cfg.minimax(), cfg.seeds(), jobs=cfg.jobs)
    text = str(report)
    print(text)
    (_out(cfg) / "crossvalidate.txt").write_text(text + "\n")
    return EXIT_OK if report.passed else EXIT_NUMERIC


def cmd_bench(cfg, args):
    prob = cfg.build_problem()
    if prob.name != "lef_microforce":
        raise CliError("bench needs the lef_microforce problem")
    settings = cfg.continuation()
    if args.mode == "h":
        recs = bench(prob, args.h, settings, cfg.jobs)
    else:
        recs = sweep(prob, args.h[0], args.mode, args.values, settings, cfg.jobs)
    path = write_table(_out(cfg) / f"bench_{args.mode}.csv", BENCH_HEADER, [r.row() for r in recs])
    for r in recs:
        print(f"h={r.h:<6g} np={r.np:<6d} nt={r.nt:<6d} tau={r.tau:8.3f} {r.branch} fold={r.value:.6g}")
    print(f"wrote {path}")
    return EXIT_OK


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="problem configuration file")
    common.add_argument("--out", type=Path, default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker pool size")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="run seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    p = argparse.ArgumentParser(prog="elcont", description="Continuation and minimax tools for semilinear elliptic problems.", parents=[common])
    p.add_argument("--version", action="version", version=f"elcont {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mesh", parents=[common], help="generate and write a mesh")
    s.add_argument("--name", default="mesh.txt")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("minimax", parents=[common], help="multiple solutions by the minimax search")
    s.add_argument("--mu", type=float, default=None)
    s.set_defaults(func=cmd_minimax)

    s = sub.add_parser("cont", parents=[common], help="continue a branch from a start file")
    s.add_argument("start", help="solution file, or 'trivial' for u = 0 at the configured mu")
    s.add_argument("--direction", type=int, choices=(1, -1), default=None)
    s.add_argument("--name", default="branch")
    s.set_defaults(func=cmd_cont)

    s = sub.add_parser("findbif", parents=[common], help="locate a detected event precisely")
    s.add_argument("branch", help="branch CSV written by 'cont'")
    s.add_argument("--event", type=int, default=1, help="1-based event number")
    s.set_defaults(func=cmd_findbif)

    s = sub.add_parser("switch", parents=[common], help="start solutions on a bifurcating branch")
    s.add_argument("point", help="located point file written by 'findbif'")
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--symmetric", action="store_true", help="use symmetry-adapted kernel directions")
    s.set_defaults(func=cmd_switch)

    s = sub.add_parser("poisson", parents=[common], help="solve -Lap theta = f with zero boundary data")
    s.add_argument("--f-const", type=float, default=None)
    s.set_defaults(func=cmd_poisson)

    s = sub.add_parser("crossvalidate", parents=[common], help="compare the two solution strategies")
    s.set_defaults(func=cmd_crossvalidate)

    s = sub.add_parser("bench", parents=[common], help="timing and robustness sweeps")
    s.add_argument("--mode", choices=("h", "tol", "xi", "neig"), default="h")
    s.add_argument("--h", type=_floats, default=[0.3, 0.2, 0.15, 0.1, 0.07])
    s.add_argument("--values", type=_floats, default=None, help="values for the tol/xi/neig sweeps")
    s.set_defaults(func=cmd_bench)
    return p


SWEEP_DEFAULTS = {"tol": [1e-11, 1e-8, 1e-6, 1e-3], "xi": [1e-6, 1e-4, 1e-2, 0.1, 0.5], "neig": [5, 10, 20, 40]}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(message)s")
    if getattr(args, "mode", "h") != "h" and args.values is None:
        args.values = SWEEP_DEFAULTS[args.mode]
    if getattr(args, "mode", None) == "neig" and args.values:
        args.values = [int(v) for v in args.values]
    cfg_path = getattr(args, "config", None)
    try:
        cfg = parse_config(cfg_path if cfg_path is not None else "", getattr(args, "out", Path(".")), getattr(args, "seed", 0), getattr(args, "jobs", 1))
        np.random.seed(cfg.seed)
        return args.func(cfg, args)
    except CliError as exc:
        print(f"elcont: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, GeometryError, ProblemError, FormatError) as exc:
        print(f"elcont: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContinuationError, MinimaxError, NewtonError, FemError, SingularMatrixError, ArithmeticError) as exc:
        print(f"elcont: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
