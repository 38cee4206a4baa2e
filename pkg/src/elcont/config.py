"""INI-style run configuration.

Grammar (``key = value`` lines grouped in sections, ``#`` comments)::

    [domain]        type = square | rectangle | polygon | wing | builtin
                    half_length, half_lengths = a b, vertices = x y; x y; ...
    [pde]           problem = lef_test | lef_microforce | caginalp | poisson
                    c, a, bc = dirichlet | neumann, quadrature = midpoint | degree4
    [params]        mu, gamma_a, gamma_b, gamma_1, gamma_2, c1, c2, f_const
    [continuation]  ContSettings fields, plus snapshot_every
    [minimax]       MinimaxSettings fields, plus seed[.name] = bump(x, y, sign, width) + ...
                    and support[.name] = comma-separated indices
    [mesh]          hmax

Unknown sections or keys raise ConfigError.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import ContSettings
from .geometry import GeometryError, PolygonDomain, triangulate
from .minimax import MinimaxSettings, default_seeds, parse_seed
from .problems import CaginalpParams, _poisson_problem, caginalp_reduced, lef_microforce, lef_test, poisson_presolve, square, wing_domain


class ConfigError(ValueError):
    pass


_CONT_KEYS = {f.name: f.type for f in dataclasses.fields(ContSettings) if f.name != "stop"}
_MINIMAX_KEYS = {f.name for f in dataclasses.fields(MinimaxSettings) if f.name != "seeds"}

SCHEMA = {
    "domain": {"type", "half_length", "half_lengths", "vertices"},
    "pde": {"problem", "c", "a", "bc", "quadrature"},
    "params": {"mu", "gamma_a", "gamma_b", "gamma_1", "gamma_2", "c1", "c2", "f_const"},
    "continuation": set(_CONT_KEYS) | {"snapshot_every"},
    "minimax": _MINIMAX_KEYS,
    "mesh": {"hmax"},
}
PROBLEMS = ("lef_test", "lef_microforce", "caginalp", "poisson")
DEFAULT_HMAX = {"lef_test": 0.1, "lef_microforce": 0.07, "caginalp": 0.025, "poisson": 0.05}


@dataclass
class RunConfig:
    sections: dict
    out: Path = Path(".")
    seed: int = 0
    jobs: int = 1
    path: Path | None = None
    _problem: object = field(default=None, repr=False)
    _mesh: object = field(default=None, repr=False)

    def get(self, section, key, default=None, kind=float):
        raw = self.sections.get(section, {}).get(key)
        if raw is None:
            return default
        try:
            if kind is bool:
                return raw.lower() in ("1", "true", "yes", "on")
            if kind is int:
                return int(float(raw)) if float(raw).is_integer() else _bad(section, key, raw)
            if kind is float:
                return float(raw)
            return raw
        except ValueError:
            _bad(section, key, raw)

    @property
    def problem_id(self):
        return self.get("pde", "problem", "lef_test", str)

    @property
    def mu(self):
        return self.get("params", "mu", 0.0)

    @property
    def f_const(self):
        return self.get("params", "f_const", 2000.0 if self.problem_id == "caginalp" else 1.0)

    @property
    def hmax(self):
        return self.get("mesh", "hmax", DEFAULT_HMAX[self.problem_id])

    def domain(self):
        kind = self.get("domain", "type", "builtin", str)
        try:
            if kind == "builtin":
                return None
            if kind == "square":
                return square(self.get("domain", "half_length", 0.5))
            if kind == "rectangle":
                a, b = _floats(self.get("domain", "half_lengths", "0.5 0.5", str), 2, "domain", "half_lengths")
                return square(a, b, name="rectangle")
            if kind == "wing":
                return wing_domain()
            if kind == "polygon":
                raw = self.get("domain", "vertices", None, str)
                if raw is None:
                    raise ConfigError("[domain] type = polygon needs vertices")
                verts = [_floats(v, 2, "domain", "vertices") for v in raw.split(";") if v.strip()]
                return PolygonDomain(np.array(verts), name="polygon")
        except GeometryError as exc:
            raise ConfigError(f"[domain] {exc}") from None
        raise ConfigError(f"[domain] unknown type {kind!r}")

    def continuation(self, **overrides):
        kw = {}
        for key, typ in _CONT_KEYS.items():
            if key in self.sections.get("continuation", {}):
                kind = int if "int" in str(typ) else float
                kw[key] = self.get("continuation", key, kind=kind)
        kw.update(overrides)
        try:
            return ContSettings(**kw)
        except ValueError as exc:
            raise ConfigError(f"[continuation] {exc}") from None

    @property
    def snapshot_every(self):
        return self.get("continuation", "snapshot_every", 0, int)

    def minimax(self):
        kw = {}
        for f in dataclasses.fields(MinimaxSettings):
            if f.name in self.sections.get("minimax", {}):
                kw[f.name] = self.get("minimax", f.name, kind=int if "int" in str(f.type) else float)
        try:
            return MinimaxSettings(**kw, seeds=self.seeds())
        except ValueError as exc:
            raise ConfigError(f"[minimax] {exc}") from None

    def seeds(self):
        sec = self.sections.get("minimax", {})
        names = [k for k in sec if k == "seed" or k.startswith("seed.")]
        if not names:
            try:
                half = max(np.abs(self.build_problem().domain.vertices).max(), 0.0)
                return default_seeds(self.problem_id, half)
            except KeyError:
                return []
        out = []
        for k in names:
            name = k.partition(".")[2] or f"seed{len(out)}"
            sup_raw = sec.get("support" + k[4:])
            support = None if sup_raw is None else [int(i) for i in sup_raw.replace(",", " ").split()]
            try:
                out.append(parse_seed(sec[k], name, support))
            except ValueError as exc:
                raise ConfigError(f"[minimax] {k}: {exc}") from None
        return out

    def build_problem(self):
        """The configured problem; caginalp also runs its temperature presolve."""
        if self._problem is not None:
            return self._problem
        pid, dom = self.problem_id, self.domain()
        g = {k: self.get("params", k) for k in ("gamma_a", "gamma_b", "gamma_1", "gamma_2")}
        if pid == "lef_test":
            prob = lef_test(self.mu)
        elif pid == "lef_microforce":
            prob = lef_microforce(self.mu, **g)
        elif pid == "poisson":
            prob = _poisson_problem(self.f_const)
        elif pid == "caginalp":
            dom = dom or wing_domain()
            mesh = self._mesh = triangulate(dom, self.hmax)
            theta = poisson_presolve(mesh, self.f_const)
            cp = CaginalpParams(mesh, theta, self.get("params", "c1", 1.0), self.get("params", "c2", 0.05))
            prob = caginalp_reduced(cp, dom, self.mu)
            dom = None
        else:
            raise ConfigError(f"[pde] unknown problem {pid!r}; expected one of {', '.join(PROBLEMS)}")
        changes = {}
        if dom is not None:
            changes["domain"] = dom
        for key in ("c", "a"):
            if self.get("pde", key) is not None:
                changes[key] = self.get("pde", key)
        for key in ("bc", "quadrature"):
            if self.get("pde", key, None, str) is not None:
                changes[key] = self.get("pde", key, None, str)
        if changes:
            try:
                prob = dataclasses.replace(prob, **changes)
            except ValueError as exc:
                raise ConfigError(f"[pde] {exc}") from None
        self._problem = prob
        return prob

    def build_mesh(self):
        """Mesh for the configured problem (the temperature mesh for caginalp)."""
        prob = self.build_problem()
        if self._mesh is None:
            self._mesh = prob.mesh(self.hmax)
        return self._mesh


def _bad(section, key, raw):
    raise ConfigError(f"[{section}] {key}: invalid value {raw!r}")


def _floats(text, n, section, key):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        _bad(section, key, text)
    if len(vals) != n:
        _bad(section, key, text)
    return vals


def parse_config(text_or_path, out=".", seed=0, jobs=1) -> RunConfig:
    """Parse a configuration file (or string) and validate sections and keys."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    path = None
    try:
        if isinstance(text_or_path, Path) or (isinstance(text_or_path, str) and text_or_path and "\n" not in text_or_path and "[" not in text_or_path):
            path = Path(text_or_path)
            if not path.is_file():
                raise ConfigError(f"config file {path} does not exist")
            cp.read_string(path.read_text(), source=str(path))
        else:
            cp.read_string(text_or_path)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            base = key.split(".")[0] if sec == "minimax" else key
            if base not in SCHEMA[sec] and not (sec == "minimax" and base in ("seed", "support")):
                raise ConfigError(f"[{sec}] unknown key {key!r}")
        sections[sec] = dict(cp[sec])
    if jobs < 1:
        raise ConfigError("--jobs must be positive")
    cfg = RunConfig(sections, Path(out), seed, jobs, path)
    if cfg.problem_id not in PROBLEMS:
        raise ConfigError(f"[pde] unknown problem {cfg.problem_id!r}; expected one of {', '.join(PROBLEMS)}")
    if not (cfg.hmax > 0 and math.isfinite(cfg.hmax)):
        raise ConfigError("[mesh] hmax must be positive")
    return cfg
