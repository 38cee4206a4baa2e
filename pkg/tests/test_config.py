import numpy as np
import pytest

from elcont.config import ConfigError, parse_config


def test_empty_config_defaults():
    cfg = parse_config("")
    assert cfg.problem_id == "lef_test" and cfg.hmax == 0.1 and cfg.mu == 0.0
    prob = cfg.build_problem()
    assert prob.name == "lef_test"
    assert len(cfg.seeds()) == 7


def test_full_config():
    text = """
[pde]
problem = lef_microforce
[params]
mu = -2.5
gamma_a = 5   # inline comment
[continuation]
ds = 0.05
dsmax = 0.2
neig = 8
mu_min = -20
snapshot_every = 10
[minimax]
tol_grad = 1e-5
seed.one = bump(0, 0, -1, 0.3)
seed.two = bump(0.5, 0.5, -, 0.3) + bump(-0.5, -0.5, +, 0.3)
support.two = 0
[mesh]
hmax = 0.2
"""
    cfg = parse_config(text)
    st = cfg.continuation()
    assert (st.ds, st.dsmax, st.neig, st.mu_min) == (0.05, 0.2, 8, -20.0)
    assert cfg.snapshot_every == 10
    mm = cfg.minimax()
    assert mm.tol_grad == 1e-5
    assert [s.name for s in mm.seeds] == ["one", "two"]
    assert mm.seeds[1].support == [0] and mm.seeds[0].support is None
    prob = cfg.build_problem()
    assert prob.params["gamma_a"] == 5.0 and prob.params["mu"] == -2.5
    assert cfg.build_mesh().hmax <= 0.2 + 1e-12


def test_polygon_domain():
    cfg = parse_config("[pde]\nproblem = poisson\n[domain]\ntype = polygon\nvertices = 0 0; 1 0; 1 1; 0 1\n")
    assert cfg.build_problem().domain.area == pytest.approx(1.0)
    assert cfg.f_const == 1.0


@pytest.mark.parametrize(
    "text",
    [
        "[bogus]\nx = 1\n",
        "[pde]\nwhat = 1\n",
        "[pde]\nproblem = heat\n",
        "[mesh]\nhmax = -1\n",
        "[continuation]\nds = 1\ndsmax = 0.5\n",
        "[continuation]\nneig = 2.5\n",
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        cfg = parse_config(text)
        cfg.continuation()


def test_bad_polygon():
    cfg = parse_config("[domain]\ntype = polygon\nvertices = 0 0; 1 1; 1 0; 0 1\n")
    with pytest.raises(ConfigError):
        cfg.build_problem()


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "nope.ini")


def test_config_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[params]\nmu = 3\n")
    cfg = parse_config(p, out=tmp_path, seed=4, jobs=2)
    assert cfg.mu == 3.0 and cfg.seed == 4 and cfg.jobs == 2 and cfg.path == p
    with pytest.raises(ConfigError):
        parse_config(p, jobs=0)


def test_caginalp_config():
    cfg = parse_config("[pde]\nproblem = caginalp\n[mesh]\nhmax = 0.1\n")
    prob = cfg.build_problem()
    assert prob.bc == "neumann" and cfg.f_const == 2000.0
    mesh = cfg.build_mesh()
    assert np.isclose(mesh.areas.sum(), prob.domain.area)
