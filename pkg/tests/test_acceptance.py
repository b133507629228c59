"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines appear even
without ``-s``.  Criteria 5 and 6 are the slow ones (minutes each).
"""
import json
import math
import time

import numpy as np
import pytest
from scipy.special import jn_zeros

from nehari.calculus import Field, integrals
from nehari.cli import parse_config, read_field, run, write_field
from nehari.decay import EnvelopeSpec, discrete_lhs, comparison_Psi, fit_decay_rate, hopf_check, \
    verify_eigencomputation
from nehari.energy import ProblemParams, energy, nehari_scale, residual
from nehari.geometry import DomainSpec, ball_domain, discretize, make_cross_section
from nehari.solvers import NoRadialSolution, SolveConfig, ground_state, nodal_solution, \
    radial_shooting
from nehari.spectral import principal_eigenpair
from nehari.testfunctions import (bubble_integrals, energy_gap_experiment, instanton_integrals,
                                  sobolev_level, rho, talenti)

pytestmark = pytest.mark.slow

S32 = sobolev_level(3)
DISK = make_cross_section("disk", radius=1.0)


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return emit


# -- 1 ------------------------------------------------------------------------------------

def test_criterion_1_gradient_consistency(report):
    t0 = time.time()
    F = make_cross_section("interval", -0.5, 0.5)
    g = discretize(DomainSpec(1, F, 2.0, family="bump", a0=0.6, m=2.0), 0.05)
    params = ProblemParams(N=2, ell=1, p=6.0, q=4.0, mu=1.0)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        u = Field(g, rng.standard_normal(g.n))
        v = Field(g, rng.standard_normal(g.n))
        u.values /= math.sqrt(integrals(u, 6.0, 4.0).grad2)
        v.values /= math.sqrt(integrals(v, 6.0, 4.0).grad2)
        e = 1e-5
        fd = (energy(u + e * v, params).I - energy(u - e * v, params).I) / (2 * e)
        an = g.dV * residual(u, params).values @ v.values
        worst = max(worst, abs(an - fd) / abs(fd))
    dt = time.time() - t0
    ok = worst < 1e-6 and dt < 10
    assert report(1, ok, f"max rel err {worst:.2e} over 20 fields on {g.n} points, {dt:.1f}s")


# -- 2 ------------------------------------------------------------------------------------

def test_criterion_2_nehari_projection(report):
    g = discretize(DomainSpec(1, DISK, 2.0), 0.2)
    params = ProblemParams(N=3, ell=1, q=4.0, mu=1.0)
    rng = np.random.default_rng(2)
    worst_res, worst_law = 0.0, 0.0
    for _ in range(100):
        u = Field(g, rng.standard_normal(g.n) * 10.0 ** rng.uniform(-2, 2))
        t = nehari_scale(u, params)
        rep = energy(t * u, params)
        worst_res = max(worst_res, abs(rep.nehari_residual) / rep.integrals.grad2)
        c = 10.0 ** rng.uniform(-3, 3)
        worst_law = max(worst_law, abs(nehari_scale(c * u, params) * c / t - 1))
    ok = worst_res < 1e-10 and worst_law < 1e-10
    assert report(2, ok, f"max |I'(tu)tu|/|tu|^2 = {worst_res:.1e}, scaling law {worst_law:.1e}")


# -- 3 ------------------------------------------------------------------------------------

@pytest.mark.parametrize("name,F,exact,tol", [
    ("interval(0,1)", make_cross_section("interval", 0.0, 1.0), math.pi**2, 0.005),
    ("square(1)", make_cross_section("square", side=1.0), 2 * math.pi**2, 0.005),
    ("disk(1)", DISK, jn_zeros(0, 1)[0] ** 2, 0.01),
])
def test_criterion_3_eigenvalues(report, name, F, exact, tol):
    t0 = time.time()
    lam = principal_eigenpair(F, 1 / 128).lambda1
    dt = time.time() - t0
    err = abs(lam - exact) / exact
    ok = err < tol and dt < 30
    assert report(3, ok, f"{name}: lambda1 = {lam:.5f} vs {exact:.5f}, rel {err:.2e}, {dt:.1f}s")


# -- 4 ------------------------------------------------------------------------------------

def test_criterion_4_instanton_normalization(report):
    full = instanton_integrals(3, 1.0)
    agree = abs(full["grad2"] - full["lp"]) / full["lp"]
    near_S = abs(full["grad2"] - 12.82) < 0.01
    # grid route: the cutoff bubble sampled on a ball grid against its radial integrals
    eps = 0.1
    g = discretize(ball_domain(3, 1.0), 1 / 96, max_points=10**7)
    r = np.linalg.norm(g.points, axis=-1)
    u = Field(g, talenti(r, 3, eps) * rho(r / math.sqrt(eps)))
    grid = integrals(u, 6.0, 4.0)
    rad = bubble_integrals(3, eps, 6.0, 4.0)
    grid_err = max(abs(grid.grad2 / rad.grad2 - 1), abs(grid.lp / rad.lp - 1))
    spread = [instanton_integrals(3, e)["grad2"] for e in np.logspace(-6, 1, 8)]
    eps_var = (max(spread) - min(spread)) / S32
    ok = agree < 0.01 and near_S and grid_err < 0.01 and eps_var < 0.01
    assert report(4, ok, f"grad2 = {full['grad2']:.6f}, lp = {full['lp']:.6f} (gap {agree:.1e}); "
                         f"grid vs radial at h=1/96 {grid_err:.1e}; eps spread {eps_var:.1e}")


# -- 5 ------------------------------------------------------------------------------------

BALL_H = 2 / 96


@pytest.fixture(scope="module")
def ball_grid():
    return discretize(ball_domain(3, 1.0), BALL_H, max_points=10**7)


def _ball_case(grid, mu):
    params = ProblemParams(N=3, ell=1, q=4.0, mu=mu)
    try:
        ref = radial_shooting(3, 6.0, 4.0, mu).level
    except NoRadialSolution as e:
        ref, why = None, str(e)
    else:
        why = ""
    t0 = time.time()
    s = ground_state(grid, params, SolveConfig(max_iters=300))
    return s, ref, why, time.time() - t0


def test_criterion_5_ball_oracle(report, ball_grid):
    s, ref, why, dt = _ball_case(ball_grid, 1.0)
    if ref is None:
        ok = False
        detail = (f"mu=1: grid level {s.level:.5f} ({s.iterations} its, {dt:.0f}s) but no "
                  f"radial solution exists to compare with: {why}")
    else:
        err = abs(s.level - ref) / ref
        ok = err < 0.02 and dt < 300
        detail = f"mu=1: grid {s.level:.5f} vs shooting {ref:.5f}, rel {err:.2e}, {dt:.0f}s"
    assert report(5, ok, detail)


def test_criterion_5_companion_mu4(report, ball_grid):
    s, ref, why, dt = _ball_case(ball_grid, 4.0)
    err = abs(s.level - ref) / ref
    ok = s.converged and err < 0.02 and dt < 300
    assert report("5 (companion mu=4)", ok,
                  f"grid {s.level:.5f} vs shooting {ref:.5f}, rel {err:.2e}, {dt:.0f}s")


# -- 6 ------------------------------------------------------------------------------------

def test_criterion_6_level_inequalities(report):
    t0 = time.time()
    h, T = 0.05, 12.0
    params = ProblemParams(N=3, ell=1, q=5.5, mu=1.0)
    straight = discretize(DomainSpec(1, DISK, T), h)
    gs = ground_state(straight, params, SolveConfig(width=0.5))
    nod = nodal_solution(straight, params, SolveConfig(init="two_bump", width=0.5,
                                                       separation=3.0))
    c0, c1 = gs.level, nod.level
    # strict gap: bump host (a0 = 1, m = 2) with c0_inf the straight-cylinder level
    bump = discretize(DomainSpec(1, DISK, T, family="bump", a0=1.0, m=2.0), h)
    gb = ground_state(bump, params, SolveConfig(width=0.5))
    nb = nodal_solution(bump, params, SolveConfig(init="two_bump", width=0.5, center=1.0,
                                                  separation=1.0, max_iters=100))
    dt = time.time() - t0
    checks = {
        "c0 > 0": c0 > 0,
        "c0 < S^{3/2}/3": c0 < S32 / 3,
        "c1 >= 2c0(1-1e-3)": nod.converged and c1 >= 2 * c0 * (1 - 1e-3),
        "bump c1 < c0 + c0_inf": gb.converged and nb.level < gb.level + c0,
        "runtime < 30 min": dt < 1800,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    assert report(6, ok, f"c0 = {c0:.5f} (S^(3/2)/3 = {S32 / 3:.5f}), c1 = {c1:.5f} "
                         f"(c1/2c0 = {c1 / (2 * c0):.7f}); bump: c0 = {gb.level:.5f}, "
                         f"c1 <= {nb.level:.5f} vs {gb.level + c0:.5f}; {dt / 60:.1f} min"
                         + (f"; failed: {failed}" if failed else ""))


# -- 7 ------------------------------------------------------------------------------------

def test_criterion_7_decay_rates(report):
    params = ProblemParams(N=3, ell=1, q=4.0, mu=1.0)
    T = 12.0
    g = discretize(DomainSpec(1, DISK, T), 0.1)
    s = ground_state(g, params)
    ep = principal_eigenpair(DISK, 0.1)
    fit = fit_decay_rate(s.field, (T / 3, 2 * T / 3))
    rate_err = abs(fit.rate / math.sqrt(ep.lambda1) - 1)
    hopf = hopf_check(s.field, eta=-0.5, phi=ep, lam=0.0, t_max=2 * T / 3)
    # l = 2 over the unit interval
    I = make_cross_section("interval", 0.0, 1.0)
    T2 = 6.0
    g2 = discretize(DomainSpec(2, I, T2), 0.1)
    s2 = ground_state(g2, params.replace(ell=2))
    fit2 = fit_decay_rate(s2.field, (T2 / 3, 2 * T2 / 3), with_prefactor=True)
    ok = (s.converged and s2.converged and rate_err < 0.05 and hopf.passed
          and abs(fit2.prefactor_exponent + 0.5) <= 0.15)
    assert report(7, ok, f"l=1 rate {fit.rate:.5f} vs sqrt(lambda1_h) {math.sqrt(ep.lambda1):.5f} "
                         f"(rel {rate_err:.1e}), hopf beta {hopf.beta:.3f}; l=2 prefactor "
                         f"exponent {fit2.prefactor_exponent:.3f} (rate {fit2.rate:.4f})")


# -- 8 ------------------------------------------------------------------------------------

def test_criterion_8_eigencomputation_identity(report):
    lam1 = jn_zeros(0, 1)[0] ** 2
    spec = EnvelopeSpec(lam1, lam=1.0, ell=1)
    hs = [0.04, 0.02, 0.01]
    errs = [verify_eigencomputation(spec, [0.0, 0.5, 1.0, 2.0, 4.0], h) for h in hs]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    target = 2 * (lam1 - 1.0) * comparison_Psi(spec, 0.0)
    perr = [abs(discrete_lhs(spec, 0.0, h) - target) / target for h in hs]
    pratios = [perr[0] / perr[1], perr[1] / perr[2]]
    ok = all(3.5 <= r <= 4.5 for r in ratios + pratios)
    assert report(8, ok, f"residuals {', '.join(f'{e:.2e}' for e in errs)} ratios "
                         f"{ratios[0]:.3f}, {ratios[1]:.3f}; t=0 ratios "
                         f"{pratios[0]:.3f}, {pratios[1]:.3f}")


# -- 9 ------------------------------------------------------------------------------------

def test_criterion_9_energy_gap_exponents(report):
    dom = DomainSpec(1, DISK, 3.0, family="pinched", a0=1.0, m=2.0)
    g = discretize(dom, 0.1)
    eps = np.logspace(-6, -1.5, 10)
    out = {}
    for q, mu in [(5.5, 1.0), (5.0, 1.0), (5.0, 100.0)]:
        params = ProblemParams(N=3, ell=1, q=q, mu=mu)
        s = ground_state(g, params)
        assert s.converged
        out[q, mu] = energy_gap_experiment("pinched", params, eps, v=s.field, c0=s.level)
    f = out[5.5, 1.0].fits
    ok = (abs(f["cost_exponent"] - 0.5) <= 0.1 and abs(f["gain_exponent"] - 0.25) <= 0.05
          and out[5.5, 1.0].dips and not out[5.0, 1.0].dips and out[5.0, 100.0].dips)
    assert report(9, ok, f"slopes {f['cost_exponent']:.4f}, {f['gain_exponent']:.4f}; dips: "
                         f"q=5.5 {out[5.5, 1.0].dips}, q=5 mu=1 {out[5.0, 1.0].dips}, "
                         f"q=5 mu=100 {out[5.0, 100.0].dips}")


# -- 10 -----------------------------------------------------------------------------------

def test_criterion_10_determinism_and_io(report, tmp_path):
    cfg = parse_config("cross_section = disk\nradius = 1\nT = 3\nh = 0.2\nq = 4\n")
    codes = [run("solve", cfg, tmp_path / d) for d in ("a", "b")]
    same = all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
               for n in ("solve.json", "solve_field.csv"))
    rep = json.loads((tmp_path / "a" / "solve.json").read_text())
    grid = cfg.grid()
    vals = np.random.default_rng(10).standard_normal(grid.n) * 1e-7
    write_field(tmp_path / "u.csv", Field(grid, vals))
    exact = np.array_equal(read_field(tmp_path / "u.csv", grid).values, vals)
    back = read_field(tmp_path / "a" / "solve_field.csv", grid)
    ok = codes == [0, 0] and same and exact and "config" in rep and np.all(back.values >= 0)
    assert report(10, ok, f"byte-identical reports: {same}; field round trip exact: {exact}")
