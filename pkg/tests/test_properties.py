"""Hypothesis checks of the structural invariants of each module."""
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st

from nehari.calculus import Field, Integrals, integrals
from nehari.decay import EnvelopeSpec, comparison_Psi
from nehari.energy import ProblemParams, energy, energy_from_integrals, nehari_scale
from nehari.geometry import (DomainSpec, cross_section_at, discretize, discretize_cross_section,
                             make_cross_section, mask_points)
from nehari.solvers import SolveConfig, ground_state
from nehari.spectral import principal_eigenpair
from nehari.testfunctions import tau_sup

P = ProblemParams(N=3, ell=1, q=4.0, mu=1.0)
SET = dict(deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
seeds = st.integers(0, 2**32 - 1)


# -- geometry ---------------------------------------------------------------------------

@settings(max_examples=25, **SET)
@given(st.floats(0.3, 1.5), st.floats(1.0, 1.5), st.sampled_from([0.1, 0.125, 0.2]))
def test_mask_monotone_in_radius(r, grow, h):
    small = DomainSpec(1, make_cross_section("disk", radius=r), 1.0)
    big = DomainSpec(1, make_cross_section("disk", radius=r * grow), 1.0 * grow)
    assert mask_points(discretize(small, h)) <= mask_points(discretize(big, h))


@settings(max_examples=15, **SET)
@given(st.floats(0.2, 1.0), st.sampled_from([0.1, 0.125]), st.integers(-6, 6))
def test_slice_matches_cross_section(a0, h, k):
    F = make_cross_section("interval", -0.5, 0.5)
    dom = DomainSpec(1, F, 1.0, family="bump", a0=a0, m=2.0)
    g = discretize(dom, h)
    t = k * h
    assume(abs(t) < 1.0 - h / 2)
    here = np.isclose(g.t[:, 0], t)
    ys = set(np.rint(g.y[here, 0] / h).astype(int).tolist())
    sl = discretize_cross_section(cross_section_at(dom, t), h)
    assert ys == set(np.rint(sl.points[:, 0] / h).astype(int).tolist())


# -- calculus -------------------------------------------------------------------------------

@settings(max_examples=30, **SET)
@given(seeds)
def test_laplacian_symmetric(strip_grid, seed):
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, strip_grid.n))
    A = strip_grid.laplacian
    lhs, rhs = (A @ u) @ v, u @ (A @ v)
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + np.linalg.norm(u) * np.linalg.norm(v))


@pytest.fixture(scope="module")
def strip_lambda(strip_grid):
    return principal_eigenpair(strip_grid).lambda1


@settings(max_examples=30, **SET)
@given(seeds)
def test_rayleigh_quotient_bounded_below(strip_grid, strip_lambda, seed):
    u = Field(strip_grid, np.random.default_rng(seed).standard_normal(strip_grid.n))
    assert u.values @ (strip_grid.laplacian @ u.values) >= strip_lambda * (u.values @ u.values) * (
        1 - 1e-10)


# -- energy -------------------------------------------------------------------------------

def _cube_grid():
    return discretize(DomainSpec(1, make_cross_section("disk", radius=1.0), 1.0), 0.25)


CUBE = _cube_grid()


@settings(max_examples=30, **SET)
@given(seeds, st.floats(0.1, 5.0))
def test_energy_even_and_scale_equivariant(seed, c):
    u = Field(CUBE, np.random.default_rng(seed).standard_normal(CUBE.n))
    assert energy(-u, P).I == pytest.approx(energy(u, P).I, rel=1e-12)
    t = nehari_scale(u, P)
    assert nehari_scale(-u, P) == pytest.approx(t, rel=1e-10)
    assert nehari_scale(c * u, P) * c == pytest.approx(t, rel=1e-10)


@settings(max_examples=30, **SET)
@given(seeds)
def test_level_identity_on_nehari_set(seed):
    u = Field(CUBE, np.random.default_rng(seed).standard_normal(CUBE.n))
    w = nehari_scale(u, P) * u
    ints = integrals(w, P.p, P.q)
    ident = (0.5 - 1 / P.p) * ints.lp + P.mu * (0.5 - 1 / P.q) * ints.lq
    assert energy(w, P).I == pytest.approx(ident, rel=1e-9)
    assert ident > 0


@settings(max_examples=30, **SET)
@given(seeds, st.floats(0.2, 3.0))
def test_ray_maximum_at_nehari_scale(seed, s):
    u = Field(CUBE, np.random.default_rng(seed).standard_normal(CUBE.n))
    t = nehari_scale(u, P)
    assume(abs(s - 1) > 1e-3)
    assert energy(s * t * u, P).I < energy(t * u, P).I


# -- testfunctions -------------------------------------------------------------------------

def _nehari_integrals(rng, params):
    """Integrals of a made-up field scaled onto its Nehari set."""
    g2 = rng.uniform(1, 10)
    lp, lq, l2 = rng.uniform(0.1, 5, 3)
    p, q, mu = params.p, params.q, params.mu
    lo, hi = 0.0, 1.0
    f = lambda t: t ** (p - 2) * lp + mu * t ** (q - 2) * lq - g2
    while f(hi) < 0:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    t = 0.5 * (lo + hi)
    return Integrals(grad2=t * t * g2, lp=t**p * lp, lq=t**q * lq, l2=t * t * l2)


@settings(max_examples=30, **SET)
@given(seeds)
def test_tau_sup_interior_near_nehari(seed):
    rng = np.random.default_rng(seed)
    ia, ib = _nehari_integrals(rng, P), _nehari_integrals(rng, P)
    best, t1, t2 = tau_sup(ia, ib, P)
    assert 0.5 < t1 < 2 and 0.5 < t2 < 2
    assert t1 == pytest.approx(1, abs=1e-4) and t2 == pytest.approx(1, abs=1e-4)
    assert best == pytest.approx(energy_from_integrals(ia, P) + energy_from_integrals(ib, P),
                                 rel=1e-9)


# -- decay -----------------------------------------------------------------------------------

@settings(max_examples=40, **SET)
@given(st.floats(1, 20), st.floats(0, 0.9), st.floats(0.01, 0.99))
def test_envelope_ordering(lambda1, f1, gap):
    lam = f1 * lambda1
    lam2 = lam + gap * (lambda1 - lam)
    lo = EnvelopeSpec(lambda1, lam)
    hi = EnvelopeSpec(lambda1, lam2)
    t = 50.0 / math.sqrt(lambda1 - lam)
    assert comparison_Psi(hi, t) >= comparison_Psi(lo, t)


# -- solvers -------------------------------------------------------------------------------

def test_translation_robustness():
    g = discretize(DomainSpec(1, make_cross_section("disk", radius=1.0), 4.0), 0.25)
    cfg = SolveConfig(tol_residual=1e-7)
    base = ground_state(g, P, cfg)
    moved = ground_state(g, P, SolveConfig(tol_residual=1e-7, center=0.75))
    assert moved.converged and base.converged
    assert abs(moved.level - base.level) < 1e-3 * base.level
    assert np.all(moved.field.values >= 0)
