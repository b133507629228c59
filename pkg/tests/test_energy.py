import math

import numpy as np
import pytest

from nehari.calculus import Field, integrals
from nehari.energy import (ProblemParams, critical_exponent, energy, energy_from_integrals,
                           nehari_scale, nehari_scale_from_integrals, nodal_split, residual,
                           tail_masses)
from nehari.geometry import DomainSpec, discretize, make_cross_section

P = ProblemParams(N=3, ell=1, q=4.0, mu=1.0)


def test_params_validation():
    assert P.p == 6.0
    assert critical_exponent(4) == 4.0
    with pytest.raises(ValueError, match="2 < q < p"):
        ProblemParams(q=7.0, p=6.0)
    with pytest.raises(ValueError):
        ProblemParams(mu=0.0)
    with pytest.raises(ValueError):
        critical_exponent(2)
    assert P.replace(q=5.0).q == 5.0


def test_zero_field(strip_grid):
    u = Field.zeros(strip_grid)
    rep = energy(u, P)
    assert rep.I == 0 and rep.nehari_residual == 0
    assert np.all(residual(u, P).values == 0)


def test_gradient_matches_central_differences(strip_grid, rng):
    g = strip_grid
    for lam in (0.0, 2.0):
        params = P.replace(lam=lam)
        for _ in range(5):
            u = Field(g, rng.standard_normal(g.n))
            v = Field(g, rng.standard_normal(g.n))
            u.values /= math.sqrt(integrals(u, 6, 4).grad2)
            v.values /= math.sqrt(integrals(v, 6, 4).grad2)
            e = 1e-5
            fd = (energy(u + e * v, params).I - energy(u - e * v, params).I) / (2 * e)
            an = g.dV * residual(u, params).values @ v.values
            assert abs(an - fd) <= 1e-6 * max(abs(fd), 1e-12)


def test_nehari_scale_closed_form():
    t = nehari_scale_from_integrals(4.0, 1.0, 0.0, P)
    assert abs(t - math.sqrt(2)) < 1e-11


def test_nehari_projection_and_scaling_law(strip_grid, rng):
    g = strip_grid
    u = Field(g, rng.standard_normal(g.n))
    t = nehari_scale(u, P)
    w = t * u
    rep = energy(w, P)
    assert abs(rep.nehari_residual) / rep.integrals.grad2 < 1e-10
    assert abs(nehari_scale(w, P) - 1) < 1e-10
    for c in (0.3, 7.0):
        assert abs(nehari_scale(c * u, P) * c / t - 1) < 1e-10
    assert nehari_scale(-u, P) == t


def test_nehari_level_identity(strip_grid, rng):
    g = strip_grid
    u = Field(g, rng.random(g.n))
    w = nehari_scale(u, P) * u
    ints = integrals(w, P.p, P.q)
    I = energy(w, P).I
    assert math.isclose(I, (0.5 - 1 / P.p) * ints.lp + P.mu * (0.5 - 1 / P.q) * ints.lq,
                        rel_tol=1e-9)
    assert I > 0


def test_ray_maximum_at_nehari_scale(strip_grid, rng):
    g = strip_grid
    u = Field(g, rng.random(g.n))
    t = nehari_scale(u, P)
    I = lambda s: energy(s * u, P).I
    s = np.linspace(0.2 * t, 3 * t, 301)
    assert I(t) >= max(I(x) for x in s) - 1e-12


def test_zero_field_scale_rejected(strip_grid):
    with pytest.raises(ValueError):
        nehari_scale(Field.zeros(strip_grid), P)


def test_energy_reproducible_from_integrals(strip_grid, rng):
    u = Field(strip_grid, rng.standard_normal(strip_grid.n))
    rep = energy(u, P)
    assert rep.I == energy_from_integrals(rep.integrals, P)
    assert rep.I == energy(-u, P).I


def test_nodal_split_basic(strip_grid, rng):
    u = Field(strip_grid, rng.standard_normal(strip_grid.n))
    up, um = nodal_split(u)
    assert np.array_equal(up.values - um.values, u.values)
    assert not np.any(up.values * um.values)
    a, b = nodal_split(-u)
    assert np.array_equal(a.values, um.values) and np.array_equal(b.values, up.values)
    z = nodal_split(abs(u))[1]
    assert not np.any(z.values)


def test_split_additive_for_separated_bumps(strip_grid):
    g = strip_grid
    t = g.t[:, 0]
    y = g.y[:, 0]
    prof = np.sin(math.pi * y)
    vals = np.where(t < -0.5, prof * np.cos(math.pi * (t + 1.2)) ** 2 * (np.abs(t + 1.2) < 0.5), 0.0)
    vals -= np.where(t > 0.5, prof * np.cos(math.pi * (t - 1.2)) ** 2 * (np.abs(t - 1.2) < 0.5), 0.0)
    rep = energy(Field(g, vals), P)
    assert abs(rep.nodal["interface_defect"]) < 1e-13 * abs(rep.I)
    assert math.isclose(rep.nodal["split_level"], rep.I, rel_tol=1e-13)


def test_tail_masses():
    F = make_cross_section("interval", 0, 1)
    g = discretize(DomainSpec(ell=1, base=F, T=4.0), 0.1)
    r = g.radius
    u = Field(g, np.maximum(1.5 - r, 0.0))
    assert tail_masses(u, 2.0, 6, 4) == (0.0, 0.0, 0.0)
    far = Field(g, np.exp(-10 * (g.t[:, 0] - 3.5) ** 2) * np.sin(math.pi * g.y[:, 0]))
    assert all(x > 0.99 for x in tail_masses(far, 1.0, 6, 4))
    with pytest.raises(ValueError):
        tail_masses(u, 4.0, 6, 4)
