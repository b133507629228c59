"""Bubble plus ground state on a pinched cylinder: does the sum dip below c0 + S^(3/2)/3?

A Talenti bubble of scale eps, cut off at radius 2 sqrt(eps), is glued next
to the ground state v.  The cutoff costs ~eps^(1/2), the q-term gains
~eps^(N(1-q/p)).  For q = 5.5 the gain wins as eps -> 0; for q = 5 the two
exponents tie and a large mu is needed.
"""
import numpy as np

from nehari import ProblemParams, ground_state
from nehari.geometry import DomainSpec, discretize, make_cross_section
from nehari.testfunctions import energy_gap_experiment

F = make_cross_section("disk", radius=1.0)
grid = discretize(DomainSpec(ell=1, base=F, T=3.0, family="pinched", a0=1.0, m=2.0), 0.1)
eps = np.logspace(-6, -1.5, 10)

for q, mu in [(5.5, 1.0), (5.0, 1.0), (5.0, 100.0)]:
    params = ProblemParams(N=3, ell=1, q=q, mu=mu)
    sol = ground_state(grid, params)
    rep = energy_gap_experiment("pinched", params, eps, v=sol.field, c0=sol.level)
    f = rep.fits
    print(f"\nq = {q}, mu = {mu}: c0 = {sol.level:.5f}, bound = {rep.bound:.5f}")
    print(f"  cost slope {f['cost_exponent']:.4f} (expect {f['expected_cost_exponent']}), "
          f"gain slope {f['gain_exponent']:.4f} (expect {f['expected_gain_exponent']:.2f}); "
          f"{f['regime']}")
    print("       eps     sup_tau - bound   cutoff cost     q-gain")
    for r in rep.rows:
        print(f"  {r['eps']:.2e}   {r['sup_tau'] - r['bound']:+.5f}        {r['cutoff_cost']:.5f}"
              f"       {r['q_gain']:.5f}")
