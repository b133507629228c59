"""Ground and nodal levels on straight and bumped cylinders.

On a straight cylinder the least nodal level is twice the ground level.  A
bump in the cross-section (wider in the middle, straight at infinity) lowers
the nodal level strictly below c0 + c0_inf, c0_inf being the straight level.
Pass a smaller h (0.05) for the full-resolution run; 0.1 takes about a minute.
"""
import sys

from nehari import ProblemParams, SolveConfig, ground_state, nodal_solution
from nehari.geometry import DomainSpec, discretize, make_cross_section
from nehari.testfunctions import sobolev_level

h = float(sys.argv[1]) if len(sys.argv) > 1 else 0.1
T = 12.0
F = make_cross_section("disk", radius=1.0)
params = ProblemParams(N=3, ell=1, q=5.5, mu=1.0)
S_N = sobolev_level(3) / 3

straight = discretize(DomainSpec(ell=1, base=F, T=T), h)
gs = ground_state(straight, params, SolveConfig(width=0.5))
nod = nodal_solution(straight, params, SolveConfig(init="two_bump", width=0.5, separation=3.0))
c0, c1 = gs.level, nod.level
print(f"straight: c0 = {c0:.5f} (S^(3/2)/3 = {S_N:.5f}), c1 = {c1:.5f}, c1/2c0 = {c1 / (2 * c0):.7f}")
print(f"          interface defect of the nodal solution: {nod.report.nodal['interface_defect']:.2e}")

bump = discretize(DomainSpec(ell=1, base=F, T=T, family="bump", a0=1.0, m=2.0), h)
gb = ground_state(bump, params, SolveConfig(width=0.5))
# the nodal run on the bump drifts slowly; any iterate is an upper bound for c1
nb = nodal_solution(bump, params, SolveConfig(init="two_bump", width=0.5, center=1.0,
                                              separation=1.0, max_iters=100))
print(f"bump:     c0 = {gb.level:.5f}, c1 <= {nb.level:.5f} ({nb.iterations} its, "
      f"converged: {nb.converged})")
print(f"          c0 + c0_inf = {gb.level + c0:.5f}; gap = {nb.level - gb.level - c0:+.5f}")
