"""Grid ground state on the unit ball against the radial shooting level.

The radial ODE -u'' - (2/r) u' = u^5 + mu u^3 is shot from u(0) until its
first zero lands on r = 1.  For mu = 1 no such u(0) exists; mu = 4 has one.
"""
import sys

from nehari import ProblemParams, SolveConfig, ground_state
from nehari.geometry import ball_domain, discretize
from nehari.solvers import NoRadialSolution, radial_shooting

n = int(sys.argv[1]) if len(sys.argv) > 1 else 48
grid = discretize(ball_domain(3, 1.0), 2 / n, max_points=10**7)
print(f"ball grid: {grid.n} points ({n}^3-equivalent)")

for mu in (1.0, 4.0):
    try:
        ref = radial_shooting(3, 6.0, 4.0, mu)
        print(f"mu = {mu}: shooting u(0) = {ref.u0:.6f}, level = {ref.level:.6f}")
    except NoRadialSolution as e:
        ref = None
        print(f"mu = {mu}: no radial solution ({e})")
    sol = ground_state(grid, ProblemParams(N=3, ell=1, q=4.0, mu=mu), SolveConfig(max_iters=300))
    line = f"         grid level = {sol.level:.6f} ({sol.iterations} its)"
    if ref is not None:
        line += f", rel. gap {abs(sol.level - ref.level) / ref.level:.2e}"
    print(line)
