"""Least-energy positive and sign-changing solutions by Nehari-projected descent.

Both solvers take steps along the H^1_0 gradient ``g = u - (-Delta_h)^{-1} f(u)``
and pull every trial point back onto the Nehari constraint with the scalar
rescaling of :func:`nehari.energy.nehari_scale`.  A radial shooting oracle for
balls is provided for cross-checking.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp

from .calculus import Field, Integrals, cg, volume_integrals
from .energy import (EnergyReport, ProblemParams, energy, energy_from_integrals, load,
                     nehari_scale_from_integrals)
from .geometry import DomainSpec, GridSpec, discretize
from .spectral import principal_eigenpair

__all__ = [
    "SolveConfig",
    "Solution",
    "DegenerateStartError",
    "NodalCollapseError",
    "NoRadialSolution",
    "ShootingResult",
    "initial_guess",
    "ground_state",
    "nodal_solution",
    "radial_shooting",
]

log = logging.getLogger(__name__)


class DegenerateStartError(RuntimeError):
    pass


class NodalCollapseError(RuntimeError):
    def __init__(self, sign: str, message: str = ""):
        super().__init__(message or f"the {sign} part of the nodal iterate vanished")
        self.sign = sign


class NoRadialSolution(RuntimeError):
    pass


@dataclass
class SolveConfig:
    max_iters: int = 2000
    step0: float = 1.0
    armijo_factor: float = 0.5
    armijo_slope: float = 1e-4
    tol_residual: float = 1e-6
    init: str = "eigen_bump"
    # initial-guess shape: Gaussian width in t, centre, and half-separation of two bumps
    width: float = 1.0
    center: float = 0.0
    separation: Optional[float] = None
    init_field: Optional[Field] = None
    cg_tol: float = 1e-12
    max_backtracks: int = 40
    collapse_eps: float = 1e-6

    def __post_init__(self):
        if not (self.tol_residual > 0 and self.step0 > 0 and self.cg_tol > 0):
            raise ValueError("tolerances and step0 must be positive")
        if not 0 < self.armijo_factor < 1:
            raise ValueError("armijo_factor must lie in (0, 1)")


@dataclass(eq=False)
class Solution:
    field: Field
    level: float
    report: EnergyReport
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    kind: str = "ground_state"

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    def summary(self) -> dict:
        out = {
            "kind": self.kind,
            "level": self.level,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.history[-1][1] if self.history else None,
            "report": self.report.to_dict(),
        }
        return out


# -- helpers ------------------------------------------------------------------

def _as_grid(domain: Union[GridSpec, DomainSpec], h: Optional[float]) -> GridSpec:
    if isinstance(domain, GridSpec):
        return domain
    if h is None:
        raise ValueError("pass a GridSpec or a DomainSpec together with h")
    return discretize(domain, h)


def _ints(grid: GridSpec, v: np.ndarray, Av: np.ndarray, params: ProblemParams) -> Integrals:
    powers = (params.p, params.q, 2.0) if params.lam else (params.p, params.q)
    vol = volume_integrals(grid, v, powers)
    l2 = vol[2] if params.lam else 0.0
    return Integrals(float(grid.dV * np.dot(v, Av)), vol[0], vol[1], l2)


def _project(grid, v, params):
    """Nehari rescaling of v; returns (t v, A(t v), integrals of t v)."""
    A = grid.laplacian
    Av = A @ v
    ints = _ints(grid, v, Av, params)
    if ints.lp + ints.lq == 0:
        raise DegenerateStartError("iterate collapsed to zero")
    t = nehari_scale_from_integrals(ints.grad2, ints.lp, ints.lq, params, ints.l2)
    p, q = params.p, params.q
    scaled = Integrals(t * t * ints.grad2, t**p * ints.lp, t**q * ints.lq, t * t * ints.l2)
    return t * v, t * Av, scaled


def _gaussian(tvals: np.ndarray, center: np.ndarray, width: float) -> np.ndarray:
    d2 = np.sum((tvals - center) ** 2, axis=-1)
    return np.exp(-d2 / (2 * width**2))


def _cross_profile(grid: GridSpec) -> np.ndarray:
    """phi(y) of the base cross-section when the domain is known, else a torsion profile."""
    dom = grid.domain
    if dom is not None and dom.base.has_distance:
        try:
            eig = principal_eigenpair(dom.base, grid.h, tol=1e-6)
            prof = eig.on_grid(grid)
            if np.count_nonzero(prof) > 0:
                return np.where(prof > 0, prof, 0.0) + 1e-3 * (prof == 0)
        except Exception:  # noqa: BLE001 - fall back to the torsion profile
            log.debug("cross-section eigenfunction unavailable, using torsion profile")
    w, _, _ = cg(grid.laplacian, np.ones(grid.n), tol=1e-8)
    return w / np.max(w)


def initial_guess(grid: GridSpec, cfg: SolveConfig, params: Optional[ProblemParams] = None) -> Field:
    """Initial field for the tags ``eigen_bump``, ``instanton``, ``two_bump``, ``file``."""
    ell = grid.ell
    c = np.zeros(ell)
    c[0] = cfg.center
    if cfg.init == "file":
        if cfg.init_field is None:
            raise ValueError("init = file needs init_field")
        if cfg.init_field.grid.n != grid.n:
            raise ValueError("init_field lives on a different grid")
        return Field(grid, cfg.init_field.values.copy())
    if cfg.init == "eigen_bump":
        return Field(grid, _cross_profile(grid) * _gaussian(grid.t, c, cfg.width))
    if cfg.init == "instanton":
        from .testfunctions import talenti
        x = grid.points.copy()
        x[:, :ell] -= c
        return Field(grid, talenti(np.linalg.norm(x, axis=-1), grid.N, cfg.width))
    if cfg.init == "two_bump":
        d = cfg.separation if cfg.separation is not None else grid.T / 2
        e = np.zeros(ell)
        e[0] = d
        prof = _cross_profile(grid)
        vals = prof * (_gaussian(grid.t, c - e, cfg.width) - _gaussian(grid.t, c + e, cfg.width))
        return Field(grid, vals)
    raise ValueError(f"unknown init {cfg.init!r}")


# -- ground state ---------------------------------------------------------------

def _cg_tol(cfg: SolveConfig, rel: float) -> float:
    """Inner CG tolerance: loose far from convergence, ``cg_tol`` near it."""
    return max(cfg.cg_tol, min(1e-4, 1e-3 * rel))


def ground_state(domain: Union[GridSpec, DomainSpec], params: ProblemParams,
                 cfg: Optional[SolveConfig] = None, h: Optional[float] = None) -> Solution:
    """Minimise I on the Nehari set over nonnegative fields.

    Iteration: ``u <- Pi(|u - s g|)`` with ``g`` the H^1_0 gradient, ``Pi``
    the Nehari rescaling and ``s`` chosen by Armijo backtracking on ``I``.
    """
    cfg = cfg or SolveConfig()
    grid = _as_grid(domain, h)
    A = grid.laplacian
    dV = grid.dV
    u0 = initial_guess(grid, cfg, params).values
    if not np.any(u0):
        raise DegenerateStartError("initial guess is identically zero")
    u, Au, ints = _project(grid, np.abs(u0), params)
    I = energy_from_integrals(ints, params)
    w = None
    history = []
    converged = False
    step = cfg.step0
    k = 0
    rel = 1.0
    for k in range(1, cfg.max_iters + 1):
        f = load(grid, u, params)
        tol = _cg_tol(cfg, rel)
        while True:
            w, _, _ = cg(A, f, x0=w, tol=tol)
            g = u - w
            # |g|_{H^1}^2 = <A g, g> and A g = A u - f
            gn2 = dV * float(np.dot(Au - f, g))
            rel = math.sqrt(max(gn2, 0.0) / ints.grad2)
            if rel > cfg.tol_residual or tol <= cfg.cg_tol:
                break
            tol = cfg.cg_tol
        history.append((I, rel))
        if rel <= cfg.tol_residual:
            converged = True
            break
        s = min(cfg.step0, 2 * step)
        for _ in range(cfg.max_backtracks):
            v, Av, vints = _project(grid, np.abs(u - s * g), params)
            Iv = energy_from_integrals(vints, params)
            if Iv <= I - cfg.armijo_slope * s * gn2:
                break
            s *= cfg.armijo_factor
        else:
            log.info("ground_state: line search failed at iteration %d (rel grad %.3e)", k, rel)
            break
        step = s
        u, Au, ints, I = v, Av, vints, Iv
    u_field = Field(grid, u)
    rep = energy(u_field, params, nodal=False)
    return Solution(u_field, rep.I, rep, k, converged, history, "ground_state")


# -- nodal solution ----------------------------------------------------------------

def _split_project(grid, v, params, floors):
    vp = np.maximum(v, 0.0)
    vm = np.maximum(-v, 0.0)
    out = []
    for part, sign, floor in ((vp, "positive", floors[0]), (vm, "negative", floors[1])):
        norm = math.sqrt(grid.dV * float(np.dot(part, part)))
        if norm <= floor:
            raise NodalCollapseError(sign)
        out.append(_project(grid, part, params))
    return out


def nodal_solution(domain: Union[GridSpec, DomainSpec], params: ProblemParams,
                   cfg: Optional[SolveConfig] = None, h: Optional[float] = None) -> Solution:
    """Minimise ``I(u+) + I(u-)`` subject to ``I'(u+)u+ = 0 = I'(u-)u-``.

    Each step is a plain H^1_0 gradient step on the split objective followed by
    separate Nehari rescalings of the two sign parts.
    """
    cfg = cfg or SolveConfig(init="two_bump")
    grid = _as_grid(domain, h)
    A = grid.laplacian
    dV = grid.dV
    u0 = initial_guess(grid, cfg, params).values
    if not (np.any(u0 > 0) and np.any(u0 < 0)):
        raise ValueError("nodal initial guess must take both signs")
    floors = tuple(cfg.collapse_eps * math.sqrt(dV * float(np.dot(part, part)))
                   for part in (np.maximum(u0, 0), np.maximum(-u0, 0)))
    (up, Aup, ip), (um, Aum, im) = _split_project(grid, u0, params, floors)

    def level(ip, im):
        return energy_from_integrals(ip, params) + energy_from_integrals(im, params)

    J = level(ip, im)
    g = None
    rel = 1.0
    history = []
    converged = False
    step = cfg.step0
    k = 0
    for k in range(1, cfg.max_iters + 1):
        pos = up > 0
        neg = um > 0
        G = np.where(pos, Aup - load(grid, up, params), 0.0) \
            - np.where(neg, Aum - load(grid, um, params), 0.0)
        tol = _cg_tol(cfg, rel)
        while True:
            g, _, _ = cg(A, G, x0=g, tol=tol)
            gn2 = dV * float(np.dot(G, g))
            rel = math.sqrt(max(gn2, 0.0) / (ip.grad2 + im.grad2))
            if rel > cfg.tol_residual or tol <= cfg.cg_tol:
                break
            tol = cfg.cg_tol
        history.append((J, rel))
        if rel <= cfg.tol_residual:
            converged = True
            break
        u = up - um
        s = min(cfg.step0, 2 * step)
        for _ in range(cfg.max_backtracks):
            (vp, Avp, vip), (vm, Avm, vim) = _split_project(grid, u - s * g, params, floors)
            Jv = level(vip, vim)
            if Jv <= J - cfg.armijo_slope * s * gn2:
                break
            s *= cfg.armijo_factor
        else:
            log.info("nodal_solution: line search failed at iteration %d (rel grad %.3e)", k, rel)
            break
        step = s
        up, Aup, ip, um, Aum, im, J = vp, Avp, vip, vm, Avm, vim, Jv
    u_field = Field(grid, up - um)
    rep = energy(u_field, params, nodal=True)
    return Solution(u_field, rep.nodal["split_level"], rep, k, converged, history, "nodal")


# -- radial shooting oracle ----------------------------------------------------------

@dataclass
class ShootingResult:
    u0: float
    r: np.ndarray
    u: np.ndarray
    level: float
    first_zero: float
    integrals: dict
    # u'(R) at the boundary, for Pohozaev-type checks
    du_boundary: float = float("nan")


def _shoot(u0, N, p, q, mu, r_max, dense=False):
    """Integrate the radial ODE from r ~ 0 until u = 0 or r_max.

    State: (u, u', int u'^2 r^{N-1}, int |u|^p r^{N-1}, int |u|^q r^{N-1}).
    """
    k = u0 ** ((p - 2) / 2)  # natural inverse length of the profile

    def rhs(r, y):
        u, v = y[0], y[1]
        a = abs(u)
        w = r ** (N - 1)
        return [v, -(N - 1) / r * v - a ** (p - 2) * u - mu * a ** (q - 2) * u,
                v * v * w, a**p * w, a**q * w]

    def hit_zero(r, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    r0 = 1e-6 / k
    f0 = u0 ** (p - 1) + mu * u0 ** (q - 1)
    y0 = [u0 - f0 * r0**2 / (2 * N), -f0 * r0 / N,
          (f0 * r0 / N) ** 2 * r0**N / (N + 2),
          u0**p * r0**N / N, u0**q * r0**N / N]
    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", events=hit_zero,
                    rtol=1e-11, atol=1e-13 * max(u0, 1.0), dense_output=dense,
                    first_step=r0)
    if sol.t_events[0].size:
        return float(sol.t_events[0][0]), sol.y_events[0][0], sol
    return math.inf, sol.y[:, -1], sol


def radial_shooting(N: int, p: float, q: float, mu: float, R_ball: float = 1.0,
                    tol: float = 1e-10, u0_max: float = 1e4, r_max_factor: float = 50.0,
                    samples: int = 2001) -> ShootingResult:
    """Positive radial solution on the ball of radius ``R_ball`` by shooting.

    Bisects on ``u(0)`` (the first zero moves inward as u(0) grows) until the
    zero sits at ``R_ball`` within ``tol``.  Raises :class:`NoRadialSolution`
    when no u(0) up to ``u0_max`` gives a zero inside the ball.
    """
    if N < 3:
        raise ValueError("radial_shooting needs N >= 3")
    if not 2 < q < p:
        raise ValueError("require 2 < q < p")
    r_max = r_max_factor * R_ball

    def zero(u0):
        return _shoot(u0, N, p, q, mu, r_max)[0]

    lo, hi = None, 1.0
    while zero(hi) < R_ball:
        hi /= 2
        if hi < 1e-8:
            raise NoRadialSolution("first zero stays inside the ball for tiny u(0)")
    lo = hi
    while zero(hi) > R_ball:
        lo = hi
        hi *= 2
        if hi > u0_max:
            raise NoRadialSolution(
                f"no sign change inside r = {R_ball} for u(0) up to {u0_max:g}; "
                f"the first zero stays at r = {zero(lo):.6g}")
    # geometric bisection: the zero depends on u(0) over many decades
    while True:
        mid = math.sqrt(lo * hi)
        z = zero(mid)
        if abs(z - R_ball) <= tol * R_ball or hi / lo - 1 < 1e-15:
            break
        if z > R_ball:
            lo = mid
        else:
            hi = mid
    u0 = mid
    rz, yz, sol = _shoot(u0, N, p, q, mu, r_max, dense=True)
    omega = 2 * math.pi ** (N / 2) / math.gamma(N / 2)
    grad2 = omega * yz[2]
    lp = omega * yz[3]
    lq = omega * yz[4]
    level = 0.5 * grad2 - lp / p - mu * lq / q
    r = np.linspace(0.0, rz, samples)
    u = np.empty_like(r)
    u[0] = u0
    u[1:] = sol.sol(r[1:])[0]
    u[-1] = 0.0
    return ShootingResult(u0, r, u, level, rz, {"grad2": grad2, "lp": lp, "lq": lq},
                          float(yz[1]))
