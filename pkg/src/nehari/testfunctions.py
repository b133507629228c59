"""Explicit test functions: the Talenti bubble, smooth cutoffs, and the two
disjoint-support pairs used to push the nodal level below ``c0 + c0_inf``.

Bubble integrals are taken in radial form with Gauss-Legendre panels; at the
scales of interest (eps much smaller than any affordable h) the bubble cannot
be sampled on a volume grid.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.ndimage import map_coordinates

from .calculus import Field, Integrals, integrals
from .energy import ProblemParams, energy_from_integrals
from .geometry import GeometryError, GridSpec

__all__ = [
    "InstantonSpec",
    "CutoffSpec",
    "H0Pair",
    "HprimePair",
    "GapReport",
    "talenti",
    "talenti_dr",
    "talenti_constant",
    "instanton",
    "radial_quad",
    "instanton_integrals",
    "bubble_integrals",
    "sobolev_level",
    "smoothstep",
    "rho",
    "eta",
    "build_H0_pair",
    "build_Hprime_pair",
    "lambda_R",
    "tau_sup",
    "energy_gap_experiment",
    "fit_power",
]


def talenti_constant(N: int) -> float:
    """``c_N = (N(N-2))^{(N-2)/4}``, the normalisation with -Delta U = U^{p-1}."""
    return (N * (N - 2)) ** ((N - 2) / 4)


def talenti(r, N: int, eps: float = 1.0):
    """``U_eps(r) = eps^{-N/p} c_N / (1 + (r/eps)^2)^{(N-2)/2}``, p = 2N/(N-2)."""
    r = np.asarray(r, dtype=float)
    p = 2 * N / (N - 2)
    return eps ** (-N / p) * talenti_constant(N) / (1 + (r / eps) ** 2) ** ((N - 2) / 2)


def talenti_dr(r, N: int, eps: float = 1.0):
    """Radial derivative of :func:`talenti`."""
    r = np.asarray(r, dtype=float)
    p = 2 * N / (N - 2)
    s = r / eps
    return -(N - 2) * eps ** (-N / p - 1) * talenti_constant(N) * s / (1 + s * s) ** (N / 2)


@dataclass(frozen=True)
class InstantonSpec:
    N: int = 3
    eps: float = 1.0
    center: tuple = ()

    def __post_init__(self):
        if self.N < 3:
            raise ValueError("the bubble needs N >= 3")
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")

    @property
    def c_N(self) -> float:
        return talenti_constant(self.N)

    def center_array(self) -> np.ndarray:
        c = np.zeros(self.N)
        if len(self.center):
            c[: len(self.center)] = self.center
        return c


def instanton(spec: InstantonSpec, grid: GridSpec) -> Field:
    """Sample U_eps centred at ``spec.center`` on the masked points of ``grid``."""
    if grid.N != spec.N:
        raise ValueError(f"grid has N = {grid.N}, spec has N = {spec.N}")
    if grid.h > spec.eps / 4:
        warnings.warn(f"h = {grid.h:g} does not resolve eps = {spec.eps:g} (want h <= eps/4)",
                      RuntimeWarning, stacklevel=2)
    r = np.linalg.norm(grid.points - spec.center_array(), axis=-1)
    return Field(grid, talenti(r, spec.N, spec.eps))


# -- radial quadrature -----------------------------------------------------------

def _sphere_area(N: int) -> float:
    return 2 * math.pi ** (N / 2) / math.gamma(N / 2)


def radial_quad(fun: Callable[[np.ndarray], np.ndarray], N: int, breaks: Sequence[float],
                order: int = 24, tail: bool = False) -> float:
    """``int_{R^N} f(|x|) dx`` restricted to ``[breaks[0], breaks[-1]]`` in r.

    Gauss-Legendre with ``order`` nodes per panel.  With ``tail`` the range
    ``[breaks[-1], inf)`` is added through ``r = b/s``; ``f`` must then decay
    fast enough for ``f(r) r^{N+1}`` to stay bounded.
    """
    x, w = np.polynomial.legendre.leggauss(order)
    b = np.asarray(breaks, dtype=float)
    if np.any(np.diff(b) <= 0):
        raise ValueError("breaks must increase")
    a0, a1 = b[:-1, None], b[1:, None]
    r = 0.5 * (a1 - a0) * x + 0.5 * (a1 + a0)
    wr = 0.5 * (a1 - a0) * w
    total = float(np.sum(wr * fun(r) * r ** (N - 1)))
    if tail:
        R = b[-1]
        # s in (0, 1] split into geometric panels towards s = 0
        sb = np.concatenate(([0.0], np.geomspace(1e-4, 1.0, 9)))
        s0, s1 = sb[:-1, None], sb[1:, None]
        s = 0.5 * (s1 - s0) * x + 0.5 * (s1 + s0)
        ws = 0.5 * (s1 - s0) * w
        rr = R / s
        total += float(np.sum(ws * fun(rr) * rr ** (N - 1) * R / s**2))
    return _sphere_area(N) * total


def _panels(eps: float, r_end: float, per_decade: int = 4) -> np.ndarray:
    """Geometric breakpoints resolving the bubble core of size eps up to r_end."""
    lo = min(eps * 1e-3, r_end * 1e-3)
    n = max(int(math.ceil(per_decade * math.log10(r_end / lo))), 1)
    return np.concatenate(([0.0], np.geomspace(lo, r_end, n + 1)))


def instanton_integrals(N: int = 3, eps: float = 1.0, order: int = 24,
                        per_decade: int = 4) -> dict:
    """``int |grad U_eps|^2`` and ``int U_eps^p`` over R^N by radial quadrature."""
    p = 2 * N / (N - 2)
    br = _panels(eps, 100 * eps, per_decade)
    grad2 = radial_quad(lambda r: talenti_dr(r, N, eps) ** 2, N, br, order, tail=True)
    lp = radial_quad(lambda r: talenti(r, N, eps) ** p, N, br, order, tail=True)
    return {"grad2": grad2, "lp": lp}


def sobolev_level(N: int = 3) -> float:
    """``S^{N/2}`` obtained as ``int |grad U|^2`` of the normalised bubble."""
    return instanton_integrals(N, 1.0, order=32, per_decade=6)["grad2"]


# -- cutoffs ------------------------------------------------------------------------

def smoothstep(x):
    """Quintic ``6x^5 - 15x^4 + 10x^3`` clamped to [0, 1] (C^2 at both ends)."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return x**3 * (x * (6 * x - 15) + 10)


def smoothstep_d(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0) & (x < 1)
    return np.where(inside, 30 * x**2 * (x - 1) ** 2, 0.0)


def rho(s, A: float = 2.0):
    """1 for |s| <= 1, 0 for |s| >= A."""
    return 1.0 - smoothstep((np.abs(s) - 1.0) / (A - 1.0))


def rho_d(s, A: float = 2.0):
    return -smoothstep_d((np.abs(s) - 1.0) / (A - 1.0)) / (A - 1.0)


def eta(s):
    """0 for |s| <= 2, 1 for |s| >= 3."""
    return smoothstep(np.abs(s) - 2.0)


@dataclass(frozen=True)
class CutoffSpec:
    kind: str = "rho"
    scale: float = 1.0
    A: float = 2.0

    def __post_init__(self):
        if self.kind not in ("rho", "eta"):
            raise ValueError(f"unknown cutoff kind {self.kind!r}")
        if not (self.scale > 0 and self.A > 1):
            raise ValueError("need scale > 0 and A > 1")

    def __call__(self, r):
        s = np.asarray(r, dtype=float) / self.scale
        return rho(s, self.A) if self.kind == "rho" else eta(s)


# -- bubble next to a ground state -----------------------------------------------------

def bubble_integrals(N: int, eps: float, p: float, q: float, order: int = 24) -> Integrals:
    """Integrals of ``u_eps = U_eps rho(|x|/sqrt(eps))`` by radial quadrature."""
    se = math.sqrt(eps)
    br = np.union1d(_panels(eps, se), np.linspace(se, 2 * se, 5))

    def u(r):
        return talenti(r, N, eps) * rho(r / se)

    def du(r):
        return talenti_dr(r, N, eps) * rho(r / se) + talenti(r, N, eps) * rho_d(r / se) / se

    return Integrals(
        grad2=radial_quad(lambda r: du(r) ** 2, N, br, order),
        lp=radial_quad(lambda r: u(r) ** p, N, br, order),
        lq=radial_quad(lambda r: u(r) ** q, N, br, order),
        l2=radial_quad(lambda r: u(r) ** 2, N, br, order),
    )


@dataclass(eq=False)
class H0Pair:
    u_eps: Field
    v_eps: Field
    eps: float
    center: np.ndarray
    u_integrals: Integrals


def _check_disjoint(a: np.ndarray, b: np.ndarray):
    overlap = np.count_nonzero(a * b)
    if overlap:
        raise GeometryError(f"supports overlap at {overlap} grid points")


def build_H0_pair(v: Field, eps: float, center=None, params: Optional[ProblemParams] = None) -> H0Pair:
    """``u_eps = U_eps rho_eps`` and ``v_eps = v eta_eps`` around ``center``.

    The cutoffs live on the scale sqrt(eps), so the two supports are separated
    by the shell ``2 sqrt(eps) <= |x - center| <= ...`` where both vanish.
    """
    g = v.grid
    N = g.N
    c = np.zeros(N) if center is None else np.asarray(center, dtype=float)
    se = math.sqrt(eps)
    # the bubble's support ball must sit inside the domain
    if g.domain is not None:
        if not bool(g.domain.inset(c[None, : g.ell], c[None, g.ell:], 2 * se)[0]):
            raise GeometryError(f"ball of radius {2 * se:g} around {c} leaves the domain")
    r = np.linalg.norm(g.points - c, axis=-1)
    k = np.ceil(2 * se / g.h)
    box = np.stack(np.meshgrid(*[np.arange(-k, k + 1)] * N, indexing="ij"), -1).reshape(-1, N)
    near = box * g.h + np.round(c / g.h) * g.h
    inside_ball = np.linalg.norm(near - c, axis=-1) < 2 * se
    n_ball = int(np.count_nonzero(inside_ball))
    if n_ball > int(np.count_nonzero(r < 2 * se)):
        raise GeometryError("lattice points of the bubble support fall outside the mask")
    u = talenti(r, N, eps) * rho(r / se)
    ve = v.values * eta(r / se)
    _check_disjoint(u, ve)
    p = params.p if params else 2 * N / (N - 2)
    q = params.q if params else p - 1
    return H0Pair(Field(g, u), Field(g, ve), eps, c, bubble_integrals(N, eps, p, q))


# -- ground state next to a dilated far copy -------------------------------------------

def lambda_R(R: float, M: float, A: float, m: float, a0: float) -> float:
    return 1.0 + a0 / ((M + A) ** m * R**m)


@dataclass(eq=False)
class HprimePair:
    v_R: Field
    psi_R: Field
    lam: float
    R: float
    M: float
    A: float


def build_Hprime_pair(v: Field, psi: Field, R: float, M: float, A: float, m: float,
                      a0: float) -> HprimePair:
    """``v_R = v rho_R`` and ``psi_R = lam^{-N/p} psi((t - MRe)/lam, y/lam) eta_R``.

    ``v`` lives on the perturbed domain, ``psi`` on the straight cylinder over
    the same base and lattice.  ``psi`` is evaluated off-lattice by cubic
    splines and set to zero where ``y/lam`` is not an interior point of F.
    """
    g, gs = v.grid, psi.grid
    if not math.isclose(g.h, gs.h) or g.N != gs.N or g.ell != gs.ell:
        raise ValueError("v and psi must share N, l and h")
    if g.N < 3:
        raise ValueError("the critical dilation needs N >= 3")
    if not (M > 2 * A and A > 1):
        raise ValueError("need A > 1 and M > 2A")
    if g.domain is not None and g.domain.family == "bump":
        a1 = g.domain.lower_a
        if not a1 / a0 < ((M - A) / (M + A)) ** m:
            raise ValueError("M too small: need a1/a0 < ((M-A)/(M+A))^m")
    if (M + A) * R >= min(g.T, gs.T + M * R):
        raise GeometryError(f"support up to |t| = {(M + A) * R:g} leaves the box T = {g.T:g}")
    if A * R >= gs.T:
        raise GeometryError("cutoff radius A R exceeds the cylinder box")
    N, ell = g.N, g.ell
    p = 2 * N / (N - 2)
    lam = lambda_R(R, M, A, m, a0)
    e = np.zeros(ell)
    e[0] = 1.0
    t, y = g.t, g.y
    v_R = v.values * rho(np.linalg.norm(t, axis=-1) / R, A)
    cut = rho(np.linalg.norm(t / R - M * e, axis=-1), A)
    src_t = (t - M * R * e) / lam
    src_y = y / lam
    live = cut > 0
    F = gs.domain.base if gs.domain is not None else (g.domain.base if g.domain else None)
    if F is not None:
        live &= F.inset(src_y, gs.h / 2)
    src = np.concatenate([src_t, src_y], axis=1)[live]
    coords = np.stack([(src[:, j] - gs.axes[j][0]) / gs.h for j in range(N)])
    vals = np.zeros(g.n)
    vals[live] = map_coordinates(psi.full(), coords, order=3, mode="constant", cval=0.0)
    psi_R = lam ** (-N / p) * vals * cut
    if g.domain is not None:
        # forward image of psi's support under the cut must stay on the mask
        nz = psi.values != 0
        ft = lam * gs.t[nz] + M * R * e
        fy = lam * gs.y[nz]
        keep = rho(np.linalg.norm(ft / R - M * e, axis=-1), A) > 0
        outside = ~g.domain.inset(ft[keep], fy[keep], g.h / 2)
        if outside.any():
            raise GeometryError(f"{int(outside.sum())} support points of psi_R leave the domain")
    _check_disjoint(v_R, psi_R)
    return HprimePair(Field(g, v_R), Field(g, psi_R), lam, R, M, A)


# -- tau-sup and the gap experiments ------------------------------------------------------

def tau_sup(ia: Integrals, ib: Integrals, params: ProblemParams, cross: float = 0.0,
            n: int = 41, refine: int = 4, lo: float = 0.5, hi: float = 2.0):
    """``sup I(t1 a - t2 b)`` over ``[lo, hi]^2`` for disjointly supported a, b.

    ``cross`` is ``<-Delta_h a, b>`` (nonzero only when the supports touch on
    the stencil).  A coarse n x n sweep is refined around the best node.
    """
    p, q, mu, lam = params.p, params.q, params.mu, params.lam

    def J(t1, t2):
        g2 = t1**2 * ia.grad2 + t2**2 * ib.grad2 - 2 * t1 * t2 * cross
        l2 = t1**2 * ia.l2 + t2**2 * ib.l2
        lp = t1**p * ia.lp + t2**p * ib.lp
        lq = t1**q * ia.lq + t2**q * ib.lq
        return 0.5 * (g2 - lam * l2) - lp / p - mu * lq / q

    a1, b1, a2, b2 = lo, hi, lo, hi
    best = (-math.inf, lo, lo)
    for _ in range(refine + 1):
        s1 = np.linspace(a1, b1, n)
        s2 = np.linspace(a2, b2, n)
        T1, T2 = np.meshgrid(s1, s2, indexing="ij")
        vals = J(T1, T2)
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        best = (float(vals[i, j]), float(s1[i]), float(s2[j]))
        d1, d2 = s1[1] - s1[0], s2[1] - s2[0]
        a1, b1 = max(lo, s1[i] - d1), min(hi, s1[i] + d1)
        a2, b2 = max(lo, s2[j] - d2), min(hi, s2[j] + d2)
    return best


def fit_power(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares ``y ~ c x^a`` in log-log; returns ``(a, c)``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    a, b = np.polyfit(lx, ly, 1)
    return float(a), float(math.exp(b))


@dataclass
class GapReport:
    family: str
    bound: float
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)

    @property
    def dips(self) -> bool:
        return any(r["below"] for r in self.rows)

    def to_dict(self) -> dict:
        return {"family": self.family, "bound": self.bound, "rows": self.rows,
                "exponent_fits": self.fits, "dips": self.dips}


def _gap_H0(v: Field, params: ProblemParams, eps_list, c0: float, center, S: float) -> GapReport:
    N, p, q, mu = params.N, params.p, params.q, params.mu
    bound = c0 + S / N
    rep = GapReport("pinched", bound)
    g = v.grid
    if center is None:
        # a cell centre: small cutoff balls then miss every lattice point
        center = np.full(N, 0.5 * g.h)
    cost, gain = [], []
    for eps in sorted(eps_list):
        pair = build_H0_pair(v, eps, center, params)
        iu = pair.u_integrals
        iv = integrals(pair.v_eps, p, q)
        I_u = energy_from_integrals(iu, params)
        I_v = energy_from_integrals(iv, params)
        sup, a, b = tau_sup(iu, iv, params)
        # I_sum - bound = bubble cutoff cost + grid cost of v - q-gain
        g_eps = mu * iu.lq / q
        c_eps = I_u + g_eps - S / N
        cost.append(c_eps)
        gain.append(g_eps)
        cut = int(np.count_nonzero(pair.v_eps.values != v.values))
        rep.rows.append({"eps": eps, "I_sum": I_u + I_v, "bound": bound, "sup_tau": sup,
                         "tau": [a, b], "cutoff_cost": c_eps, "q_gain": g_eps,
                         "v_cost": I_v - c0, "v_points_cut": cut, "below": sup < bound})
    eps = [r["eps"] for r in rep.rows]
    ok = [i for i, c in enumerate(cost) if c > 0]
    if len(ok) >= 2:
        a1, c1 = fit_power([eps[i] for i in ok], [cost[i] for i in ok])
    else:
        a1, c1 = float("nan"), float("nan")
    a2, c2 = fit_power(eps, gain)
    fits = {"cost_exponent": a1, "cost_constant": c1, "gain_exponent": a2, "gain_constant": c2,
            "expected_cost_exponent": (N - 2) / 2, "expected_gain_exponent": N * (1 - q / p)}
    if math.isfinite(a1) and abs(a1 - a2) > 1e-9 and c1 > 0:
        x = math.log(c2 / c1) / (a1 - a2)
        fits["crossover_eps"] = math.exp(x) if x < 700 else math.inf
    fits["regime"] = ("gain wins as eps -> 0" if q > p - 1 else
                      "borderline: sign set by the constants" if q == p - 1 else
                      "cost wins as eps -> 0")
    rep.fits = fits
    return rep


def _gap_Hprime(v: Field, psi: Field, params: ProblemParams, R_list, c0: float, c0_inf: float,
                M: float, A: float, m: float, a0: float) -> GapReport:
    p, q = params.p, params.q
    rep = GapReport("bump", c0 + c0_inf)
    ipsi = integrals(psi, p, q)
    for R in sorted(R_list):
        pair = build_Hprime_pair(v, psi, R, M, A, m, a0)
        ia = integrals(pair.v_R, p, q)
        ib = integrals(pair.psi_R, p, q)
        cross = float(v.grid.dV * np.dot(v.grid.laplacian @ pair.v_R.values, pair.psi_R.values))
        sup, a, b = tau_sup(ia, ib, params, cross)
        I_psi_R = energy_from_integrals(ib, params)
        predicted = params.mu / q * N_gap(params) * (pair.lam - 1) * ipsi.lq
        rep.rows.append({"R": R, "lambda_R": pair.lam, "sup_tau": sup, "tau": [a, b],
                         "bound": rep.bound, "I_psi_R": I_psi_R,
                         "I_psi": energy_from_integrals(ipsi, params),
                         "predicted_psi_gain": predicted, "below": sup < rep.bound})
    return rep


def N_gap(params: ProblemParams) -> float:
    """``N(1 - q/p)``, the exponent of the q-integral under critical dilation."""
    return params.N * (1 - params.q / params.p)


def energy_gap_experiment(family: str, params: ProblemParams, values: Sequence[float], *,
                          v: Field, c0: float, psi: Optional[Field] = None,
                          c0_inf: Optional[float] = None, center=None,
                          S: Optional[float] = None, M: float = 5.0, A: float = 2.0,
                          m: float = 2.0, a0: float = 1.0) -> GapReport:
    """Evaluate the disjoint-pair energies against ``c0 + c0_inf``.

    ``family = 'pinched'``: ``values`` are eps and ``c0_inf = S^{N/2}/N``.
    ``family = 'bump'``: ``values`` are R, ``psi`` the straight-cylinder ground state.
    """
    if family == "pinched":
        if S is None:
            S = sobolev_level(params.N)
        return _gap_H0(v, params, values, c0, center, S)
    if family == "bump":
        if psi is None or c0_inf is None:
            raise ValueError("the bump experiment needs psi and c0_inf")
        return _gap_Hprime(v, psi, params, values, c0, c0_inf, M, A, m, a0)
    raise ValueError(f"unknown family {family!r}")
