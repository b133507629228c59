"""Exponential decay along the cylinder axis: comparison envelopes and fits.

The envelope is ``Psi(t) = alpha exp(-sqrt(theta))`` with
``theta = 1 + c |t|^2`` and ``c = lambda1 - lambda`` (``lambda1 - eta`` for the
Hopf variant).  The refined variant carries the extra factor ``|t|^{-(l-1)/2}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .calculus import Field
from .spectral import Eigenpair

__all__ = [
    "VARIANTS", "DecayFitError", "EnvelopeSpec", "comparison_Psi", "eigencomputation_rhs",
    "discrete_lhs", "verify_eigencomputation", "axial_profile", "DecayFit", "fit_decay_rate",
    "fit_gradient_decay", "HopfResult", "hopf_check",
]

VARIANTS = ("plain", "refined", "hopf")


class DecayFitError(ValueError):
    """The fitting window holds values too close to zero to fit."""


@dataclass(frozen=True)
class EnvelopeSpec:
    lambda1: float
    lam: float = 0.0
    alpha: float = 1.0
    ell: int = 1
    variant: str = "plain"
    eta: Optional[float] = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.lambda1 - self.lam > 0:
            raise ValueError("need lambda < lambda1")
        if not self.alpha > 0:
            raise ValueError("need alpha > 0")
        if self.ell < 1:
            raise ValueError("need ell >= 1")
        if self.variant == "hopf":
            if self.eta is None:
                raise ValueError("hopf variant needs eta")
            if not self.eta < self.lam:
                raise ValueError("hopf variant needs eta < lambda")

    @property
    def shift(self) -> float:
        return self.eta if self.variant == "hopf" else self.lam

    @property
    def c(self) -> float:
        """Squared rate ``lambda1 - shift``."""
        return self.lambda1 - self.shift

    @property
    def rate(self) -> float:
        return math.sqrt(self.c)

    @property
    def power(self) -> float:
        """Exponent k of the polynomial factor ``|t|^{-k}``."""
        return (self.ell - 1) / 2 if self.variant == "refined" else 0.0


def _tabs(t) -> np.ndarray:
    """|t| for scalars, arrays of |t|, or point arrays with last axis ell."""
    t = np.asarray(t, dtype=float)
    return np.abs(t)


def comparison_Psi(spec: EnvelopeSpec, t, t_min: float = 0.0) -> np.ndarray:
    """``Psi(|t|)``; the refined factor uses ``max(|t|, t_min)`` (infinite at 0 for l > 1)."""
    r = _tabs(t)
    out = spec.alpha * np.exp(-np.sqrt(1 + spec.c * r * r))
    k = spec.power
    if k:
        with np.errstate(divide="ignore"):
            out = out * np.maximum(r, t_min) ** (-k)
    return out


def eigencomputation_rhs(spec: EnvelopeSpec, t) -> np.ndarray:
    """Closed form of ``-Delta Psi + c Psi`` on ``R^l`` at radius ``|t|``."""
    r = _tabs(t)
    c = spec.c
    theta = 1 + c * r * r
    psi = comparison_Psi(spec, r)
    if spec.variant == "refined":
        l = spec.ell
        with np.errstate(divide="ignore"):
            extra = (l - 1) / 2 * (l - 3) / 2 / (r * r)
        return psi * (c / theta + c * theta**-1.5 + extra)
    return c * psi * ((spec.ell - 1) * theta**-0.5 + 1 / theta + theta**-1.5)


def discrete_lhs(spec: EnvelopeSpec, t, h: float) -> np.ndarray:
    """``-Delta_h Psi + c Psi`` by central differences in ``R^l`` at ``t = (|t|, 0, ..)``."""
    r = np.atleast_1d(_tabs(t))
    l = spec.ell
    x = np.zeros((r.size, l))
    x[:, 0] = r
    f = lambda pts: comparison_Psi(spec, np.linalg.norm(pts, axis=-1))
    centre = f(x)
    lap = np.zeros(r.size)
    for i in range(l):
        e = np.zeros(l)
        e[i] = h
        lap += f(x + e) - 2 * centre + f(x - e)
    out = -lap / h**2 + spec.c * centre
    return out if np.ndim(t) else out[0]


def verify_eigencomputation(spec: EnvelopeSpec, t_samples: Sequence[float], h: float) -> float:
    """Worst relative gap between the stencil and the closed-form right side."""
    t = np.atleast_1d(np.asarray(t_samples, dtype=float))
    exact = eigencomputation_rhs(spec, t)
    approx = discrete_lhs(spec, t, h)
    return float(np.max(np.abs(approx - exact) / np.abs(exact)))


# -- fits on computed fields ------------------------------------------------------------

def axial_profile(u: Field, values: Optional[np.ndarray] = None):
    """``(|t|, max_y |u|)`` for every distinct t-lattice point of the grid."""
    g = u.grid
    vals = np.abs(u.values if values is None else values)
    key = np.rint(g.t / g.h).astype(np.int64)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    m = np.zeros(len(uniq))
    np.maximum.at(m, inv, vals)
    return np.linalg.norm(uniq * g.h, axis=-1), m


@dataclass
class DecayFit:
    rate: float
    prefactor_exponent: float
    r2: float
    amplitude: float
    samples: int

    def to_dict(self) -> dict:
        return dict(rate=self.rate, prefactor_exponent=self.prefactor_exponent, r2=self.r2,
                    amplitude=self.amplitude, samples=self.samples)


def _fit(r, m, with_prefactor, rate):
    logm = np.log(m)

    def model(x):
        c = rate**2 if rate is not None else x[1] ** 2
        k = x[-1] if with_prefactor else 0.0
        return x[0] - np.sqrt(1 + c * r * r) - k * np.log(r)

    # start from the straight-line slope of log m against r
    slope = -np.polyfit(r, logm, 1)[0]
    x0 = [logm[0] + slope * r[0]]
    if rate is None:
        x0.append(max(slope, 1e-3))
    if with_prefactor:
        x0.append(0.0)
    sol = least_squares(lambda x: model(x) - logm, x0, xtol=1e-14, ftol=1e-14, gtol=1e-14)
    x = sol.x
    res = model(x) - logm
    ss = float(np.sum((logm - logm.mean()) ** 2))
    r2 = 1 - float(res @ res) / ss if ss > 0 else 1.0
    fitted = rate if rate is not None else abs(x[1])
    k = float(x[-1]) if with_prefactor else 0.0
    return DecayFit(float(fitted), -k, r2, float(math.exp(x[0])), int(r.size))


def fit_decay_rate(u: Field, window: Sequence[float], with_prefactor: bool = False,
                   rate: Optional[float] = None, values: Optional[np.ndarray] = None,
                   floor: float = 1e-13) -> DecayFit:
    """Least-squares fit of ``log max_y |u|`` by ``a - sqrt(1 + c|t|^2) - k log|t|``.

    Returns the rate ``sqrt(c)`` and the prefactor exponent ``-k``.  Passing
    ``rate`` freezes c and fits only the amplitude and prefactor.
    """
    r1, r2 = window
    if not 0 <= r1 < r2:
        raise ValueError("need 0 <= R1 < R2")
    if r2 > u.grid.T:
        raise ValueError(f"window end {r2} exceeds the truncation T = {u.grid.T}")
    r, m = axial_profile(u, values)
    sel = (r >= r1) & (r <= r2)
    if with_prefactor:
        sel &= r > 0
    if sel.sum() < (3 if with_prefactor else 2) + (rate is None):
        raise ValueError("too few lattice slices in the window")
    top = float(m.max())
    if top == 0 or np.any(m[sel] <= floor * top):
        raise DecayFitError(f"values in [{r1}, {r2}] reach round-off level; use a smaller R2")
    return _fit(r[sel], m[sel], with_prefactor, rate)


def fit_gradient_decay(u: Field, window: Sequence[float], **kw) -> DecayFit:
    """Same fit applied to ``|grad_t u|`` from central differences on the lattice."""
    g = u.grid
    full = u.full()
    grad2 = np.zeros(g.shape)
    for i in range(g.ell):
        grad2 += (np.gradient(full, g.h, axis=i)) ** 2
    return fit_decay_rate(u, window, values=g.gather(np.sqrt(grad2)), **kw)


@dataclass
class HopfResult:
    passed: bool
    beta: float
    contact: tuple
    t_max: float

    def to_dict(self) -> dict:
        return dict(passed=self.passed, beta=self.beta, contact=list(self.contact), t_max=self.t_max)


def hopf_check(u: Field, eta: float, phi: Eigenpair, lam: float = 0.0,
               t_max: Optional[float] = None) -> HopfResult:
    """Largest beta with ``u >= beta phi(y) exp(-sqrt(1 + (lambda1 - eta)|t|^2))``.

    Checked on the masked points with ``|t| <= t_max`` (default 2T/3, away from
    the artificial end caps) where ``phi > 0``.
    """
    if not eta < lam:
        raise ValueError(f"need eta < lambda, got eta = {eta}, lambda = {lam}")
    vals = u.values
    if np.any(vals < 0):
        raise ValueError("hopf_check needs a nonnegative field")
    g = u.grid
    t_max = 2 * g.T / 3 if t_max is None else t_max
    env = EnvelopeSpec(phi.lambda1, lam, 1.0, g.ell, "hopf", eta)
    low = phi.on_grid(g) * comparison_Psi(env, g.tnorm)
    sel = (g.tnorm <= t_max) & (low > 0)
    if not sel.any():
        raise ValueError("no grid points under the envelope")
    ratio = vals[sel] / low[sel]
    i = int(np.argmin(ratio))
    beta = float(ratio[i])
    contact = tuple(float(x) for x in g.points[sel][i])
    return HopfResult(beta > 0, beta, contact, float(t_max))
