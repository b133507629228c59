"""The functional

    I(u) = 1/2 |grad u|^2 - lam/2 |u|_2^2 - 1/p |u|_p^p - mu/q |u|_q^q

on a grid, its gradient, the Nehari rescaling and related diagnostics.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .calculus import Field, Integrals, fastpow, integrals, load_vector

__all__ = [
    "ProblemParams",
    "EnergyReport",
    "energy",
    "energy_from_integrals",
    "residual",
    "nonlinearity",
    "load",
    "nehari_scale",
    "nehari_scale_from_integrals",
    "nodal_split",
    "tail_masses",
    "critical_exponent",
]


def critical_exponent(N: int) -> float:
    if N < 3:
        raise ValueError(f"the critical exponent needs N >= 3, got N = {N}")
    return 2.0 * N / (N - 2)


@dataclass(frozen=True)
class ProblemParams:
    """Exponents and coefficients of ``-Delta u - lam u = |u|^{p-2}u + mu |u|^{q-2}u``.

    ``p`` defaults to the critical exponent 2N/(N-2).
    """

    N: int = 3
    ell: int = 1
    q: float = 4.0
    mu: float = 1.0
    p: Optional[float] = None
    lam: float = 0.0

    def __post_init__(self):
        if self.p is None:
            object.__setattr__(self, "p", critical_exponent(self.N))
        if not 2 < self.q < self.p:
            raise ValueError(f"require 2 < q < p, got q = {self.q}, p = {self.p}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 1 <= self.ell < self.N:
            raise ValueError(f"need 1 <= ell < N, got ell = {self.ell}, N = {self.N}")

    def replace(self, **kw) -> "ProblemParams":
        d = asdict(self)
        d.update(kw)
        return ProblemParams(**d)


@dataclass
class EnergyReport:
    integrals: Integrals
    I: float
    nehari_residual: float
    nodal: Optional[dict] = None

    def to_dict(self) -> dict:
        out = dict(self.integrals._asdict())
        out["I"] = self.I
        out["nehari_residual"] = self.nehari_residual
        if self.nodal is not None:
            out["nodal"] = dict(self.nodal)
        return out


def energy_from_integrals(ints: Integrals, params: ProblemParams) -> float:
    p, q, mu, lam = params.p, params.q, params.mu, params.lam
    return 0.5 * (ints.grad2 - lam * ints.l2) - ints.lp / p - mu * ints.lq / q


def _nehari_residual(ints: Integrals, params: ProblemParams) -> float:
    return ints.grad2 - params.lam * ints.l2 - ints.lp - params.mu * ints.lq


def nonlinearity(values: np.ndarray, params: ProblemParams) -> np.ndarray:
    """``|u|^{p-2}u + mu |u|^{q-2}u + lam u`` evaluated pointwise."""
    a = np.abs(values)
    out = fastpow(a, params.p - 2)
    out += params.mu * fastpow(a, params.q - 2)
    if params.lam:
        out += params.lam
    return values * out


def load(grid, values: np.ndarray, params: ProblemParams) -> np.ndarray:
    """Node-wise Galerkin load of the nonlinearity, scaled so ``h^N <load, v> = int f(u) v``."""
    return load_vector(grid, values, lambda x: nonlinearity(x, params))


def energy(u: Field, params: ProblemParams, nodal: Optional[bool] = None) -> EnergyReport:
    """Integrals, ``I(u)`` and ``I'(u)u``; the nodal parts when u changes sign."""
    ints = integrals(u, params.p, params.q)
    rep = EnergyReport(ints, energy_from_integrals(ints, params), _nehari_residual(ints, params))
    if nodal is None:
        nodal = bool(np.any(u.values > 0) and np.any(u.values < 0))
    if nodal:
        up, um = nodal_split(u)
        ip = integrals(up, params.p, params.q)
        im = integrals(um, params.p, params.q)
        Ip = energy_from_integrals(ip, params)
        Im = energy_from_integrals(im, params)
        rep.nodal = {
            "I_plus": Ip,
            "I_minus": Im,
            "residual_plus": _nehari_residual(ip, params),
            "residual_minus": _nehari_residual(im, params),
            "split_level": Ip + Im,
            # nonzero on the grid: cells cut by the nodal set couple u+ and u-
            "interface_defect": rep.I - Ip - Im,
        }
    return rep


def residual(u: Field, params: ProblemParams) -> Field:
    """``-Delta_h u - lam u - |u|^{p-2}u - mu |u|^{q-2}u`` (the L^2 gradient of I).

    ``h^N <residual(u), v>`` is exactly the derivative of I at u in direction v.
    """
    return Field(u.grid, u.grid.laplacian @ u.values - load(u.grid, u.values, params))


def nehari_scale_from_integrals(grad2: float, lp: float, lq: float, params: ProblemParams,
                                l2: float = 0.0, rtol: float = 1e-12) -> float:
    """Root ``t > 0`` of ``t^{p-2} lp + mu t^{q-2} lq = grad2 - lam l2``.

    The left side increases strictly from 0 to infinity, so the root is
    bracketed by doubling and then bisected.
    """
    a = grad2 - params.lam * l2
    if not (lp + lq > 0):
        raise ValueError("nehari_scale needs a nonzero field")
    if not a > 0:
        raise ValueError("quadratic part is not positive; is lam below the first eigenvalue?")
    p, q, mu = params.p, params.q, params.mu

    def g(t):
        return t ** (p - 2) * lp + mu * t ** (q - 2) * lq - a

    # g(0) = -a < 0
    lo, hi = 0.0, 1.0
    while g(hi) < 0:
        lo, hi = hi, 2 * hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def nehari_scale(u: Field, params: ProblemParams) -> float:
    """``t*`` with ``I'(t* u)(t* u) = 0``."""
    ints = integrals(u, params.p, params.q)
    if ints.lp + ints.lq == 0:
        raise ValueError("nehari_scale needs a nonzero field")
    return nehari_scale_from_integrals(ints.grad2, ints.lp, ints.lq, params, ints.l2)


def nodal_split(u: Field) -> tuple[Field, Field]:
    """``(u+, u-)`` with ``u = u+ - u-``, both nonnegative."""
    return (Field(u.grid, np.maximum(u.values, 0.0)),
            Field(u.grid, np.maximum(-u.values, 0.0)))


def _edge_densities(u: Field):
    """Per-edge |grad u|^2 contributions (summing to grad2) and edge midpoints."""
    g = u.grid
    full = np.pad(u.full(), 1)
    axes = [np.concatenate(([ax[0] - g.h], ax, [ax[-1] + g.h])) for ax in g.axes]
    dens, mids = [], []
    for axis in range(g.N):
        d = np.diff(full, axis=axis) ** 2 / g.h**2
        sel = d > 0
        idx = np.nonzero(sel)
        coords = []
        for j, ax in enumerate(axes):
            c = ax[idx[j]]
            if j == axis:
                c = c + g.h / 2
            coords.append(c)
        dens.append(d[sel])
        mids.append(np.stack(coords, axis=-1))
    return np.concatenate(dens) * g.dV, np.concatenate(mids)


def tail_masses(u: Field, R: float, p: float, q: float) -> tuple[float, float, float]:
    """Fractions of ``|grad u|^2``, ``|u|^p``, ``|u|^q`` carried by ``|x| > R``."""
    T = u.grid.T
    if not 0 < R < T:
        raise ValueError(f"need 0 < R < T = {T}, got R = {R}")
    ge, gm = _edge_densities(u)
    far_e = np.linalg.norm(gm, axis=-1) > R
    far = u.grid.radius > R
    a = np.abs(u.values)
    out = []
    for total, part in ((ge.sum(), ge[far_e].sum()),
                        (np.sum(a**p), np.sum(a[far] ** p)),
                        (np.sum(a**q), np.sum(a[far] ** q))):
        out.append(float(part / total) if total > 0 else 0.0)
    return tuple(out)
