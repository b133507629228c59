"""Principal Dirichlet eigenpair of a cross-section by inverse iteration."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .calculus import ConvergenceError, Field, cg
from .geometry import CrossSection, GridSpec, discretize_cross_section

__all__ = ["Eigenpair", "principal_eigenpair", "eigen_convergence_report", "discrete_interval_eigenvalue"]


@dataclass(eq=False)
class Eigenpair:
    """``(lambda1, phi)`` with ``phi > 0`` and ``max phi = 1``."""

    lambda1: float
    phi: Field
    iterations: int = 0
    residual: float = 0.0

    @property
    def grid(self) -> GridSpec:
        return self.phi.grid

    def on_points(self, y: np.ndarray) -> np.ndarray:
        """Evaluate phi at lattice points ``y`` (shape (n, N-l)); zero off the mask."""
        g = self.grid
        k = np.rint(np.asarray(y) / g.h).astype(np.int64)
        origin = np.array([round(ax[0] / g.h) for ax in g.axes], dtype=np.int64)
        idx = k - origin
        shape = np.array(g.shape)
        ok = np.all((idx >= 0) & (idx < shape), axis=1)
        out = np.zeros(len(k))
        full = self.phi.full()
        out[ok] = full[tuple(idx[ok].T)]
        return out

    def on_grid(self, grid: GridSpec) -> np.ndarray:
        """phi(y) at every masked point (t, y) of a domain grid on the same lattice."""
        if not math.isclose(grid.h, self.grid.h):
            raise ValueError("eigenfunction and domain grids use different spacings")
        return self.on_points(grid.y)


def principal_eigenpair(F: CrossSection | GridSpec, h: Optional[float] = None,
                        tol: float = 1e-9, maxiter: int = 1000,
                        cg_tol: float = 1e-12) -> Eigenpair:
    """Inverse power iteration ``-Delta_h w = phi_k`` from a positive start.

    Converged when ``|-Delta_h phi - lambda phi| <= tol * lambda |phi|``.
    """
    grid = F if isinstance(F, GridSpec) else discretize_cross_section(F, h)
    A = grid.laplacian
    x = np.ones(grid.n)
    x /= np.linalg.norm(x)
    lam = float(x @ (A @ x))
    res = math.inf
    for k in range(1, maxiter + 1):
        # the next solution is close to x / lambda
        w, _, _ = cg(A, x, x0=x / lam, tol=cg_tol)
        x = w / np.linalg.norm(w)
        Ax = A @ x
        lam = float(x @ Ax)
        res = float(np.linalg.norm(Ax - lam * x)) / lam
        if res <= tol:
            break
    else:
        raise ConvergenceError(f"inverse iteration stalled at residual {res:.3e}", res, maxiter)
    if x.sum() < 0:
        x = -x
    phi = x / np.max(x)
    return Eigenpair(lambda1=lam, phi=Field(grid, phi), iterations=k, residual=res)


def discrete_interval_eigenvalue(h: float, length: float = 1.0) -> float:
    """Closed form ``(4/h^2) sin^2(pi h / (2 L))`` of the 3-point stencil."""
    return 4.0 / h**2 * math.sin(math.pi * h / (2 * length)) ** 2


def eigen_convergence_report(F: CrossSection, hs: Sequence[float],
                             exact: Optional[float] = None, tol: float = 1e-10) -> list[dict]:
    """lambda1(h) for a decreasing list of spacings with observed orders.

    With ``exact`` the order is ``log2(err_i / err_{i+1})`` for successive h;
    otherwise consecutive differences are used (needs three levels).
    """
    hs = list(hs)
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("spacings must be decreasing")
    lams = [principal_eigenpair(F, h, tol=tol).lambda1 for h in hs]
    rows = [{"h": h, "lambda1": lam} for h, lam in zip(hs, lams)]
    if exact is not None:
        for i, row in enumerate(rows):
            row["error"] = abs(row["lambda1"] - exact)
            if i:
                prev = rows[i - 1]
                ratio = prev["error"] / row["error"] if row["error"] > 0 else math.inf
                row["order"] = math.log(ratio) / math.log(prev["h"] / row["h"])
    else:
        for i in range(2, len(rows)):
            d1 = abs(lams[i - 1] - lams[i - 2])
            d2 = abs(lams[i] - lams[i - 1])
            rows[i]["order"] = math.log(d1 / d2) / math.log(hs[i - 1] / hs[i]) if d2 > 0 else math.inf
    return rows
