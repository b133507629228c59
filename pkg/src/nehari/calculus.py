"""Grid functions, the discrete Laplacian, quadrature and a CG Poisson solver.

Volume integrals come in two flavours, chosen per grid by ``grid.quadrature``:

``"nodal"``
    the midpoint sum ``h^N sum f(u_i)``.
``"p1"``
    the integral of ``f(u_h)`` where ``u_h`` is the piecewise-linear
    interpolant on the Kuhn triangulation of the lattice cubes.  The stencil
    is exactly the P1 stiffness matrix of that triangulation, so the discrete
    functional is the true functional restricted to a subspace of H^1_0.
    Nodal sums overweight single-cell spikes and let lattice-scale bubbles
    undercut every resolved critical point when p = 2N/(N-2).
"""
from __future__ import annotations

import itertools
import math
import weakref
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.special import roots_jacobi

from .geometry import GridSpec

__all__ = [
    "ConvergenceError",
    "Field",
    "Integrals",
    "laplacian",
    "integrals",
    "inner",
    "h1_inner",
    "cg",
    "poisson_solve",
    "simplex_rule",
    "P1Quadrature",
    "quadrature_of",
    "volume_integrals",
    "load_vector",
    "fastpow",
]


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(eq=False)
class Field:
    """Values on the masked points of a grid; zero everywhere else."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n,):
            raise ValueError(f"field has {self.values.shape} values, grid has {self.grid.n} points")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def from_function(cls, grid: GridSpec, f: Callable[[np.ndarray], np.ndarray]) -> "Field":
        """Sample ``f(points)`` with ``points`` of shape (n, N)."""
        return cls(grid, f(grid.points))

    def full(self) -> np.ndarray:
        return self.grid.scatter(self.values)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def with_values(self, values) -> "Field":
        return Field(self.grid, values)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * _vals(other))

    __rmul__ = __mul__
    __radd__ = __add__

    def __abs__(self):
        return Field(self.grid, np.abs(self.values))

    def __len__(self):
        return self.grid.n


def _vals(x):
    return x.values if isinstance(x, Field) else x


class Integrals(NamedTuple):
    grad2: float
    lp: float
    lq: float
    l2: float


def laplacian(u: Field) -> Field:
    """(2N+1)-point ``Delta_h u`` with zero Dirichlet data off the mask."""
    return Field(u.grid, -(u.grid.laplacian @ u.values))


def inner(u: Field, v: Field) -> float:
    return float(u.grid.dV * np.dot(u.values, v.values))


def h1_inner(u: Field, v: Field) -> float:
    """``<-Delta_h u, v>``, the discrete H^1_0 inner product."""
    return float(u.grid.dV * np.dot(u.grid.laplacian @ u.values, v.values))


def integrals(u: Field, p: float, q: float) -> Integrals:
    """|grad u|^2, |u|^p, |u|^q and u^2 integrated over the grid.

    ``grad2`` is the energy form of the stencil, so ``grad2 == <-Delta_h u, u>``
    exactly; the volume terms follow ``u.grid.quadrature``.
    """
    g = u.grid
    grad2 = float(g.dV * np.dot(u.values, g.laplacian @ u.values))
    lp, lq, l2 = volume_integrals(g, u.values, (p, q, 2.0))
    return Integrals(grad2=grad2, lp=lp, lq=lq, l2=l2)


# -- quadrature ---------------------------------------------------------------------

def _symmetric_degree5(N: int) -> tuple[np.ndarray, np.ndarray]:
    """Fully symmetric positive degree-5 rules: 7 points (N=2), 14 points (N=3)."""
    pts, wts = [], []
    if N == 2:
        r = math.sqrt(15.0)
        pts.append([1 / 3] * 3)
        wts.append(9 / 40)
        for a, w in (((6 - r) / 21, (155 - r) / 1200), ((6 + r) / 21, (155 + r) / 1200)):
            for i in range(3):
                lam = [a] * 3
                lam[i] = 1 - 2 * a
                pts.append(lam)
                wts.append(w)
    else:
        for a, w in ((0.09273525031089125, 0.0734930431163619),
                     (0.31088591926330034, 0.11268792571801474)):
            for i in range(4):
                lam = [a] * 4
                lam[i] = 1 - 3 * a
                pts.append(lam)
                wts.append(w)
        b = 0.04550370412565035
        for i, j in itertools.combinations(range(4), 2):
            lam = [0.5 - b] * 4
            lam[i] = lam[j] = b
            pts.append(lam)
            wts.append(0.04254602077708223)
    w = np.array(wts)
    return np.array(pts), w / w.sum()


@lru_cache(maxsize=None)
def simplex_rule(N: int, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive quadrature rule on the unit N-simplex, exact to degree 2k-1.

    Returns ``(bary, w)``: barycentric nodes of shape (points, N+1) and
    weights summing to one.  For k = 3 and N in (2, 3) the symmetric 7- and
    14-point rules are used; otherwise the conical Gauss-Jacobi product with
    k^N points.
    """
    if k == 3 and N in (2, 3):
        return _symmetric_degree5(N)
    nodes, weights = [], []
    for j in range(N):
        # weight (1 - xi)^{N-1-j} on [0, 1]
        x, w = roots_jacobi(k, N - 1 - j, 0)
        nodes.append((x + 1) / 2)
        weights.append(w)
    bary, wts = [], []
    for combo in itertools.product(range(k), repeat=N):
        rest = 1.0
        lam = []
        wt = 1.0
        for j, i in enumerate(combo):
            lam.append(rest * nodes[j][i])
            rest *= 1 - nodes[j][i]
            wt *= weights[j][i]
        lam.append(rest)
        bary.append(lam)
        wts.append(wt)
    w = np.array(wts)
    return np.array(bary), w / w.sum()


class P1Quadrature:
    """Simplex quadrature for the P1 interpolant on the Kuhn triangulation.

    Every lattice cube touching the mask is split into N! simplices
    ``0 -> e_{s1} -> e_{s1}+e_{s2} -> ... -> (1,..,1)``; vertices off the mask
    carry the Dirichlet zero.
    """

    def __init__(self, grid: GridSpec, order: int = 3):
        N, n = grid.N, grid.n
        self.n = n
        idx = np.pad(grid.index_map, 1, constant_values=-1)
        corners = list(itertools.product((0, 1), repeat=N))
        cells = []
        for c in corners:
            sl = tuple(slice(o, o + s - 1) for o, s in zip(c, idx.shape))
            cells.append(idx[sl].ravel())
        cells = np.stack(cells)
        keep = np.any(cells >= 0, axis=0)
        cells = cells[:, keep]
        cells[cells < 0] = n
        self.cells = np.ascontiguousarray(cells)
        cid = {c: i for i, c in enumerate(corners)}
        self.simplices = []
        for perm in itertools.permutations(range(N)):
            v = [0] * N
            verts = [cid[tuple(v)]]
            for a in perm:
                v[a] = 1
                verts.append(cid[tuple(v)])
            self.simplices.append(tuple(verts))
        self.bary, w = simplex_rule(N, order)
        self.w = w * grid.dV / math.factorial(N)

    def _corner_values(self, values: np.ndarray) -> np.ndarray:
        """Vertex values per cell, shape (2^N, cells); all-zero cells are dropped."""
        ext = np.append(values, 0.0)
        C = ext[self.cells]
        live = np.any(C != 0, axis=0)
        return C[:, live], live

    def integrate(self, values: np.ndarray, powers: Sequence[float]) -> list:
        """``int |u_h|^a`` for every ``a`` in ``powers``."""
        C, _ = self._corner_values(values)
        out = np.zeros(len(powers))
        for lo in range(0, C.shape[1], _CHUNK):
            Cc = C[:, lo:lo + _CHUNK]
            for verts in self.simplices:
                a = np.abs(self.bary @ Cc[list(verts)])
                for i, pw in enumerate(powers):
                    out[i] += self.w @ _powsum(a, pw)
        return [float(x) for x in out]

    def load(self, values: np.ndarray, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        """``int f(u_h) phi_i`` for every masked node i."""
        C, live = self._corner_values(values)
        acc = np.zeros(C.shape)
        wcol = self.w[:, None]
        for lo in range(0, C.shape[1], _CHUNK):
            Cc = C[:, lo:lo + _CHUNK]
            Ac = acc[:, lo:lo + _CHUNK]
            for verts in self.simplices:
                Ac[list(verts)] += self.bary.T @ (wcol * f(self.bary @ Cc[list(verts)]))
        out = np.bincount(self.cells[:, live].ravel(), weights=acc.ravel(),
                          minlength=self.n + 1)
        return out[: self.n]


# cells per block; keeps the quadrature temporaries cache resident
_CHUNK = 4096


def fastpow(a: np.ndarray, e: float) -> np.ndarray:
    """``a**e`` for ``a >= 0`` with the trivial exponents short-cut."""
    if e == 2.0:
        return a * a
    if e == 1.0:
        return a
    if e == 0.0:
        return np.ones_like(a)
    return a**e


def _powsum(a: np.ndarray, pw: float) -> np.ndarray:
    """``sum over cells of a^pw`` per quadrature node (rows of a)."""
    return fastpow(a, pw).sum(axis=1)


_ENGINES: "weakref.WeakKeyDictionary[GridSpec, P1Quadrature]" = weakref.WeakKeyDictionary()


def quadrature_of(grid: GridSpec) -> Optional[P1Quadrature]:
    """The P1 engine of ``grid`` (built once), or None for nodal quadrature."""
    if grid.quadrature == "nodal":
        return None
    eng = _ENGINES.get(grid)
    if eng is None:
        eng = P1Quadrature(grid, grid.quad_order)
        _ENGINES[grid] = eng
    return eng


def volume_integrals(grid: GridSpec, values: np.ndarray, powers: Sequence[float]) -> list:
    """``int |u|^a`` over the grid for each exponent ``a``."""
    eng = quadrature_of(grid)
    if eng is None:
        a = np.abs(values)
        return [float(grid.dV * np.sum(fastpow(a, pw))) for pw in powers]
    return eng.integrate(values, powers)


def load_vector(grid: GridSpec, values: np.ndarray,
                f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Node-wise ``(1/h^N) int f(u) phi_i``; equals ``f(u_i)`` under nodal quadrature.

    With this scaling ``h^N <load, v> = int f(u) v`` for every grid function v.
    """
    eng = quadrature_of(grid)
    if eng is None:
        return f(values)
    return eng.load(values, f) / grid.dV


def cg(A, b: np.ndarray, x0: Optional[np.ndarray] = None, tol: float = 1e-10,
       maxiter: Optional[int] = None, precond: Optional[str] = None):
    """Conjugate gradients for SPD ``A``; stops on ``|Ax-b| <= tol |b|``.

    Returns ``(x, iterations, relative_residual)``.  Raises ConvergenceError
    when the iteration cap is reached.
    """
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    if maxiter is None:
        maxiter = max(10 * n, 1000)
    dinv = None
    if precond == "diag":
        dinv = 1.0 / A.diagonal()
    elif precond is not None:
        raise ValueError(f"unknown preconditioner {precond!r}")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x if x0 is not None else b.copy()
    z = r * dinv if dinv is not None else r
    p = z.copy()
    rz = float(np.dot(r, z))
    target = tol * bnorm
    res = float(np.linalg.norm(r))
    k = 0
    while res > target:
        if k >= maxiter:
            raise ConvergenceError(
                f"CG did not reach tol {tol:g} in {maxiter} iterations "
                f"(relative residual {res / bnorm:.3e})", res / bnorm, k)
        Ap = A @ p
        alpha = rz / float(np.dot(p, Ap))
        x += alpha * p
        r -= alpha * Ap
        z = r * dinv if dinv is not None else r
        rz_new = float(np.dot(r, z))
        p *= rz_new / rz
        p += z
        rz = rz_new
        res = float(np.linalg.norm(r))
        k += 1
    return x, k, res / bnorm


def poisson_solve(rhs: Field, tol: float = 1e-10, x0: Optional[Field] = None,
                  maxiter: Optional[int] = None, precond: Optional[str] = None) -> Field:
    """Solve ``-Delta_h w = rhs`` on the masked grid."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    w, _, _ = cg(rhs.grid.laplacian, rhs.values, None if x0 is None else x0.values,
                 tol=tol, maxiter=maxiter, precond=precond)
    return Field(rhs.grid, w)
