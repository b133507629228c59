"""Cross-sections, cylinder-type domains and masked uniform grids.

A domain is described slice by slice: ``Omega^t = s(|t|) * F`` where ``F`` is a
bounded cross-section in R^(N-l) and ``s`` a positive profile.  The families
used throughout the package are

``straight``  s = 1                       (the cylinder R^l x F)
``bump``      s = 1 + a0 / (1 + |t|^m)    (wider in the middle, tends to F)
``pinched``   s = 1 / (1 + a0 |t|^m)      (sections shrink to a point)
``custom``    user supplied profile and, optionally, an inset distance

Every domain is truncated at ``|t| < T`` before it is put on a grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GeometryError",
    "InvalidGeometryError",
    "DegenerateDomainError",
    "ResourceError",
    "CrossSection",
    "DomainSpec",
    "GridSpec",
    "make_cross_section",
    "cross_section_at",
    "ball_domain",
    "discretize",
    "discretize_cross_section",
]

DEFAULT_MAX_POINTS = 20_000_000
_SNAP = 1e-9
QUADRATURES = ("p1", "nodal")


class GeometryError(ValueError):
    """Base class for geometry problems."""


class InvalidGeometryError(GeometryError):
    pass


class DegenerateDomainError(GeometryError):
    pass


class ResourceError(GeometryError):
    pass


@dataclass(frozen=True)
class CrossSection:
    """Bounded open region F in R^dim, optionally dilated about the origin.

    ``params`` holds the defining numbers of the analytic kinds:
    interval ``(a, b)``, disk ``(radius, *center)``, square ``(side, *center)``.
    Custom sections carry a ``predicate`` and explicit ``bounds``.
    """

    kind: str
    dim: int
    params: tuple = ()
    factor: float = 1.0
    predicate: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    custom_bounds: Optional[tuple] = None

    # -- analytic helpers -------------------------------------------------
    def _base_bounds(self):
        if self.kind == "interval":
            a, b = self.params
            return np.array([a]), np.array([b])
        if self.kind == "disk":
            r, *c = self.params
            c = np.asarray(c, dtype=float)
            return c - r, c + r
        if self.kind == "square":
            side, *c = self.params
            c = np.asarray(c, dtype=float)
            return c - side / 2, c + side / 2
        lo, hi = self.custom_bounds
        return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)

    def _base_depth(self, y):
        if self.kind == "interval":
            a, b = self.params
            return np.minimum(y[..., 0] - a, b - y[..., 0])
        if self.kind == "disk":
            r, *c = self.params
            return r - np.linalg.norm(y - np.asarray(c), axis=-1)
        if self.kind == "square":
            side, *c = self.params
            return np.min(side / 2 - np.abs(y - np.asarray(c)), axis=-1)
        raise InvalidGeometryError("custom cross-sections have no distance function")

    @property
    def has_distance(self) -> bool:
        return self.kind != "custom"

    # -- public API -------------------------------------------------------
    @property
    def bounds(self):
        lo, hi = self._base_bounds()
        return self.factor * lo, self.factor * hi

    @property
    def bounding_radius(self) -> float:
        lo, hi = self.bounds
        return float(np.sqrt(np.sum(np.maximum(np.abs(lo), np.abs(hi)) ** 2)))

    def depth(self, y) -> np.ndarray:
        """Signed distance to the boundary, positive inside."""
        y = np.asarray(y, dtype=float)
        return self.factor * self._base_depth(y / self.factor)

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.kind == "custom":
            return np.asarray(self.predicate(y / self.factor), dtype=bool)
        return self.depth(y) > 0

    def inset(self, y, margin: float) -> np.ndarray:
        """Points lying at least ``margin`` away from the complement."""
        y = np.asarray(y, dtype=float)
        if self.has_distance:
            return self.depth(y) >= margin * (1 - _SNAP)
        ok = self.contains(y)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = margin
            ok &= self.contains(y + e) & self.contains(y - e)
        return ok

    def measure(self) -> float:
        f = self.factor**self.dim
        if self.kind == "interval":
            a, b = self.params
            return f * (b - a)
        if self.kind == "disk":
            r = self.params[0]
            return f * math.pi ** (self.dim / 2) / math.gamma(self.dim / 2 + 1) * r**self.dim
        if self.kind == "square":
            return f * self.params[0] ** self.dim
        raise InvalidGeometryError("measure of a custom cross-section is not known")

    def scaled(self, s: float) -> "CrossSection":
        if not s > 0:
            raise InvalidGeometryError(f"dilation factor must be positive, got {s}")
        return CrossSection(self.kind, self.dim, self.params, self.factor * s,
                            self.predicate, self.custom_bounds)


def make_cross_section(kind: str, *args, dim: Optional[int] = None, **kw) -> CrossSection:
    """Build an analytic cross-section.

    >>> make_cross_section("interval", 0, 1)          # (0, 1)
    >>> make_cross_section("disk", radius=1.0)        # unit disk
    >>> make_cross_section("square", side=1.0)        # [-1/2, 1/2]^2
    >>> make_cross_section("custom", predicate=f, bounds=(lo, hi))
    """
    if kind == "interval":
        if "length" in kw:
            a, b = -kw["length"] / 2, kw["length"] / 2
        elif args:
            a, b = args
        else:
            a, b = kw.get("a", 0.0), kw.get("b", 1.0)
        if not b > a:
            raise InvalidGeometryError(f"interval needs b > a, got ({a}, {b})")
        return CrossSection("interval", 1, (float(a), float(b)))
    if kind in ("disk", "ball"):
        d = dim or (2 if kind == "disk" else 3)
        r = float(args[0] if args else kw.get("radius", 1.0))
        c = tuple(float(v) for v in kw.get("center", (0.0,) * d))
        if r <= 0:
            raise InvalidGeometryError(f"radius must be positive, got {r}")
        if d not in (1, 2, 3) or len(c) != d:
            raise InvalidGeometryError(f"bad disk dimension {d}")
        if d == 1:
            return CrossSection("interval", 1, (c[0] - r, c[0] + r))
        return CrossSection("disk", d, (r, *c))
    if kind in ("square", "cube"):
        d = dim or (2 if kind == "square" else 3)
        side = float(args[0] if args else kw.get("side", 1.0))
        c = tuple(float(v) for v in kw.get("center", (0.0,) * d))
        if side <= 0:
            raise InvalidGeometryError(f"side must be positive, got {side}")
        if d not in (1, 2, 3) or len(c) != d:
            raise InvalidGeometryError(f"bad square dimension {d}")
        if d == 1:
            return CrossSection("interval", 1, (c[0] - side / 2, c[0] + side / 2))
        return CrossSection("square", d, (side, *c))
    if kind == "custom":
        lo, hi = kw["bounds"]
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if any(h <= l for l, h in zip(lo, hi)):
            raise InvalidGeometryError("custom bounds must have positive extent")
        return CrossSection("custom", len(lo), (), 1.0, kw["predicate"], (lo, hi))
    raise InvalidGeometryError(f"unknown cross-section kind {kind!r}")


@dataclass(frozen=True)
class DomainSpec:
    """Cylinder-type domain ``{(t, y): |t| < T, y in s(|t|) F}``."""

    ell: int
    base: CrossSection
    T: float
    family: str = "straight"
    m: float = 2.0
    a0: float = 0.2
    a1: Optional[float] = None
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    inset_fn: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = field(
        default=None, compare=False)

    def __post_init__(self):
        if self.ell not in (1, 2):
            raise InvalidGeometryError(f"ell must be 1 or 2, got {self.ell}")
        if self.base.dim not in (1, 2):
            raise InvalidGeometryError(f"cross-section dimension must be 1 or 2, got {self.base.dim}")
        if not self.T > 0:
            raise InvalidGeometryError(f"truncation T must be positive, got {self.T}")
        if self.family not in ("straight", "bump", "pinched", "custom"):
            raise InvalidGeometryError(f"unknown family {self.family!r}")
        if self.family in ("bump", "pinched") and not (self.m > 0 and self.a0 > 0):
            raise InvalidGeometryError("bump/pinched families need m > 0 and a0 > 0")
        if self.family == "custom" and self.profile is None:
            raise InvalidGeometryError("custom family needs a profile")
        a1 = self.a1 if self.a1 is not None else self.a0 / 2
        if self.family == "bump" and not 0 < a1 < self.a0:
            raise InvalidGeometryError("need 0 < a1 < a0")

    @property
    def N(self) -> int:
        return self.ell + self.base.dim

    @property
    def lower_a(self) -> float:
        return self.a1 if self.a1 is not None else self.a0 / 2

    def scale(self, tnorm) -> np.ndarray:
        tn = np.asarray(tnorm, dtype=float)
        if self.family == "straight":
            return np.ones_like(tn)
        if self.family == "bump":
            return 1.0 + self.a0 / (1.0 + tn**self.m)
        if self.family == "pinched":
            return 1.0 / (1.0 + self.a0 * tn**self.m)
        return np.asarray(self.profile(tn), dtype=float)

    def inset(self, t: np.ndarray, y: np.ndarray, margin: float) -> np.ndarray:
        """Mask of points (t, y) at least ``margin`` inside the truncated domain."""
        tn = np.linalg.norm(t, axis=-1)
        if self.inset_fn is not None:
            ok = self.inset_fn(t, y, margin)
        else:
            s = self.scale(tn)
            pos = s > 0
            safe = np.where(pos, s, 1.0)
            if self.base.has_distance:
                ok = pos & (safe * self.base._base_depth(y / safe[..., None])
                            >= margin * (1 - _SNAP))
            else:
                ok = np.zeros(tn.shape, dtype=bool)
                for val in np.unique(safe[pos]):
                    sel = pos & (safe == val)
                    ok[sel] = self.base.scaled(val).inset(y[sel], margin)
        return ok & (self.T - tn >= margin * (1 - _SNAP))

    def contains(self, t, y) -> np.ndarray:
        return self.inset(np.asarray(t, float), np.asarray(y, float), 0.0) & (
            np.linalg.norm(np.asarray(t, float), axis=-1) < self.T)


def cross_section_at(domain: DomainSpec, t) -> CrossSection:
    """The slice ``Omega^t`` as a cross-section."""
    tn = float(np.linalg.norm(np.atleast_1d(np.asarray(t, dtype=float))))
    return domain.base.scaled(float(domain.scale(tn)))


def ball_domain(N: int, R: float = 1.0) -> DomainSpec:
    """The ball B(0, R) in R^N written as a (custom) domain with l = 1."""
    if N not in (2, 3):
        raise InvalidGeometryError("ball domains are supported for N = 2, 3")
    base = make_cross_section("disk", radius=R, dim=N - 1)

    def profile(tn):
        return np.sqrt(np.clip(1.0 - (tn / R) ** 2, 0.0, None))

    def inset_fn(t, y, margin):
        r = np.sqrt(np.sum(t**2, axis=-1) + np.sum(y**2, axis=-1))
        return R - r >= margin * (1 - _SNAP)

    return DomainSpec(ell=1, base=base, T=R, family="custom", profile=profile, inset_fn=inset_fn)


def _lattice(lo: float, hi: float, h: float) -> np.ndarray:
    k0 = math.floor(lo / h + _SNAP)
    k1 = math.ceil(hi / h - _SNAP)
    return np.arange(k0, k1 + 1) * h


@dataclass(eq=False)
class GridSpec:
    """Uniform grid on a box with a boolean interior mask.

    Grid points sit on the origin-anchored lattice ``h * Z^N``; axes are ordered
    ``(t_1..t_l, y_1..y_{N-l})``.  Masked-out points carry the Dirichlet zero.
    """

    h: float
    axes: tuple
    mask: np.ndarray
    ell: int
    T: float = 0.0
    domain: Optional[DomainSpec] = None
    # volume quadrature: "p1" (piecewise-linear interpolant) or "nodal"
    quadrature: str = "p1"
    quad_order: int = 3

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        if not self.mask.any():
            raise DegenerateDomainError("grid mask is empty; decrease h")
        if self.quadrature not in QUADRATURES:
            raise InvalidGeometryError(f"unknown quadrature {self.quadrature!r}")
        if not self.quad_order >= 1:
            raise InvalidGeometryError("quad_order must be >= 1")

    @property
    def N(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @cached_property
    def n(self) -> int:
        return int(self.mask.sum())

    @property
    def dV(self) -> float:
        return self.h**self.N

    @cached_property
    def flat_index(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @cached_property
    def index_map(self) -> np.ndarray:
        idx = np.full(self.mask.size, -1, dtype=np.int64)
        idx[self.flat_index] = np.arange(self.n)
        return idx.reshape(self.shape)

    @cached_property
    def points(self) -> np.ndarray:
        """Coordinates of masked points, shape (n, N)."""
        sub = np.unravel_index(self.flat_index, self.shape)
        return np.stack([ax[s] for ax, s in zip(self.axes, sub)], axis=-1)

    @property
    def t(self) -> np.ndarray:
        return self.points[:, : self.ell]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, self.ell:]

    @cached_property
    def tnorm(self) -> np.ndarray:
        return np.linalg.norm(self.t, axis=-1) if self.ell else np.zeros(self.n)

    @cached_property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=-1)

    def scatter(self, values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.mask.size)
        full[self.flat_index] = values
        return full.reshape(self.shape)

    def gather(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full).reshape(-1)[self.flat_index]

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        """The matrix of -Delta_h with Dirichlet zero outside the mask."""
        n, N = self.n, self.N
        idx = self.index_map
        rows, cols = [], []
        for axis in range(N):
            lo = [slice(None)] * N
            hi = [slice(None)] * N
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            a = idx[tuple(lo)].ravel()
            b = idx[tuple(hi)].ravel()
            both = (a >= 0) & (b >= 0)
            rows.append(a[both])
            cols.append(b[both])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        inv = 1.0 / self.h**2
        off = sp.coo_matrix((np.full(r.size, -inv), (r, c)), shape=(n, n))
        A = off + off.T + sp.identity(n, format="coo") * (2 * N * inv)
        A = A.tocsr()
        A.sort_indices()
        return A

    def same_lattice(self, other: "GridSpec") -> bool:
        return (self.N == other.N and math.isclose(self.h, other.h)
                and self.ell == other.ell)


def discretize(domain: DomainSpec, h: float, max_points: int = DEFAULT_MAX_POINTS,
               quadrature: str = "p1", quad_order: int = 3) -> GridSpec:
    """Put the truncated domain on the lattice ``h Z^N``.

    Points closer than h/2 to the boundary are left out of the mask.
    """
    if not h > 0:
        raise InvalidGeometryError(f"spacing must be positive, got {h}")
    ell = domain.ell
    taxes = [_lattice(-domain.T, domain.T, h) for _ in range(ell)]
    # y-box must contain every slice: sample the profile on the t-lattice
    tt = np.meshgrid(*taxes, indexing="ij")
    tn = np.sqrt(sum(a**2 for a in tt))
    smax = float(np.max(domain.scale(tn[tn < domain.T]))) if np.any(tn < domain.T) else 1.0
    lo, hi = domain.base.bounds
    yaxes = [_lattice(smax * l, smax * u, h) for l, u in zip(lo, hi)]
    axes = tuple(taxes + yaxes)
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape, dtype=np.int64))
    if total > max_points:
        raise ResourceError(f"grid of {total} points exceeds the cap of {max_points}")
    mesh = np.meshgrid(*axes, indexing="ij")
    t = np.stack(mesh[:ell], axis=-1)
    y = np.stack(mesh[ell:], axis=-1)
    mask = domain.inset(t, y, h / 2)
    if not mask.any():
        raise DegenerateDomainError(f"no grid point of spacing {h} lies inside the domain")
    return GridSpec(h=h, axes=axes, mask=mask, ell=ell, T=domain.T, domain=domain,
                    quadrature=quadrature, quad_order=quad_order)


def discretize_cross_section(F: CrossSection, h: float,
                             max_points: int = DEFAULT_MAX_POINTS,
                             quadrature: str = "p1", quad_order: int = 3) -> GridSpec:
    """Grid on the cross-section alone (no t axes)."""
    if not h > 0:
        raise InvalidGeometryError(f"spacing must be positive, got {h}")
    lo, hi = F.bounds
    axes = tuple(_lattice(l, u, h) for l, u in zip(lo, hi))
    total = int(np.prod([len(a) for a in axes], dtype=np.int64))
    if total > max_points:
        raise ResourceError(f"grid of {total} points exceeds the cap of {max_points}")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    mask = F.inset(mesh, h / 2)
    if not mask.any():
        raise DegenerateDomainError(f"no grid point of spacing {h} lies inside the cross-section")
    return GridSpec(h=h, axes=axes, mask=mask, ell=0, T=0.0,
                    quadrature=quadrature, quad_order=quad_order)


def mask_points(grid: GridSpec) -> set:
    """Lattice indices (integers) of the masked points; handy for comparisons."""
    k = np.rint(grid.points / grid.h).astype(np.int64)
    return set(map(tuple, k))
