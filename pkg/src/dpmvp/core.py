"""Domain types, weight algebra, coefficient fields and gradient estimation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import Expression, NotDifferentiableError, differentiate, evaluate, parse_expression

DELTA_GRAD = 1e-10
MIN_RESOLUTION = 8  # require h <= eps / MIN_RESOLUTION


class DomainError(ValueError):
    """A parameter lies outside the domain where the formulas are defined."""


class GeometryError(ValueError):
    """A ball or shifted ball leaves the extended lattice."""


class BoundsError(IndexError):
    """A lattice index is outside the stencil's range."""


class DegenerateGradientError(ValueError):
    """The test function's gradient vanishes where a nonzero one is required."""


class StateError(RuntimeError):
    """Solver state (history) is insufficient for the requested step."""


def _as_expr(e) -> Expression:
    return parse_expression(e) if isinstance(e, str) else e


# --------------------------------------------------------------------------
# Weight algebra


@dataclass(frozen=True)
class Exponents:
    p: float
    q: float

    def __post_init__(self):
        for name, v in (("p", self.p), ("q", self.q)):
            if not math.isfinite(v):
                raise DomainError(f"exponent {name}={v} is not finite")
        if not self.p > 1:
            raise DomainError(f"Exponents invariant violated: need 1 < p, got p={self.p}")
        if self.q < self.p:
            raise DomainError(f"Exponents invariant violated: need p <= q, got p={self.p}, q={self.q}")


@dataclass(frozen=True)
class Weights:
    alpha_p: float
    beta_p: float
    alpha_q: float
    beta_q: float

    @classmethod
    def for_exponents(cls, exps: Exponents, dim: int) -> "Weights":
        ap, bp = compute_weights(exps.p, dim)
        aq, bq = compute_weights(exps.q, dim)
        return cls(ap, bp, aq, bq)


def compute_weights(p, dim: int):
    """Midrange and average weights ``(alpha, beta)`` for exponent ``p`` in ``dim`` dimensions.

    ``alpha + beta = 1`` and ``alpha / beta = (p - 2) / (dim + 2)``.
    Accepts arrays for ``p``.
    """
    if dim < 2:
        raise DomainError(f"dimension must be >= 2, got {dim}")
    p_arr = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p_arr)) or np.any(p_arr <= 1):
        raise DomainError(f"exponent must be finite and > 1, got {p}")
    alpha = (p_arr - 2.0) / (dim + p_arr)
    beta = (dim + 2.0) / (dim + p_arr)
    if p_arr.ndim == 0:
        return float(alpha), float(beta)
    return alpha, beta


def compute_M(a_val, grad_norm, p: float, q: float, dim: int):
    """Phase modulation ``a (N+q)/(N+p) |grad u|^(q-p)``; vectorized.

    A zero gradient gives 0 when ``q > p`` (continuous limit) and ``a`` when
    ``q == p``.
    """
    a_arr = np.asarray(a_val, dtype=float)
    g = np.asarray(grad_norm, dtype=float)
    if np.any(a_arr < 0):
        raise DomainError("coefficient a must be non-negative")
    if np.any(g < 0):
        raise DomainError("gradient norm must be non-negative")
    # 0.0 ** 0.0 == 1 covers q == p; 0.0 ** positive == 0 covers q > p
    out = a_arr * ((dim + q) / (dim + p)) * np.power(g, q - p)
    return float(out) if out.ndim == 0 else out


def canonical_time_lags(M, p: float, dim: int):
    """Equal time lags ``A = B = (N+p)(1+M)`` satisfying the viscosity condition."""
    m = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(m)) or np.any(m < 0):
        raise DomainError("M must be finite and non-negative")
    A = (dim + p) * (1.0 + m)
    if A.ndim == 0:
        return float(A), float(A)
    return A, A.copy()


def lag_constraint(A, B, a_val, grad_norm, p: float, q: float, dim: int):
    """Left side of ``(N+p)/A + a (N+q) |grad u|^(q-p) / B``; equals 1 for admissible lags."""
    return (dim + p) / A + np.asarray(a_val) * (dim + q) * np.power(grad_norm, q - p) / B


# --------------------------------------------------------------------------
# Lattice


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice over a box plus a collar of ghost nodes.

    Nodes start at each axis' ``lo`` with uniform spacing ``h``.  Nodes on
    or outside the box boundary carry Dirichlet data; nodes strictly inside
    the box are the unknowns.  ``hi`` need not fall on a node.
    """

    dim: int
    box: tuple
    h: float
    collar_width: float

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError(f"dimension must be >= 2, got {self.dim}")
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        if len(box) != self.dim:
            raise DomainError(f"box has {len(box)} axes, expected {self.dim}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise DomainError(f"lattice spacing must be positive, got {self.h}")
        if self.collar_width < 0:
            raise DomainError("collar width must be non-negative")
        for lo, hi in box:
            if not hi > lo:
                raise DomainError(f"empty box axis [{lo}, {hi}]")
            if (hi - lo) / self.h < 2 - 1e-9:
                raise DomainError(f"box axis [{lo}, {hi}] holds no interior node at h={self.h}")

    @classmethod
    def for_eps(cls, dim: int, box, eps: float, h: float | None = None, grad_a_max: float = 0.0) -> "GridSpec":
        """Grid with ``h = eps/8`` by default and a collar wide enough for every ball and shift."""
        h = eps / MIN_RESOLUTION if h is None else h
        collar = eps * (1.0 + grad_a_max) + 2 * h
        return cls(dim, tuple(box), h, collar)

    @property
    def n_box(self) -> tuple:
        return tuple(int(math.floor((hi - lo) / self.h + 1e-9)) + 1 for lo, hi in self.box)

    @property
    def collar_nodes(self) -> int:
        return int(math.ceil(self.collar_width / self.h - 1e-9))

    @property
    def shape(self) -> tuple:
        c = self.collar_nodes
        return tuple(n + 2 * c for n in self.n_box)

    def axes(self) -> list:
        c = self.collar_nodes
        return [lo + (np.arange(n) - c) * self.h for (lo, _), n in zip(self.box, self.shape)]

    def coords(self) -> list:
        """Coordinate arrays, one per axis, each of shape ``self.shape``."""
        return list(np.meshgrid(*self.axes(), indexing="ij"))

    def point(self, index) -> np.ndarray:
        c = self.collar_nodes
        return np.array([lo + (i - c) * self.h for (lo, _), i in zip(self.box, index)])

    def index_of(self, point) -> tuple:
        """Nearest lattice index to ``point``."""
        c = self.collar_nodes
        idx = tuple(int(round((x - lo) / self.h)) + c for x, (lo, _) in zip(point, self.box))
        for i, n in zip(idx, self.shape):
            if not 0 <= i < n:
                raise BoundsError(f"point {tuple(point)} lies outside the extended lattice")
        return idx

    def interior_mask(self) -> np.ndarray:
        c = self.collar_nodes
        tol = 1e-9 * self.h
        sl = []
        for (lo, hi), n in zip(self.box, self.n_box):
            last = lo + (n - 1) * self.h
            stop = c + n - 1 if last >= hi - tol else c + n
            sl.append(slice(c + 1, stop))
        mask = np.zeros(self.shape, dtype=bool)
        mask[tuple(sl)] = True
        return mask

    def env(self, t: float | None = None) -> dict:
        env = {f"x{i + 1}": x for i, x in enumerate(self.coords())}
        if t is not None:
            env["t"] = t
        return env

    def check_resolution(self, eps: float) -> None:
        if self.h > eps / MIN_RESOLUTION * (1 + 1e-9):
            raise DomainError(f"lattice too coarse: need h <= eps/{MIN_RESOLUTION}, got h={self.h}, eps={eps}")

    def check_collar(self, eps: float, grad_a_max: float = 0.0) -> None:
        need = eps + eps * grad_a_max
        if self.collar_nodes * self.h < need * (1 - 1e-9):
            raise GeometryError(f"collar {self.collar_nodes * self.h:g} narrower than required {need:g}")


def sample(expr, grid: GridSpec, t: float | None = None) -> np.ndarray:
    """Evaluate an expression on every lattice node."""
    e = _as_expr(expr)
    with np.errstate(all="ignore"):
        vals = evaluate(e, grid.env(t))
    return np.broadcast_to(np.asarray(vals, dtype=float), grid.shape).copy()


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Immutable lattice function over ``grid`` (box plus collar)."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} does not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise DomainError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_expression(cls, expr, grid: GridSpec, t: float | None = None) -> "ScalarField":
        return cls(grid, sample(expr, grid, t))

    def __getitem__(self, index):
        return self.values[index]


# --------------------------------------------------------------------------
# Gradient estimation


def gradient_field(values: np.ndarray, h: float) -> np.ndarray:
    """Central differences on every node; NaN on the outermost ring. Shape ``(N, *shape)``."""
    out = np.full((values.ndim,) + values.shape, np.nan)
    for ax in range(values.ndim):
        fwd = [slice(1, -1)] * values.ndim
        lo = [slice(1, -1)] * values.ndim
        hi = [slice(1, -1)] * values.ndim
        lo[ax] = slice(0, -2)
        hi[ax] = slice(2, None)
        out[(ax,) + tuple(fwd)] = (values[tuple(hi)] - values[tuple(lo)]) / (2 * h)
    return out


def gradient_estimate(field: ScalarField, x) -> np.ndarray:
    """Central-difference gradient at lattice index ``x``."""
    x = tuple(int(i) for i in x)
    v = field.values
    if len(x) != v.ndim:
        raise BoundsError(f"index {x} has wrong dimension")
    for i, n in zip(x, v.shape):
        if not 1 <= i <= n - 2:
            raise BoundsError(f"index {x} outside the central-difference stencil range")
    h = field.grid.h
    g = np.empty(v.ndim)
    for ax in range(v.ndim):
        up = list(x)
        dn = list(x)
        up[ax] += 1
        dn[ax] -= 1
        g[ax] = (v[tuple(up)] - v[tuple(dn)]) / (2 * h)
    return g


# --------------------------------------------------------------------------
# Coefficient and exponent fields


class _SpaceField:
    """Expression of ``x`` (and possibly ``t``) with analytic or FD gradient."""

    def __init__(self, expr, fd_step: float | None = None):
        self.expr = _as_expr(expr)
        self.fd_step = fd_step
        self._grad_exprs = {}

    @property
    def text(self) -> str:
        return str(self.expr)

    def __repr__(self):
        return f"{type(self).__name__}({self.text!r})"

    def __eq__(self, other):
        return type(self) is type(other) and self.expr == other.expr

    def __hash__(self):
        return hash((type(self), self.expr))

    def _grad_expr(self, dim: int):
        if dim not in self._grad_exprs:
            try:
                self._grad_exprs[dim] = tuple(differentiate(self.expr, f"x{i + 1}") for i in range(dim))
            except NotDifferentiableError:
                self._grad_exprs[dim] = None
        return self._grad_exprs[dim]

    def values(self, points: Sequence[np.ndarray], t: float | None = None) -> np.ndarray:
        env = {f"x{i + 1}": x for i, x in enumerate(points)}
        if t is not None:
            env["t"] = t
        with np.errstate(all="ignore"):
            v = evaluate(self.expr, env)
        return np.broadcast_to(np.asarray(v, dtype=float), np.shape(points[0])).copy()

    def gradient(self, points: Sequence[np.ndarray], t: float | None = None, h: float | None = None) -> np.ndarray:
        """Gradient at ``points``; shape ``(N, *points[0].shape)``.

        Symbolic when available and finite, else central differences with
        step ``h`` (the lattice spacing by default).
        """
        dim = len(points)
        shape = np.shape(points[0])
        gexpr = self._grad_expr(dim)
        env = {f"x{i + 1}": x for i, x in enumerate(points)}
        if t is not None:
            env["t"] = t
        if gexpr is not None:
            with np.errstate(all="ignore"):
                g = np.stack([np.broadcast_to(np.asarray(evaluate(e, env), dtype=float), shape) for e in gexpr])
            if np.all(np.isfinite(g)):
                return g
        step = self.fd_step or h
        if step is None:
            raise ValueError("finite-difference gradient needs a step")
        out = np.empty((dim,) + tuple(shape))
        for i in range(dim):
            up = list(points)
            dn = list(points)
            up[i] = points[i] + step
            dn[i] = points[i] - step
            out[i] = (self.values(up, t) - self.values(dn, t)) / (2 * step)
        return out


class CoefficientField(_SpaceField):
    """Non-negative coefficient ``a(x)`` or ``a(x, t)``."""

    def values(self, points, t=None):
        v = super().values(points, t)
        bad = ~(v >= 0)
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            where = tuple(float(np.asarray(p)[tuple(idx)]) for p in points)
            raise DomainError(f"coefficient {self.text!r} is negative ({v[tuple(idx)]:g}) at point {where}")
        return v


class ExponentField(_SpaceField):
    """Variable exponent ``p(x)`` with ``1 < p(x) < inf``."""

    def values(self, points, t=None):
        v = super().values(points, t)
        bad = ~((v > 1) & np.isfinite(v))
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            where = tuple(float(np.asarray(p)[tuple(idx)]) for p in points)
            raise DomainError(f"exponent {self.text!r} is {v[tuple(idx)]:g} at point {where}; need 1 < p(x) < inf")
        return v


def box_corners(box) -> list:
    return [np.array(c) for c in itertools.product(*box)]
