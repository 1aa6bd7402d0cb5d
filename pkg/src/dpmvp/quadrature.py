"""Lattice ball averages, ball extrema, shifted-pair averages and interpolation."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core import GeometryError, GridSpec, ScalarField


@dataclass(frozen=True)
class BallStencil:
    """Lattice offsets of the closed ball of radius ``eps`` with equal weights."""

    dim: int
    radius: float  # in lattice units
    offsets: np.ndarray

    @classmethod
    def for_eps(cls, dim: int, eps: float, h: float) -> "BallStencil":
        r = eps / h
        return cls(dim, r, _kernels.ball_offsets(dim, r))

    @property
    def count(self) -> int:
        return len(self.offsets)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.count, 1.0 / self.count)

    @property
    def half_width(self) -> int:
        return int(math.floor(self.radius * (1 + _kernels.RADIUS_SLACK)))


def _radius(grid: GridSpec, eps: float) -> float:
    return eps / grid.h


def _half_width(r: float) -> int:
    return int(math.floor(r * (1 + _kernels.RADIUS_SLACK)))


def _block(values: np.ndarray, x, half: int):
    """Sub-array centred at ``x`` with the given half width, or GeometryError."""
    sl = []
    for i, n in zip(x, values.shape):
        lo, hi = i - half, i + half + 1
        if lo < 0 or hi > n:
            raise GeometryError(f"ball around index {tuple(x)} leaves the extended lattice")
        sl.append(slice(lo, hi))
    return values[tuple(sl)]


# --------------------------------------------------------------------------
# Whole-field operators


def ball_average_field(values: np.ndarray, grid: GridSpec, eps: float) -> np.ndarray:
    """Ball average at every node (NaN where the ball leaves the lattice)."""
    return _kernels.ball_mean(values, _radius(grid, eps))


def ball_extrema_field(values: np.ndarray, grid: GridSpec, eps: float):
    r = _radius(grid, eps)
    return _kernels.ball_reduce(values, r, "min"), _kernels.ball_reduce(values, r, "max")


def _corner_weights(theta: np.ndarray):
    """Multilinear weights for fractional offsets ``theta`` (shape ``(N, m)``)."""
    dim = theta.shape[0]
    for corner in itertools.product((0, 1), repeat=dim):
        w = np.ones(theta.shape[1:])
        for ax, c in enumerate(corner):
            w = w * (theta[ax] if c else 1.0 - theta[ax])
        yield corner, w


def gather_shifted(avg: np.ndarray, idx: tuple, shift: np.ndarray) -> np.ndarray:
    """Multilinearly interpolate ``avg`` at ``idx + shift`` (lattice units).

    ``idx`` is a tuple of integer arrays (one per axis), ``shift`` has shape
    ``(N, m)``.  Raises GeometryError when a needed node is outside the array
    or carries NaN (ball not contained).
    """
    base = np.floor(shift).astype(np.int64)
    theta = shift - base
    out = np.zeros(shift.shape[1:])
    for corner, w in _corner_weights(theta):
        pos = []
        for ax in range(len(idx)):
            p = idx[ax] + base[ax] + corner[ax]
            if np.any(p < 0) or np.any(p >= avg.shape[ax]):
                raise GeometryError("shifted ball leaves the extended lattice")
            pos.append(p)
        v = avg[tuple(pos)]
        if np.any(np.isnan(v) & (w != 0)):
            raise GeometryError("shifted ball leaves the extended lattice")
        out = out + w * np.where(w != 0, v, 0.0)
    return out


def shifted_pair_from_average(avg: np.ndarray, idx: tuple, shift: np.ndarray) -> np.ndarray:
    """``avg(x + s) - avg(x - s)`` with multilinear interpolation; ``s`` in lattice units."""
    return gather_shifted(avg, idx, shift) - gather_shifted(avg, idx, -shift)


# --------------------------------------------------------------------------
# Pointwise operators


def ball_average(field: ScalarField, x, eps: float) -> float:
    """Equal-weight mean of the field over lattice nodes in the closed ball."""
    r = _radius(field.grid, eps)
    half = _half_width(r)
    block = _block(field.values, x, half)
    center = (half,) * block.ndim
    return float(_kernels.ball_mean(block, r)[center])


def ball_extrema(field: ScalarField, x, eps: float):
    """``(min, max)`` of the field over lattice nodes in the closed ball."""
    r = _radius(field.grid, eps)
    half = _half_width(r)
    block = _block(field.values, x, half)
    center = (half,) * block.ndim
    lo = _kernels.ball_reduce(block, r, "min")[center]
    hi = _kernels.ball_reduce(block, r, "max")[center]
    return float(lo), float(hi)


def ball_argextrema(field: ScalarField, x, eps: float):
    """Lattice offsets of the minimizer and maximizer (lexicographically smallest on ties)."""
    r = _radius(field.grid, eps)
    offs = _kernels.ball_offsets(field.values.ndim, r)
    half = _half_width(r)
    block = _block(field.values, x, half)
    vals = block[tuple((offs + half).T)]
    return offs[int(np.argmin(vals))].copy(), offs[int(np.argmax(vals))].copy()


def shifted_pair_average(field: ScalarField, x, eps: float, grad_a) -> float:
    """Ball average of ``u(y + eps*grad_a) - u(y - eps*grad_a)`` over ``B_eps(x)``."""
    grad_a = np.asarray(grad_a, dtype=float)
    grid = field.grid
    r = _radius(grid, eps)
    half = _half_width(r)
    shift = (eps * grad_a / grid.h).reshape(-1, 1)
    reach = half + int(np.max(np.abs(np.floor(shift)))) + 2
    block = _block(field.values, x, reach)
    avg = _kernels.ball_mean(block, r)
    idx = tuple(np.array([reach]) for _ in range(block.ndim))
    return float(shifted_pair_from_average(avg, idx, shift)[0])


def interpolate(field: ScalarField, point) -> float:
    """Multilinear interpolation at a physical point of the extended lattice."""
    grid = field.grid
    c = grid.collar_nodes
    s = np.array([(x - lo) / grid.h + c for x, (lo, _) in zip(point, grid.box)], dtype=float)
    shape = field.values.shape
    for v, n in zip(s, shape):
        if not (-1e-12 <= v <= n - 1 + 1e-12):
            raise GeometryError(f"point {tuple(point)} lies outside the extended lattice")
    s = np.clip(s, 0, np.array(shape) - 1)
    base = np.minimum(np.floor(s).astype(np.int64), np.array(shape) - 2)
    theta = s - base
    out = 0.0
    for corner, w in _corner_weights(theta.reshape(-1, 1)):
        w = float(w[0])
        if w == 0.0:
            continue
        out += w * field.values[tuple(base + np.array(corner))]
    return float(out)
