"""Ball-stencil reductions over lattice arrays.

Every point's closed lattice ball is decomposed into rows along the last
axis.  Row sums/extrema of half-width ``w`` are built incrementally
(``S_w = S_{w-1} + (u[j-w] + u[j+w])``) and the rows are then combined in
symmetric pairs ``r, -r``.  That order makes sums of odd-symmetric data
exactly zero and is shared by both backends, so the numba and numpy paths
agree bit for bit.

Set ``DPMVP_DISABLE_NUMBA=1`` to force the numpy path.
"""

from __future__ import annotations

import itertools
import math
import os
from functools import lru_cache

import numpy as np

try:  # pragma: no cover - exercised through the env flag
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

_DISABLED = os.environ.get("DPMVP_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAS_NUMBA and not _DISABLED

OPS = ("sum", "max", "min")
_OP_CODE = {"sum": 0, "max": 1, "min": 2}

# slack for deciding whether a lattice offset lies in the closed ball
RADIUS_SLACK = 1e-9


def use_numba() -> bool:
    return USE_NUMBA


def set_backend(name: str) -> None:
    """Select ``"numba"`` or ``"numpy"`` at runtime (tests and benchmarks)."""
    global USE_NUMBA
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError(f"unknown backend {name!r}")


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


@lru_cache(maxsize=256)
def row_layout(dim: int, radius: float):
    """Rows of the closed lattice ball of ``radius`` (lattice units).

    Returns ``(center_width, pairs, wmax)`` where ``pairs`` lists
    ``(row_offset, width)`` for one representative of each ``{r, -r}`` pair,
    in lexicographic order, and ``wmax`` is the largest half-width.
    """
    r2 = radius * radius * (1.0 + RADIUS_SLACK)
    wmax = int(math.floor(radius * (1.0 + RADIUS_SLACK)))
    pairs = []
    center = None
    for row in itertools.product(range(-wmax, wmax + 1), repeat=dim - 1):
        rr = sum(k * k for k in row)
        if rr > r2:
            continue
        w = int(math.floor(math.sqrt(max(r2 - rr, 0.0))))
        if all(k == 0 for k in row):
            center = w
            continue
        if row > tuple(-k for k in row):
            pairs.append((row, w))
    return center, tuple(pairs), wmax


@lru_cache(maxsize=256)
def ball_offsets(dim: int, radius: float) -> np.ndarray:
    """All lattice offsets of the closed ball, lexicographically sorted."""
    r2 = radius * radius * (1.0 + RADIUS_SLACK)
    wmax = int(math.floor(radius * (1.0 + RADIUS_SLACK)))
    rng = np.arange(-wmax, wmax + 1)
    grid = np.array(list(itertools.product(rng, repeat=dim)), dtype=np.int64)
    keep = (grid**2).sum(axis=1) <= r2
    out = grid[keep]
    out.flags.writeable = False
    return out


def ball_count(dim: int, radius: float) -> int:
    return len(ball_offsets(dim, radius))


# --------------------------------------------------------------------------
# numpy path


def _shift_last(u: np.ndarray, k: int) -> np.ndarray:
    """v[..., j] = u[..., j + k], NaN where out of range."""
    out = np.full_like(u, np.nan)
    n = u.shape[-1]
    if k >= 0:
        if k < n:
            out[..., : n - k] = u[..., k:]
    else:
        if -k < n:
            out[..., -k:] = u[..., : n + k]
    return out


def _shift_rows(u: np.ndarray, row) -> np.ndarray:
    """v[i + 0, j] = u[i + row, j] over the leading axes, NaN outside."""
    out = np.full_like(u, np.nan)
    dst = []
    src = []
    for k, n in zip(row, u.shape[:-1]):
        if abs(k) >= n:
            return out
        if k >= 0:
            dst.append(slice(0, n - k))
            src.append(slice(k, n))
        else:
            dst.append(slice(-k, n))
            src.append(slice(0, n + k))
    out[tuple(dst)] = u[tuple(src)]
    return out


def _row_partials_numpy(u: np.ndarray, wmax: int, op: int):
    parts = [u.copy()]
    cur = parts[0]
    for w in range(1, wmax + 1):
        left = _shift_last(u, -w)
        right = _shift_last(u, w)
        if op == 0:
            cur = cur + (left + right)
        elif op == 1:
            cur = np.maximum(cur, np.maximum(left, right))
        else:
            cur = np.minimum(cur, np.minimum(left, right))
        parts.append(cur)
    return parts


def _ball_reduce_numpy(u: np.ndarray, radius: float, op: int) -> np.ndarray:
    center, pairs, wmax = row_layout(u.ndim, radius)
    parts = _row_partials_numpy(u, wmax, op)
    acc = parts[center].copy()
    for row, w in pairs:
        a = _shift_rows(parts[w], row)
        b = _shift_rows(parts[w], tuple(-k for k in row))
        if op == 0:
            acc = acc + (a + b)
        elif op == 1:
            acc = np.maximum(acc, np.maximum(a, b))
        else:
            acc = np.minimum(acc, np.minimum(a, b))
    return acc


# --------------------------------------------------------------------------
# numba path (flat indexing, same operation order as above)

if HAS_NUMBA:

    @numba.njit(inline="always", cache=True)
    def _red(a, b, op):  # pragma: no cover - jitted
        # callers guarantee NaN-free input, so plain comparisons match numpy
        if op == 0:
            return a + b
        if op == 1:
            return a if a >= b else b
        return a if a <= b else b

    @numba.njit(cache=True)
    def _row_partials_numba(flat, nlast, wmax, op):  # pragma: no cover - jitted
        size = flat.shape[0]
        nlines = size // nlast
        parts = np.empty((wmax + 1, size))
        for line in range(nlines):
            base = line * nlast
            for j in range(wmax, nlast - wmax):
                i = base + j
                cur = flat[i]
                parts[0, i] = cur
                for w in range(1, wmax + 1):
                    cur = _red(cur, _red(flat[i - w], flat[i + w], op), op)
                    parts[w, i] = cur
        return parts

    @numba.njit(cache=True)
    def _combine_numba(parts, bases, jlo, jhi, center, deltas, widths, op, out):  # pragma: no cover
        nrow = deltas.shape[0]
        for b in range(bases.shape[0]):
            base = bases[b]
            for j in range(jlo, jhi):
                i = base + j
                acc = parts[center, i]
                for r in range(nrow):
                    d = deltas[r]
                    w = widths[r]
                    acc = _red(acc, _red(parts[w, i + d], parts[w, i - d], op), op)
                out[i] = acc


def _ball_reduce_numba(u: np.ndarray, radius: float, op: int) -> np.ndarray:
    center, pairs, wmax = row_layout(u.ndim, radius)
    shape = u.shape
    out = np.full(u.size, np.nan)
    if any(n <= 2 * wmax for n in shape):
        return out.reshape(shape)
    flat = np.ascontiguousarray(u, dtype=np.float64).ravel()
    parts = _row_partials_numba(flat, shape[-1], wmax, op)
    strides = np.array([int(np.prod(shape[a + 1 :])) for a in range(u.ndim - 1)], dtype=np.int64)
    deltas = np.array([int(np.dot(row, strides)) for row, _ in pairs], dtype=np.int64)
    widths = np.array([w for _, w in pairs], dtype=np.int64)
    lead = np.indices(tuple(n - 2 * wmax for n in shape[:-1])).reshape(u.ndim - 1, -1).T + wmax
    bases = np.ascontiguousarray((lead @ strides) * 1, dtype=np.int64)
    _combine_numba(parts, bases, wmax, shape[-1] - wmax, center, deltas, widths, op, out)
    return out.reshape(shape)


def ball_reduce(u: np.ndarray, radius: float, op: str = "sum") -> np.ndarray:
    """Reduce ``u`` over the closed lattice ball of ``radius`` around every node.

    ``radius`` is in lattice units.  Nodes whose ball leaves the array get NaN.
    """
    code = _OP_CODE[op]
    u = np.asarray(u, dtype=np.float64)
    if u.ndim < 2:
        raise ValueError("ball_reduce needs an array of dimension >= 2")
    if USE_NUMBA and not (code and np.isnan(u).any()):
        # NaN propagation through max/min is left to the numpy path
        return _ball_reduce_numba(u, radius, code)
    return _ball_reduce_numpy(u, radius, code)


def ball_mean(u: np.ndarray, radius: float) -> np.ndarray:
    return ball_reduce(u, radius, "sum") / ball_count(u.ndim, radius)
