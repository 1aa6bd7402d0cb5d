"""Elliptic mean-value operator, PDE residual and the Dirichlet fixed-point solver."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import (
    DELTA_GRAD,
    CoefficientField,
    DegenerateGradientError,
    DomainError,
    ExponentField,
    GeometryError,
    Exponents,
    GridSpec,
    ScalarField,
    Weights,
    _as_expr,
    compute_M,
    compute_weights,
    gradient_field,
    sample,
)
from .expr import BinOp, Num, evaluate, jet
from .quadrature import ball_average_field, ball_extrema_field, shifted_pair_from_average

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# Equation kinds


@dataclass(frozen=True)
class DoublePhase:
    exponents: Exponents
    a: CoefficientField

    def __init__(self, p, q=None, a="0"):
        exps = p if isinstance(p, Exponents) else Exponents(float(p), float(p if q is None else q))
        object.__setattr__(self, "exponents", exps)
        object.__setattr__(self, "a", a if isinstance(a, CoefficientField) else CoefficientField(a))

    @property
    def p(self) -> float:
        return self.exponents.p

    @property
    def q(self) -> float:
        return self.exponents.q


@dataclass(frozen=True)
class PLaplace:
    p: float

    def __post_init__(self):
        Exponents(self.p, self.p)


@dataclass(frozen=True)
class VariableCoefficient:
    """``-div(a~(x) |grad u|^(p-2) grad u) = 0`` with ``a~ >= 1``."""

    p: float
    a_tilde: CoefficientField

    def __init__(self, p, a_tilde):
        Exponents(float(p), float(p))
        object.__setattr__(self, "p", float(p))
        field = a_tilde if isinstance(a_tilde, CoefficientField) else CoefficientField(a_tilde)
        object.__setattr__(self, "a_tilde", field)


@dataclass(frozen=True)
class PxLaplace:
    p_field: ExponentField

    def __init__(self, p_field):
        field = p_field if isinstance(p_field, ExponentField) else ExponentField(p_field)
        object.__setattr__(self, "p_field", field)


EquationKind = Union[DoublePhase, PLaplace, VariableCoefficient, PxLaplace]


def resolve(kind: EquationKind):
    """Map the constant-exponent variants onto ``DoublePhase``."""
    if isinstance(kind, PLaplace):
        return DoublePhase(kind.p, kind.p, "0")
    if isinstance(kind, VariableCoefficient):
        return DoublePhase(kind.p, kind.p, CoefficientField(BinOp("-", kind.a_tilde.expr, Num(1.0))))
    if isinstance(kind, (DoublePhase, PxLaplace)):
        return kind
    raise TypeError(f"unknown equation kind {kind!r}")


def min_exponent(kind: EquationKind, grid: GridSpec | None = None) -> float:
    kind = resolve(kind)
    if isinstance(kind, PxLaplace):
        if grid is None:
            raise ValueError("variable exponent needs a grid")
        return float(np.min(kind.p_field.values(grid.coords())))
    return kind.p


def base_exponent(kind: EquationKind) -> float:
    kind = resolve(kind)
    if isinstance(kind, PxLaplace):
        raise ValueError("variable exponent has no single p")
    return kind.p


# --------------------------------------------------------------------------
# Pointwise coefficients of the operator


@dataclass
class OperatorCoefficients:
    """Per-point weights of the three terms, plus the shift in lattice units."""

    mid: np.ndarray  # multiplies (max + min)
    avg: np.ndarray  # multiplies the ball average
    shift_factor: np.ndarray  # multiplies the shifted-pair average
    shift: np.ndarray  # (N, m), eps * grad a / h
    M: np.ndarray
    p: np.ndarray
    grad_norm: np.ndarray


def operator_coefficients(
    kind: EquationKind,
    grid: GridSpec,
    idx: tuple,
    grad: np.ndarray,
    eps: float,
    delta_grad: float = DELTA_GRAD,
    t: float | None = None,
) -> OperatorCoefficients:
    """Coefficients of the mean-value operator at lattice points ``idx`` given gradients ``grad``."""
    kind = resolve(kind)
    dim = grid.dim
    pts = [c[idx] for c in grid.coords()]
    gnorm = np.sqrt(np.sum(grad * grad, axis=0))
    if isinstance(kind, PxLaplace):
        p = kind.p_field.values(pts, t)
        alpha, beta = compute_weights(p, dim)
        grad_p = kind.p_field.gradient(pts, t, h=grid.h)
        grid.check_collar(eps, float(np.max(np.linalg.norm(grad_p, axis=0), initial=0.0)))
        floored = np.maximum(gnorm, delta_grad)
        cap = math.log(1.0 / delta_grad)
        lg = np.clip(np.log(floored), -cap, cap)
        zero = np.zeros_like(p)
        return OperatorCoefficients(
            mid=alpha / 2.0,
            avg=beta,
            shift_factor=eps * lg / (4.0 * (dim + p)),
            shift=eps * grad_p / grid.h,
            M=zero,
            p=p,
            grad_norm=gnorm,
        )
    p, q = kind.p, kind.q
    w = Weights.for_exponents(kind.exponents, dim)
    a = kind.a.values(pts, t)
    grad_a = kind.a.gradient(pts, t, h=grid.h)
    grid.check_collar(eps, float(np.max(np.linalg.norm(grad_a, axis=0), initial=0.0)))
    if q > p:
        small = gnorm < delta_grad
        g_used = np.where(small, 0.0, gnorm)
    else:
        small = np.zeros(gnorm.shape, dtype=bool)
        g_used = gnorm
    M = compute_M(a, g_used, p, q, dim)
    M = np.where(small, 0.0, M)
    one_m = 1.0 + M
    mid = (w.alpha_p + M * w.alpha_q) / (2.0 * one_m)
    avg = (w.beta_p + M * w.beta_q) / one_m
    shift_factor = np.where(small, 0.0, eps * np.power(g_used, q - p) / (4.0 * (dim + p) * one_m))
    return OperatorCoefficients(
        mid=mid,
        avg=avg,
        shift_factor=shift_factor,
        shift=eps * grad_a / grid.h,
        M=M,
        p=np.full(gnorm.shape, p),
        grad_norm=gnorm,
    )


def combine_terms(coef: OperatorCoefficients, midsum, avg, spa):
    """``mid*(max+min) + avg*average + shift_factor*shifted_pair`` in a fixed order."""
    out = coef.avg * avg
    if midsum is not None:
        out = coef.mid * midsum + out
    if spa is not None:
        out = out + coef.shift_factor * spa
    return out


def needs_extrema(coef: OperatorCoefficients) -> bool:
    return bool(np.any(coef.mid != 0))


def needs_shift(coef: OperatorCoefficients) -> bool:
    return bool(np.any((coef.shift != 0) & (coef.shift_factor != 0)))


def _apply_values(values: np.ndarray, grid: GridSpec, kind, eps: float, delta_grad: float, t=None) -> np.ndarray:
    mask = grid.interior_mask()
    idx = np.nonzero(mask)
    grad = gradient_field(values, grid.h)[(slice(None),) + idx]
    coef = operator_coefficients(kind, grid, idx, grad, eps, delta_grad, t)
    avg_field = ball_average_field(values, grid, eps)
    avg = avg_field[idx]
    midsum = None
    if needs_extrema(coef):
        lo, hi = ball_extrema_field(values, grid, eps)
        midsum = lo[idx] + hi[idx]
    spa = shifted_pair_from_average(avg_field, idx, coef.shift) if needs_shift(coef) else None
    out_int = combine_terms(coef, midsum, avg, spa)
    if np.any(np.isnan(out_int)):
        raise GeometryError("an eps-ball around an interior node leaves the extended lattice")
    out = values.copy()
    out[idx] = out_int
    return out


def mvp_apply(field: ScalarField, kind: EquationKind, eps: float, delta_grad: float = DELTA_GRAD) -> ScalarField:
    """One application of the discrete mean-value operator at every interior node.

    Collar and box-boundary nodes pass through unchanged.
    """
    field.grid.check_resolution(eps)
    return ScalarField(field.grid, _apply_values(field.values, field.grid, kind, eps, delta_grad))


# --------------------------------------------------------------------------
# PDE residual


def _coefficient_jet(cf, x, t):
    j = jet(cf.expr, x, t)
    return j.value, j.grad


def residual_terms(j, x, kind: EquationKind, t=None):
    """``(L, scale, M, p)``: the operator value, the sum of term magnitudes, M and p at ``x``."""
    kind = resolve(kind)
    dim = len(x)
    g = j.grad
    gn = float(np.linalg.norm(g))
    dinf = j.inf_laplacian()
    lap = j.laplacian
    if isinstance(kind, PxLaplace):
        pj = jet(kind.p_field.expr, x, t)
        p = pj.value
        if not p > 1:
            raise DomainError(f"exponent {p} <= 1 at {tuple(x)}")
        log_term = math.log(gn) * float(pj.grad @ g)
        L = (p - 2) * dinf + lap + log_term
        scale = abs((p - 2) * dinf) + abs(lap) + abs(log_term)
        return L, scale, 0.0, p
    p, q = kind.p, kind.q
    a, grad_a = _coefficient_jet(kind.a, x, t)
    if a < 0:
        raise DomainError(f"coefficient a={a} < 0 at {tuple(x)}")
    gp = gn ** (q - p)
    t_p = (p - 2) * dinf + lap
    t_q = a * gp * ((q - 2) * dinf + lap)
    t_a = gp * float(grad_a @ g)
    L = t_p + t_q + t_a
    scale = abs((p - 2) * dinf) + abs(lap) + a * gp * (abs((q - 2) * dinf) + abs(lap)) + abs(t_a)
    M = compute_M(a, gn, p, q, dim)
    return L, scale, M, p


def elliptic_residual(phi, x, kind: EquationKind, delta_grad: float = DELTA_GRAD, t: float | None = None) -> float:
    """``(p-2)Δ∞φ + Δφ + a|∇φ|^(q-p)((q-2)Δ∞φ + Δφ) + |∇φ|^(q-p)<∇a, ∇φ>`` at ``x``.

    Positive values mean subsolution-side slack (the equation is ``-L = 0``).
    For ``PxLaplace`` the operator is ``(p-2)Δ∞φ + Δφ + ln|∇φ|<∇p, ∇φ>``.
    """
    x = np.asarray(x, dtype=float)
    j = jet(_as_expr(phi), x, t)
    if j.grad_norm < delta_grad:
        raise DegenerateGradientError(f"|grad phi| = {j.grad_norm:g} < {delta_grad:g} at {tuple(x)}")
    return float(residual_terms(j, x, kind, t)[0])


def consistency_limit(phi, x, kind: EquationKind, delta_grad: float = DELTA_GRAD, t=None):
    """Predicted ``lim (T_eps[phi](x) - phi(x)) / eps^2`` and a magnitude scale for tolerances."""
    x = np.asarray(x, dtype=float)
    j = jet(_as_expr(phi), x, t)
    if j.grad_norm < delta_grad:
        raise DegenerateGradientError(f"|grad phi| = {j.grad_norm:g} < {delta_grad:g} at {tuple(x)}")
    L, scale, M, p = residual_terms(j, x, kind, t)
    denom = 2.0 * (len(x) + p) * (1.0 + M)
    return L / denom, scale / denom


# --------------------------------------------------------------------------
# Grid residual


def _fd_derivatives(values: np.ndarray, h: float, idx: tuple):
    """Second-order central gradient and Hessian at lattice points ``idx``."""
    dim = values.ndim
    m = len(idx[0])
    grad = np.empty((dim, m))
    hess = np.empty((dim, dim, m))

    def at(offset):
        return values[tuple(i + o for i, o in zip(idx, offset))]

    zero = [0] * dim
    u0 = at(zero)
    for i in range(dim):
        e = list(zero)
        e[i] = 1
        up = at(e)
        e[i] = -1
        dn = at(e)
        grad[i] = (up - dn) / (2 * h)
        hess[i, i] = (up - 2 * u0 + dn) / (h * h)
        for k in range(i + 1, dim):
            def o(a, b):
                v = list(zero)
                v[i], v[k] = a, b
                return at(v)

            d = (o(1, 1) - o(1, -1) - o(-1, 1) + o(-1, -1)) / (4 * h * h)
            hess[i, k] = hess[k, i] = d
    return grad, hess


def grid_residual(
    field: ScalarField,
    kind: EquationKind,
    delta_grad: float = DELTA_GRAD,
    t=None,
    smooth_radius: float | None = None,
) -> np.ndarray:
    """Operator residual of a grid function at interior nodes.

    With ``smooth_radius`` the field is first replaced by its ball average of
    that radius; lattice extrema leave kinks whose raw second differences do
    not shrink with h.  Entries are NaN where |grad| < delta_grad or the
    smoothed stencil leaves the lattice.
    """
    kind = resolve(kind)
    grid = field.grid
    values = field.values
    if smooth_radius:
        values = ball_average_field(values, grid, smooth_radius)
    idx = np.nonzero(grid.interior_mask())
    g, H = _fd_derivatives(values, grid.h, idx)
    gn = np.sqrt(np.sum(g * g, axis=0))
    ok = (gn >= delta_grad) & np.isfinite(gn) & np.all(np.isfinite(H), axis=(0, 1))
    safe = np.where(ok, gn, 1.0)
    dinf = np.einsum("im,ijm,jm->m", g, H, g) / (safe * safe)
    lap = np.einsum("iim->m", H)
    pts = [c[idx] for c in grid.coords()]
    if isinstance(kind, PxLaplace):
        p = kind.p_field.values(pts, t)
        grad_p = kind.p_field.gradient(pts, t, h=grid.h)
        L = (p - 2) * dinf + lap + np.log(safe) * np.sum(grad_p * g, axis=0)
    else:
        p, q = kind.p, kind.q
        a = kind.a.values(pts, t)
        grad_a = kind.a.gradient(pts, t, h=grid.h)
        gp = np.power(safe, q - p)
        L = (p - 2) * dinf + lap + a * gp * ((q - 2) * dinf + lap) + gp * np.sum(grad_a * g, axis=0)
    return np.where(ok, L, np.nan)


# --------------------------------------------------------------------------
# Solver


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    final_update_norm: float
    residual_norm: float
    converged: bool
    tol: float = math.inf

    def __post_init__(self):
        if self.converged and not self.final_update_norm <= self.tol:
            raise ValueError("a converged report needs final_update_norm <= tol")


def blend_boundary(boundary, grid: GridSpec) -> np.ndarray:
    """Transfinite multilinear blend of the boundary data over the box (Boolean sum of face projectors)."""
    e = _as_expr(boundary)
    coords = grid.coords()
    dim = grid.dim
    env = {f"x{i + 1}": c for i, c in enumerate(coords)}
    out = np.zeros(grid.shape)
    lam = []
    for (lo, hi), x in zip(grid.box, coords):
        lam.append(((hi - x) / (hi - lo), (x - lo) / (hi - lo)))
    for size in range(1, dim + 1):
        sign = 1.0 if size % 2 else -1.0
        for axes in itertools.combinations(range(dim), size):
            for corner in itertools.product((0, 1), repeat=size):
                w = np.ones(grid.shape)
                local = dict(env)
                for ax, c in zip(axes, corner):
                    w = w * lam[ax][c]
                    local[f"x{ax + 1}"] = np.full(grid.shape, grid.box[ax][c])
                with np.errstate(all="ignore"):
                    f = np.broadcast_to(np.asarray(evaluate(e, local), dtype=float), grid.shape)
                    out = out + sign * w * f
    return out


def default_damping(kind: EquationKind, grid: GridSpec) -> float:
    kind = resolve(kind)
    pmin = min_exponent(kind, grid)
    return 1.0 if pmin >= 2 else 0.5


def initial_guess(boundary, grid: GridSpec) -> np.ndarray:
    u = sample(boundary, grid)
    mask = grid.interior_mask()
    u[mask] = blend_boundary(boundary, grid)[mask]
    return u


def solve_dirichlet(
    kind: EquationKind,
    grid: GridSpec,
    boundary,
    eps: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
    damping: float | None = None,
    delta_grad: float = DELTA_GRAD,
    initial=None,
):
    """Damped fixed-point iteration ``u <- (1-θ)u + θ T_eps[u]`` with Dirichlet data on the collar.

    ``initial`` (array, ScalarField or expression) overrides the interior of
    the blended starting guess.  Returns ``(ScalarField, SolveReport)``;
    running out of iterations is reported, not raised.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    grid.check_resolution(eps)
    theta = default_damping(kind, grid) if damping is None else float(damping)
    if not 0 < theta <= 1:
        raise DomainError(f"damping must lie in (0, 1], got {theta}")
    u = initial_guess(boundary, grid)
    if not np.all(np.isfinite(u)):
        raise DomainError("boundary data is not finite on the collar")
    mask = grid.interior_mask()
    if initial is not None:
        if isinstance(initial, ScalarField):
            init = initial.values
        elif isinstance(initial, np.ndarray):
            init = initial
        else:
            init = sample(initial, grid)
        u[mask] = init[mask]
    update = math.inf
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        tu = _apply_values(u, grid, kind, eps, delta_grad)
        new = (1.0 - theta) * u + theta * tu if theta != 1.0 else tu
        update = float(np.max(np.abs(new[mask] - u[mask]), initial=0.0))
        u = new
        if not math.isfinite(update):
            break
        if update <= tol:
            converged = True
            break
    if not converged:
        log.info("fixed-point iteration stopped after %d sweeps, update %.3e", it, update)
    field = ScalarField(grid, u) if np.all(np.isfinite(u)) else None
    if field is None:
        return ScalarField(grid, np.nan_to_num(u)), SolveReport(it, update, math.inf, False, tol)
    res = grid_residual(field, kind, delta_grad, smooth_radius=eps / 2)
    res_norm = float(np.nanmax(np.abs(res))) if np.any(np.isfinite(res)) else 0.0
    return field, SolveReport(it, update, res_norm, converged, tol)
