"""Parabolic mean-value step with time-averaged ball terms, residual and time marching."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    DELTA_GRAD,
    DomainError,
    GridSpec,
    ScalarField,
    StateError,
    Weights,
    _as_expr,
    canonical_time_lags,
    gradient_field,
    sample,
)
from .elliptic import DoublePhase, EquationKind, PxLaplace, operator_coefficients, resolve, residual_terms
from .expr import jet
from .quadrature import ball_average_field, ball_extrema_field, shifted_pair_from_average

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 1e6


@dataclass
class ParabolicSpec:
    """Problem data for time marching.

    ``kind`` is ``DoublePhase`` (``a`` may depend on ``t``) or ``PLaplace``.
    ``initial`` is sampled at non-positive times to seed the history and
    ``boundary`` supplies collar values at each new time.
    """

    kind: EquationKind
    eps: float
    tau: float
    horizon: float
    initial: object
    boundary: object
    grid: GridSpec
    reference: object = None
    delta_grad: float = DELTA_GRAD

    def __post_init__(self):
        self.kind = resolve(self.kind)
        if isinstance(self.kind, PxLaplace):
            raise DomainError("the parabolic scheme supports DoublePhase and PLaplace kinds only")
        self.initial = _as_expr(self.initial)
        self.boundary = _as_expr(self.boundary)
        if self.reference is not None:
            self.reference = _as_expr(self.reference)
        if not (self.eps > 0 and self.tau > 0 and self.horizon > 0):
            raise DomainError("eps, tau and horizon must be positive")
        self.grid.check_resolution(self.eps)

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def p(self) -> float:
        return self.kind.p

    @property
    def max_lag(self) -> float:
        """Longest time window, attained where M = 0."""
        return self.eps**2 / (self.dim + self.p)

    def tau_bound(self, m_max: float = 0.0) -> float:
        return self.eps**2 / (4.0 * (self.dim + self.p) * (1.0 + m_max))

    def check_tau(self, m_max: float) -> None:
        bound = self.tau_bound(m_max)
        if self.tau > bound * (1 + 1e-9):
            raise DomainError(
                f"time step {self.tau:g} does not resolve the shortest window: need tau <= {bound:g}"
            )


# --------------------------------------------------------------------------
# History


@dataclass
class _Slice:
    t: float
    values: np.ndarray
    avg: np.ndarray | None = None
    midsum: np.ndarray | None = None


@dataclass
class HistoryBuffer:
    """Time-stamped lattice slices with uniform spacing ``tau``, oldest first."""

    grid: GridSpec
    eps: float
    tau: float
    capacity: int
    slices: list = field(default_factory=list)

    @classmethod
    def for_spec(cls, spec: ParabolicSpec) -> "HistoryBuffer":
        k = int(math.ceil(spec.max_lag / spec.tau - 1e-9)) + 1
        return cls(spec.grid, spec.eps, spec.tau, k + 1)

    def push(self, t: float, values: np.ndarray) -> None:
        if self.slices:
            last = self.slices[-1].t
            if not abs((t - last) - self.tau) <= 1e-9 * max(self.tau, abs(t)):
                raise StateError(f"slice at t={t} breaks the uniform step {self.tau} after t={last}")
        v = np.array(values, dtype=float)
        v.flags.writeable = False
        self.slices.append(_Slice(float(t), v))
        if len(self.slices) > self.capacity:
            del self.slices[0]

    @property
    def times(self) -> list:
        return [s.t for s in self.slices]

    @property
    def latest(self) -> _Slice:
        if not self.slices:
            raise StateError("empty history")
        return self.slices[-1]

    def spans(self, t_new: float, lag: float) -> bool:
        return bool(self.slices) and self.slices[0].t <= t_new - lag + 1e-12 * max(1.0, abs(t_new))

    def ensure_terms(self, s: _Slice, need_mid: bool) -> None:
        if s.avg is None:
            s.avg = ball_average_field(s.values, self.grid, self.eps)
        if need_mid and s.midsum is None:
            lo, hi = ball_extrema_field(s.values, self.grid, self.eps)
            s.midsum = lo + hi


def window_weights(lag: np.ndarray, tau: float, nslices: int) -> np.ndarray:
    """Trapezoid weights of the average over ``[t - lag, t]`` on slices ``t - k*tau``.

    Returns ``(nslices, m)``; the partial last interval uses linear
    interpolation at the window start.  Columns sum to one.
    """
    lag = np.asarray(lag, dtype=float)
    w = np.zeros((nslices,) + lag.shape)
    for k in range(nslices - 1):
        ell = np.clip(lag - k * tau, 0.0, tau)
        w[k] += ell / 2.0 * (2.0 - ell / tau)
        w[k + 1] += ell * ell / (2.0 * tau)
    return w / lag


# --------------------------------------------------------------------------
# Step


def _lags(coef, p: float, dim: int, eps: float):
    A, B = canonical_time_lags(coef.M, p, dim)
    return eps**2 / A, eps**2 / B


def _time_average(weights: np.ndarray, fields: list, idx: tuple) -> np.ndarray:
    out = np.zeros(weights.shape[1:])
    for k, f in enumerate(fields):
        wk = weights[k]
        if np.any(wk != 0):
            out = out + wk * f[idx]
    return out


def parabolic_step(
    history: HistoryBuffer,
    spec: ParabolicSpec,
    t_new: float,
    current: np.ndarray | ScalarField | None = None,
    inner_tol: float = 1e-12,
    inner_max: int = 200,
) -> ScalarField:
    """Advance to ``t_new`` with the time-averaged mean-value formula.

    ``current`` supplies the slice at ``t_new`` itself (known data, as in a
    consistency check); the gradient, M, the time lags and the shifted pair
    are then taken from it.  Without it they are frozen from the latest
    stored slice and the ``t_new`` endpoint of the time averages is resolved
    by a short fixed-point loop (its trapezoid weight is at most 1/8).
    """
    grid = spec.grid
    dim = grid.dim
    kind = spec.kind
    eps = spec.eps
    tau = spec.tau
    if abs(history.tau - tau) > 1e-15 * tau:
        raise StateError("history step differs from the spec's tau")
    latest = history.latest
    if abs((t_new - latest.t) - tau) > 1e-9 * max(tau, abs(t_new)):
        raise StateError(f"t_new={t_new} is not one step after the latest slice t={latest.t}")
    if not history.spans(t_new, spec.max_lag + tau):
        raise StateError(f"history does not reach back to t={t_new - spec.max_lag - tau:g}")

    mask = grid.interior_mask()
    idx = np.nonzero(mask)
    if current is not None:
        cur = np.array(current.values if isinstance(current, ScalarField) else current, dtype=float)
        fixed = True
    else:
        cur = latest.values.copy()
        if len(history.slices) >= 2:
            # linear extrapolation in time shortens the fixed-point loop
            cur[mask] = 2.0 * latest.values[mask] - history.slices[-2].values[mask]
        cur[~mask] = sample(spec.boundary, grid, t_new)[~mask]
        fixed = False
    coef_src = cur if fixed else latest.values
    grad = gradient_field(coef_src, grid.h)[(slice(None),) + idx]
    coef = operator_coefficients(kind, grid, idx, grad, eps, spec.delta_grad, t_new)
    w = Weights.for_exponents(kind.exponents, dim)
    lag_a, lag_b = _lags(coef, kind.p, dim, eps)
    past = list(reversed(history.slices))  # k = 1, 2, ...
    nslices = len(past) + 1
    wa = window_weights(lag_a, tau, nslices)
    wb = wa if np.array_equal(lag_a, lag_b) else window_weights(lag_b, tau, nslices)
    need_mid = bool(w.alpha_p != 0 or np.any(coef.M * w.alpha_q != 0))
    for s in past:
        history.ensure_terms(s, need_mid)
    one_m = 1.0 + coef.M
    shift_on = bool(np.any((coef.shift != 0) & (coef.shift_factor != 0)))

    def partial_sums(fields_avg, fields_mid, weights):
        ta_avg = _time_average(weights, fields_avg, idx)
        ta_mid = _time_average(weights, fields_mid, idx) if need_mid else 0.0
        return ta_avg, ta_mid

    # contributions of stored slices are fixed across the inner loop
    past_avg = [None] + [s.avg for s in past]
    past_mid = [None] + [s.midsum for s in past]
    wa_past = wa.copy()
    wa_past[0] = 0.0
    wb_past = wb.copy()
    wb_past[0] = 0.0
    zeros = np.zeros_like(cur)
    avg_a_past, mid_a_past = partial_sums([zeros] + past_avg[1:], [zeros] + past_mid[1:], wa_past)
    if wb is wa:
        avg_b_past, mid_b_past = avg_a_past, mid_a_past
    else:
        avg_b_past, mid_b_past = partial_sums([zeros] + past_avg[1:], [zeros] + past_mid[1:], wb_past)

    spa = 0.0
    if shift_on:
        src_avg = ball_average_field(coef_src, grid, eps)
        spa = coef.shift_factor * shifted_pair_from_average(src_avg, idx, coef.shift)

    def rhs(u_now: np.ndarray) -> np.ndarray:
        avg_now = ball_average_field(u_now, grid, eps)
        if need_mid:
            lo, hi = ball_extrema_field(u_now, grid, eps)
            mid_now = (lo + hi)[idx]
        else:
            mid_now = 0.0
        a_now = avg_now[idx]
        ta_avg_a = avg_a_past + wa[0] * a_now
        ta_mid_a = mid_a_past + wa[0] * mid_now
        ta_avg_b = avg_b_past + wb[0] * a_now
        ta_mid_b = mid_b_past + wb[0] * mid_now
        p_part = w.alpha_p / 2.0 * ta_mid_a + w.beta_p * ta_avg_a
        q_part = w.alpha_q / 2.0 * ta_mid_b + w.beta_q * ta_avg_b
        return p_part / one_m + coef.M * q_part / one_m + spa

    if fixed:
        new_int = rhs(cur)
    else:
        new_int = cur[idx]
        for _ in range(inner_max):
            cand = rhs(cur)
            change = float(np.max(np.abs(cand - new_int), initial=0.0))
            cur = cur.copy()
            cur[idx] = cand
            new_int = cand
            scale = max(1.0, float(np.max(np.abs(cand), initial=0.0)))
            if change <= inner_tol * scale:
                break
    if np.any(np.isnan(new_int)):
        from .core import GeometryError

        raise GeometryError("an eps-ball around an interior node leaves the extended lattice")
    out = cur.copy()
    out[idx] = new_int
    return ScalarField(grid, out)


# --------------------------------------------------------------------------
# Residual


@dataclass(frozen=True)
class ParabolicResidual:
    value: float
    degenerate: bool

    def __float__(self) -> float:
        return self.value


def parabolic_residual(phi, x, t: float, spec_or_kind, delta_grad: float = DELTA_GRAD) -> ParabolicResidual:
    """``φ_t - L[φ]`` at ``(x, t)``; ``φ_t - Δφ`` on the zero-gradient branch (flagged)."""
    kind = spec_or_kind.kind if isinstance(spec_or_kind, ParabolicSpec) else resolve(spec_or_kind)
    x = np.asarray(x, dtype=float)
    j = jet(_as_expr(phi), x, t)
    if j.grad_norm < delta_grad:
        return ParabolicResidual(j.dt - j.laplacian, True)
    L = residual_terms(j, x, kind, t)[0]
    return ParabolicResidual(j.dt - L, False)


def parabolic_consistency_limit(phi, x, t: float, kind, delta_grad: float = DELTA_GRAD):
    """Predicted ``lim (step(φ)(x,t) - φ(x,t)) / eps^2`` and a magnitude scale."""
    kind = resolve(kind)
    x = np.asarray(x, dtype=float)
    j = jet(_as_expr(phi), x, t)
    dim = len(x)
    if j.grad_norm < delta_grad:
        denom = 2.0 * (dim + kind.p)
        return -j.dt / denom, abs(j.dt) / denom
    L, scale, M, p = residual_terms(j, x, kind, t)
    denom = 2.0 * (dim + p) * (1.0 + M)
    return (L - j.dt) / denom, (scale + abs(j.dt)) / denom


# --------------------------------------------------------------------------
# Marching


@dataclass
class MarchResult:
    field: ScalarField
    times: list
    defects: list  # sup-norm defect vs the reference, NaN without one
    steps: int


class BlowUpError(RuntimeError):
    pass


def march(spec: ParabolicSpec) -> MarchResult:
    """Seed the history from the initial data at t <= 0 and step to the horizon."""
    grid = spec.grid
    mask = grid.interior_mask()
    nsteps = int(math.ceil(spec.horizon / spec.tau - 1e-9))
    tau = spec.horizon / nsteps
    if tau != spec.tau:
        spec = ParabolicSpec(
            spec.kind, spec.eps, tau, spec.horizon, spec.initial, spec.boundary, grid, spec.reference, spec.delta_grad
        )
    u0 = sample(spec.initial, grid, 0.0)
    idx = np.nonzero(mask)
    g0 = gradient_field(u0, grid.h)[(slice(None),) + idx]
    m0 = operator_coefficients(spec.kind, grid, idx, g0, spec.eps, spec.delta_grad, 0.0).M
    spec.check_tau(float(np.max(m0, initial=0.0)))
    hist = HistoryBuffer.for_spec(spec)
    k_seed = hist.capacity - 1
    for k in range(k_seed, -1, -1):
        hist.push(-k * tau, sample(spec.initial, grid, -k * tau))
    scale0 = max(float(np.max(np.abs(u0))), 1e-300)
    times, defects = [], []
    u = ScalarField(grid, u0)
    for n in range(1, nsteps + 1):
        t = n * tau
        u = parabolic_step(hist, spec, t)
        hist.push(t, u.values)
        sup = float(np.max(np.abs(u.values)))
        if sup > BLOWUP_FACTOR * scale0 and sup > 0:
            raise BlowUpError(f"sup|u| = {sup:g} exceeds {BLOWUP_FACTOR:g} x initial sup at t={t:g}")
        times.append(t)
        if spec.reference is not None:
            ref = sample(spec.reference, grid, t)
            defects.append(float(np.max(np.abs(u.values[mask] - ref[mask]), initial=0.0)))
        else:
            defects.append(math.nan)
    return MarchResult(u, times, defects, nsteps)


def consistency_defect(phi, x, t, kind, eps, h=None, tau_fraction: float = 0.25, delta_grad=DELTA_GRAD):
    """One step of the scheme on sampled ``φ`` at ``(x, t)``: returns ``(step - φ(x,t)) / eps^2``.

    The grid is a small box around ``x``; ``tau = lag / 4`` by default.
    """
    kind = resolve(kind)
    x = np.asarray(x, dtype=float)
    dim = len(x)
    h = eps / 8 if h is None else h
    phi = _as_expr(phi)
    # M at (x, t) from the exact gradient fixes the local window
    j = jet(phi, x, t)
    pts = [np.array([v]) for v in x]
    if isinstance(kind, DoublePhase):
        ga = kind.a.gradient(pts, t, h=h)
        grad_a_max = float(np.linalg.norm(ga[:, 0]))
        a = float(kind.a.values(pts, t)[0])
        from .core import compute_M

        M = compute_M(a, j.grad_norm, kind.p, kind.q, dim) if j.grad_norm >= delta_grad or kind.q == kind.p else 0.0
    else:
        grad_a_max, M = 0.0, 0.0
    lag = eps**2 / ((dim + kind.p) * (1.0 + M))
    tau = tau_fraction * lag
    grid = GridSpec.for_eps(dim, [(xi - h, xi + h) for xi in x], eps, h=h, grad_a_max=grad_a_max + 1.0)
    spec = ParabolicSpec(kind, eps, tau, 1.0, phi, phi, grid, delta_grad=delta_grad)
    hist = HistoryBuffer.for_spec(spec)
    k_max = hist.capacity
    for k in range(k_max, 0, -1):
        hist.push(t - k * tau, sample(phi, grid, t - k * tau))
    now = sample(phi, grid, t)
    out = parabolic_step(hist, spec, t, current=now)
    i = grid.index_of(x)
    return (out.values[i] - now[i]) / eps**2
