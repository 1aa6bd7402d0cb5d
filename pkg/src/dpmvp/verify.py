"""Numerical certification of the ball expansions and the two consistency identities.

Lemma checks work in the continuum: ball averages use a Gauss product rule
(polar in 2D, spherical in 3D) and ball extrema use dense sampling refined
by Nelder-Mead, so quadratic test functions come out exact to rounding.
Consistency checks drive the lattice operators on sampled test functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import optimize

from .core import DELTA_GRAD, DegenerateGradientError, DomainError, GridSpec, _as_expr, sample
from .elliptic import (
    DoublePhase,
    EquationKind,
    PxLaplace,
    _apply_values,
    consistency_limit,
    resolve,
)
from .expr import Expression, evaluate, is_time_dependent, jet, to_text
from .parabolic import parabolic_consistency_limit, consistency_defect

LEMMAS = ("minmax", "average", "shift", "par-minmax", "par-average", "par-shift", "consistency", "par-consistency")
DEFAULT_EPS = (1 / 4, 1 / 8, 1 / 16, 1 / 32)
CONSISTENCY_EPS = (1 / 8, 1 / 16, 1 / 32, 1 / 64)
ABS_FLOOR = 1e-8
TIME_SUBSTEPS = 16


# --------------------------------------------------------------------------
# Test functions


@dataclass(frozen=True)
class TestFunction:
    """Analytic test function with evaluation points.

    ``tag`` is one of affine, quadratic, radial-p-harmonic,
    harmonic-polynomial, product-exponential, custom.  ``points`` are
    space points, or ``(x..., t)`` tuples for space-time functions.
    """

    __test__ = False  # not a pytest class

    name: str
    expr: Expression
    tag: str
    points: tuple
    space_time: bool = False

    @classmethod
    def make(cls, name, text, tag, points, space_time=None):
        e = _as_expr(text)
        st = is_time_dependent(e) if space_time is None else space_time
        return cls(name, e, tag, tuple(tuple(float(v) for v in p) for p in points), st)

    @property
    def dim(self) -> int:
        n = len(self.points[0])
        return n - 1 if self.space_time else n

    @property
    def text(self) -> str:
        return to_text(self.expr)


def library() -> list:
    """Bundled elliptic test functions.

    Points of quadratics are chosen where the gradient is an eigenvector of
    the Hessian: only there are the midrange expansions exact.
    """
    return [
        TestFunction.make("affine", "1 + 2*x1 - x2", "affine", [(0.3, 0.2), (1, 0), (-0.5, 0.7)]),
        TestFunction.make("sq-norm", "x1^2 + x2^2", "quadratic", [(1, 0), (0.6, 0.8), (-0.5, 0.3)]),
        TestFunction.make("saddle", "x1^2 - x2^2", "harmonic-polynomial", [(1, 0), (0, 1), (-0.8, 0)]),
        TestFunction.make("product", "x1*x2", "harmonic-polynomial", [(0.5, 0.5), (1, 1), (-0.7, -0.7)]),
        TestFunction.make("radial", "norm()^(2/3)", "radial-p-harmonic", [(1.5, 0), (0, 1.2), (1, 1)]),
        TestFunction.make("sin-exp", "sin(x1)*exp(x2)", "product-exponential", [(0.4, 0.2), (1, 0), (0.2, -0.3)]),
        TestFunction.make("cubic", "x1^3 - 3*x1*x2^2", "harmonic-polynomial", [(1, 0.2), (0.5, 0.5), (-0.7, 0.3)]),
        TestFunction.make("log-norm", "log(1 + x1^2 + 2*x2^2)", "custom", [(1, 0.5), (0.5, -1), (-1, 0.3)]),
        TestFunction.make("sq-norm-3d", "x1^2 + x2^2 + x3^2", "quadratic", [(1, 0, 0), (0.5, 0.5, 0.5), (0, 0, -1)]),
        TestFunction.make("exp-cos-3d", "exp(x1)*cos(x2) + x3", "product-exponential",
                          [(0.2, 0.3, 0.1), (0, 0.5, 0), (-0.4, 0.1, 0.6)]),
    ]


def parabolic_library() -> list:
    """Bundled space-time test functions; points are ``(x1, x2, t)``."""
    return [
        TestFunction.make("heat-sin", "exp(-t)*sin(x1)", "product-exponential",
                          [(0.5, 0.3, 0.3), (1.0, 0.0, 0.5), (-0.7, 0.2, 0.1)], True),
        TestFunction.make("time", "t", "affine", [(0.5, 0.3, 0.3), (0, 0, 1), (1, -1, 0.5)], True),
        TestFunction.make("affine-static", "1 + x1 - 2*x2", "affine", [(0.2, 0.1, 0.4), (1, 1, 1), (-1, 0, 0.2)], True),
        TestFunction.make("heat-quad", "x1^2 + x2^2 + 4*t", "quadratic", [(1, 0, 0.2), (0, 1, 0.5), (-0.6, 0.8, 1)], True),
        TestFunction.make("heat-prod", "exp(-2*t)*sin(x1)*cos(x2)", "product-exponential",
                          [(0.5, 0.2, 0.1), (1, 0, 0.3), (-0.4, 0.3, 0.2)], True),
    ]


# --------------------------------------------------------------------------
# Reports


@dataclass
class ExpansionReport:
    """Remainder sequence of one expansion at one point.

    ``remainder`` is the measured quantity minus its predicted leading
    terms, ``normalized`` is ``remainder / eps^2``.
    """

    lemma: str
    point: tuple
    eps: tuple
    remainder: tuple
    normalized: tuple
    verdict: bool
    tolerance: float
    target: float = 0.0
    function: str = ""
    monotone: bool = True
    detail: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.point = tuple(float(v) for v in self.point)
        e = self.eps
        if len(e) < 4:
            raise ValueError("an expansion report needs at least 4 eps values")
        if any(not b < a for a, b in zip(e, e[1:])):
            raise ValueError("eps sequence must be strictly decreasing")

    def rows(self):
        pt = " ".join(repr(v) for v in self.point)
        for e, r, n in zip(self.eps, self.remainder, self.normalized):
            yield (self.lemma, pt, e, r, n, "pass" if self.verdict else "fail")

    def __str__(self) -> str:
        flag = "pass" if self.verdict else "fail"
        return (
            f"{self.lemma} {self.function} at {self.point}: normalized {self.normalized[-1]:.3e} "
            f"(tol {self.tolerance:.3e}) {flag}"
        )


def _check_eps(eps_seq) -> tuple:
    e = tuple(float(v) for v in eps_seq)
    if len(e) < 4 or any(not b < a for a, b in zip(e, e[1:])) or e[-1] <= 0:
        raise DomainError("eps sequence must be positive, strictly decreasing and have at least 4 entries")
    return e


def _non_increasing(devs, floor: float, last: int = 3) -> bool:
    d = [abs(v) for v in devs[-last:]]
    return all(b <= a + floor for a, b in zip(d, d[1:]))


# --------------------------------------------------------------------------
# Continuum ball quadrature and extrema


@lru_cache(maxsize=32)
def ball_rule(dim: int, n: int = 12):
    """Nodes (unit ball) and weights (summing to 1) of a Gauss product rule.

    Exact for polynomials of degree < 2n in the radius and for
    trigonometric/spherical harmonics of moderate degree.
    """
    xr, wr = np.polynomial.legendre.leggauss(n)
    r = 0.5 * (xr + 1.0)
    if dim == 2:
        wr = 0.5 * wr * r  # ∫ r dr
        m = 4 * n
        th = 2 * np.pi * (np.arange(m) + 0.5) / m
        R, T = np.meshgrid(r, th, indexing="ij")
        W = np.outer(wr, np.full(m, 1.0 / m))
        pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    elif dim == 3:
        wr = 0.5 * wr * r * r
        xc, wc = np.polynomial.legendre.leggauss(n)
        m = 4 * n
        ph = 2 * np.pi * (np.arange(m) + 0.5) / m
        R, C, P = np.meshgrid(r, xc, ph, indexing="ij")
        S = np.sqrt(1.0 - C * C)
        W = wr[:, None, None] * wc[None, :, None] * np.full(m, 1.0 / m)[None, None, :]
        pts = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
    else:
        raise DomainError(f"continuum ball quadrature is implemented for N in (2, 3), got {dim}")
    W = W.reshape(-1)
    return pts, W / W.sum()


def _values(expr: Expression, pts: np.ndarray, t=None) -> np.ndarray:
    env = {f"x{i + 1}": pts[:, i] for i in range(pts.shape[1])}
    if t is not None:
        env["t"] = t
    with np.errstate(all="ignore"):
        v = evaluate(expr, env)
    return np.broadcast_to(np.asarray(v, dtype=float), (pts.shape[0],))


def continuum_average(expr: Expression, x, eps: float, t=None, shift=None) -> float:
    """``⨍_{B_eps(x)} φ(y [+ shift])`` by the Gauss product rule."""
    x = np.asarray(x, dtype=float)
    nodes, w = ball_rule(len(x))
    pts = x + eps * nodes
    if shift is not None:
        pts = pts + np.asarray(shift, dtype=float)
    return float(w @ _values(expr, pts, t))


@lru_cache(maxsize=8)
def _sphere_dirs(dim: int, n: int = 256) -> np.ndarray:
    if dim == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = np.pi * (1 + 5**0.5) * i
    s = np.sqrt(1 - z * z)
    return np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _angles_to_dir(a: np.ndarray) -> np.ndarray:
    if len(a) == 1:
        return np.array([math.cos(a[0]), math.sin(a[0])])
    th, ph = a
    return np.array([math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)])


def _dir_to_angles(d: np.ndarray) -> np.ndarray:
    if len(d) == 2:
        return np.array([math.atan2(d[1], d[0])])
    return np.array([math.acos(max(-1.0, min(1.0, d[2]))), math.atan2(d[1], d[0])])


def continuum_extremum(expr: Expression, x, eps: float, sign: float, t=None):
    """``(value, offset)`` of ``sign * max`` of ``sign * φ`` over the closed ball.

    ``sign = 1`` gives the maximum, ``-1`` the minimum.
    """
    x = np.asarray(x, dtype=float)
    dim = len(x)
    dirs = _sphere_dirs(dim)
    nodes, _ = ball_rule(dim)
    f = lambda z: sign * float(_values(expr, (x + z)[None, :], t)[0])  # noqa: E731
    sv = sign * _values(expr, x + eps * dirs, t)
    k = int(np.argmax(sv))
    best_val, best_z = sv[k], eps * dirs[k]
    # sphere refinement in angle coordinates
    a0 = _dir_to_angles(dirs[k])
    res = optimize.minimize(
        lambda a: -f(eps * _angles_to_dir(a)), a0, method="Nelder-Mead",
        options={"xatol": 1e-12, "fatol": 1e-18, "maxiter": 4000},
    )
    if -res.fun > best_val:
        best_val, best_z = -res.fun, eps * _angles_to_dir(res.x)
    # interior candidate, projected back onto the ball
    iv = sign * _values(expr, x + eps * nodes, t)
    ki = int(np.argmax(iv))
    if iv[ki] > best_val - abs(best_val) * 1e-3 - 1e-300:

        def proj(z):
            nz = np.linalg.norm(z)
            return z if nz <= eps else z * (eps / nz)

        r2 = optimize.minimize(
            lambda z: -f(proj(z)), eps * nodes[ki], method="Nelder-Mead",
            options={"xatol": 1e-12 * eps, "fatol": 1e-18, "maxiter": 4000},
        )
        if -r2.fun > best_val:
            best_val, best_z = -r2.fun, proj(r2.x)
    return sign * best_val, best_z


def continuum_midrange(expr: Expression, x, eps: float, t=None):
    """``(½(max+min), argmin offset)`` of φ over the closed ball."""
    hi, _ = continuum_extremum(expr, x, eps, 1.0, t)
    lo, zmin = continuum_extremum(expr, x, eps, -1.0, t)
    return 0.5 * (hi + lo), zmin


def _time_nodes(t: float, lag: float, n: int = TIME_SUBSTEPS):
    """Trapezoid nodes and weights (summing to 1) over ``[t - lag, t]``."""
    s = np.linspace(t - lag, t, n + 1)
    w = np.full(n + 1, 1.0 / n)
    w[0] = w[-1] = 0.5 / n
    return s, w


# --------------------------------------------------------------------------
# Elliptic lemma checks


def _phi_of(phi):
    return phi.expr if isinstance(phi, TestFunction) else _as_expr(phi)


def _name_of(phi):
    return phi.name if isinstance(phi, TestFunction) else to_text(_as_expr(phi))


def check_lemma_minmax(phi, x, eps_seq=DEFAULT_EPS, tol: float = 0.1, delta_grad: float = DELTA_GRAD) -> ExpansionReport:
    """Midrange expansion ``-φ(x) + ½(max+min) = ½ε²Δ∞φ(x) + o(ε²)``.

    Also records the minimizer direction error against ``-∇φ/|∇φ|``.
    """
    e = _phi_of(phi)
    eps = _check_eps(eps_seq)
    x = np.asarray(x, dtype=float)
    j = jet(e, x)
    if j.grad_norm < delta_grad:
        raise DegenerateGradientError(f"|grad phi| = {j.grad_norm:g} < {delta_grad:g} at {tuple(x)}")
    dinf = j.inf_laplacian()
    target = 0.5 * dinf
    rem, norm, dir_err = [], [], []
    unit = -j.grad / j.grad_norm
    for h in eps:
        mid, zmin = continuum_midrange(e, x, h)
        lhs = mid - j.value
        rem.append(lhs - target * h * h)
        norm.append(lhs / (h * h) - target)
        dir_err.append(float(np.linalg.norm(zmin / h - unit)))
    tolerance = tol * (abs(dinf) + 1.0)
    mono = _non_increasing(norm, ABS_FLOOR * (abs(dinf) + 1.0))
    ok = abs(norm[-1]) <= tolerance and mono
    return ExpansionReport("minmax", tuple(x), eps, tuple(rem), tuple(norm), ok, tolerance, target,
                           _name_of(phi), mono, extra={"direction_error": tuple(dir_err)})


def check_lemma_average(phi, x, eps_seq=DEFAULT_EPS, tol: float = 0.05) -> ExpansionReport:
    """Ball average expansion ``-φ(x) + ⨍φ = ε²Δφ(x)/(2(N+2)) + o(ε²)``."""
    e = _phi_of(phi)
    eps = _check_eps(eps_seq)
    x = np.asarray(x, dtype=float)
    dim = len(x)
    j = jet(e, x)
    target = j.laplacian / (2 * (dim + 2))
    scale = float(np.sum(np.abs(np.diag(j.hess)))) / (2 * (dim + 2))
    rem, norm = [], []
    for h in eps:
        lhs = continuum_average(e, x, h) - j.value
        rem.append(lhs - target * h * h)
        norm.append(lhs / (h * h) - target)
    tolerance = tol * max(abs(target), scale) + ABS_FLOOR
    mono = _non_increasing(norm, ABS_FLOOR)
    ok = abs(norm[-1]) <= tolerance
    return ExpansionReport("average", tuple(x), eps, tuple(rem), tuple(norm), ok, tolerance, target,
                           _name_of(phi), mono)


def check_lemma_shift(phi, x, eps_seq=DEFAULT_EPS, grad_a=None, tol: float = 0.1) -> ExpansionReport:
    """Shifted pair ``⨍[φ(y+ε∇a) - φ(y-ε∇a)] = 2ε<∇φ(x), ∇a> + o(ε²)``."""
    e = _phi_of(phi)
    eps = _check_eps(eps_seq)
    x = np.asarray(x, dtype=float)
    ga = np.zeros(len(x)) if grad_a is None else np.asarray(grad_a, dtype=float)
    j = jet(e, x)
    lead = 2.0 * float(j.grad @ ga)
    rem, norm = [], []
    for h in eps:
        lhs = continuum_average(e, x, h, shift=h * ga) - continuum_average(e, x, h, shift=-h * ga)
        r = lhs - lead * h
        rem.append(r)
        norm.append(r / (h * h))
    tolerance = tol * (1.0 + j.grad_norm * float(np.linalg.norm(ga)))
    mono = _non_increasing(norm, ABS_FLOOR)
    ok = abs(norm[-1]) <= tolerance
    return ExpansionReport("shift", tuple(x), eps, tuple(rem), tuple(norm), ok, tolerance, 0.0,
                           _name_of(phi), mono)


# --------------------------------------------------------------------------
# Parabolic lemma checks


def check_parabolic_lemmas(phi, x, t: float, A: float, eps_seq=DEFAULT_EPS, grad_a=None, tol: float = 0.1,
                           delta_grad: float = DELTA_GRAD):
    """Time-averaged midrange, average and shifted-pair expansions over ``[t - ε²/A, t]``.

    Returns a tuple of three reports (par-minmax, par-average, par-shift).
    The spatial extrema are recomputed at every time node.
    """
    e = _phi_of(phi)
    eps = _check_eps(eps_seq)
    x = np.asarray(x, dtype=float)
    dim = len(x)
    if not A > 0:
        raise DomainError("the time lag constant A must be positive")
    ga = np.zeros(dim) if grad_a is None else np.asarray(grad_a, dtype=float)
    j = jet(e, x, t)
    if j.grad_norm >= delta_grad:
        dinf = j.inf_laplacian()
    elif np.max(np.abs(j.hess), initial=0.0) < delta_grad:
        dinf = 0.0  # space-flat at x: the midrange carries no second-order term
    else:
        raise DegenerateGradientError(f"|grad phi| = {j.grad_norm:g} with curved phi at {tuple(x)}")
    time_term = -j.dt / (2.0 * A)
    mm_target = 0.5 * dinf + time_term
    av_target = j.laplacian / (2 * (dim + 2)) + time_term
    lead = 2.0 * float(j.grad @ ga)
    out = {"par-minmax": ([], []), "par-average": ([], []), "par-shift": ([], [])}
    for h in eps:
        s_nodes, w = _time_nodes(t, h * h / A)
        mid = sum(wk * continuum_midrange(e, x, h, s)[0] for s, wk in zip(s_nodes, w))
        avg = sum(wk * continuum_average(e, x, h, s) for s, wk in zip(s_nodes, w))
        spa = sum(
            wk * (continuum_average(e, x, h, s, shift=h * ga) - continuum_average(e, x, h, s, shift=-h * ga))
            for s, wk in zip(s_nodes, w)
        )
        for key, lhs, pred in (
            ("par-minmax", mid - j.value, mm_target * h * h),
            ("par-average", avg - j.value, av_target * h * h),
            ("par-shift", spa, lead * h),
        ):
            out[key][0].append(lhs - pred)
            out[key][1].append((lhs - pred) / (h * h))
    tols = {
        "par-minmax": tol * (abs(dinf) + abs(j.dt) / A + 1.0),
        "par-average": tol * max(abs(av_target), float(np.sum(np.abs(np.diag(j.hess)))) / (2 * (dim + 2))
                                 + abs(time_term)) + ABS_FLOOR,
        "par-shift": tol * (1.0 + j.grad_norm * float(np.linalg.norm(ga))),
    }
    targets = {"par-minmax": mm_target, "par-average": av_target, "par-shift": 0.0}
    reports = []
    for key, (rem, norm) in out.items():
        mono = _non_increasing(norm, ABS_FLOOR)
        ok = abs(norm[-1]) <= tols[key] and (mono or key != "par-minmax")
        reports.append(ExpansionReport(key, tuple(x) + (float(t),), eps, tuple(rem), tuple(norm), ok, tols[key],
                                       targets[key], _name_of(phi), mono))
    return tuple(reports)


# --------------------------------------------------------------------------
# Consistency identities


def _grad_bound(kind, x, t, h) -> float:
    pts = [np.array([v]) for v in x]
    if isinstance(kind, PxLaplace):
        g = kind.p_field.gradient(pts, t, h=h)
    else:
        g = kind.a.gradient(pts, t, h=h)
    return float(np.linalg.norm(g[:, 0]))


def elliptic_defect(phi, x, kind: EquationKind, eps: float, h: float | None = None,
                    delta_grad: float = DELTA_GRAD) -> float:
    """``(T_eps[φ](x) - φ(x)) / eps^2`` on a lattice through ``x`` (``h = eps/8`` by default)."""
    kind = resolve(kind)
    e = _as_expr(phi)
    x = np.asarray(x, dtype=float)
    h = eps / 8 if h is None else h
    # the shift at neighbouring nodes may be slightly longer; pad by 1
    gb = _grad_bound(kind, x, None, h) + 1.0
    grid = GridSpec.for_eps(len(x), [(v - h, v + h) for v in x], eps, h=h, grad_a_max=gb)
    vals = sample(e, grid)
    out = _apply_values(vals, grid, kind, eps, delta_grad)
    i = grid.index_of(x)
    return float((out[i] - vals[i]) / (eps * eps))


def check_consistency(phi, x, kind: EquationKind, eps_seq=CONSISTENCY_EPS, t: float | None = None,
                      tol: float = 0.05, delta_grad: float = DELTA_GRAD, tau_fraction: float = 0.25) -> ExpansionReport:
    """Operator defect over ``eps^2`` against the residual-based limit.

    Elliptic when ``t`` is None, else one parabolic step with ``tau = lag * tau_fraction``.
    The verdict compares the finest entry with the prediction, relative to
    ``max(|prediction|, sum of term magnitudes)``.
    """
    kind = resolve(kind)
    e = _as_expr(phi)
    eps = _check_eps(eps_seq)
    x = np.asarray(x, dtype=float)
    if t is None:
        pred, scale = consistency_limit(e, x, kind, delta_grad)
        meas = [elliptic_defect(e, x, kind, h, delta_grad=delta_grad) for h in eps]
        lemma, point = "consistency", tuple(x)
    else:
        if isinstance(kind, PxLaplace):
            raise DomainError("the parabolic identity is defined for DoublePhase and PLaplace kinds")
        pred, scale = parabolic_consistency_limit(e, x, t, kind, delta_grad)
        meas = [consistency_defect(e, x, t, kind, h, tau_fraction=tau_fraction, delta_grad=delta_grad)
                for h in eps]
        lemma, point = "par-consistency", tuple(x) + (float(t),)
    norm = [m - pred for m in meas]
    rem = [n * h * h for n, h in zip(norm, eps)]
    tolerance = tol * max(abs(pred), scale) + ABS_FLOOR
    ok = abs(norm[-1]) <= tolerance
    mono = _non_increasing(norm, tolerance)
    return ExpansionReport(lemma, point, eps, tuple(rem), tuple(norm), ok, tolerance, pred, to_text(e), mono,
                           extra={"measured": tuple(meas), "scale": scale})


# --------------------------------------------------------------------------
# Suite


def run_lemma_suite(lemmas=None, eps_seq=DEFAULT_EPS, grad_a=(0.3, -0.2)) -> list:
    """All requested lemma checks over the bundled libraries."""
    wanted = set(LEMMAS if lemmas is None else lemmas)
    unknown = wanted - set(LEMMAS)
    if unknown:
        raise DomainError(f"unknown lemma id(s): {', '.join(sorted(unknown))}; known: {', '.join(LEMMAS)}")
    out = []
    for tf in library():
        for pt in tf.points:
            ga = np.resize(np.asarray(grad_a, dtype=float), len(pt))
            if "minmax" in wanted:
                out.append(check_lemma_minmax(tf, pt, eps_seq))
            if "average" in wanted:
                out.append(check_lemma_average(tf, pt, eps_seq))
            if "shift" in wanted:
                out.append(check_lemma_shift(tf, pt, eps_seq, ga))
    par = wanted & {"par-minmax", "par-average", "par-shift"}
    if par:
        for tf in parabolic_library():
            for pt in tf.points:
                x, t = pt[:-1], pt[-1]
                ga = np.resize(np.asarray(grad_a, dtype=float), len(x))
                A = len(x) + 4.0
                for rep in check_parabolic_lemmas(tf, x, t, A, eps_seq, ga):
                    if rep.lemma in par:
                        out.append(rep)
    if "consistency" in wanted:
        for x, kind, phi in consistency_panel():
            out.append(check_consistency(phi, x, kind))
    if "par-consistency" in wanted:
        for x, t, kind, phi in parabolic_consistency_panel():
            out.append(check_consistency(phi, x, kind, t=t))
    return out


def consistency_panel() -> list:
    """``(point, kind, φ)`` triples for the elliptic identity; gradients are lattice-axis aligned."""
    from .elliptic import PLaplace

    dp1 = DoublePhase(2, 4, "0.5*(1 + x1^2)")
    dp2 = DoublePhase(3, 3.5, "1 + x1")
    return [
        ((1.0, 0.0), PLaplace(4), "x1^2 + x2^2"),
        ((1.0, 0.0), PLaplace(4), "x1^2 - x2^2"),
        ((1.5, 0.0), PLaplace(4), "norm()^(2/3)"),
        ((0.3, 0.2), DoublePhase(3, 4, "1 + 0.5*x2"), "2*x1 + 1"),
        ((1.0, 0.0), dp1, "x1^2 + x2^2"),
        ((0.0, 1.0), dp1, "x1^2 - x2^2"),
        ((1.0, 0.0), dp2, "x1^2 + x2^2"),
        ((1.5, 0.0), dp2, "norm()^(2/3)"),
    ]


def parabolic_consistency_panel() -> list:
    from .elliptic import PLaplace

    a_t = "0.5*(1 + x1^2)*(1 + t)"
    phi = "exp(-t)*sin(x1)"
    return [
        ((0.5, 0.3), 0.3, PLaplace(2), phi),
        ((0.5, 0.3), 0.3, PLaplace(4), phi),
        ((0.5, 0.3), 0.3, DoublePhase(2, 4, a_t), phi),
        ((1.0, 0.0), 0.5, DoublePhase(3, 3.5, a_t), phi),
        ((0.5, 0.3), 0.3, PLaplace(4), "t"),
    ]
