import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmvp.core import DomainError, GridSpec, StateError, sample
from dpmvp.elliptic import DoublePhase, PLaplace, PxLaplace
from dpmvp.parabolic import (
    HistoryBuffer,
    ParabolicSpec,
    consistency_defect,
    march,
    parabolic_consistency_limit,
    parabolic_residual,
    parabolic_step,
    window_weights,
)

HEAT = "exp(-t)*sin(x1)"


def _spec(eps=0.5, kind=None, initial=HEAT, boundary=None, reference=None, tau=None, horizon=0.25):
    kind = PLaplace(2) if kind is None else kind
    grid = GridSpec.for_eps(2, [(0, math.pi), (-1, 1)], eps, grad_a_max=4.5)
    tau = eps**2 / 16 if tau is None else tau
    return ParabolicSpec(kind, eps, tau, horizon, initial, boundary or initial, grid, reference)


def _seeded(spec, expr=None, t0=0.0):
    hist = HistoryBuffer.for_spec(spec)
    for k in range(hist.capacity - 1, -1, -1):
        t = t0 - k * spec.tau
        hist.push(t, sample(expr or spec.initial, spec.grid, t))
    return hist


@settings(max_examples=100)
@given(st.floats(0.01, 5.0), st.floats(0.01, 1.0))
def test_window_weights_sum_to_one_and_exact_on_linear(lag, tau):
    n = int(math.ceil(lag / tau)) + 2
    w = window_weights(np.array([lag]), tau, n)[:, 0]
    assert w.sum() == pytest.approx(1.0, rel=1e-12)
    assert np.all(w >= 0)
    s = -np.arange(n) * tau
    assert w @ s == pytest.approx(-lag / 2, rel=1e-10, abs=1e-13)


def test_window_weights_example():
    # lag = 2 tau: plain trapezoid weights 1/4, 1/2, 1/4
    w = window_weights(np.array([0.2]), 0.1, 4)[:, 0]
    assert np.allclose(w, [0.25, 0.5, 0.25, 0.0])


def test_spec_rejects():
    grid = GridSpec.for_eps(2, [(0, 1), (0, 1)], 0.5)
    with pytest.raises(DomainError):
        ParabolicSpec(PxLaplace("2 + x1^2"), 0.5, 0.01, 1.0, "0", "0", grid)
    with pytest.raises(DomainError):
        ParabolicSpec(PLaplace(2), 0.5, 0.0, 1.0, "0", "0", grid)
    spec = ParabolicSpec(PLaplace(2), 0.5, 0.1, 1.0, "0", "0", grid)
    assert spec.max_lag == pytest.approx(0.25 / 4)
    with pytest.raises(DomainError, match="does not resolve"):
        spec.check_tau(0.0)


def test_history_errors():
    spec = _spec()
    hist = HistoryBuffer.for_spec(spec)
    with pytest.raises(StateError):
        hist.latest
    hist.push(0.0, sample("1", spec.grid))
    with pytest.raises(StateError):
        hist.push(2 * spec.tau, sample("1", spec.grid))
    with pytest.raises(StateError, match="reach back"):
        parabolic_step(hist, spec, spec.tau)
    full = _seeded(spec)
    with pytest.raises(StateError, match="not one step"):
        parabolic_step(full, spec, 3 * spec.tau)


def test_history_capacity():
    spec = _spec()
    hist = _seeded(spec)
    n = hist.capacity
    for k in range(1, 5):
        hist.push(k * spec.tau, sample("1", spec.grid))
    assert len(hist.slices) == n
    assert hist.times[-1] == pytest.approx(4 * spec.tau)


@pytest.mark.parametrize("kind", [PLaplace(2), PLaplace(4), DoublePhase(2, 4, "0.5*(1 + x1^2)*(1 + t)")])
def test_constant_preserved(kind):
    spec = _spec(kind=kind, initial="1.25")
    hist = _seeded(spec)
    out = parabolic_step(hist, spec, spec.tau)
    assert np.array_equal(out.values, np.full(spec.grid.shape, 1.25))


def test_static_affine_preserved():
    spec = _spec(kind=PLaplace(4), initial="0.5 + x1 - 2*x2")
    hist = _seeded(spec)
    out = parabolic_step(hist, spec, spec.tau)
    m = spec.grid.interior_mask()
    assert np.max(np.abs(out.values - sample(spec.initial, spec.grid))[m]) <= 1e-13


def test_one_step_defect_small():
    spec = _spec(eps=0.5, reference=HEAT)
    out = parabolic_step(_seeded(spec), spec, spec.tau)
    m = spec.grid.interior_mask()
    err = np.max(np.abs(out.values - sample(HEAT, spec.grid, spec.tau))[m])
    assert err < spec.eps**4


def test_residual_examples():
    assert float(parabolic_residual(HEAT, (0.5, 0.3), 0.2, PLaplace(2))) == pytest.approx(0.0, abs=1e-12)
    r = parabolic_residual("t + 0*x1", (0.5, 0.3), 0.2, PLaplace(4))
    assert r.degenerate and r.value == pytest.approx(1.0)
    # |y|^2 + t with p = 4: phi_t - L = 1 - 8
    assert float(parabolic_residual("x1^2 + x2^2 + t", (1.0, 0.0), 0.0, PLaplace(4))) == pytest.approx(-7.0)


def test_limit_zero_gradient_branch():
    pred, scale = parabolic_consistency_limit("t", (0.5, 0.3), 0.3, PLaplace(4))
    assert pred == pytest.approx(-1 / 12)
    assert scale == pytest.approx(1 / 12)


@pytest.mark.parametrize("kind", [PLaplace(2), PLaplace(4), DoublePhase(2, 4, "0.5*(1 + x1^2)*(1 + t)")])
def test_defect_approaches_limit(kind):
    pred, scale = parabolic_consistency_limit(HEAT, (0.5, 0.3), 0.3, kind)
    d = consistency_defect(HEAT, (0.5, 0.3), 0.3, kind, 1 / 32)
    assert abs(d - pred) <= 0.05 * max(abs(pred), scale)


def test_march_constant_and_reference():
    res = march(_spec(initial="1.25", reference="1.25"))
    assert res.steps == len(res.times) == len(res.defects)
    assert max(res.defects) == 0.0
    assert res.times[-1] == pytest.approx(0.25)


def test_march_rounds_tau_to_horizon():
    res = march(_spec(tau=0.015, horizon=0.1))
    assert res.steps == 7
    assert res.times[-1] == pytest.approx(0.1)


def test_march_heat_regression():
    res = march(_spec(eps=0.5, reference=HEAT, horizon=0.5))
    assert res.defects[-1] == pytest.approx(4.687e-3, rel=1e-3)


def test_march_without_reference_records_nan():
    res = march(_spec(horizon=0.05))
    assert all(math.isnan(d) for d in res.defects)


def test_march_rejects_coarse_tau():
    with pytest.raises(DomainError):
        march(_spec(tau=0.1))
