import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmvp.core import (
    BoundsError,
    CoefficientField,
    DomainError,
    ExponentField,
    Exponents,
    GeometryError,
    GridSpec,
    ScalarField,
    Weights,
    canonical_time_lags,
    compute_M,
    compute_weights,
    gradient_estimate,
    lag_constraint,
)


# weight algebra


@pytest.mark.parametrize(
    "p, n, expected",
    [(2, 2, (0.0, 1.0)), (4, 2, (1 / 3, 2 / 3)), (1.5, 3, (-1 / 9, 10 / 9))],
)
def test_weights_examples(p, n, expected):
    assert compute_weights(p, n) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("p", [1.0, 0.5, math.inf, math.nan])
def test_weights_reject_bad_exponent(p):
    with pytest.raises(DomainError):
        compute_weights(p, 2)


def test_weights_reject_dimension_one():
    with pytest.raises(DomainError):
        compute_weights(3.0, 1)


def test_weights_vectorized():
    a, b = compute_weights(np.array([2.0, 4.0]), 2)
    assert np.allclose(a, [0, 1 / 3]) and np.allclose(b, [1, 2 / 3])


@settings(max_examples=200)
@given(st.floats(1.0001, 10.0), st.sampled_from([2, 3, 4, 5]))
def test_weights_constraints(p, n):
    a, b = compute_weights(p, n)
    assert a + b == pytest.approx(1.0, abs=1e-14)
    assert a / b == pytest.approx((p - 2) / (n + 2), rel=1e-12, abs=1e-14)
    assert b > 0
    assert (a >= 0) == (p >= 2)


def test_weights_for_exponents():
    w = Weights.for_exponents(Exponents(4, 6), 2)
    assert (w.alpha_p, w.beta_p) == pytest.approx((1 / 3, 2 / 3))
    assert (w.alpha_q, w.beta_q) == pytest.approx((0.5, 0.5))


@pytest.mark.parametrize("p, q", [(1.0, 2.0), (3.0, 2.0), (math.nan, 3.0)])
def test_exponents_invariant(p, q):
    with pytest.raises(DomainError):
        Exponents(p, q)


def test_M_example():
    assert compute_M(1.0, 2.0, 2.0, 4.0, 2) == pytest.approx(6.0)


def test_M_zero_gradient_limits():
    assert compute_M(2.0, 0.0, 2.0, 3.0, 2) == 0.0
    assert compute_M(2.0, 0.0, 3.0, 3.0, 2) == 2.0


def test_M_rejects_negative_a():
    with pytest.raises(DomainError):
        compute_M(-0.1, 1.0, 2.0, 3.0, 2)


@settings(max_examples=100)
@given(st.floats(0, 5), st.floats(0.01, 5), st.floats(1.01, 6), st.floats(0, 4), st.sampled_from([2, 3]))
def test_M_monotone_in_a_and_gradient(a, g, p, dq, n):
    q = p + dq
    m = compute_M(a, g, p, q, n)
    assert m >= 0
    assert compute_M(a + 0.5, g, p, q, n) >= m
    assert compute_M(a, g * 1.5, p, q, n) >= m * (1 - 1e-12)


@pytest.mark.parametrize("M, p, n, lag", [(1, 2, 2, 8), (3, 3, 3, 24), (0, 4, 2, 6)])
def test_time_lags_examples(M, p, n, lag):
    assert canonical_time_lags(M, p, n) == (lag, lag)


@settings(max_examples=200)
@given(st.floats(0, 3), st.floats(0.01, 5), st.floats(1.01, 10), st.floats(0, 5), st.sampled_from([2, 3, 4]))
def test_time_lags_satisfy_constraint(a, g, p, dq, n):
    q = min(p + dq, 10.0)
    A, B = canonical_time_lags(compute_M(a, g, p, q, n), p, n)
    assert lag_constraint(A, B, a, g, p, q, n) == pytest.approx(1.0, rel=1e-12)


def test_time_lags_reject_negative():
    with pytest.raises(DomainError):
        canonical_time_lags(-1.0, 2.0, 2)


# lattice


def test_grid_shape_and_collar():
    g = GridSpec.for_eps(2, [(0, 1), (0, 1)], 0.25)
    assert g.h == 1 / 32
    assert g.n_box == (33, 33)
    assert g.collar_nodes == 10  # eps + 2h = 10 nodes
    assert g.shape == (53, 53)
    m = g.interior_mask()
    assert m.sum() == 31 * 31
    assert np.allclose(g.point(g.index_of((0.5, 0.25))), (0.5, 0.25))


def test_grid_non_aligned_box():
    g = GridSpec(2, [(0, math.pi), (-1, 1)], 0.25, 0.0)
    assert g.n_box == (13, 9)
    xs = g.axes()[0][g.interior_mask().any(axis=1)]
    assert xs.min() > 0 and xs.max() < math.pi


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(dim=1, box=[(0, 1)], h=0.1, collar_width=0),
        dict(dim=2, box=[(0, 1)], h=0.1, collar_width=0),
        dict(dim=2, box=[(0, 1), (1, 1)], h=0.1, collar_width=0),
        dict(dim=2, box=[(0, 1), (0, 1)], h=0.0, collar_width=0),
        dict(dim=2, box=[(0, 1), (0, 1)], h=0.1, collar_width=-1),
        dict(dim=2, box=[(0, 0.1), (0, 1)], h=0.1, collar_width=0),
    ],
)
def test_grid_rejects(kwargs):
    with pytest.raises(DomainError):
        GridSpec(**kwargs)


def test_grid_checks():
    g = GridSpec(2, [(0, 1), (0, 1)], 0.05, 0.1)
    with pytest.raises(DomainError):
        g.check_resolution(0.2)
    g.check_resolution(0.4)
    with pytest.raises(GeometryError):
        g.check_collar(0.4)
    with pytest.raises(BoundsError):
        g.index_of((5.0, 0.0))


def test_scalar_field_immutable_and_finite():
    g = GridSpec(2, [(0, 1), (0, 1)], 0.25, 0.0)
    f = ScalarField.from_expression("x1 + x2", g)
    with pytest.raises(ValueError):
        f.values[0, 0] = 1.0
    with pytest.raises(DomainError):
        ScalarField(g, np.full(g.shape, np.nan))
    with pytest.raises(DomainError):
        ScalarField(g, np.zeros((2, 2)))


def test_gradient_estimate_exact_on_quadratic():
    g = GridSpec(2, [(0, 2), (-1, 1)], 0.1, 0.0)
    f = ScalarField.from_expression("x1^2", g)
    assert gradient_estimate(f, g.index_of((1, 0))) == pytest.approx((2.0, 0.0), abs=1e-12)


def test_gradient_estimate_bounds():
    g = GridSpec(2, [(0, 1), (0, 1)], 0.25, 0.0)
    f = ScalarField.from_expression("x1", g)
    with pytest.raises(BoundsError):
        gradient_estimate(f, (0, 2))
    with pytest.raises(BoundsError):
        gradient_estimate(f, (1,))


def test_gradient_estimate_second_order():
    errs = []
    for h in (0.1, 0.05):
        g = GridSpec(2, [(0, 2), (0, 2)], h, 0.0)
        f = ScalarField.from_expression("sin(x1)*exp(x2)", g)
        est = gradient_estimate(f, g.index_of((1, 1)))
        errs.append(np.max(np.abs(est - [math.cos(1) * math.e, math.sin(1) * math.e])))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_coefficient_field_sign_and_gradient():
    a = CoefficientField("0.5*(1 + x1^2)")
    pts = [np.array([1.0, -2.0]), np.array([0.0, 0.0])]
    assert np.allclose(a.values(pts), [1.0, 2.5])
    assert np.allclose(a.gradient(pts), [[1.0, -2.0], [0.0, 0.0]])
    with pytest.raises(DomainError, match="negative"):
        CoefficientField("x1").values([np.array([-1.0]), np.array([0.0])])


def test_coefficient_fd_fallback():
    a = CoefficientField("abs(x1) + 1")
    pts = [np.array([0.5]), np.array([0.0])]
    # symbolic derivative x1/abs(x1) is finite here
    assert np.allclose(a.gradient(pts, h=1e-4)[:, 0], [1.0, 0.0])
    # and NaN at 0, which falls back to central differences
    assert np.allclose(a.gradient([np.array([0.0]), np.array([0.0])], h=1e-4)[:, 0], [0.0, 0.0])


def test_exponent_field_rejects():
    with pytest.raises(DomainError, match="1 < p"):
        ExponentField("1 + x1").values([np.array([0.0]), np.array([0.0])])
