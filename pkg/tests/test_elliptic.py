import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpmvp.core import DegenerateGradientError, DomainError, GeometryError, GridSpec, ScalarField, sample
from dpmvp.elliptic import (
    DoublePhase,
    PLaplace,
    PxLaplace,
    SolveReport,
    VariableCoefficient,
    blend_boundary,
    consistency_limit,
    elliptic_residual,
    grid_residual,
    mvp_apply,
    resolve,
    solve_dirichlet,
)
from dpmvp.verify import elliptic_defect

BOX = ((-1, 1), (-1, 1))


def _field(text, eps=0.25, grad_a_max=1.0, box=BOX):
    return ScalarField.from_expression(text, GridSpec.for_eps(len(box), box, eps, grad_a_max=grad_a_max))


def test_kinds_resolve():
    assert resolve(PLaplace(3)) == DoublePhase(3, 3, "0")
    vc = resolve(VariableCoefficient(2.5, "2 + x1^2"))
    assert vc.p == vc.q == 2.5
    assert vc.a.values([np.array([1.0]), np.array([0.0])])[0] == 2.0
    with pytest.raises(DomainError):
        DoublePhase(3, 2)
    with pytest.raises(DomainError):
        PLaplace(1.0)


def test_heat_operator_is_ball_average_and_harmonic_fixed():
    f = _field("x1^2 - x2^2")
    out = mvp_apply(f, PLaplace(2), 0.25)
    m = f.grid.interior_mask()
    assert np.max(np.abs(out.values - f.values)[m]) <= 1e-14
    assert np.array_equal(out.values[~m], f.values[~m])


def test_affine_preserved_by_every_kind():
    # the gradient is orthogonal to grad a and grad p, so the shift term vanishes too
    f = _field("0.5 - 2*x2", grad_a_max=2.0)
    m = f.grid.interior_mask()
    for kind in (PLaplace(1.5), PLaplace(4), DoublePhase(2, 4, "0.5*(1 + x1^2)"), PxLaplace("2 + 0.5*x1^2")):
        out = mvp_apply(f, kind, 0.25)
        assert np.max(np.abs(out.values - f.values)[m]) <= 1e-13, kind


def test_constants_preserved():
    f = _field("1.75", grad_a_max=2.0)
    out = mvp_apply(f, DoublePhase(2, 4, "1 + x1^2"), 0.25)
    assert np.array_equal(out.values, f.values)


def test_resolution_and_collar_checks():
    g = GridSpec(2, BOX, 0.05, 0.3)
    f = ScalarField.from_expression("x1", g)
    with pytest.raises(DomainError):
        mvp_apply(f, PLaplace(2), 0.25)
    g2 = GridSpec(2, BOX, 0.25 / 8, 0.26)
    f2 = ScalarField.from_expression("x1^2", g2)
    with pytest.raises(GeometryError):
        mvp_apply(f2, DoublePhase(2, 3, "4 + 3*x1"), 0.25)


@pytest.mark.parametrize(
    "kind",
    [PLaplace(3), DoublePhase(2, 4, "0.5*(1 + x1^2)"), VariableCoefficient(3, "1 + x2^2"), PxLaplace("2.5 + 0.3*x1")],
)
def test_monotone(kind):
    f = _field("sin(2*x1)*exp(x2)", grad_a_max=2.0)
    bump = np.random.default_rng(0).uniform(0, 1e-3, f.values.shape)
    g = ScalarField(f.grid, f.values + bump)
    m = f.grid.interior_mask()
    a = mvp_apply(f, kind, 0.25).values[m]
    b = mvp_apply(g, kind, 0.25).values[m]
    # monotone up to the gradient-dependent weights, which move by O(bump)
    assert np.min(b - a) >= -1e-4


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.sampled_from([0.5, 2.0, 3.0]))
def test_shift_and_scale_equivariance_plaplace(c, s):
    # PLaplace weights are constant, so the operator commutes with u -> s u + c
    f = _field("sin(2*x1)*exp(x2)")
    g = ScalarField(f.grid, s * f.values + c)
    m = f.grid.interior_mask()
    a = mvp_apply(f, PLaplace(3), 0.25).values[m]
    b = mvp_apply(g, PLaplace(3), 0.25).values[m]
    assert np.allclose(b, s * a + c, rtol=1e-12, atol=1e-12)


def test_variant_coherence_bitwise(backend):
    f = _field("sin(2*x1)*exp(x2) + x1*x2^2", grad_a_max=2.0)
    a = mvp_apply(f, DoublePhase(3, 3, "0.5 + x1^2"), 0.25).values
    b = mvp_apply(f, VariableCoefficient(3, "1.5 + x1^2"), 0.25).values
    assert np.array_equal(a, b)
    assert np.array_equal(mvp_apply(f, DoublePhase(4, 4, "0"), 0.25).values, mvp_apply(f, PLaplace(4), 0.25).values)


def test_backends_agree_on_sweep():
    from dpmvp import _kernels

    if not _kernels.HAS_NUMBA:
        pytest.skip("numba not installed")
    f = _field("sin(2*x1)*exp(x2)", grad_a_max=2.0)
    kind = DoublePhase(2, 4, "0.5*(1 + x1^2)")
    prev = _kernels.backend()
    try:
        outs = []
        for b in ("numpy", "numba"):
            _kernels.set_backend(b)
            outs.append(mvp_apply(f, kind, 0.25).values)
    finally:
        _kernels.set_backend(prev)
    assert np.array_equal(outs[0], outs[1])


# pointwise residual and limits


def test_residual_examples():
    assert elliptic_residual("x1^2 + x2^2", (1.0, 0.0), PLaplace(4)) == pytest.approx(2 * 2 + 4)
    assert elliptic_residual("x1^2 + x2^2", (0.3, 0.7), PLaplace(3)) == pytest.approx(2 * 1 + 4)
    assert elliptic_residual("norm()^(2/3)", (1.5, 0.5), PLaplace(4)) == pytest.approx(0.0, abs=1e-12)
    assert elliptic_residual("2*x1 + 3*x2", (0.2, 0.1), DoublePhase(2, 3, "1 + 3*x1 - 2*x2")) == pytest.approx(0.0)


def test_residual_with_coefficient_gradient():
    # phi = x1, a = 1 + x1: |grad phi| = 1, only the <grad a, grad phi> term survives
    assert elliptic_residual("x1", (0.2, 0.1), DoublePhase(2, 4, "1 + x1")) == pytest.approx(1.0)


def test_residual_degenerate():
    with pytest.raises(DegenerateGradientError):
        elliptic_residual("x1^2 + x2^2", (0.0, 0.0), PLaplace(4))


def test_consistency_limit_sq_norm():
    # L = 2(p-2) + 2N = 8 over 2(N+p) = 12
    pred, scale = consistency_limit("x1^2 + x2^2", (1.0, 0.0), PLaplace(4))
    assert pred == pytest.approx(2 / 3)
    assert scale == pytest.approx(2 / 3)
    pred2, _ = consistency_limit("x1^2 + x2^2", (1.0, 0.0), PLaplace(2))
    assert pred2 == pytest.approx(0.5)


def test_px_residual_log_term():
    x = (1.0, 0.0)
    p = 2.5
    # grad p = (1, 0), grad phi = (2, 0)
    expected = (p - 2) * 2 + 0 + math.log(2.0) * 2.0
    assert elliptic_residual("x1^2 - x2^2", x, PxLaplace("2 + 0.5*x1^2")) == pytest.approx(expected)


def test_defect_matches_limit_sq_norm():
    # lattice average of |y|^2 is biased by the discrete second moment
    d = elliptic_defect("x1^2 + x2^2", (1.0, 0.0), PLaplace(4), 1 / 16)
    assert d == pytest.approx(2 / 3, rel=0.03)


def test_grid_residual_on_exact_quadratic():
    f = _field("x1^2 + x2^2")
    r = grid_residual(f, PLaplace(4))
    m = f.grid.interior_mask()
    gmask = np.hypot(*[c[m] for c in f.grid.coords()]) > 0.1
    assert np.allclose(r[gmask], 8.0, atol=1e-8)


# solver


def test_blend_reproduces_multilinear_data():
    g = GridSpec(2, BOX, 0.125, 0.25)
    out = blend_boundary("x1*x2 + x1 - 3", g)
    assert np.allclose(out, sample("x1*x2 + x1 - 3", g), atol=1e-13)


def test_solve_constant_data():
    g = GridSpec.for_eps(2, BOX, 0.25)
    f, rep = solve_dirichlet(PLaplace(3), g, "2", 0.25)
    assert rep.converged and rep.iterations == 1
    assert np.all(f.values == 2.0)


def test_solve_harmonic_regression():
    eps = 0.1
    g = GridSpec.for_eps(2, BOX, eps)
    f, rep = solve_dirichlet(PLaplace(2), g, "x1^2 - x2^2", eps, tol=1e-10, initial="0")
    m = g.interior_mask()
    err = np.max(np.abs(f.values - sample("x1^2 - x2^2", g))[m])
    assert rep.converged
    assert err <= 5e-2
    assert err <= 1e-8  # the exact harmonic quadratic is a fixed point; only the stopping error is left


def test_solve_radial_coarse_regression():
    eps = 0.125
    g = GridSpec.for_eps(2, [(1, 2), (1, 2)], eps)
    f, rep = solve_dirichlet(PLaplace(4), g, "norm()^(2/3)", eps, tol=1e-9, max_iter=50000)
    err = np.max(np.abs(f.values - sample("norm()^(2/3)", g))[g.interior_mask()])
    assert rep.converged
    assert err == pytest.approx(3.055266447078431e-4, rel=1e-3)


def test_solve_reports_nonconvergence():
    g = GridSpec.for_eps(2, [(1, 2), (1, 2)], 0.25)
    _, rep = solve_dirichlet(PLaplace(4), g, "norm()^(2/3)", 0.25, tol=1e-12, max_iter=3)
    assert not rep.converged and rep.iterations == 3


def test_solve_argument_checks():
    g = GridSpec.for_eps(2, BOX, 0.25)
    with pytest.raises(DomainError):
        solve_dirichlet(PLaplace(2), g, "x1", 0.25, tol=0)
    with pytest.raises(DomainError):
        solve_dirichlet(PLaplace(2), g, "x1", 0.25, damping=1.5)
    with pytest.raises(DomainError):
        solve_dirichlet(PLaplace(2), g, "log(x1)", 0.25)


def test_report_invariant():
    with pytest.raises(ValueError):
        SolveReport(3, 1.0, 0.0, True, tol=1e-6)


def test_solve_damped_sublinear_exponent():
    g = GridSpec.for_eps(2, [(1, 2), (1, 2)], 0.25)
    f, rep = solve_dirichlet(PLaplace(1.5), g, "x1 + 2*x2", 0.25, tol=1e-10, initial="0")
    assert rep.converged
    assert np.max(np.abs(f.values - sample("x1 + 2*x2", g))[g.interior_mask()]) < 1e-8
