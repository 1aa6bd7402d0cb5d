import math

import numpy as np
import pytest

from dpmvp.core import DegenerateGradientError, DomainError
from dpmvp.elliptic import DoublePhase, PLaplace
from dpmvp.expr import parse_expression
from dpmvp.verify import (
    LEMMAS,
    ExpansionReport,
    TestFunction,
    ball_rule,
    check_consistency,
    check_lemma_average,
    check_lemma_minmax,
    check_lemma_shift,
    check_parabolic_lemmas,
    continuum_average,
    continuum_extremum,
    library,
    parabolic_library,
    run_lemma_suite,
)


def test_lemma_ids():
    assert LEMMAS == ("minmax", "average", "shift", "par-minmax", "par-average", "par-shift",
                      "consistency", "par-consistency")


def test_library_size():
    lib = library()
    assert len(lib) >= 8 and all(len(tf.points) >= 3 for tf in lib)
    assert {tf.dim for tf in lib} == {2, 3}
    assert all(tf.space_time for tf in parabolic_library())


@pytest.mark.parametrize("dim", [2, 3])
def test_ball_rule_moments(dim):
    pts, w = ball_rule(dim)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(np.linalg.norm(pts, axis=1) <= 1 + 1e-12)
    # second moment of the uniform unit ball is N/(N+2); fourth is N/(N+4)
    r2 = np.sum(pts**2, axis=1)
    assert w @ r2 == pytest.approx(dim / (dim + 2), abs=1e-14)
    assert w @ r2**2 == pytest.approx(dim / (dim + 4), abs=1e-14)


def test_continuum_average_sq_norm_origin():
    e = parse_expression("x1^2 + x2^2")
    assert continuum_average(e, (0, 0), 0.5) == pytest.approx(0.25 * 2 / 4, abs=1e-15)


def test_continuum_extremum():
    e = parse_expression("x1^2 + x2^2")
    assert continuum_extremum(e, (1.0, 0.0), 0.25, +1.0)[0] == pytest.approx(1.25**2, abs=1e-12)
    assert continuum_extremum(e, (0.0, 0.0), 0.25, -1.0)[0] == pytest.approx(0.0, abs=1e-12)


def test_minmax_sq_norm_limit():
    rep = check_lemma_minmax("x1^2 + x2^2", (1.0, 0.0))
    assert rep.verdict and rep.target == pytest.approx(1.0)
    assert max(abs(v) for v in rep.normalized) <= 1e-8


def test_minmax_saddle_limit():
    rep = check_lemma_minmax("x1^2 - x2^2", (1.0, 0.0))
    assert rep.verdict and rep.target == pytest.approx(1.0)


def test_average_sq_norm_origin_exact():
    rep = check_lemma_average("x1^2 + x2^2", (0.0, 0.0))
    assert rep.target == pytest.approx(2 * 2 / (2 * 4))
    assert max(abs(v) for v in rep.normalized) <= 1e-12


def test_average_harmonic_zero():
    rep = check_lemma_average("x1^2 - x2^2", (0.3, 0.4))
    assert rep.target == pytest.approx(0.0, abs=1e-15)
    assert rep.verdict


def test_shift_sq_norm():
    rep = check_lemma_shift("x1^2 + x2^2", (0.5, -0.25), grad_a=(0.3, 0.2))
    assert rep.verdict
    assert max(abs(v) for v in rep.remainder) <= 1e-12


def test_minmax_needs_nonzero_gradient():
    with pytest.raises(DegenerateGradientError):
        check_lemma_minmax("x1^2 + x2^2", (0.0, 0.0))


def test_parabolic_time_branch_exact():
    reps = check_parabolic_lemmas("t", (0.5, 0.3), 0.3, A=6.0)
    assert [r.lemma for r in reps] == ["par-minmax", "par-average", "par-shift"]
    mm = reps[0]
    assert mm.target == pytest.approx(-1 / 12)
    assert all(r.verdict for r in reps)
    assert max(abs(v) for r in reps for v in r.normalized) <= 1e-10


def test_parabolic_heat():
    reps = check_parabolic_lemmas("exp(-t)*sin(x1)", (0.5, 0.3), 0.3, A=4.0, grad_a=(0.2, 0.1))
    assert all(r.verdict for r in reps)


def test_report_validation():
    with pytest.raises(ValueError):
        ExpansionReport("minmax", (0, 0), (0.1, 0.05, 0.025), (0, 0, 0), (0, 0, 0), True, 0.1)
    with pytest.raises(ValueError):
        ExpansionReport("minmax", (0, 0), (0.1, 0.1, 0.05, 0.02), (0,) * 4, (0,) * 4, True, 0.1)
    with pytest.raises(DomainError):
        check_lemma_average("x1", (0, 0), eps_seq=(0.1, 0.2, 0.05, 0.01))


def test_report_rows():
    rep = check_lemma_average("x1 + x2", (0.25, 0.5))
    rows = list(rep.rows())
    assert len(rows) == 4
    assert rows[0][0] == "average" and rows[0][1] == "0.25 0.5" and rows[0][-1] == "pass"


def test_custom_test_function():
    tf = TestFunction.make("f", "x1^3", "custom", [(1, 0)])
    assert tf.dim == 2 and not tf.space_time and tf.text == "x1^3"


def test_consistency_affine_with_orthogonal_coefficient():
    rep = check_consistency("2*x1 + 1", (0.3, 0.2), DoublePhase(3, 4, "1 + 0.5*x2"))
    assert rep.target == pytest.approx(0.0)
    assert rep.verdict and max(abs(v) for v in rep.normalized) <= 1e-8


def test_consistency_lattice_bias():
    # the lattice second moment is about 1% below the continuum one at h = eps/8
    rep = check_consistency("x1^2 + x2^2", (1.0, 0.0), PLaplace(4))
    rel = abs(rep.normalized[-1]) / rep.target
    assert rep.verdict and 0.001 < rel < 0.03


def test_parabolic_consistency_zero_gradient():
    rep = check_consistency("t", (0.5, 0.3), PLaplace(4), t=0.3)
    assert rep.lemma == "par-consistency"
    assert rep.target == pytest.approx(-1 / 12)
    assert rep.verdict


def test_suite_filters_and_rejects():
    reps = run_lemma_suite(["average"])
    assert reps and all(r.lemma == "average" for r in reps)
    with pytest.raises(DomainError, match="unknown"):
        run_lemma_suite(["bogus"])


def test_radial_minmax_converges():
    rep = check_lemma_minmax("norm()^(2/3)", (1.5, 0.0))
    d = [abs(v) for v in rep.normalized]
    assert d[-1] < d[0] and rep.verdict
    assert math.isclose(rep.target, 0.5 * (2 / 3) * (-1 / 3) * 1.5 ** (-4 / 3), rel_tol=1e-10)
