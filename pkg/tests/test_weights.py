import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_kam.weights import (
    Weight,
    WeightFamily,
    c_constant,
    conjugate_exponent,
    delta_constant,
    gevrey_phi,
    kam_constants,
    log_gamma_majorant,
    log_psi_product,
    non_quasi_analytic_check,
    psi_bound_exponent,
    s_star,
    scaled_conjugate,
    weight_eval,
    young_conjugate_gevrey,
    young_conjugate_numeric,
)


def test_families_normalised_at_zero():
    for w in (Weight.smooth(), Weight.gevrey(0.5), Weight.analytic(), Weight.logpower(2.0)):
        assert weight_eval(w, 0.0) == pytest.approx(0.0, abs=1e-12)


def test_gevrey_one_is_analytic():
    assert Weight.gevrey(1.0).family is WeightFamily.ANALYTIC


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5])
def test_gevrey_exponent_range(bad):
    with pytest.raises(ValueError):
        Weight.gevrey(bad)


def test_logpower_needs_b_at_least_one():
    with pytest.raises(ValueError):
        Weight.logpower(0.5)


def test_weight_roundtrip():
    for w in (Weight.gevrey(0.3), Weight.logpower(1.5), Weight.smooth()):
        assert Weight.from_dict(w.to_dict()) == w


@given(st.floats(0.05, 0.95), st.floats(0.0, 1e4), st.floats(0.0, 1e4))
def test_weights_nondecreasing(a, s, t):
    lo, hi = sorted((s, t))
    for w in (Weight.gevrey(a), Weight.smooth(), Weight.logpower(1.0 + a)):
        assert weight_eval(w, lo) <= weight_eval(w, hi) + 1e-9 * (1 + abs(weight_eval(w, hi)))


@given(st.floats(0.1, 0.9), st.floats(0.05, 20.0))
def test_young_closed_form_matches_grid(a, xi):
    exact = young_conjugate_gevrey(a, xi)
    num = young_conjugate_numeric(Weight.gevrey(a), xi)
    assert num == pytest.approx(exact, rel=1e-6)


@given(st.floats(0.1, 0.9), st.floats(0.05, 20.0), st.floats(0.0, 1e3))
def test_young_inequality(a, xi, t):
    # phi(t) <= phi*(xi) + xi t for every t
    assert gevrey_phi(a, t) <= young_conjugate_gevrey(a, xi) + xi * t + 1e-9


def test_scaled_conjugate_is_r_phi_b():
    a, r, xi = 0.5, 0.8, 0.1
    b = conjugate_exponent(a)
    assert scaled_conjugate(a, r, xi) == pytest.approx(r * (r / xi) ** b / b, rel=1e-12)


def test_constants_reference_values():
    assert delta_constant(0.5, 1.5) == pytest.approx(9.898979, abs=1e-6)
    assert c_constant(0.5, 1.5) == pytest.approx(316.767, abs=1e-3)
    c = kam_constants(0.5, 1.5, 400.0, 1.0)
    assert c.theorem_hypothesis and c.rho == pytest.approx(400 - c.c)
    assert c.upsilon == pytest.approx(c.rho / 8 ** c.b)
    assert c.nu == pytest.approx(c.upsilon / 2)
    assert not kam_constants(0.5, 1.5, 100.0, 1.0).theorem_hypothesis


@pytest.mark.parametrize("kappa", [1.0, 2.0, 2.5])
def test_kappa_range(kappa):
    with pytest.raises(ValueError):
        delta_constant(0.5, kappa)


def test_c_tends_to_one_as_a_shrinks():
    cs = [c_constant(a, 1.5) for a in (0.5, 0.4, 0.3, 0.2, 0.1, 0.05)]
    assert all(x > y for x, y in zip(cs, cs[1:]))
    assert cs[-1] > 1.0


def test_gamma_majorant_monotone_in_sigma():
    vals = [log_gamma_majorant(s, 0.1, 0.5) for s in (0.2, 0.1, 0.05, 0.02)]
    assert all(x < y for x, y in zip(vals, vals[1:]))


def test_psi_bound_below_s_star():
    ss = s_star(0.5, 0.2, 0.1)
    assert 0.0 < ss < 0.05
    sigma = 0.5 * ss
    assert log_psi_product(sigma, 0.5, 1.5, 0.1) <= psi_bound_exponent(sigma, 0.5, 1.5, 0.2)


def test_quasi_analyticity():
    assert non_quasi_analytic_check(Weight.gevrey(0.5)).verdict == "NQ"
    assert non_quasi_analytic_check(Weight.logpower(1.0)).verdict == "Q"
    assert non_quasi_analytic_check(Weight.logpower(2.0)).verdict == "NQ"


def test_weight_vectorised():
    t = np.array([0.0, 1.0, 4.0])
    assert np.allclose(weight_eval(Weight.gevrey(0.5), t), 2 * np.sqrt(t))
    assert math.isclose(weight_eval(Weight.analytic(), 3.0), 3.0)
