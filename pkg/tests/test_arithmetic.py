from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_kam.arithmetic import (
    Frequency,
    NoWitnessError,
    QuadraticIrrational,
    ResonanceError,
    classify,
    continued_fraction,
    counterexample_source,
    divisor_table,
    golden_frequency,
    growth_constant,
    growth_power_of_two,
    growth_stretched_exp,
    liouville_builder,
    liouville_counterexample_norms,
    small_divisor_scan,
)
from torus_kam.cohomology import solve_scalar
from torus_kam.weights import Weight


def test_golden_fibonacci():
    rec = continued_fraction(QuadraticIrrational(1, 5, 2), 20)
    assert rec.partial_quotients == [1] * 20
    fib = [1, 1]
    while len(fib) < 21:
        fib.append(fib[-1] + fib[-2])
    assert rec.denominators == fib[:21]


def test_sqrt2_periodic():
    rec = continued_fraction(QuadraticIrrational.sqrt(2), 10)
    assert rec.partial_quotients == [2] * 10


@given(st.integers(2, 400).filter(lambda d: int(d**0.5) ** 2 != d))
def test_float_expansion_agrees_with_exact(D):
    exact = continued_fraction(QuadraticIrrational.sqrt(D), 12)
    approx = continued_fraction(D**0.5, 12)
    m = len(approx.partial_quotients)
    assert m >= 3
    assert approx.partial_quotients == exact.partial_quotients[:m]


def test_float_expansion_flags_precision():
    rec = continued_fraction(2**0.5, 60)
    assert rec.precision_exhausted and rec.trustworthy_terms < 60


@given(st.integers(2, 300).filter(lambda d: int(d**0.5) ** 2 != d))
def test_convergent_error_bound(D):
    rec = continued_fraction(QuadraticIrrational.sqrt(D), 8)
    # q grows past 1e6 quickly, so a float alpha is not accurate enough
    with localcontext() as ctx:
        ctx.prec = 60
        root = Decimal(D).sqrt()
        alpha = root - int(root)
        for n in range(1, 6):
            p, q = rec.numerators[n], rec.denominators[n]
            assert abs(q * alpha - p) < Decimal(1) / rec.denominators[n + 1]


def test_rational_rejected():
    with pytest.raises(ValueError):
        continued_fraction(Fraction(3, 7), 5)


def test_resonance_raises():
    with pytest.raises(ResonanceError) as exc:
        small_divisor_scan([1.0, 2.0], 4)
    assert tuple(exc.value.k) == (2, -1)


def test_scan_golden():
    scan = small_divisor_scan(golden_frequency(), 10, tau=1.0, a=0.5)
    d = divisor_table(golden_frequency(), 10)
    d[10, 10] = np.inf
    assert scan.min_div == pytest.approx(d.min())
    assert max(abs(k) for k in scan.worst_k) == 8  # (-13, 8) lies outside, (5,-8) is in the box


def test_classify_golden_and_liouville():
    gold = classify(continued_fraction(QuadraticIrrational(1, 5, 2), 30))
    assert gold.verdict("diophantine") == "supported"
    assert gold.verdict("bruno") == "supported"
    rec, _ = liouville_builder(growth_power_of_two, 9)
    liou = classify(rec, 0.5)
    assert liou.verdict("russmann") == "refuted"
    assert liou.verdict("gevrey_bruno") == "refuted"


def test_builder_constant_growth_is_quadratic():
    rec, approx = liouville_builder(growth_constant(2), 12)
    assert rec.partial_quotients == [2] * 12
    assert float(approx) == pytest.approx(2**0.5 - 1, abs=1e-8)


def test_stretched_growth_builds():
    rec, _ = liouville_builder(growth_stretched_exp(0.7), 7)
    assert len(rec.denominators) == 8


def test_liouville_norm_growth():
    rec, _ = liouville_builder(growth_power_of_two, 9)
    tab = liouville_counterexample_norms(rec, Weight.gevrey(0.5), 0.1, [4, 5, 6, 7])
    assert all(tab.growth_factors_at_least(10))


def test_counterexample_source_solution_grows():
    rec, approx = liouville_builder(growth_power_of_two, 4)
    om = Frequency((1.0, float(approx)))
    w = Weight.gevrey(0.5)
    f, rep = counterexample_source(om, w, [0.5, 0.3], K=64, return_report=True, alpha_mp=approx)
    g = solve_scalar(f, om).g
    for wit in rep["witnesses"]:
        assert wit["abs_f"] <= wit["bound_f"] * (1 + 1e-12)
        assert abs(g.coeff(wit["k"])) == pytest.approx(wit["abs_g"], rel=1e-6)


def test_counterexample_needs_witness():
    with pytest.raises(NoWitnessError):
        counterexample_source(golden_frequency(), Weight.gevrey(0.5), [50.0], K=8)
