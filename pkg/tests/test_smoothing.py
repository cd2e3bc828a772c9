import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_kam.fourier import SpectralScalar, gevrey_random, l1_norm, max_norm_array
from torus_kam.smoothing import (
    SmoothingSchedule,
    TelescopingRefusal,
    approximation_sequence,
    boundary_increments,
    decay_regression,
    envelope_tail_bound,
    required_initial_width,
    seuilconv_margin,
    telescoping_limit,
    verify_popov_bounds,
)


def _envelope(K, a=0.5, r0=1.0):
    k = max_norm_array(2, K).astype(float)
    return SpectralScalar(np.exp(-r0 * k**a / a), 2)


def test_schedule_values():
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 4)
    assert s.widths == [0.8, 0.4, 0.2, 0.1, 0.05]
    assert s.cutoffs[0] == 2 and s.N(1) == 7
    assert s.b == pytest.approx(1.0)


@given(st.floats(0.1, 0.9), st.floats(0.01, 0.8), st.integers(0, 8))
def test_truncation_optimality_identity(a, u0, j):
    # at the untruncated optimum t = (r0/u)^(1/(1-a)): r0 phi_a(t) - u t = r0 phi_b(r0/u)
    r0 = 1.0
    s = SmoothingSchedule(r0, min(0.9, u0 + 0.05), a, u0, j)
    u = s.u(j)
    t = (r0 / u) ** (1.0 / (1.0 - a))
    b = a / (1 - a)
    assert r0 * t**a / a - u * t == pytest.approx(r0 * (r0 / u) ** b / b, rel=1e-9)


@pytest.mark.parametrize("kw", [dict(a=1.0), dict(r=1.2), dict(u0=0.9), dict(J=-1)])
def test_schedule_validation(kw):
    base = dict(r0=1.0, r=0.8, a=0.5, u0=0.8, J=3)
    base.update(kw)
    with pytest.raises(ValueError):
        SmoothingSchedule(**base)


def test_trig_polynomial_has_zero_increments():
    f = SpectralScalar.from_modes(2, 2, {(1, 0): 0.3, (1, 1): 0.1})
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 4)
    fl = approximation_sequence(f, s)
    assert all((fl[j + 1] - fl[j]).is_zero() for j in range(1, len(fl) - 1))


def test_clamp_records_tail_bound():
    f = _envelope(24)
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 4)
    _, recs = approximation_sequence(f, s, return_certificate=True)
    clamped = [r for r in recs if r.clamped]
    assert clamped and all(r.tail_bound > 0 for r in clamped)
    assert not recs[0].clamped


def test_tail_bound_dominates_true_tail():
    f = _envelope(64)
    K = 20
    true_tail = l1_norm(f - f.truncate(K))
    assert true_tail <= envelope_tail_bound(1.0, 1.0, 0.5, 2, K)


@given(st.integers(0, 2**31 - 1))
def test_errors_monotone_and_bounded(seed):
    f = gevrey_random(2, 48, 0.5, 1.0, np.random.default_rng(seed))
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 3)
    fl = approximation_sequence(f, s)
    rep = verify_popov_bounds(f, fl, s)
    assert rep.monotone_violations == []
    assert 0 < rep.C2 < math.inf


def test_C2_stable_under_doubling():
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 6)
    c = []
    for K in (64, 128):
        f = _envelope(K)
        c.append(verify_popov_bounds(f, approximation_sequence(f, s), s).C2)
    assert 0.5 <= c[1] / c[0] <= 2.0


def test_decay_is_negative():
    f = _envelope(128)
    s = SmoothingSchedule(1.0, 0.8, 0.5, 0.8, 6)
    fit = decay_regression(approximation_sequence(f, s), s)
    assert len(fit.stages) >= 4
    assert fit.slope < 0


def test_telescoping_at_boundary():
    ups, nu, r, a = 0.4, 0.2, 0.8, 0.5
    w = required_initial_width(ups, nu, r, a) * (1 - 1e-9)
    assert seuilconv_margin(w, ups, nu, r, a) <= 0.5
    inc = boundary_increments(2, w, ups, nu, r, a, 5)
    limit, cert = telescoping_limit(inc, w, ups, nu, r, a)
    assert cert.holds and cert.measured <= cert.bound
    assert all(link["chain_ok"] for link in cert.links)
    assert all(t <= 0.5 + 1e-12 for t in cert.tail_ratios)


def test_telescoping_refuses_wide_start():
    ups, nu, r, a = 0.4, 0.2, 0.8, 0.5
    w = 1.5 * required_initial_width(ups, nu, r, a)
    inc = boundary_increments(2, w, ups, nu, r, a, 3)
    with pytest.raises(TelescopingRefusal) as exc:
        telescoping_limit(inc, w, ups, nu, r, a)
    assert exc.value.required_w < w
