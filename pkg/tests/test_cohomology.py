import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torus_kam.arithmetic import ResonanceError, golden_frequency
from torus_kam.cohomology import sharpness_witness, solve_scalar, solve_vector, verify_lemma1
from torus_kam.fourier import (
    SpectralScalar,
    SpectralVectorField,
    directional_derivative,
    gevrey_random,
    random_hermitian,
)
from torus_kam.weights import Weight

GOLD = golden_frequency()


def test_single_mode_amplitude():
    f = SpectralScalar.from_modes(2, 1, {(1, -1): 0.5})
    sol = solve_scalar(f, GOLD)
    phi = 0.5 * (1 + 5**0.5)
    assert abs(sol.g.coeff((1, -1))) == pytest.approx(0.5 / (2 * np.pi * (phi - 1)), abs=1e-12)
    assert sol.c == 0.0
    assert sol.residual == 0.0


def test_constant_gives_zero_solution():
    sol = solve_scalar(SpectralScalar.constant(2, 2, 0.7), GOLD)
    assert sol.g.is_zero() and sol.c == pytest.approx(0.7)
    assert sol.worst_k is None


def test_resonant_support_raises():
    f = SpectralScalar.from_modes(2, 2, {(2, -1): 0.1})
    with pytest.raises(ResonanceError):
        solve_scalar(f, [1.0, 2.0])


def test_resonance_off_support_is_fine():
    f = SpectralScalar.from_modes(2, 2, {(1, 0): 0.1})
    assert solve_scalar(f, [1.0, 2.0]).residual < 1e-15


@given(st.integers(0, 2**31 - 1))
def test_solution_solves_equation(seed):
    f = random_hermitian(2, 5, np.random.default_rng(seed))
    sol = solve_scalar(f, GOLD)
    back = directional_derivative(sol.g, GOLD.array)
    back.coeffs[back.center] += sol.c
    assert np.allclose(back.coeffs, f.coeffs, atol=1e-13)
    assert sol.g.coeff((0, 0)) == 0
    assert sol.g.hermitian_defect() < 1e-15


def test_vector_solver_componentwise():
    rng = np.random.default_rng(0)
    F = SpectralVectorField.from_components([random_hermitian(2, 3, rng) for _ in range(2)])
    sol = solve_vector(F, GOLD)
    assert np.allclose(sol.lambda_vec, F.mean)
    for i in range(2):
        assert np.allclose(sol.g[i].coeffs, solve_scalar(F[i], GOLD).g.coeffs)


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.3, 0.5, 0.7]))
def test_loss_estimate_holds(seed, a):
    rng = np.random.default_rng(seed)
    f = gevrey_random(2, 12, a, 1.5, rng, random_modulus=True)
    rep = verify_lemma1(f, GOLD, Weight.gevrey(a), 1.5, 1.0)
    assert rep.holds


def test_witness_is_sharp():
    w = Weight.gevrey(0.5)
    f = sharpness_witness(GOLD, w, 1.0, 32)
    rep = verify_lemma1(f, GOLD, w, 1.0, 1.0)
    assert rep.ratio == pytest.approx(1.0, rel=1e-12)


def test_cutoff_must_cover_support():
    f = SpectralScalar.from_modes(2, 4, {(3, 1): 0.1})
    with pytest.raises(ValueError):
        verify_lemma1(f, GOLD, Weight.gevrey(0.5), 1.0, 0.5, K=2)
