import json

import numpy as np
import pytest

from torus_kam.arithmetic import golden_frequency
from torus_kam.fourier import SpectralScalar, SpectralVectorField, TorusMap, gevrey_random, grid_sup, l1_norm
from torus_kam.kam import (
    ConfigError,
    EnvelopeViolation,
    KamConfig,
    KamDivergenceError,
    analytic_kam_solve,
    conjugacy_residual,
    convergence_order,
    gevrey_linearize,
    initial_width,
    kam_threshold_margin,
    newton_step,
    reparametrized_oracle,
)

GOLD = golden_frequency()


def _single_mode(eps, K=1):
    return SpectralVectorField.from_components([SpectralScalar.from_modes(2, K, {(1, -1): eps / 2}),
                                                SpectralScalar.from_modes(2, K, {(1, -1): -0.5j * eps})])


def _generic(seed, K=16, eps=1e-6):
    rng = np.random.default_rng(seed)
    return SpectralVectorField.from_components([gevrey_random(2, K, 0.5, 1.0, rng, norm=eps) for _ in range(2)])


@pytest.mark.parametrize("kw", [dict(kappa=2.0), dict(a=1.0), dict(r=1.2), dict(tau0=0.3),
                                dict(envelope_slack=0.5), dict(u0=0.9)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        KamConfig(**kw)


def test_config_roundtrip_rejects_unknown():
    cfg = KamConfig(K_max=16)
    assert KamConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        KamConfig.from_dict({"bogus": 1})


def test_newton_step_constant_field():
    F = SpectralVectorField.constant([1e-3, 2e-3], 2)
    inc = newton_step(F, GOLD.array)
    assert np.allclose(inc.lambda_inc, [1e-3, 2e-3])
    assert inc.phi_inc.is_identity() and inc.F_next.is_zero()


def test_newton_step_is_quadratic():
    small, smaller = (newton_step(_single_mode(e), GOLD.array, K_out=16).F_next for e in (1e-4, 1e-5))
    # shrinking the size tenfold cuts the new perturbation by about a hundred
    assert l1_norm(small) / l1_norm(smaller) == pytest.approx(100.0, rel=0.05)


def test_analytic_solver_converges_quadratically():
    cfg = KamConfig(tol_residual=1e-30, max_inner=4, K_max=16)
    res = analytic_kam_solve(_single_mode(1e-6), GOLD, s=0.2, sigma=0.04, cfg=cfg)
    assert res.order >= 1.9
    assert conjugacy_residual(_single_mode(1e-6), GOLD.array, res.lam, res.phi, N=32) < 1e-12


def test_divergence_is_reported():
    cfg = KamConfig(K_max=8, max_inner=6)
    with pytest.raises(KamDivergenceError) as exc:
        analytic_kam_solve(_single_mode(2.0), GOLD, s=0.2, sigma=0.04, cfg=cfg)
    assert len(exc.value.history) >= 1


def test_convergence_order_helper():
    assert convergence_order([1e-2, 1e-4, 1e-8, 1e-16]) == pytest.approx(2.0)
    assert np.isnan(convergence_order([1.0, 0.5]))


def test_threshold_margin_monotone_in_size():
    cfg = KamConfig()
    assert kam_threshold_margin(0.1, 1e-8, 0.2, 0.04, cfg) < kam_threshold_margin(0.1, 1e-6, 0.2, 0.04, cfg)


def test_initial_width_cap():
    cfg = KamConfig()
    u0, ratio, capped = initial_width(1.0, 0.1, cfg)
    assert capped and u0 == pytest.approx(0.45 * cfg.r)
    u0, ratio, capped = initial_width(1e-9, 0.1, cfg)
    assert not capped and 0 < u0 < cfg.r / 2
    assert np.exp(-cfg.r * (cfg.r / (2 * u0)) ** cfg.b / cfg.b) == pytest.approx(ratio, rel=1e-9)


def test_oracle_mean_one():
    f = SpectralScalar.from_modes(2, 1, {(0, 0): 1.0, (1, -1): 0.025})
    o = reparametrized_oracle(f, GOLD, K_out=16)
    assert o.mu == 0.0 and np.allclose(o.lam, 0.0)
    assert o.residual < 1e-13
    assert grid_sup(o.phi_inverse.displacement - o.phi_first_order.displacement, 32) < 1e-15
    assert abs(o.g.coeff((1, -1))) == pytest.approx(0.025 / (2 * np.pi * 0.6180339887498949), rel=1e-12)


def test_oracle_mean_not_one_is_exact():
    f = SpectralScalar.from_modes(2, 1, {(0, 0): 1.1, (1, -1): 0.02})
    o = reparametrized_oracle(f, GOLD, K_out=16)
    assert o.residual < 1e-12
    assert o.mu != pytest.approx(1 - 1.1)  # the first-order modifier is not exact
    assert np.allclose(o.lam, o.mu * GOLD.array)


def test_gevrey_linearize_zero_field():
    cert, lam, phi = gevrey_linearize(SpectralVectorField.zeros(2, 4), GOLD, KamConfig(K_max=4))
    assert np.all(lam == 0) and phi.is_identity() and cert.final["residual"] == 0.0


def test_gevrey_linearize_generic_and_deterministic():
    F = _generic(3)
    cfg = KamConfig(K_max=16, calibrate=True)
    cert, lam, phi = gevrey_linearize(F, GOLD, cfg)
    assert cert.final["residual"] < 1e-10
    assert all(s["lambda_ok"] and s["map_ok"] for s in cert.stages)
    assert cert.hypotheses["r_gt_c_tau"] is False
    assert cert.telescoping["status"] == "refused"
    again = gevrey_linearize(F, GOLD, cfg)[0]
    assert json.dumps(cert.to_dict(), sort_keys=True) == json.dumps(again.to_dict(), sort_keys=True)


def test_gevrey_linearize_multistage():
    F = _generic(5)
    cert, lam, phi = gevrey_linearize(F, GOLD, KamConfig(K_max=16, u0=0.3))
    assert len(cert.stages) >= 2
    assert cert.final["residual"] < 1e-10


def test_strict_mode_raises_on_envelope():
    F = _generic(3)
    with pytest.raises(EnvelopeViolation):
        gevrey_linearize(F, GOLD, KamConfig(K_max=16, strict=True, C2=1e-3, C4=1e-3))


def test_residual_modes_agree_for_identity_theta():
    F = _single_mode(1e-6)
    res = analytic_kam_solve(F, GOLD, cfg=KamConfig(K_max=16))
    a = conjugacy_residual(F, GOLD.array, res.lam, res.phi, mode="constant", N=32)
    b = conjugacy_residual(F, GOLD.array, res.lam, res.phi, Theta=TorusMap.identity(2), mode="pullback", N=32)
    assert a == b
