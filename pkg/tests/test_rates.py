"""Rate case table and slope fitting."""

import numpy as np
import pytest

from starklab.rates import (
    PairDescriptor,
    RateError,
    SceneDescription,
    fit_rate,
    predict_exponent,
    predict_wave_operator_exponent,
)


def two_body(charged, **kw):
    return SceneDescription(pairs=(PairDescriptor(pair=(1, 2), charged=charged, **kw),))


def test_neutral_short_range_gives_v_minus_one():
    scene = two_body(False, has_vs=True, rho=1.0)
    model = predict_exponent(scene)
    assert model.exponent == 1.0
    assert model.sharp
    assert predict_wave_operator_exponent(scene)["exponent"] == 1.0


def test_wave_operator_alpha_below_one():
    scene = two_body(True, has_vs=True, has_s=True, alpha=0.75, gamma=0.75)
    wo = predict_wave_operator_exponent(scene)
    assert wo["exponent"] == 0.75
    assert wo["case"] == "alpha<1"


def test_reference_scene_with_short_tail():
    # charged pair, gaussian vs + sE tail alpha = gamma = 3/4, no long range:
    # sigma = 1, gamma2 = 2, rho capped at 2 alpha - 1 = 1/2 -> O(v^-1/2)
    scene = two_body(True, has_vs=True, has_s=True, alpha=0.75, gamma=0.75, rho=1.0)
    model = predict_exponent(scene)
    assert model.gamma2 == 2.0
    assert model.sigma[(1, 2)] == 1.0
    assert model.exponent == pytest.approx(0.5)
    assert model.sharp


def test_charged_long_range_sigma():
    # gamma_d = 0.4, mu = 0.8, no neutral long-range neighbor: theta = 0,
    # sigma~ < 2 - max{1/1.2, 2/2.0, 1} = 1, sigma -> sigma~/(2-sigma~)
    scene = two_body(True, has_vs=True, has_l=True, gamma_d=0.4, mu=0.8, rho=1.0)
    model = predict_exponent(scene)
    st = model.sigma_tilde[(1, 2)]
    assert st == pytest.approx(1.0 - scene.margin)
    assert model.sigma[(1, 2)] == pytest.approx(st / (2 - st))
    assert model.gamma2 == pytest.approx(1.2)
    assert model.theta[(1, 2)] == 0.0


def test_zeta_a_condition_with_neighbor():
    pairs = (
        PairDescriptor(pair=(1, 2), charged=True, has_vs=True, has_l=True,
                       gamma_d=0.5, mu=1.0),
        PairDescriptor(pair=(1, 3), charged=False, has_l=True, gamma1=1.8),
    )
    model = predict_exponent(SceneDescription(pairs=pairs))
    assert model.theta[(1, 2)] == pytest.approx(0.2)


def test_mixed_hypothesis_violation():
    pairs = (
        PairDescriptor(pair=(1, 2), charged=True, has_vs=True, has_l=True,
                       gamma_d=0.1, mu=0.95),
        PairDescriptor(pair=(1, 3), charged=False, has_l=True, gamma1=1.55),
    )
    # gamma1 = 1.55 <= 3 - 4(1.05)/3 = 1.6: structured rejection naming the
    # violated inequality (in either its gamma1 or equivalent theta form)
    with pytest.raises(RateError, match=r"(gamma1 >|theta <)"):
        predict_exponent(SceneDescription(pairs=pairs))


def test_monotone_in_rho():
    # increasing rho never decreases the predicted exponent
    last = -1.0
    for rho in (0.0, 0.2, 0.4, 0.5, 0.8, 1.0):
        scene = two_body(True, has_vs=True, has_s=True, alpha=0.9, gamma=0.9, rho=rho)
        expo = predict_exponent(scene).exponent
        assert expo >= last - 1e-12
        last = expo


def test_fit_rate_exact_power():
    v = np.array([4.0, 8.0, 16.0, 32.0, 64.0])
    rho, half = fit_rate(v, 3.0 / v)
    assert rho == pytest.approx(1.0, abs=1e-10)
    assert half <= 1e-9


def test_fit_rate_noisy_half_power():
    rng = np.random.default_rng(42)
    v = np.array([4.0, 8.0, 16.0, 32.0, 64.0, 128.0])
    errs = 2.0 * v ** -0.5 * (1 + 0.05 * rng.standard_normal(len(v)))
    rho, half = fit_rate(v, errs)
    assert rho == pytest.approx(0.5, abs=0.1)


def test_fit_rate_constant():
    v = np.array([4.0, 8.0, 16.0, 32.0])
    rho, half = fit_rate(v, np.full(4, 0.7))
    assert rho == pytest.approx(0.0, abs=1e-12)


def test_fit_rate_rejects_bad_input():
    with pytest.raises(RateError):
        fit_rate([4, 8, 16], [1, 2, 3])
    with pytest.raises(RateError):
        fit_rate([4, 8, 16, 32], [1.0, -1.0, 0.5, 0.2])
