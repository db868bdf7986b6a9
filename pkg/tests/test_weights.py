import mpmath as mp
import numpy as np
import pytest
import sympy as sy

from heatctl import weights as W

T = 0.5
R0 = W.rho0_default(T, 0.75)
R = W.rho_default(T, 0.75)
UNIT = W.WeightSpec(W.Unit(), T)


def test_unit_weight_is_one_everywhere():
    t = np.array([0.0, 0.2, T])
    assert np.all(W.eval_rho0(UNIT, t) == 1.0)
    assert np.all(W.eval_rho0_inv(UNIT, t) == 1.0)
    assert np.all(W.eval_rho_inv(UNIT, t) == 1.0)


def test_rho0_at_zero_matches_high_precision_formula():
    mp.mp.dps = 40
    exact = mp.mpf(1) / 2 ** mp.mpf(1.5) * mp.e ** mp.mpf(1.5)
    assert W.eval_rho0(R0, 0.0) == pytest.approx(float(exact), rel=1e-14)


def test_rho0_inverse_at_quarter():
    mp.mp.dps = 40
    exact = 1 / (mp.mpf(0.25) ** mp.mpf(1.5) * mp.e ** 3)
    assert W.eval_rho0_inv(R0, 0.25) == pytest.approx(float(exact), rel=1e-14)


def test_rho_at_zero():
    assert W.eval_rho(R, 0.0) == pytest.approx(np.exp(1.5), rel=1e-15)


def test_blow_up_is_monotone_near_final_time():
    t = np.linspace(0.3, T - 1e-4, 200)
    v = W.eval_rho0(R0, t)
    assert np.all(np.diff(v) > 0)
    assert v[-1] > 1e300


def test_inverse_extends_by_zero():
    assert W.eval_rho0_inv(R0, T) == 0.0
    assert W.eval_rho_inv(R, T) == 0.0
    t = np.linspace(T - T / 50, T, 100)
    assert np.all(W.eval_rho0_inv(R0, t) < 1e-12)


def test_inverse_is_reciprocal_before_T():
    t = np.linspace(0.0, 0.45, 17)
    np.testing.assert_allclose(W.eval_rho0_inv(R0, t) * W.eval_rho0(R0, t), 1.0, rtol=1e-14)


def test_positivity_bound_on_truncated_interval():
    t = np.linspace(0.0, T - 0.05, 500)
    assert W.eval_rho0(R0, t).min() > 0


def test_direct_evaluation_rejects_final_time_and_outside():
    with pytest.raises(W.WeightError):
        W.eval_rho0(R0, T)
    with pytest.raises(W.WeightError):
        W.eval_rho0_inv(R0, -0.1)


def test_carleman_variant_has_no_evaluator():
    spec = W.WeightSpec(W.CarlemanTyped(1.0, 2.0), T)
    with pytest.raises(W.WeightError):
        W.eval_rho0(spec, 0.1)
    with pytest.raises(W.WeightError):
        W.eval_rho_inv(spec, 0.1)


def test_invalid_polyexp_parameters():
    with pytest.raises(W.WeightError):
        W.PolyExp(-1.0, 0.75)
    with pytest.raises(W.WeightError):
        W.PolyExp(1.5, 0.0)
    with pytest.raises(W.WeightError):
        W.WeightSpec(W.Unit(), 0.0)


def test_normalized_coeffs_at_zero():
    # alpha0 = -rho0'/rho by the product rule
    a1, a0 = W.normalized_coeffs(R0, R, 0.0)
    assert a1 == pytest.approx(0.5**1.5, rel=1e-15)
    assert a0 == pytest.approx(1.5 * 0.5**0.5 - 0.75 * 0.5**-0.5, rel=1e-14)


def test_alpha1_vanishes_at_final_time():
    a1, _ = W.normalized_coeffs(R0, R, np.array([T - 1e-6]))
    assert a1[0] < 1e-8


def test_product_rule_identity():
    """alpha1 L*psi + alpha0 psi == rho^{-1} L*(rho0 psi) for polynomial psi."""
    x, t = sy.symbols("x t", real=True)
    c, d, K1 = sy.Rational(1, 10), sy.Rational(3, 10), sy.Rational(3, 4)
    tau = sy.Rational(1, 2) - t
    rho0 = tau ** sy.Rational(3, 2) * sy.exp(K1 / tau)
    rho = sy.exp(K1 / tau)
    psi = (1 + x**2 * t - 3 * x * t**2) * x * (1 - x)

    def lstar(f):
        return -sy.diff(f, t) - c * sy.diff(f, x, 2) + d * f

    lhs = sy.lambdify((x, t), sy.simplify(lstar(rho0 * psi) / rho), "numpy")
    lpsi = sy.lambdify((x, t), lstar(psi), "numpy")
    pv = sy.lambdify((x, t), psi, "numpy")
    rng = np.random.default_rng(0)
    xs, ts = rng.uniform(0, 1, 50), rng.uniform(0, 0.49, 50)
    a1, a0 = W.normalized_coeffs(R0, R, ts)
    rhs = a1 * lpsi(xs, ts) + a0 * pv(xs, ts)
    np.testing.assert_allclose(rhs, lhs(xs, ts), rtol=1e-10, atol=1e-10)


def test_normalized_coeffs_rejects_bad_pairs():
    with pytest.raises(W.WeightError):
        W.normalized_coeffs(R0, W.rho_default(T, 0.5), 0.1)
    with pytest.raises(W.WeightError):
        W.normalized_coeffs(R0, R0, 0.1)
    with pytest.raises(W.WeightError):
        W.normalized_coeffs(R0, UNIT, 0.1)
    with pytest.raises(W.WeightError):
        W.normalized_coeffs(R0, R, T)


def test_unit_pair_is_identity():
    a1, a0 = W.normalized_coeffs(UNIT, UNIT, 0.3)
    assert (a1, a0) == (1.0, 0.0)
