import math

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from specwave.errors import ConfigurationError, RefinementError
from specwave.osc_integrals import (fit_gk_envelope, fourier_l1, fresnel_integral, gk,
                                    gk_derivative, gk_norms, ha_fourier, ha_fourier_decay,
                                    make_cutoff, smooth_step, trend_slope, verify_birb)


@pytest.fixture(scope="module")
def chi():
    return make_cutoff(0.4)


def test_cutoff_shape(chi):
    z = np.array([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    vals = chi(z)
    assert vals[0] == vals[1] == vals[2] == 1.0
    assert 0 < vals[3] < 1 and vals[4] == 0 and vals[5] == 0
    # midpoint of the symmetric step, to the accuracy of its Gauss-Legendre rule
    assert abs(chi(np.array([0.3]))[0] - 0.5) < 1e-11


def test_cutoff_derivative_matches_difference(chi):
    z = np.linspace(-0.39, 0.39, 41) + 1e-3
    h = 1e-6
    fd = (chi(z + h) - chi(z - h)) / (2 * h)
    assert np.abs(fd - chi.derivative(z)).max() < 1e-6


def test_cutoff_fourier_round_trip(chi):
    assert chi.roundtrip_error() <= 1e-8
    centre = chi.u.size // 2
    idx = centre + np.array([0, 48, 280, 955])
    assert np.abs(chi.fourier(chi.u[idx]) - chi.hat[idx]).max() <= 1e-8
    # integral of chi: flat part plus two half-weighted transition bands
    assert abs(chi.fourier(np.array([0.0]))[0] - 1.5 * chi.lambda0) <= 1e-11


def test_smooth_step_antisymmetry():
    s = np.linspace(-1.2, 1.2, 49)
    np.testing.assert_allclose(smooth_step(s) + smooth_step(-s), 1.0, atol=1e-14)


@pytest.mark.parametrize("t", [0.5, 3.0, 20.0])
def test_fresnel_gaussian_closed_form(t):
    got = fresnel_integral(lambda z: np.exp(-z * z), t, (-9.0, 9.0))
    assert abs(got - np.sqrt(np.pi / (1 - 1j * t))) <= 1e-8


def test_fresnel_small_t_limit(chi):
    got = fresnel_integral(chi, 1e-9, (-0.4, 0.4))
    assert abs(got - 0.6) <= 1e-8


def test_fresnel_odd_vanishes(chi):
    for t in (1.0, 50.0):
        assert abs(fresnel_integral(lambda z: z * chi(z), t, (-0.4, 0.4))) <= 1e-12


def test_fresnel_sampled_resolution(chi):
    z = np.linspace(-0.4, 0.4, 101)
    with pytest.raises(RefinementError):
        fresnel_integral((z, chi(z)), 1e3)
    fine = np.linspace(-0.4, 0.4, 40001)
    a = fresnel_integral((fine, chi(fine)), 1e3)
    b = fresnel_integral(chi, 1e3, (-0.4, 0.4))
    assert abs(a - b) <= 1e-8
    with pytest.raises(ConfigurationError):
        fresnel_integral(chi, 1.0)


def test_birb_bounded_ratios(chi):
    rows = verify_birb(chi, chi.derivative, np.geomspace(1.0, 1e4, 13), (-0.4, 0.4))
    r0 = np.array([r["ratio0"] for r in rows])
    r1 = np.array([r["ratio1"] for r in rows])
    assert r0.max() <= 2 and r1.max() <= 2
    # the moment column vanishes by parity
    assert r1.max() <= 1e-10
    # past the crossover t ~ 1/lambda0^2 the first column is flat
    late = np.array([r["t"] for r in rows]) >= 30
    assert trend_slope(np.array([r["t"] for r in rows])[late], r0[late]) <= 0.02


def test_birb_zero_function():
    rows = verify_birb(lambda z: 0 * z, lambda z: 0 * z, [1.0, 10.0], (-1.0, 1.0))
    assert all(r["ratio0"] == 0 and r["ratio1"] == 0 for r in rows)


def test_birb_rejects_inconsistent_derivative(chi):
    with pytest.raises(ConfigurationError):
        verify_birb(chi, lambda z: 2 * chi.derivative(z), [1.0], (-0.4, 0.4))


def test_birb_scaling_invariance(chi):
    # F_a(z) = F(z/a) at t/a^2 has the same ratios as F at t
    def F(z):
        return chi(z - 0.1)

    def dF(z):
        return chi.derivative(z - 0.1)

    a = 2.0
    t = np.array([5.0, 50.0, 500.0])
    base = verify_birb(F, dF, t, (-0.3, 0.5))
    scaled = verify_birb(lambda z: F(z / a), lambda z: dF(z / a) / a, t / a**2, (-0.6, 1.0))
    for p, q in zip(base, scaled):
        assert abs(p["ratio0"] - q["ratio0"]) <= 0.05 * p["ratio0"]
        assert abs(p["ratio1"] - q["ratio1"]) <= 0.05 * p["ratio1"]


def test_fourier_l1_gaussian():
    # transform of e^{-z^2} is sqrt(pi) e^{-u^2/4}; its L^1 norm is 2 pi
    assert abs(fourier_l1(lambda z: np.exp(-z * z), (-9.0, 9.0)) - 2 * math.pi) <= 1e-8


def test_trend_slope():
    t = np.geomspace(1, 100, 10)
    assert trend_slope(t, t**0.5) == pytest.approx(0.5)
    assert trend_slope(t, np.zeros(10)) == 0.0


def test_gk_norms_closed_form():
    rows = gk_norms([0.0, 0.5, 1.0, 2.0])
    for r in rows:
        assert abs(r["g"] - 2 * math.exp(-r["k"])) <= 1e-8
    assert abs(rows[0]["g"] - 2.0) <= 1e-8


def test_gk_envelope_fit():
    rows = gk_norms(np.linspace(0.0, 10.0, 21))
    fit = fit_gk_envelope(rows)
    assert fit["max_ratio"] <= 2.0
    assert all(np.isfinite(fit["ratios"]))


@pytest.fixture(scope="module")
def gk_symbolic():
    x, k = sympy.symbols("x k", real=True)
    rho = sympy.sqrt(x**2 + k**2)
    expr = x * sympy.exp(-rho) / rho
    return [sympy.lambdify((x, k), sympy.diff(expr, x, o), "numpy") for o in range(4)]


@given(st.floats(-6.0, 6.0).filter(lambda v: abs(v) > 1e-3), st.floats(0.0, 4.0))
@settings(max_examples=40, deadline=None)
def test_gk_derivatives_symbolic(gk_symbolic, x, k):
    for order, f in enumerate(gk_symbolic):
        ref = float(f(x, k))
        got = float(gk_derivative(np.array([x]), k, order)[0])
        assert abs(got - ref) <= 1e-11 * max(1.0, abs(ref))


def test_gk_odd():
    x = np.linspace(-5, 5, 101)
    np.testing.assert_allclose(gk(x, 1.3), -gk(-x, 1.3), atol=0)


def test_ha_transform_properties():
    for eta in (0.5, 3.0, 20.0):
        val = ha_fourier(eta, 1.0)
        assert abs(val.real) <= 1e-10
    rows = ha_fourier_decay([1.0], np.concatenate(([0.0], np.geomspace(0.1, 100.0, 12))))
    ratios = np.array([r["ratio_1"] for r in rows])
    assert np.all(np.isfinite(ratios)) and ratios.max() <= 5.0


def test_ha_decay_in_a():
    rows = ha_fourier_decay([0.5, 1.0, 2.0, 4.0, 8.0], [1.0])
    tops = [r["log_abs_plus"] for r in rows]
    # log|h_a^| + sqrt(mu) a stays bounded above and does not grow with a
    assert max(tops) <= tops[0] + 1e-9
    with pytest.raises(ConfigurationError):
        ha_fourier_decay([0.0], [1.0])
