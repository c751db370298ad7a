"""Shared oracles for the test suite."""
from __future__ import annotations

import warnings

import numpy as np
import pytest
from scipy.integrate import IntegrationWarning, quad


def angular_average(kernel3d, r: float, s: float) -> complex:
    """(1/4 pi) * integral over the unit sphere of kernel3d(|r e - s w|) dw.

    The radial reduction of a 3D convolution kernel, computed by adaptive
    quadrature in the cosine of the angle between the two points.
    """
    def f(c):
        return kernel3d(np.sqrt(max(r * r + s * s - 2 * r * s * c, 0.0)))

    opts = dict(limit=400, epsabs=0.0, epsrel=1e-13)
    # near r = s the integrand is nearly singular at c = 1 and quad reports
    # round-off at this tolerance; the callers' own bounds are far looser
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        re = quad(lambda c: np.real(f(c)), -1.0, 1.0, **opts)[0]
        im = quad(lambda c: np.imag(f(c)), -1.0, 1.0, **opts)[0]
    return 0.5 * (re + 1j * im)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)
