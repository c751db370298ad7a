import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import angular_average
from specwave.errors import DomainError
from specwave.evolution import operator_norm_2to2
from specwave.free_resolvent import (distance_kernel, exponential_kernel, fresnel_kernel,
                                     helmholtz_kernel, limiting_absorption_scan,
                                     radial_free_resolvent, yukawa_kernel)
from specwave.operator_assembly import assemble_hamiltonian
from specwave.radial_grid import build_grid, radial_laplacian


def _one(kernel, r, s, *args):
    return complex(kernel(np.array([r]), np.array([s]), *args)[0, 0])


@pytest.mark.parametrize("r,s", [(0.3, 2.0), (1.0, 1.0), (5.0, 0.7), (0.05, 0.06)])
def test_static_kernel_angular_oracle(r, s):
    ref = angular_average(lambda p: 1.0 / (4 * math.pi * p), r, s)
    got = _one(helmholtz_kernel, r, s, 0.0)
    assert abs(got - 1.0 / (4 * math.pi * max(r, s))) < 1e-15
    assert abs(got - ref) / abs(ref) < 1e-6


def test_kernels_against_angular_oracle(rng):
    for _ in range(6):
        r, s = rng.uniform(0.05, 8.0, 2)
        z = rng.uniform(0.1, 4.0)
        cases = [
            (helmholtz_kernel, (z,), lambda p: np.exp(1j * z * p) / (4 * math.pi * p)),
            (yukawa_kernel, (math.sqrt(2 + z * z),),
             lambda p: np.exp(-math.sqrt(2 + z * z) * p) / (4 * math.pi * p)),
            (fresnel_kernel, (z,), lambda p: np.exp(-1j * p * p / (4 * z)) / p),
            (exponential_kernel, (1.3,), lambda p: np.exp(-1.3 * p)),
        ]
        for kern, args, k3 in cases:
            ref = angular_average(k3, r, s)
            assert abs(_one(kern, r, s, *args) - ref) / abs(ref) < 1e-8, kern.__name__
        ref = angular_average(lambda p: p, r, s)
        assert abs(_one(distance_kernel, r, s) - ref) / abs(ref) < 1e-10


def test_upper_kernel_inverts_discrete_operator():
    g = build_grid(800, 20.0)
    L = radial_laplacian(g)
    for z in (0.0, 0.7):
        K = radial_free_resolvent(g, 1.0, z, "+")
        M = (L - z * z * np.eye(g.n)) @ (K.upper * g.w)
        # interior rows away from the wall; the discrete inverse error is O(h^2)
        assert np.abs(M - np.eye(g.n))[:-20, :-20].max() < 50 * g.h**2


def test_side_conjugation():
    g = build_grid(60, 6.0)
    for z in (0.3, 1.7):
        p = radial_free_resolvent(g, 1.0, z, "+")
        m = radial_free_resolvent(g, 1.0, z, "-")
        assert np.array_equal(m.upper, np.conj(p.upper))
        assert np.array_equal(m.lower, p.lower)


def test_lower_block_negative_and_bounded():
    g = build_grid(300, 30.0)
    K = radial_free_resolvent(g, 1.0, 1.0, "+")
    assert np.all(np.isreal(K.lower)) and np.all(K.lower.real < 0)
    rr, ss = np.meshgrid(g.r, g.r, indexing="ij")
    env = np.exp(-math.sqrt(3.0) * np.abs(rr - ss)) / (4 * math.pi * rr * ss) / (2 * math.sqrt(3.0))
    assert np.all(np.abs(K.lower) <= env * (1 + 1e-12))


def test_lower_norm_decreasing_in_z():
    g = build_grid(300, 30.0)
    norms = [operator_norm_2to2(radial_free_resolvent(g, 1.0, z, "+").lower * g.w, g.w)
             for z in (0.0, 1.0, 5.0, 10.0)]
    assert all(a > b for a, b in zip(norms, norms[1:]))
    assert all(n * (1 + z) < 1.0 for n, z in zip(norms, (0.0, 1.0, 5.0, 10.0)))


def test_complex_z_requires_upper_half_plane():
    g = build_grid(20, 2.0)
    with pytest.raises(DomainError):
        radial_free_resolvent(g, 1.0, 1.0 - 0.5j)
    with pytest.raises(DomainError):
        radial_free_resolvent(g, 1.0, 1.0, None)


def _identity_defect(n, z1, z2, rmax=40.0):
    g = build_grid(n, rmax)
    k1, k2 = 1j * z1, 1j * z2  # Im k > 0: genuine resolvents
    R1 = radial_free_resolvent(g, 1.0, k1).upper * g.w
    R2 = radial_free_resolvent(g, 1.0, k2).upper * g.w
    lhs = R1 - R2
    rhs = (k1**2 - k2**2) * R1 @ R2
    # the discrete product truncates the convolution at the wall; compare
    # only rows and columns well inside the box
    inner = g.r < rmax / 2
    return np.abs(lhs - rhs)[np.ix_(inner, inner)].max() / np.abs(lhs).max(), g.h


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
@settings(max_examples=10, deadline=None)
def test_first_resolvent_identity(z1, z2):
    assume(abs(z1 - z2) > 0.05)
    coarse, h = _identity_defect(240, z1, z2)
    fine, _ = _identity_defect(480, z1, z2)
    # quadrature of the kinked product kernel: second order in h
    assert coarse <= max(z1, z2) ** 2 * h**2
    assert fine <= coarse / 3.0 or fine < 1e-10


def test_lap_scan_free_stabilizes():
    # epsilon must exceed the box level spacing while eps R / k stays large
    H = assemble_hamiltonian(build_grid(32000, 4000.0), 1.0)
    rows = limiting_absorption_scan(H, [2.0], [0.03, 0.01, 0.003], sigma=2.0)
    vals = [r["norm"] for r in rows]
    assert abs(vals[-1] - vals[0]) / vals[-1] < 0.05
    assert vals[0] < vals[1] < vals[2]


def test_lap_scan_scaled_bounded():
    H = assemble_hamiltonian(build_grid(800, 100.0), 1.0)
    rows = limiting_absorption_scan(H, [1.5, 3.0, 6.0, 10.0], [0.2], sigma=2.0)
    scaled = np.array([r["scaled"] for r in rows])
    assert np.all(np.isfinite(scaled)) and scaled.max() / scaled.min() < 10


def test_lap_scan_threshold_rejected():
    H = assemble_hamiltonian(build_grid(50, 10.0), 1.0)
    with pytest.raises(DomainError):
        limiting_absorption_scan(H, [1.0], [0.1], sigma=2.0)
