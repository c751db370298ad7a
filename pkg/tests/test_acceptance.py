"""Acceptance experiments, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
before asserting. The heavy cases (4000x4000 dense operators) are marked
``slow``; run everything with ``pytest tests/test_acceptance.py -s``.
"""
import math
import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from conftest import angular_average
from specwave.evolution import (build_cache, decay_fit, dispersive_experiment,
                                evolve_discrete_part, free_dispersion_series,
                                operator_norm_2to2, reflection_time)
from specwave.free_resolvent import helmholtz_kernel, yukawa_kernel
from specwave.ground_state import linearized_potentials, solve_ground_state
from specwave.operator_assembly import (assemble_hamiltonian, factor_potential, gaussian_pair,
                                        two_bump_pair)
from specwave.osc_integrals import (fit_gk_envelope, gk_norms, make_cutoff, trend_slope,
                                    verify_birb)
from specwave.radial_grid import build_grid
from specwave.spectral_projections import (build_projection_set, discrete_spectrum,
                                           grid_tolerance, threshold_projection)
from specwave.threshold_analysis import (RESONANCE, assemble_A0, classify_threshold,
                                         find_eigenvalue_couplings, find_resonant_coupling,
                                         jn_inverse)
from test_threshold_analysis import random_family


def verdict(capsys, number, ok, detail, started):
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail} "
              f"[{time.perf_counter() - started:.1f}s]")
    assert ok, detail


def test_criterion_1_jn_oracle(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(100):
        A0, A1 = random_family(rng, 1 + trial % 2)
        for z in (1e-2, 1e-3):
            direct = np.linalg.inv(A0 + z * A1(z))
            err = np.linalg.norm(jn_inverse(A0, A1, z) - direct) / np.linalg.norm(direct)
            worst = max(worst, err)
    verdict(capsys, 1, worst <= 1e-9, f"max relative error {worst:.2e} (<= 1e-9)", t0)


def test_criterion_2_gk_norms(capsys):
    t0 = time.perf_counter()
    exact = gk_norms([0.0, 0.5, 1.0, 2.0])
    err = max(abs(r["g"] - 2 * math.exp(-r["k"])) for r in exact)
    fit = fit_gk_envelope(gk_norms(np.linspace(0.0, 10.0, 41)))
    ok = err <= 1e-8 and fit["max_ratio"] <= 2.0
    verdict(capsys, 2, ok, f"|g_k|_1 error {err:.1e} (<= 1e-8); combined/(P e^-k) max "
            f"{fit['max_ratio']:.3f} (<= 2)", t0)


def test_criterion_3_birb_ratios(capsys):
    t0 = time.perf_counter()
    chi = make_cutoff(0.4)
    t = np.geomspace(1.0, 1e4, 25)
    rows = verify_birb(chi, chi.derivative, t, (-0.4, 0.4))
    r0 = np.array([r["ratio0"] for r in rows])
    r1 = np.array([r["ratio1"] for r in rows])
    s0, s1 = trend_slope(t, r0), trend_slope(t, r1)
    bounded = max(r0.max(), r1.max()) <= 2.0
    ok = bounded and s0 <= 0.02 and s1 <= 0.02
    verdict(capsys, 3, ok, f"ratio max {r0.max():.3f}/{r1.max():.1e}, trend slopes "
            f"{s0:.3f}/{s1:.3f} (<= 0.02)", t0)


def test_criterion_4_radial_kernels(capsys, rng):
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        r, s = rng.uniform(0.05, 10.0, 2)
        z = rng.uniform(0.05, 3.0)
        kappa = math.sqrt(2.0 + z * z)
        up = complex(helmholtz_kernel(np.array([r]), np.array([s]), z)[0, 0])
        lo = complex(yukawa_kernel(np.array([r]), np.array([s]), kappa)[0, 0])
        ref_up = angular_average(lambda p: np.exp(1j * z * p) / (4 * math.pi * p), r, s)
        ref_lo = angular_average(lambda p: np.exp(-kappa * p) / (4 * math.pi * p), r, s)
        worst = max(worst, abs(up - ref_up) / abs(ref_up), abs(lo - ref_lo) / abs(ref_lo))
    verdict(capsys, 4, worst <= 1e-6, f"max relative error {worst:.2e} (<= 1e-6)", t0)


@pytest.mark.slow
class TestSoliton:
    """Criteria 5, 6 and 10 on the linearized soliton, N = 2000, R = 200."""

    @pytest.fixture(scope="class")
    @classmethod
    def case(cls):
        g = build_grid(2000, 200.0)
        H = assemble_hamiltonian(g, 1.0, linearized_potentials(solve_ground_state(1.0, 1.0, g)))
        spec = discrete_spectrum(H)
        yield {"H": H, "spec": spec, "cache": build_cache(spec)}

    def test_criterion_5_projection_algebra(self, case, capsys):
        t0 = time.perf_counter()
        H, spec = case["H"], case["spec"]
        ps = build_projection_set(spec)
        res = ps.check()
        # the products that check() leaves out
        for a, b in (("P_d", "P_c"), ("P_d", "P_s")):
            A, B = getattr(ps, a), getattr(ps, b)
            res[f"product_{a}_{b}"] = float(max(np.linalg.norm(A @ B, 2), np.linalg.norm(B @ A, 2)))
        idem = max(v for k, v in res.items() if k.startswith("idempotent"))
        prod = max(v for k, v in res.items() if k.startswith("product"))
        disc = np.concatenate([spec.eigenvalues[c["indices"]] for c in spec.clusters])
        off = float(np.minimum(np.abs(disc.real), np.abs(disc.imag)).max())
        ok = (idem <= 1e-7 and prod <= 1e-7 and spec.symmetry_residual <= 1e-8
              and off <= 1e-6 * H.norm())
        verdict(capsys, 5, ok, f"idempotency {idem:.1e}, products {prod:.1e}, symmetry "
                f"{spec.symmetry_residual:.1e}, off-axis {off:.1e}", t0)

    def test_criterion_6_L2_bound(self, case, capsys):
        t0 = time.perf_counter()
        cache = case["cache"]
        t = np.geomspace(1.0, cache.t_max, 12)
        vals = np.array([operator_norm_2to2(cache.continuum_operator(x)) for x in t])
        fit = decay_fit(t, vals)
        ok = abs(fit["exponent"]) <= 0.05 and vals.max() <= 3 * vals[0]
        verdict(capsys, 6, ok, f"exponent {fit['exponent']:+.4f} (|.| <= 0.05), max/first "
                f"{vals.max() / vals[0]:.3f} (<= 3), t_max {cache.t_max:.0f}", t0)

    def test_criterion_10_completeness(self, case, capsys):
        t0 = time.perf_counter()
        H, spec, cache = case["H"], case["spec"], case["cache"]
        X = np.random.default_rng(0).standard_normal((H.dim, 4))
        A = H.sparse_unitary().astype(complex)
        errs = []
        for t in (0.1, 0.5, 1.0, 2.0, 3.0):
            got = evolve_discrete_part(spec, t) @ X + cache.continuum_part(t) @ X
            ref = spla.expm_multiply(1j * t * A, X)
            errs.append(np.linalg.norm(got - ref) / np.linalg.norm(ref))
        verdict(capsys, 10, max(errs) <= 1e-6,
                "relative errors " + ", ".join(f"{e:.1e}" for e in errs) + " (<= 1e-6)", t0)


@pytest.mark.slow
def test_criterion_7_free_baseline(capsys):
    t0 = time.perf_counter()
    chi = make_cutoff(3.0)
    fits = []
    for n, rmax in ((2000, 200.0), (4000, 400.0)):
        g = build_grid(n, rmax)
        ts = np.geomspace(5.0, reflection_time(rmax, chi.lambda0), 12)
        fits.append(free_dispersion_series(g, 1.0, chi, ts).fits["1toinf"])
    e0, e1 = fits[0]["exponent"], fits[1]["exponent"]
    # the halfwidth is that of the acceptance band, 0.15
    ok = abs(e0 + 1.5) <= 0.15 and abs(e1 - e0) < 0.15
    verdict(capsys, 7, ok, f"exponent {e0:+.4f} (R=200), {e1:+.4f} (R=400); change "
            f"{abs(e1 - e0):.4f} (< 0.15), fit std errors {fits[0]['halfwidth']:.4f}/"
            f"{fits[1]['halfwidth']:.4f}", t0)


@pytest.mark.slow
def test_criterion_8_resonance(capsys):
    t0 = time.perf_counter()
    g = build_grid(2000, 200.0)
    V = gaussian_pair(g)
    s = find_resonant_coupling(V, g, 1.0, (0.1, 50.0))
    fv = factor_potential(V.scaled(s))
    fam = assemble_A0(g, 1.0, fv)
    rep = classify_threshold(fam)
    # validated window: the h(t) factor of F_t has settled once t lambda0^2 >= 16,
    # and lambda0 = 2 leaves a factor 5 in t before reflection (t_max = 20)
    lam0 = 2.0
    cache = build_cache(discrete_spectrum(assemble_hamiltonian(g, 1.0, V.scaled(s))), lambda0=lam0)
    chi = make_cutoff(lam0)
    ts = np.geomspace(16.0 / lam0**2, cache.t_max, 12)
    ser = dispersive_experiment(cache, chi, ts, report=rep, fv=fv, norms=("1toinf", "ft-diff"))
    e_full = ser.fits["1toinf"]["exponent"]
    e_diff = ser.fits["ft-diff"]["exponent"]
    ranks = ser.meta["ft_rank"]
    ftn = np.array(ser.meta["ft_norm"])
    ok = (fam.singular_values[-1] <= 1e-10 and rep.classification == RESONANCE and rep.c > 0
          and abs(e_full + 0.5) <= 0.15 and abs(e_diff + 1.5) <= 0.25
          and max(ranks) <= 2 and ftn.max() <= 2 * ftn.min())
    verdict(capsys, 8, ok, f"t in [{ts[0]:.0f}, {ts[-1]:.0f}], s*={s:.6f}, "
            f"sigma_min {fam.singular_values[-1]:.1e}, {rep.classification} c={rep.c:.3f}; exponents {e_full:+.3f} (-0.5+-0.15), "
            f"{e_diff:+.3f} (-1.5+-0.25); F_t rank {int(max(ranks))}, norm range "
            f"[{ftn.min():.3g}, {ftn.max():.3g}]", t0)


@pytest.mark.slow
def test_criterion_9_threshold_projection(capsys):
    t0 = time.perf_counter()
    g = build_grid(2000, 20.0)

    def make(a, b):
        return two_bump_pair(g, a, b)

    s1, s2, _ = find_eigenvalue_couplings(make, g, 1.0, (1.5, 2.5))
    fv = factor_potential(make(s1, s2))
    rep = classify_threshold(assemble_A0(g, 1.0, fv))
    basis = threshold_projection(rep, mode="basis")
    Pb, phi = basis["P"], basis["phi"]
    Pk = threshold_projection(rep, fv=fv, mode="kernel")["P"]
    agree = np.linalg.norm(Pb - Pk, 2) / np.linalg.norm(Pb, 2)
    fixed = np.linalg.norm(Pb @ phi - phi) / np.linalg.norm(phi)
    H = assemble_hamiltonian(g, 1.0, make(s1, s2))
    resid = np.linalg.norm(H.sparse_unitary() @ Pb - H.mu * Pb, 2)
    tol = grid_tolerance(g)
    ok = agree <= 1e-4 and fixed <= 1e-6 and resid <= tol
    verdict(capsys, 9, ok, f"{rep.classification}; kernel vs basis {agree:.1e} (<= 1e-4), "
            f"P phi - phi {fixed:.1e} (<= 1e-6), |(H-mu)P| {resid:.1e} (<= {tol:.1e})", t0)


if __name__ == "__main__":
    import sys
    sys.exit(pytest.main([__file__, "-s", "-q"]))
