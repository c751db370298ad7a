"""Time evolution e^{itH}, operator norms, the rank-two operator F_t and decay fits.

The propagator is assembled from the spectral data of
:func:`~specwave.spectral_projections.discrete_spectrum`:

    e^{itH} = Q1 e^{it T11} [I X] Q^T  +  X_c e^{it Lambda_c} Y_c^T

where the first term is the discrete part (exact through the Schur block,
Jordan structure included) and the second the continuum part with left
vectors Y_c = sigma3 X_c / diag(x^T sigma3 x). Everything is in weighted
coordinates; a kernel with respect to 4 pi s^2 ds is recovered by dividing
by sqrt(w_r) sqrt(w_s).

Dispersive measurements use the energy-localized evolution
e^{itH} P_c chi(H): chi(sqrt(|lambda| - mu)) on the continuum modes, so
that every retained mode has group speed at most 2 lambda0 and the box
wall is not seen before t_max = safety * R / (2 lambda0).
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla
from scipy import fft as sp_fft
from scipy import stats

from .errors import DependencyError, DomainError, FitError
from .free_resolvent import fresnel_kernel, yukawa_kernel
from .operator_assembly import MatrixHamiltonian, sigma3
from .osc_integrals import CutoffFunction, fresnel_integral
from .radial_grid import RadialGrid, laplacian_tridiagonal
from .spectral_projections import SpectrumReport, swap_components
from .threshold_analysis import RESONANCE, ThresholdReport

log = logging.getLogger(__name__)

__all__ = [
    "PropagatorCache",
    "DecaySeries",
    "FtOperator",
    "build_cache",
    "propagator",
    "evolve_discrete_part",
    "operator_norm_2to2",
    "operator_norm_1toinf",
    "h_factor",
    "build_Ft",
    "decay_fit",
    "dispersive_experiment",
    "free_upper_kernel",
    "free_dispersion_series",
    "reflection_time",
]


def reflection_time(rmax: float, lambda0: float, safety: float = 0.4) -> float:
    """safety * R / (2 lambda0): the fastest retained wave packet reaches the wall."""
    return safety * rmax / (2.0 * lambda0)


@dataclass(eq=False)
class PropagatorCache:
    """Factorized e^{itH} in weighted coordinates."""

    H: MatrixHamiltonian = field(repr=False)
    spectrum: SpectrumReport = field(repr=False)
    lam_c: np.ndarray = field(repr=False)
    X_c: np.ndarray = field(repr=False)
    Y_c: np.ndarray = field(repr=False)
    condition: float
    t_max: float
    method: str = "spectral"
    residuals: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.H.dim

    def discrete_part(self, t: float) -> np.ndarray:
        s = self.spectrum
        k = s.schur_k
        if k == 0:
            return np.zeros((self.dim, self.dim), dtype=complex)
        E = sla.expm(1j * t * s.schur_T[:k, :k])
        return (s.schur_Q[:, :k] @ E) @ s._left_rows()

    def continuum_part(self, t: float, select: np.ndarray | None = None,
                       weights: np.ndarray | None = None) -> np.ndarray:
        """X_c e^{it Lambda} Y_c^T, optionally on a subset of modes with extra weights."""
        lam, X, Y = self.lam_c, self.X_c, self.Y_c
        if select is not None:
            lam, X, Y = lam[select], X[:, select], Y[:, select]
        phase = np.exp(1j * t * lam)
        if weights is not None:
            phase = phase * (weights if select is None else weights[select])
        return (X * phase) @ Y.T

    def continuum_operator(self, t: float) -> spla.LinearOperator:
        """Matrix-free e^{itH} P_s for norm estimates."""
        phase = np.exp(1j * t * self.lam_c)
        X, Y = self.X_c, self.Y_c
        n = self.dim
        return spla.LinearOperator(
            (n, n), dtype=complex,
            matvec=lambda v: X @ (phase * (Y.T @ np.ravel(v))),
            rmatvec=lambda v: Y.conj() @ (np.conj(phase) * (X.conj().T @ np.ravel(v))))

    def check(self, n_vectors: int = 3, times: Iterable[float] = (0.5,), seed: int = 0) -> dict:
        """Reconstruction, identity at t=0, and agreement with a Krylov exponential."""
        s = self.spectrum
        A = self.H.unitary()
        k = s.schur_k
        rec = (self.X_c * self.lam_c) @ self.Y_c.T
        if k:
            rec = rec + (s.schur_Q[:, :k] @ s.schur_T[:k, :k]) @ s._left_rows()
        nh = self.H.norm()
        out = {"reconstruction": float(np.abs(rec - A).max() / nh)}
        del rec
        I0 = self.discrete_part(0.0) + self.continuum_part(0.0)
        out["identity_at_zero"] = float(np.abs(I0 - np.eye(self.dim)).max())
        del I0
        rng = np.random.default_rng(seed)
        V = rng.standard_normal((self.dim, n_vectors))
        As = self.H.sparse_unitary().astype(complex)
        worst = 0.0
        for t in times:
            ref = spla.expm_multiply(1j * t * As, V)
            got = self.discrete_part(t) @ V + self.X_c @ (np.exp(1j * t * self.lam_c)[:, None]
                                                          * (self.Y_c.T @ V))
            worst = max(worst, float(np.linalg.norm(got - ref) / np.linalg.norm(ref)))
        out["krylov_agreement"] = worst
        self.residuals.update(out)
        return out


def build_cache(spectrum: SpectrumReport, lambda0: float | None = None, safety: float = 0.4,
                condition_limit: float = 1e8) -> PropagatorCache:
    """Factorization of e^{itH}; t_max from the cutoff width lambda0 (default 0.4 sqrt(mu))."""
    H = spectrum.H
    lambda0 = 0.4 * math.sqrt(H.mu) if lambda0 is None else lambda0
    idx = spectrum.continuum_index
    X = spectrum.eigenvectors[:, idx]
    kr = spectrum.krein
    Y = (sigma3(H.n)[:, None] * X) / kr[None, :]
    method = "spectral" if spectrum.projector_condition <= condition_limit else "expm"
    if method == "expm":
        log.warning("continuum projector condition %.2e; propagator falls back to expm",
                    spectrum.projector_condition)
    return PropagatorCache(H, spectrum, spectrum.eigenvalues[idx], X, Y,
                           spectrum.projector_condition, reflection_time(H.grid.rmax, lambda0, safety),
                           method)


def propagator(cache: PropagatorCache, t: float, enforce_window: bool = True) -> np.ndarray:
    """Dense e^{itH} in weighted coordinates."""
    if enforce_window and abs(t) > cache.t_max:
        raise DomainError(f"|t|={abs(t)} beyond the reflection time t_max={cache.t_max:.4g}")
    if cache.method == "expm":
        return sla.expm(1j * t * cache.H.unitary())
    return cache.discrete_part(t) + cache.continuum_part(t)


def evolve_discrete_part(spectrum: SpectrumReport, t: float,
                         projectors: list | None = None) -> np.ndarray:
    """sum over nonzero clusters e^{it zeta} P_zeta plus sum_k (it)^k/k! H^k P_0.

    Built cluster by cluster on the Schur block; the zero cluster keeps
    its nilpotent part, giving polynomial growth in t.
    """
    k = spectrum.schur_k
    dim = spectrum.H.dim
    if k == 0:
        return np.zeros((dim, dim), dtype=complex)
    if projectors is None:
        from .spectral_projections import _small_cluster_projector
        T11 = spectrum.schur_T[:k, :k]
        projectors = [(cl["center"], _small_cluster_projector(T11, cl["center"], cl["radius"]))
                      for cl in spectrum.clusters]
    if len(projectors) != len(spectrum.clusters):
        raise DependencyError("one projector per discrete cluster is required")
    T11 = spectrum.schur_T[:k, :k]
    acc = np.zeros((k, k), dtype=complex)
    eye = np.eye(k)
    for (center, p), cl in zip(projectors, spectrum.clusters):
        # e^{it zeta} sum_j (it)^j/j! N^j P_zeta with N = (H - zeta) P_zeta
        N = (T11 - center * eye) @ p
        term, power = p.astype(complex), p.astype(complex)
        for j in range(1, int(cl["size"])):
            power = N @ power
            term = term + (1j * t) ** j / math.factorial(j) * power
        acc += np.exp(1j * t * center) * term
    return (spectrum.schur_Q[:, :k] @ acc) @ spectrum._left_rows()


# -- norms ----------------------------------------------------------------------

def operator_norm_2to2(A, weights: np.ndarray | None = None) -> float:
    """Weighted L^2 operator norm.

    ``A`` acts on value samples when ``weights`` (the quadrature weights)
    are given, and is already in weighted coordinates otherwise. Large
    operators and LinearOperators go through a sparse singular-value solver.
    """
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if not np.all(weights > 0):
            raise DomainError("weights must be positive")
        s = np.sqrt(weights)
        A = (s[:, None] * np.asarray(A)) / s[None, :]
    if isinstance(A, spla.LinearOperator) or min(A.shape) > 600:
        return float(spla.svds(A, k=1, return_singular_vectors=False, tol=1e-8,
                               random_state=np.random.default_rng(0))[0])
    return float(np.linalg.norm(A, 2))


def operator_norm_1toinf(K: np.ndarray) -> float:
    """Sup of |K(r,s)| over node pairs and block entries (kernel w.r.t. 4 pi s^2 ds)."""
    return float(np.abs(K).max())


def unitary_to_kernel(A: np.ndarray, grid: RadialGrid) -> np.ndarray:
    s = np.tile(np.sqrt(grid.w), A.shape[0] // grid.n)
    return A / s[:, None] / s[None, :]


# -- F_t ----------------------------------------------------------------------------

def h_factor(chi: CutoffFunction, t: float, method: str = "direct",
             max_samples: int = 2**25) -> complex:
    """h(t) = (e^{i pi/4}/sqrt(4 pi)) integral e^{-iu^2/4t} chi^(u) du.

    The default ``method='direct'`` evaluates the equivalent
    sqrt(t) * integral e^{itz^2} chi(z) dz, whose cost grows like t lambda0^2.
    ``method='fourier'`` works on the transform side as a cross-check; it
    needs of order umax^2/t samples and refuses beyond ``max_samples``.
    """
    if method == "direct":
        return complex(math.sqrt(t) * fresnel_integral(chi, t, (-chi.lambda0, chi.lambda0),
                                                       rtol=1e-12))
    if method != "fourier":
        raise DomainError(f"unknown method {method!r}")
    # extent of chi^ above rounding, from the stored transform
    mag = np.abs(chi.hat)
    umax = 1.05 * np.abs(chi.u[mag > 1e-16 * mag.max()]).max()
    # the chirp needs ~20 samples per local period 4 pi t / u at |u| = umax;
    # a zero-padded FFT of chi delivers chi^ on that finer grid
    du = min(chi.du, 2.0 * np.pi * t / (20.0 * umax))
    dz = min(np.pi / (1.2 * umax), chi.lambda0 / 400.0)
    m = sp_fft.next_fast_len(int(math.ceil(2.0 * np.pi / (du * dz))))
    if m > max_samples:
        raise DomainError(f"fourier route needs {m} samples at t={t}; use method='direct'")
    zz = dz * (np.arange(m) - m // 2)
    vals = np.zeros(m)
    inside = np.abs(zz) < chi.lambda0
    vals[inside] = chi(zz[inside])
    hat = np.fft.fftshift(sp_fft.fft(np.fft.ifftshift(vals))).real * dz
    u = np.fft.fftshift(np.fft.fftfreq(m, dz)) * 2.0 * np.pi
    keep = np.abs(u) <= umax
    val = np.sum(np.exp(-1j * u[keep] ** 2 / (4.0 * t)) * hat[keep]) * (u[1] - u[0])
    return complex(np.exp(1j * np.pi / 4) / math.sqrt(4 * np.pi) * val)


@dataclass(eq=False)
class FtOperator:
    """The rank-at-most-two operator of the resonant dispersive expansion."""

    t: float
    grid: RadialGrid = field(repr=False)
    T1: np.ndarray = field(repr=False)
    Q2: np.ndarray = field(repr=False)
    h: complex
    c: float
    mu: float

    @property
    def prefactor(self) -> complex:
        return np.exp(1j * self.t * self.mu) * self.h / (4.0 * np.pi**2 * self.c**2)

    def plus_kernel(self) -> np.ndarray:
        col = np.concatenate((self.T1, self.Q2))
        row = np.concatenate((self.T1, -self.Q2))
        return self.prefactor * np.outer(col, row)

    def kernel(self) -> np.ndarray:
        """Both threshold branches: +mu and its sigma1-conjugate at -mu."""
        Fp = self.plus_kernel()
        return Fp + swap_components(np.conj(Fp), self.grid.n)

    def numerical_rank(self, cutoff: float = 1e-8) -> int:
        s = np.linalg.svd(self.kernel(), compute_uv=False)
        return int(np.sum(s > cutoff * s[0])) if s[0] > 0 else 0


def build_Ft(report: ThresholdReport, fv, chi: CutoffFunction, t: float,
             h: complex | None = None) -> FtOperator:
    """F_t from the resonance data: psi = v f, T_t(psi_1), Q(psi_2), h(t)."""
    if report.classification != RESONANCE:
        raise DomainError(f"F_t needs a pure threshold resonance, got {report.classification}")
    grid, mu = report.grid, report.mu
    n = grid.n
    psi = fv.apply_v(report.resonance_f)
    idx = fv.support()
    wpsi1 = grid.w[idx] * psi[idx]
    wpsi2 = grid.w[idx] * psi[n + idx]
    T1 = fresnel_kernel(grid.r, grid.r[idx], t) @ wpsi1
    Q2 = 4.0 * np.pi * (yukawa_kernel(grid.r, grid.r[idx], math.sqrt(2.0 * mu)) @ wpsi2)
    hv = h_factor(chi, t) if h is None else h
    return FtOperator(float(t), grid, T1, Q2, hv, float(report.c), float(mu))


# -- decay fits and experiments ---------------------------------------------------------

@dataclass(eq=False)
class DecaySeries:
    """Norm samples against t with fitted power laws."""

    t: np.ndarray
    norms: dict
    window: tuple[float, float]
    t_max: float
    fits: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def fit_all(self, window: tuple[float, float] | None = None) -> dict:
        win = self.window if window is None else window
        for name, vals in self.norms.items():
            try:
                self.fits[name] = decay_fit(self.t, vals, win)
            except FitError as exc:
                self.fits[name] = {"error": str(exc)}
        return self.fits

    def rows(self) -> list[dict]:
        return [{"t": float(t), **{k: float(v[i]) for k, v in self.norms.items()}}
                for i, t in enumerate(self.t)]


def decay_fit(t, values, window: tuple[float, float] | None = None, min_samples: int = 8) -> dict:
    """Least-squares slope of log(value) against log(t) with its standard error."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0] * (1 - 1e-12)) & (t <= window[1] * (1 + 1e-12))
        t, v = t[sel], v[sel]
    if t.size < min_samples:
        raise FitError(f"{t.size} samples in window, need {min_samples}")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError("norms must be positive and finite")
    x, y = np.log(t), np.log(v)
    if np.ptp(y) == 0:
        return {"exponent": 0.0, "halfwidth": 0.0, "intercept": float(y[0]), "samples": int(t.size)}
    res = stats.linregress(x, y)
    return {"exponent": float(res.slope), "halfwidth": float(res.stderr),
            "intercept": float(res.intercept), "samples": int(t.size),
            "window": [float(t.min()), float(t.max())]}


def _cutoff_weights(lam: np.ndarray, mu: float, chi: CutoffFunction) -> np.ndarray:
    """chi(sqrt(|Re lambda| - mu)) on continuum eigenvalues, 0 inside the gap."""
    e = np.abs(lam.real) - mu
    out = np.zeros(lam.size)
    pos = e > 0
    out[pos] = chi(np.sqrt(e[pos]))
    return out


def dispersive_experiment(cache: PropagatorCache, chi: CutoffFunction, t_schedule,
                          report: ThresholdReport | None = None, fv=None,
                          norms: Iterable[str] = ("1toinf",), window=None,
                          P_extra: np.ndarray | None = None) -> DecaySeries:
    """Norms of the energy-localized continuum evolution at each t.

    ``1toinf``: sup of the kernel of e^{itH} P_c chi(H).
    ``ft-diff``: the same after subtracting t^{-1/2} F_t (resonance only).
    ``2to2``:   weighted L^2 norm of e^{itH} P_s (no energy cutoff).
    ``P_extra`` (weighted coordinates) is subtracted from P_s to form P_c
    when threshold eigenvalue projections are present.
    """
    norms = tuple(norms)
    ts = np.asarray(sorted(float(x) for x in t_schedule))
    if ts.size and ts.max() > cache.t_max * (1 + 1e-12):
        raise DomainError(f"t={ts.max()} beyond reflection time t_max={cache.t_max:.4g}")
    grid = cache.H.grid
    mu = cache.H.mu
    weights = _cutoff_weights(cache.lam_c, mu, chi)
    sel = np.nonzero(weights > 0)[0]
    if "ft-diff" in norms and (report is None or fv is None):
        raise DependencyError("ft-diff needs the threshold report and the factored potential")
    out = {name: np.empty(ts.size) for name in norms}
    extra = {"ft_norm": np.empty(ts.size), "ft_rank": np.empty(ts.size)} if "ft-diff" in norms else {}
    t0 = time.perf_counter()
    for i, t in enumerate(ts):
        if "1toinf" in norms or "ft-diff" in norms:
            K = cache.continuum_part(t, select=sel, weights=weights)
            if P_extra is not None:
                K = K - K @ P_extra
            K = unitary_to_kernel(K, grid)
            if "1toinf" in norms:
                out["1toinf"][i] = operator_norm_1toinf(K)
            if "ft-diff" in norms:
                F = build_Ft(report, fv, chi, t)
                Fk = F.kernel()
                out["ft-diff"][i] = operator_norm_1toinf(K - Fk / math.sqrt(t))
                extra["ft_norm"][i] = operator_norm_1toinf(Fk)
                extra["ft_rank"][i] = F.numerical_rank()
            del K
        if "2to2" in norms:
            out["2to2"][i] = operator_norm_2to2(cache.continuum_operator(t))
    series = DecaySeries(ts, out, window or (float(ts.min()), float(ts.max())), cache.t_max,
                         meta={"modes": int(sel.size), "lambda0": chi.lambda0,
                               "seconds": time.perf_counter() - t0, **{k: v.tolist() for k, v in extra.items()}})
    series.fit_all()
    return series


# -- free baseline -----------------------------------------------------------------------

def free_upper_kernel(grid: RadialGrid, mu: float, chi: CutoffFunction, t: float,
                      modes: tuple | None = None) -> np.ndarray:
    """Kernel of e^{it(-Lap + mu)} chi(sqrt(-Lap)) from the tridiagonal Laplacian."""
    if modes is None:
        modes = free_modes(grid, chi)
    lam, U = modes
    wts = chi(np.sqrt(np.maximum(lam, 0.0))) * np.exp(1j * t * (lam + mu))
    s = grid.sqrt_w
    return ((U * wts) @ U.T) / s[:, None] / s[None, :]


def free_modes(grid: RadialGrid, chi: CutoffFunction):
    d, e = laplacian_tridiagonal(grid)
    lam, U = sla.eigh_tridiagonal(d, e, select="v", select_range=(-1.0, chi.lambda0**2))
    return lam, U


def free_dispersion_series(grid: RadialGrid, mu: float, chi: CutoffFunction, t_schedule,
                           window=None, safety: float = 0.4) -> DecaySeries:
    """1->inf norms of the free upper-block evolution with energy cutoff."""
    t_max = reflection_time(grid.rmax, chi.lambda0, safety)
    ts = np.asarray(sorted(float(x) for x in t_schedule))
    if ts.max() > t_max * (1 + 1e-12):
        raise DomainError(f"t={ts.max()} beyond reflection time t_max={t_max:.4g}")
    modes = free_modes(grid, chi)
    vals = np.array([operator_norm_1toinf(free_upper_kernel(grid, mu, chi, t, modes))
                     for t in ts])
    series = DecaySeries(ts, {"1toinf": vals}, window or (float(ts.min()), float(ts.max())),
                         t_max, meta={"modes": int(modes[0].size)})
    series.fit_all()
    return series
