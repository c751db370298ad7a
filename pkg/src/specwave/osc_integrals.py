"""Oscillatory integrals and the special functions of the decay analysis.

Contents
--------
* :class:`CutoffFunction`, the smooth even energy cutoff chi with its
  Fourier transform.
* :func:`fresnel_integral`, the quadrature of integral e^{itz^2} F(z) dz
  with an oscillation-resolving step and a step-halving error estimate.
* :func:`verify_birb`, normalized ratios for the t^{-1/2} and t^{-3/2}
  bounds on such integrals.
* :func:`gk_norms` and :func:`ha_fourier_decay`, L^1 norms and Fourier
  envelopes of x e^{-sqrt(x^2+k^2)}/sqrt(x^2+k^2).

Fourier convention: F^(u) = integral F(z) e^{-iuz} dz.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ConfigurationError, FitError, RefinementError

__all__ = [
    "CutoffFunction",
    "make_cutoff",
    "smooth_step",
    "fresnel_integral",
    "fourier_l1",
    "verify_birb",
    "trend_slope",
    "gk",
    "gk_derivative",
    "gk_norms",
    "fit_gk_envelope",
    "ha",
    "ha_fourier",
    "ha_fourier_decay",
]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _mollifier(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x, dtype=float)
    inside = np.abs(x) < 1
    out[inside] = np.exp(-1.0 / (1.0 - x[inside] ** 2))
    return out


_MOLLIFIER_MASS = float(np.sum(_GL_W * _mollifier(_GL_X)))


def smooth_step(s) -> np.ndarray:
    """C-infinity step: 0 for s <= -1, 1 for s >= 1, the normalized
    running integral of exp(-1/(1-x^2)) in between."""
    s = np.clip(np.asarray(s, dtype=float), -1.0, 1.0)
    flat = s.ravel()
    out = np.empty_like(flat)
    chunk = 4096
    for i in range(0, flat.size, chunk):
        ss = flat[i:i + chunk, None]
        x = -1.0 + (ss + 1.0) * (_GL_X + 1.0) / 2.0
        out[i:i + chunk] = (ss[:, 0] + 1.0) / 2.0 * (_mollifier(x) @ _GL_W) / _MOLLIFIER_MASS
    return out.reshape(s.shape)


def _step_slope(s) -> np.ndarray:
    return _mollifier(np.asarray(s, dtype=float)) / _MOLLIFIER_MASS


@dataclass(frozen=True, eq=False)
class CutoffFunction:
    """Even bump equal to 1 on |z| <= lambda0/2 and 0 for |z| >= lambda0.

    Samples of chi on ``z`` and of its transform on ``u`` are stored for
    inspection; :meth:`__call__`, :meth:`derivative` and :meth:`fourier`
    evaluate exactly at arbitrary points.
    """

    lambda0: float
    z: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    hat: np.ndarray = field(repr=False)
    smoothness: str = "C-infinity, Gevrey order 2"

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return 1.0 - smooth_step(4.0 * np.abs(z) / self.lambda0 - 3.0)

    def derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return -np.sign(z) * (4.0 / self.lambda0) * _step_slope(4.0 * np.abs(z) / self.lambda0 - 3.0)

    def fourier(self, u) -> np.ndarray:
        """chi^(u) by composite Gauss-Legendre quadrature (real, even)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        lam = self.lambda0
        half = lam / 2.0
        panels = max(8, int(np.abs(u).max(initial=0.0) * half / 4.0) + 8)
        edges = np.linspace(half, lam, panels + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        rad = 0.5 * (edges[1] - edges[0])
        zq = (mid[:, None] + rad * _GL_X[None, :]).ravel()
        wq = np.tile(rad * _GL_W, panels)
        cq = self(zq) * wq
        out = np.empty_like(u)
        for i, uu in enumerate(u):
            flat = lam if uu == 0 else 2.0 * math.sin(uu * half) / uu
            out[i] = flat + 2.0 * np.dot(cq, np.cos(uu * zq))
        return out

    @property
    def du(self) -> float:
        return float(self.u[1] - self.u[0])

    def hat_l1(self) -> float:
        return float(np.sum(np.abs(self.hat)) * self.du)

    def hat_derivative_l1(self) -> float:
        """L^1 norm of the transform of chi', i.e. of u chi^(u)."""
        return float(np.sum(np.abs(self.u * self.hat)) * self.du)

    def roundtrip_error(self, points: np.ndarray | None = None) -> float:
        """Max error of inverting the stored transform at off-grid points."""
        if points is None:
            points = np.linspace(-1.3 * self.lambda0, 1.3 * self.lambda0, 37) + 1e-3 * self.lambda0
        back = np.array([np.sum(self.hat * np.cos(self.u * p)) * self.du / (2 * np.pi)
                         for p in points])
        return float(np.abs(back - self(points)).max())


def make_cutoff(lambda0: float | None = None, mu: float = 1.0, samples: int = 2000,
                pad: float = 125.0) -> CutoffFunction:
    """Build the cutoff; default half-width 0.4 sqrt(mu).

    The transform is sampled by an FFT of ``samples`` points per lambda0 on
    [-pad*lambda0, pad*lambda0], accurate to rounding for |u| below the
    Nyquist frequency because chi is smooth and compactly supported.
    """
    if lambda0 is None:
        lambda0 = 0.4 * math.sqrt(mu)
    lambda0 = float(lambda0)
    if not lambda0 > 0:
        raise ConfigurationError("lambda0 must be positive")
    dz = lambda0 / samples
    m = int(round(pad * samples))
    zz = dz * np.arange(-m, m)
    cut = CutoffFunction(lambda0, zz[:0], zz[:0], zz[:0], zz[:0])
    vals = np.zeros_like(zz)
    inside = np.abs(zz) < lambda0
    vals[inside] = cut(zz[inside])
    spec = np.fft.fftshift(np.fft.fft(np.fft.ifftshift(vals))).real * dz
    u = np.fft.fftshift(np.fft.fftfreq(zz.size, dz)) * 2.0 * np.pi
    zs = np.linspace(-lambda0, lambda0, 2 * samples + 1)
    return CutoffFunction(lambda0, zs, cut(zs), u, spec)


def _trapezoid_fresnel(F: Callable, a: float, b: float, t: float, n: int) -> tuple[complex, complex]:
    z = np.linspace(a, b, n + 1)
    f = np.exp(1j * t * z**2) * F(z)
    h = (b - a) / n
    fine = h * (f.sum() - 0.5 * (f[0] + f[-1]))
    coarse = 2 * h * (f[::2].sum() - 0.5 * (f[0] + f[-1])) if n % 2 == 0 else fine
    return fine, coarse


def fresnel_integral(F, t: float, support: tuple[float, float] | None = None,
                     rtol: float = 1e-10, return_error: bool = False, max_points: int = 2**24):
    """integral e^{itz^2} F(z) dz for compactly supported F.

    ``F`` is either a callable (then ``support`` is required and the step
    is chosen to put at least 20 points in the shortest local period) or
    a pair ``(z, values)`` of uniform samples, which must already meet
    that resolution.
    """
    if not t >= 0:
        raise ConfigurationError("t must be non-negative")
    if callable(F):
        if support is None:
            raise ConfigurationError("callable integrand needs a support interval")
        a, b = map(float, support)
        zmax = max(abs(a), abs(b))
        span = b - a
        n = 400
        if t > 0:
            n = max(n, int(math.ceil(span / (math.pi / (20.0 * t * zmax)))))
        n += n % 2
        while True:
            fine, coarse = _trapezoid_fresnel(F, a, b, t, n)
            err = abs(fine - coarse)
            if err <= rtol * max(abs(fine), 1e-300) or err < 1e-15 * span or 2 * n > max_points:
                break
            n *= 2
        return (fine, err) if return_error else fine
    z, vals = (np.asarray(x) for x in F)
    dz = np.diff(z)
    if not np.allclose(dz, dz[0], rtol=1e-9, atol=0):
        raise RefinementError("sampled integrand must be on a uniform grid")
    zmax = np.abs(z).max()
    if t > 0 and dz[0] > math.pi / (20.0 * t * zmax):
        raise RefinementError(
            f"step {dz[0]:.3g} too coarse for t={t}; need <= {math.pi / (20 * t * zmax):.3g}")
    f = np.exp(1j * t * z**2) * vals
    h = dz[0]
    fine = h * (f.sum() - 0.5 * (f[0] + f[-1]))
    coarse = 2 * h * (f[::2].sum() - 0.5 * (f[0] + f[-1 if (f.size - 1) % 2 == 0 else -2]))
    err = abs(fine - coarse)
    return (fine, err) if return_error else fine


def fourier_l1(F: Callable, support: tuple[float, float], samples: int = 4000,
               pad: float = 125.0, derivative_weight: bool = False) -> float:
    """L^1 norm of F^ (or of u F^ if ``derivative_weight``) by a padded FFT."""
    a, b = map(float, support)
    width = max(abs(a), abs(b))
    dz = (b - a) / samples
    m = int(round(pad * width / dz))
    zz = dz * np.arange(-m, m)
    vals = np.zeros_like(zz)
    inside = (zz > a) & (zz < b)
    vals[inside] = F(zz[inside])
    spec = np.abs(np.fft.fft(np.fft.ifftshift(vals))) * dz
    u = np.fft.fftfreq(zz.size, dz) * 2.0 * np.pi
    du = abs(u[1] - u[0])
    if derivative_weight:
        spec = spec * np.abs(u)
    return float(spec.sum() * du)


def verify_birb(F: Callable, dF: Callable, t_list, support: tuple[float, float],
                check_tol: float = 1e-6) -> list[dict]:
    """Normalized ratios |int e^{itz^2} F| t^{1/2}/||F^||_1 and
    |int e^{itz^2} z F| t^{3/2}/||(F')^||_1 for each t."""
    a, b = map(float, support)
    probe = np.linspace(a, b, 401)[1:-1]
    hstep = 1e-5 * (b - a)
    fd = (F(probe + hstep) - F(probe - hstep)) / (2 * hstep)
    scale = max(np.abs(dF(probe)).max(), 1e-300)
    if np.abs(fd - dF(probe)).max() > check_tol * scale * max(1.0, 1e10 * hstep**2):
        raise ConfigurationError("F and F' are inconsistent")
    n0 = fourier_l1(F, support)
    n1 = fourier_l1(F, support, derivative_weight=True)
    rows = []
    for t in t_list:
        t = float(t)
        i0 = fresnel_integral(F, t, support)
        i1 = fresnel_integral(lambda z: z * F(z), t, support)
        rows.append({
            "t": t,
            "integral": complex(i0),
            "moment_integral": complex(i1),
            "ratio0": abs(i0) * math.sqrt(t) / n0 if n0 > 0 else 0.0,
            "ratio1": abs(i1) * t**1.5 / n1 if n1 > 0 else 0.0,
        })
    return rows


def trend_slope(t, values, floor: float = 1e-12) -> float:
    """Least-squares slope of log(values) against log(t).

    A column that vanishes to within ``floor`` of its scale (for example by
    parity) has no trend and returns 0.
    """
    t = np.asarray(t, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    if v.max(initial=0.0) <= floor:
        return 0.0
    keep = v > floor
    if keep.sum() < 2:
        raise FitError("not enough non-negligible samples for a trend")
    return float(np.polyfit(np.log(t[keep]), np.log(v[keep]), 1)[0])


# -- g_k and h_a ---------------------------------------------------------

def gk(x, k: float) -> np.ndarray:
    """g_k(x) = x e^{-rho}/rho with rho = sqrt(x^2 + k^2)."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x, k)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(rho > 0, x / rho, 0.0) * np.exp(-rho)
    return out


def gk_derivative(x, k: float, order: int) -> np.ndarray:
    """Closed-form derivatives of g_k up to third order (x != 0 when k = 0)."""
    x = np.asarray(x, dtype=float)
    if order == 0:
        return gk(x, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        return _gk_derivative(x, k, order)


def _gk_derivative(x: np.ndarray, k: float, order: int) -> np.ndarray:
    r = np.hypot(x, k)
    e = np.exp(-r)
    x2 = x * x
    if order == 1:
        return (r**2 - r * x2 - x2) / r**3 * e
    if order == 2:
        return x * (-3 * r**3 + r**2 * x2 - 3 * r**2 + 3 * r * x2 + 3 * x2) / r**5 * e
    if order == 3:
        x4 = x2 * x2
        return -(3 * r**5 - 6 * r**4 * x2 + 3 * r**4 + r**3 * x4 - 18 * r**3 * x2
                 + 6 * r**2 * x4 - 18 * r**2 * x2 + 15 * r * x4 + 15 * x4) / r**7 * e
    raise ConfigurationError("derivative order must be 0..3")


def _abs_integral(f: Callable, lo: float, hi: float, scale: float) -> float:
    """integral_lo^hi |f| by splitting at sign changes."""
    xs = np.concatenate((lo + scale * np.geomspace(1e-6, 1.0, 200) - scale * 1e-6,
                         np.linspace(lo + scale, hi, 400)))
    xs = np.unique(np.clip(xs, lo, hi))
    fx = f(xs)
    cuts = [lo]
    for i in np.nonzero(np.sign(fx[:-1]) * np.sign(fx[1:]) < 0)[0]:
        cuts.append(brentq(f, xs[i], xs[i + 1], xtol=1e-15))
    cuts.append(hi)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            total += abs(quad(f, a, b, limit=200, epsabs=0, epsrel=1e-12)[0])
    return total


def gk_norms(k_list) -> list[dict]:
    """||g_k||_1, ||g_k'||_1, |k| ||g_k''||_1 and |k|^2 ||g_k'''||_1.

    At k = 0 the function jumps by 2 at the origin; its derivative norm is
    taken as total variation (2 from the smooth part plus the jump) and
    the k-weighted terms vanish.
    """
    rows = []
    for k in k_list:
        k = abs(float(k))
        hi = k + 60.0
        scale = max(k, 1e-3)
        if k == 0:
            n = [2.0 * _abs_integral(lambda x, o=o: gk_derivative(x, 0.0, o), 1e-300, hi, 1.0)
                 for o in (0, 1)]
            vals = (n[0], n[1] + 2.0, 0.0, 0.0)
        else:
            n = [2.0 * _abs_integral(lambda x, o=o: gk_derivative(x, k, o), 0.0, hi, scale)
                 for o in range(4)]
            vals = (n[0], n[1], k * n[2], k * k * n[3])
        rows.append({"k": k, "g": vals[0], "g1": vals[1], "g2": vals[2], "g3": vals[3],
                     "combined": float(sum(vals)), "exact_g": 2.0 * math.exp(-k)})
    return rows


def fit_gk_envelope(rows: list[dict], degree: int = 2) -> dict:
    """Fit combined(k) e^{k} by a polynomial P and report max combined/(P e^{-k})."""
    k = np.array([r["k"] for r in rows])
    comb = np.array([r["combined"] for r in rows])
    coeffs = np.polyfit(k, comb * np.exp(k), degree)
    P = np.polyval(coeffs, k)
    if np.any(P <= 0):
        raise FitError("fitted envelope polynomial is not positive on the k range")
    ratio = comb / (P * np.exp(-k))
    return {"coefficients": coeffs.tolist(), "max_ratio": float(ratio.max()),
            "ratios": ratio.tolist()}


def ha(z, a: float, mu: float = 1.0) -> np.ndarray:
    """h_a(z) = z e^{-sqrt(2 mu a^2 + z^2)}/sqrt(2 mu a^2 + z^2)."""
    return gk(z, math.sqrt(2.0 * mu) * a)


def ha_fourier(eta: float, a: float, mu: float = 1.0) -> complex:
    """h_a^(eta); h_a is odd and real so the transform is imaginary."""
    k = math.sqrt(2.0 * mu) * a
    if eta == 0:
        imag = 0.0
    else:
        imag = -2.0 * quad(lambda z: gk(z, k), 0.0, np.inf, weight="sin", wvar=eta,
                           limlst=200)[0]
    zmax = k + 60.0
    real = quad(lambda z: gk(z, k) * math.cos(eta * z), -zmax, zmax, limit=400,
                points=[0.0])[0]
    return complex(real, imag)


def ha_fourier_decay(a_list, eta_list, mu: float = 1.0) -> list[dict]:
    """|h_a^(eta)| against e^{-mu a} times each of 1/<eta>, 1/(a<eta>^2), 1/(a^2<eta>^3)."""
    rows = []
    for a in a_list:
        a = float(a)
        if not a > 0:
            raise ConfigurationError("a must be positive")
        for eta in eta_list:
            eta = float(eta)
            val = ha_fourier(eta, a, mu)
            jb = math.sqrt(1.0 + eta * eta)
            pref = math.exp(-mu * a)
            env = (pref / jb, pref / (a * jb**2), pref / (a * a * jb**3))
            mag = abs(val)
            rows.append({"a": a, "eta": eta, "abs": mag, "real": val.real,
                         "ratio_1": mag / env[0], "ratio_2": mag / env[1],
                         "ratio_3": mag / env[2], "ratio_min": mag / min(env),
                         "log_abs_plus": (math.log(mag) + math.sqrt(mu) * a) if mag > 0 else -math.inf})
    return rows
