"""Radial kernels of free operators and limiting-absorption diagnostics.

Any 3D convolution kernel k(|x - y|) restricted to radial functions
becomes

    K(r, s) = 1/(2 r s) * integral_{|r-s|}^{r+s} k(rho) rho d rho,

acting as ``(K f)(r) = integral K(r, s) f(s) 4 pi s^2 ds``. Every kernel
below is this reduction evaluated in closed form, arranged so that no
branch divides by a vanishing quantity:

* outgoing Helmholtz  e^{ik rho}/(4 pi rho)
* Yukawa              e^{-kappa rho}/(4 pi rho)
* distance            rho
* exponential         e^{-kappa rho}
* Fresnel             e^{-i rho^2/(4t)}/rho

Kernels are returned as N x N arrays; ``kernel * grid.w`` is the
operator in value coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import fresnel

from .errors import DomainError
from .operator_assembly import MatrixHamiltonian
from .radial_grid import RadialGrid

__all__ = [
    "ResolventKernel",
    "helmholtz_kernel",
    "yukawa_kernel",
    "distance_kernel",
    "exponential_kernel",
    "fresnel_kernel",
    "radial_free_resolvent",
    "free_resolvent_matrix",
    "limiting_absorption_scan",
]


def _pairs(r, s):
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    if r.ndim == 1 and s.ndim == 1:
        r, s = r[:, None], s[None, :]
    big = np.maximum(r, s)
    small = np.minimum(r, s)
    return r, s, big, small


def helmholtz_kernel(r, s, k: complex) -> np.ndarray:
    """Radial kernel of (-Lap - k^2)^{-1} with the e^{ik|x-y|} branch.

    Real ``k`` of either sign selects the +i0 (k > 0) or -i0 (k < 0)
    boundary value; complex ``k`` needs Im k >= 0. At k = 0 the kernel is
    1/(4 pi max(r, s)).
    """
    r, s, big, small = _pairs(r, s)
    k = complex(k)
    if k == 0:
        return (1.0 / (4.0 * np.pi * big)).astype(complex)
    # sin(k a) e^{ik b} / (k) = e^{ik(b-a)} expm1(2ika) / (2ik)
    out = np.exp(1j * k * (big - small)) * np.expm1(2j * k * small) / (2j * k)
    return out / (4.0 * np.pi * r * s)


def yukawa_kernel(r, s, kappa: complex) -> np.ndarray:
    """Radial kernel of (-Lap + kappa^2)^{-1}, i.e. of e^{-kappa rho}/(4 pi rho)."""
    r, s, big, small = _pairs(r, s)
    kappa = complex(kappa) if np.iscomplexobj(kappa) else float(kappa)
    if kappa == 0:
        return 1.0 / (4.0 * np.pi * big)
    out = np.exp(-kappa * (big - small)) * (-np.expm1(-2.0 * kappa * small)) / (2.0 * kappa)
    return out / (4.0 * np.pi * r * s)


def distance_kernel(r, s) -> np.ndarray:
    """Radial reduction of |x - y|: max + min^2 / (3 max)."""
    _, _, big, small = _pairs(r, s)
    return big + small**2 / (3.0 * big)


def exponential_kernel(r, s, kappa: float) -> np.ndarray:
    """Radial reduction of e^{-kappa |x - y|}."""
    r, s, big, small = _pairs(r, s)

    def prim(rho):
        return np.exp(-kappa * rho) * (kappa * rho + 1.0) / kappa**2

    return (prim(big - small) - prim(big + small)) / (2.0 * r * s)


def fresnel_kernel(r, s, t: float) -> np.ndarray:
    """Radial reduction of e^{-i rho^2/(4t)} / rho, t > 0."""
    r, s, big, small = _pairs(r, s)
    scale = math.sqrt(2.0 * math.pi * t)

    def prim(rho):
        S, C = fresnel(rho / scale)
        return scale * (C - 1j * S)

    return (prim(big + small) - prim(big - small)) / (2.0 * r * s)


@dataclass(frozen=True, eq=False)
class ResolventKernel:
    """Kernels of the two diagonal blocks of R0(mu + z^2).

    ``upper`` is the kernel of (-Lap - z^2)^{-1} and ``lower`` that of
    -(-Lap + 2 mu + z^2)^{-1}.
    """

    z: complex
    side: str
    mu: float
    grid: RadialGrid = field(repr=False)
    upper: np.ndarray = field(repr=False)
    lower: np.ndarray = field(repr=False)

    def matrix(self) -> np.ndarray:
        """2N x 2N operator in value coordinates."""
        n = self.grid.n
        w = self.grid.w
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[:n, :n] = self.upper * w
        out[n:, n:] = self.lower * w
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        n = self.grid.n
        wf = np.tile(self.grid.w, 2) * f
        return np.concatenate((self.upper @ wf[:n], self.lower @ wf[n:]))


def _branch(z, side: str | None) -> complex:
    """Wave number selecting the boundary value; returns k with Im k >= 0 or real."""
    z = complex(z)
    if z.imag > 0:
        return z
    if z.imag < 0:
        raise DomainError("complex z must have Im z > 0")
    if side not in ("+", "-"):
        raise DomainError("real z needs side '+' or '-'")
    return z if side == "+" else -z


def radial_free_resolvent(grid: RadialGrid, mu: float, z, side: str | None = "+",
                          rows=None, cols=None) -> ResolventKernel:
    """Kernels of R0(mu + z^2) on the grid (optionally a row/column subset)."""
    k = _branch(z, side)
    r = grid.r if rows is None else grid.r[rows]
    s = grid.r if cols is None else grid.r[cols]
    kappa = np.sqrt(2.0 * mu + complex(z) ** 2)
    if abs(kappa.imag) < 1e-300 and kappa.real > 0:
        kappa = kappa.real
    upper = helmholtz_kernel(r, s, k)
    lower = -yukawa_kernel(r, s, kappa)
    return ResolventKernel(complex(z), side if complex(z).imag == 0 else "c", float(mu),
                           grid, upper, np.asarray(lower))


def free_resolvent_matrix(grid: RadialGrid, mu: float, z, side: str | None = "+") -> np.ndarray:
    return radial_free_resolvent(grid, mu, z, side).matrix()


def limiting_absorption_scan(H: MatrixHamiltonian, lambdas, epsilons, sigma: float,
                             tol: float = 1e-3) -> list[dict]:
    """Weighted resolvent norms ||<r>^-s (H - lam - i eps)^{-1} <r>^-s||.

    One sparse LU per (lambda, eps); the norm is the top singular value,
    found by a Lanczos-type iteration on the implicit operator.
    """
    mu = H.mu
    if not sigma > 0.5:
        raise DomainError("weight exponent must exceed 1/2")
    eps_list = [float(e) for e in epsilons]
    if any(e <= 0 for e in eps_list):
        raise DomainError("epsilons must be positive")
    for lam in lambdas:
        if abs(lam) <= mu * (1 + tol):
            raise DomainError(f"lambda={lam} lies in the threshold band; use threshold analysis")
    A = H.sparse_unitary().astype(complex).tocsc()
    d = np.tile((1.0 + H.grid.r**2) ** (-sigma / 2.0), 2)
    n2 = A.shape[0]
    eye = sp.identity(n2, dtype=complex, format="csc")
    rows = []
    for lam in lambdas:
        for eps in eps_list:
            shift = complex(lam, eps)
            lu = spla.splu((A - shift * eye).tocsc())
            op = spla.LinearOperator(
                (n2, n2), dtype=complex,
                matvec=lambda x, lu=lu: d * lu.solve(d * np.ravel(x)),
                rmatvec=lambda x, lu=lu: d * lu.solve(d * np.ravel(x), trans="H"))
            val = spla.svds(op, k=1, return_singular_vectors=False, tol=1e-8,
                            random_state=np.random.default_rng(0))[0]
            rows.append({"lambda": float(lam), "epsilon": eps, "norm": float(val),
                         "scaled": float(val * math.sqrt(abs(lam)))})
    return rows

