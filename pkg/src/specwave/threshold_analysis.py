"""Threshold analysis at lambda = mu through the Birman-Schwinger family.

A(z) = I + v2 R0(mu + z^2) v1 with v1 = -sigma3 v, v2 = v. Because
R0(mu) sigma3 has two positive diagonal blocks (the 1/(4 pi r_>) kernel
and the Yukawa kernel of mass sqrt(2 mu)), A(0) = I - v G v is real
symmetric once the weights are split symmetrically. All matrices here
live in those coordinates, restricted to the nodes where v is not
negligible; on the remaining nodes A(0) is exactly the identity.

The ladder:

* S1  = kernel of A(0)
* m(0) = S1 A1(0) S1 = (-i/4pi) S1 v P1 v S1, a rank-one form with
  coefficients c_a = integral (v f_a)_1
* S2  = kernel of m(0) inside S1
* b(0) = (1/8pi) S2 v diag(|x-y|, e^{-sqrt(2mu)|x-y|}/sqrt(2mu)) v S2

``jn_inverse`` inverts A(z) near a singular A(0) by the Schur-complement
identity A^{-1} = G + (1/z) G S B^{-1} S G with G = (A + S)^{-1},
recursing once more when B(0) is itself singular.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import AssemblyError, DegeneracyError, DomainError, NotFoundError
from .free_resolvent import (distance_kernel, exponential_kernel, yukawa_kernel)
from .operator_assembly import FactoredPotential, PotentialPair, factor_potential
from .radial_grid import RadialGrid

log = logging.getLogger(__name__)

__all__ = [
    "BirmanSchwingerFamily",
    "IntegrationFunctionals",
    "ThresholdReport",
    "assemble_A0",
    "jn_inverse",
    "riesz_null_projection",
    "classify_threshold",
    "find_resonant_coupling",
    "find_eigenvalue_couplings",
    "integration_functionals",
    "resonance_function",
    "phi2",
]

REGULAR = "Regular"
RESONANCE = "ResonanceOnly"
EIGENVALUE = "EigenvalueOnly"
BOTH = "ResonanceAndEigenvalue"


def phi2(w: np.ndarray) -> np.ndarray:
    """(e^w - 1 - w)/w^2 without cancellation near w = 0."""
    w = np.asarray(w, dtype=complex)
    out = np.empty_like(w)
    small = np.abs(w) < 0.1
    ws = w[small]
    # Taylor series through w^8
    acc = np.zeros_like(ws)
    for k in range(8, -1, -1):
        acc = acc * ws + 1.0 / math.factorial(k + 2)
    out[small] = acc
    wl = w[~small]
    out[~small] = (np.expm1(wl) - wl) / wl**2
    return out


def _split_blocks(r, s, upper, lower, sr, ss):
    """Stack two kernel blocks into the doubled matrix, weighted by sqrt(w)."""
    m, n = r.size, s.size
    out = np.zeros((2 * m, 2 * n), dtype=np.result_type(upper, lower))
    out[:m, :n] = sr[:, None] * upper * ss[None, :]
    out[m:, n:] = sr[:, None] * lower * ss[None, :]
    return out


def _v_sandwich(fv: FactoredPotential, idx: np.ndarray, G: np.ndarray) -> np.ndarray:
    """v G v for nodewise v without forming v densely."""
    a, b = fv.a[idx], fv.b[idx]
    k = idx.size
    A = np.concatenate((a, a))
    B = np.concatenate((b, b))
    # v x = A * x + B * swap(x)
    def left(M):
        sw = np.concatenate((M[k:], M[:k]))
        return A[:, None] * M + B[:, None] * sw

    VG = left(G)
    GV = left(VG.T).T
    return GV


@dataclass(frozen=True, eq=False)
class IntegrationFunctionals:
    """Row vectors realizing f -> integral f_1 and f -> integral f_2 on stacked pairs."""

    P1: np.ndarray = field(repr=False)
    P2: np.ndarray = field(repr=False)

    def __call__(self, f: np.ndarray) -> tuple[complex, complex]:
        return self.P1 @ f, self.P2 @ f


def integration_functionals(grid: RadialGrid) -> IntegrationFunctionals:
    z = np.zeros(grid.n)
    return IntegrationFunctionals(np.concatenate((grid.w, z)), np.concatenate((z, grid.w)))


@dataclass(eq=False)
class BirmanSchwingerFamily:
    """A(0) and the evaluator z -> A1(z) in symmetric weighted coordinates.

    ``active`` are the grid nodes kept; vectors have length 2*len(active)
    (upper components first). ``to_values`` maps such a vector back to
    samples on the full doubled grid.
    """

    grid: RadialGrid = field(repr=False)
    mu: float
    fv: FactoredPotential = field(repr=False)
    active: np.ndarray = field(repr=False)
    A0: np.ndarray = field(repr=False)
    singular_values: np.ndarray = field(repr=False)
    hermiticity_residual: float = 0.0
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.A0.shape[0]

    def sqrt_w(self) -> np.ndarray:
        return np.tile(np.sqrt(self.grid.w[self.active]), 2)

    def eigh(self):
        """Eigen-decomposition of the symmetric A0, ascending (cached)."""
        if self._eig is None:
            self._eig = np.linalg.eigh(self.A0)
        return self._eig

    def to_values(self, x: np.ndarray) -> np.ndarray:
        """Active-coordinate vector to value samples on the doubled grid."""
        n, k = self.grid.n, self.active.size
        y = x / self.sqrt_w()
        out = np.zeros(2 * n, dtype=y.dtype)
        out[self.active] = y[:k]
        out[n + self.active] = y[k:]
        return out

    def from_values(self, f: np.ndarray) -> np.ndarray:
        n = self.grid.n
        return np.concatenate((f[self.active], f[n + self.active])) * self.sqrt_w()

    def A1_eval(self, z: complex) -> np.ndarray:
        """(v2 (R0(mu + z^2) - R0(mu)) v1)/z, with the z -> 0 limit built in."""
        idx = self.active
        r = self.grid.r[idx]
        sw = np.sqrt(self.grid.w[idx])
        R, S = r[:, None], r[None, :]
        big, small = np.maximum(R, S), np.minimum(R, S)
        a_, b_ = big - small, big + small
        z = complex(z)
        pref = 1.0 / (8.0 * np.pi * R * S)
        # upper block: integral_a^b (e^{iz rho} - 1)/z d rho
        upper = 1j * (b_**2 * phi2(1j * z * b_) - a_**2 * phi2(1j * z * a_)) * pref
        # lower block after sigma3: Yukawa(kappa_z) - Yukawa(kappa_0), divided by z
        k0 = math.sqrt(2.0 * self.mu)
        if z == 0:
            lower = np.zeros_like(upper)
        else:
            kz = np.sqrt(2.0 * self.mu + z * z)
            delta = z * z / (kz + k0)
            ea, eb = np.exp(-k0 * a_), np.exp(-k0 * b_)
            diff = (ea * np.expm1(-delta * a_) - eb * np.expm1(-delta * b_)) / kz \
                - (ea - eb) * delta / (kz * k0)
            lower = diff * pref / z
        G = _split_blocks(r, r, upper, lower, sw, sw)
        return -_v_sandwich(self.fv, idx, G)

    def A_eval(self, z: complex) -> np.ndarray:
        return self.A0 + complex(z) * self.A1_eval(z)


def assemble_A0(grid: RadialGrid, mu: float, fv: FactoredPotential,
                rel_support: float = 1e-24, check_tol: float = 1e-10) -> BirmanSchwingerFamily:
    """Assemble A(0) = I + v2 R0(mu) v1 on the nodes where v is non-negligible."""
    idx = fv.support(rel_support)
    r = grid.r[idx]
    sw = np.sqrt(grid.w[idx])
    k0 = math.sqrt(2.0 * mu)
    G = _split_blocks(r, r, 1.0 / (4.0 * np.pi * np.maximum(r[:, None], r[None, :])),
                      yukawa_kernel(r, r, k0), sw, sw)
    A0 = np.eye(2 * idx.size) - _v_sandwich(fv, idx, G)
    scale = max(np.abs(A0).max(), 1.0) if A0.size else 1.0
    resid = float(np.abs(A0 - A0.T).max() / scale) if A0.size else 0.0
    if resid > check_tol:
        raise AssemblyError(f"A0 symmetry residual {resid:.3e}")
    A0 = 0.5 * (A0 + A0.T)
    sv = np.sort(np.abs(np.linalg.eigvalsh(A0)))[::-1] if A0.size else np.zeros(0)
    fam = BirmanSchwingerFamily(grid, float(mu), fv, idx, A0, sv, resid)
    return fam


# -- Jensen-Nenciu inversion ------------------------------------------------

def riesz_null_projection(M0: np.ndarray, tol: float):
    """Right/left bases (X, Y) of the null space of M0 with Y^H X = I.

    Singular values at or below ``tol * max(sigma_max, 1)`` count as zero.
    The projection is S = X Y^H; it is orthogonal when M0 is Hermitian.
    """
    if M0.size == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    U, s, Vh = np.linalg.svd(M0)
    cut = tol * max(s[0], 1.0)
    k = int(np.sum(s <= cut))
    if k == 0:
        return np.zeros((M0.shape[0], 0)), np.zeros((M0.shape[0], 0))
    X = Vh[-k:].conj().T  # right null vectors
    Y = U[:, -k:]         # left null vectors: Y^H M0 = 0
    G = Y.conj().T @ X
    if np.linalg.cond(G) > 1e10:
        raise DegeneracyError("zero is not a semisimple eigenvalue of A0 (Jordan chain)")
    Y = Y @ np.linalg.inv(G).conj().T
    return X, Y


def _jn_level(A: np.ndarray, A_zero: np.ndarray | None, first_order0: Callable | None,
              z: complex, tol: float, depth: int, max_depth: int, trace: list) -> np.ndarray:
    """One reduction step in orthonormal bases of the null spaces of A_zero.

    With P = [U_r, Y], Q = [V_r, X] from the SVD of A_zero, P^H A Q is a
    2x2 block matrix whose off-diagonal and kernel blocks are O(z). Its
    Schur complement is z B(z), and B(0) = Y^H A1(0) X.
    """
    if A_zero is None:
        cond = np.linalg.cond(A)
        if cond > 1.0 / (np.finfo(float).eps * 1e3):
            raise DegeneracyError(f"reduced operator singular after depth {depth} (cond {cond:.2e})")
        trace.append((depth, 0))
        return np.linalg.inv(A)
    U, sv, Vh = np.linalg.svd(A_zero)
    k = int(np.sum(sv <= tol * max(sv[0], 1.0))) if sv.size else 0
    trace.append((depth, k))
    if k == 0:
        return np.linalg.inv(A)
    if depth >= max_depth:
        raise DegeneracyError(f"operator still singular at depth {depth}")
    X, Y = Vh[-k:].conj().T, U[:, -k:]
    if np.linalg.cond(Y.conj().T @ X) > 1e10:
        raise DegeneracyError("zero is not a semisimple eigenvalue (Jordan chain)")
    Vr, Ur = Vh[:-k].conj().T, U[:, :-k]
    AX, AVr = A @ X, A @ Vr
    a11, a12 = Ur.conj().T @ AVr, Ur.conj().T @ AX
    a21, a22 = Y.conj().T @ AVr, Y.conj().T @ AX
    i11 = np.linalg.inv(a11)
    Bk = (a22 - a21 @ i11 @ a12) / z
    inner_zero = None
    if first_order0 is not None and depth + 1 < max_depth:
        inner_zero = Y.conj().T @ first_order0() @ X
    Sinv = _jn_level(Bk, inner_zero, None, z, tol, depth + 1, max_depth, trace) / z
    left = i11 @ a12 @ Sinv            # O(1): a12 is O(z)
    top = np.hstack((i11 + left @ a21 @ i11, -left))
    bottom = np.hstack((-Sinv @ a21 @ i11, Sinv))
    return np.hstack((Vr, X)) @ np.vstack((top, bottom)) @ np.hstack((Ur, Y)).conj().T


def jn_inverse(A0: np.ndarray, A1_eval: Callable, z: complex, tol: float = 1e-9,
               max_depth: int = 2, return_trace: bool = False):
    """A(z)^{-1} for A(z) = A0 + z A1(z) via the Schur-complement recursion.

    ``tol`` is the relative singular-value threshold that decides the null
    space of A0 and, one level down, of B(0) = S A1(0) S. The deepest level
    is inverted directly and must be well conditioned.
    """
    z = complex(z)
    if z == 0:
        raise DomainError("z must be nonzero")
    A0 = np.asarray(A0)
    A = A0 + z * A1_eval(z)
    trace: list = []
    inv = _jn_level(A, A0, lambda: A1_eval(0.0), z, tol, 0, max_depth, trace)
    return (inv, trace) if return_trace else inv


# -- classification -----------------------------------------------------------

@dataclass(eq=False)
class ThresholdReport:
    """Outcome of the ladder at +mu.

    Bases are stored as value samples on the doubled grid; ``s1_basis`` is
    orthonormal in the weighted inner product and ``s2_basis`` is an
    orthonormal subset of its span. ``eigenfunctions`` are the L^2
    threshold solutions g_j = -R0(mu) v1 f_j for f_j in S2;
    ``resonance_g`` is the same map applied to the resonant S1 direction.
    """

    grid: RadialGrid = field(repr=False)
    mu: float
    s1_dim: int
    s1_basis: np.ndarray = field(repr=False)
    s2_dim: int
    s2_basis: np.ndarray = field(repr=False)
    classification: str
    c: float | None = None
    resonance_f: np.ndarray | None = field(default=None, repr=False)
    resonance_g: np.ndarray | None = field(default=None, repr=False)
    eigenfunctions: np.ndarray | None = field(default=None, repr=False)
    b0: np.ndarray | None = field(default=None, repr=False)
    b0_cond: float | None = None
    m0_coefficients: np.ndarray | None = field(default=None, repr=False)
    smallest_singular_values: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "s1_dim": self.s1_dim, "s2_dim": self.s2_dim,
            "classification": self.classification, "c": self.c,
            "b0": None if self.b0 is None else np.real(self.b0).tolist(),
            "b0_cond": self.b0_cond,
            "m0_coefficients": None if self.m0_coefficients is None
            else np.real(self.m0_coefficients).tolist(),
            "smallest_singular_values": self.smallest_singular_values,
            "warnings": self.warnings, "diagnostics": self.diagnostics,
        }


def resonance_function(grid: RadialGrid, mu: float, fv: FactoredPotential, f: np.ndarray,
                       active: np.ndarray | None = None) -> np.ndarray:
    """g = -R0(mu) v1 f on the whole doubled grid (f given as value samples)."""
    n = grid.n
    idx = fv.support() if active is None else active
    h = fv.apply_v1(f)
    h1 = h[idx] * grid.w[idx]
    h2 = h[n + idx] * grid.w[idx]
    r = grid.r
    up = 1.0 / (4.0 * np.pi * np.maximum(r[:, None], grid.r[idx][None, :]))
    lo = -yukawa_kernel(r, grid.r[idx], math.sqrt(2.0 * mu))
    return -np.concatenate((up @ h1, lo @ h2))


def _b0_matrix(grid: RadialGrid, mu: float, fv: FactoredPotential, F: np.ndarray,
               idx: np.ndarray) -> np.ndarray:
    """Matrix of b(0) between value-sample vectors (columns of F)."""
    n = grid.n
    VF = fv.apply_v(F)
    w = grid.w[idx]
    r = grid.r[idx]
    k0 = math.sqrt(2.0 * mu)
    Kd = distance_kernel(r, r)
    Ke = exponential_kernel(r, r, k0) / k0
    u1 = VF[idx] * w[:, None]
    u2 = VF[n + idx] * w[:, None]
    return (u1.T @ Kd @ u1 + u2.T @ Ke @ u2) / (8.0 * np.pi)


def classify_threshold(family: BirmanSchwingerFamily, fv: FactoredPotential | None = None,
                       grid: RadialGrid | None = None, mu: float | None = None,
                       tol_rank: float = 1e-7, tol_m0: float = 1e-5) -> ThresholdReport:
    """Run the S1 / m(0) / S2 / b(0) ladder and classify the threshold.

    ``tol_rank`` is relative to the largest singular value of A0.
    ``tol_m0`` decides whether integral (v f)_1 vanishes, relative to the
    L^1 norm of (v f)_1.
    """
    fv = family.fv if fv is None else fv
    grid = family.grid if grid is None else grid
    mu = family.mu if mu is None else mu
    n = grid.n
    if family.size == 0:
        return ThresholdReport(grid, mu, 0, np.zeros((2 * n, 0)), 0, np.zeros((2 * n, 0)), REGULAR)
    vals, vecs = family.eigh()
    smax = np.abs(vals).max()
    null = np.abs(vals) <= tol_rank * smax
    order = np.argsort(np.abs(vals))
    smallest = [float(abs(vals[j])) for j in order[:4]]
    s1_dim = int(null.sum())
    report = ThresholdReport(grid, mu, s1_dim, np.zeros((2 * n, 0)), 0, np.zeros((2 * n, 0)),
                             REGULAR, smallest_singular_values=smallest)
    if s1_dim == 0:
        return report
    F = np.column_stack([family.to_values(vecs[:, j]) for j in np.nonzero(null)[0]])
    report.s1_basis = F
    VF = fv.apply_v(F)
    coeff = grid.w @ VF[:n]  # integral of (v f_a)_1
    scale = (grid.w @ np.abs(VF[:n])).max()
    report.m0_coefficients = coeff
    report.diagnostics["m0_scale"] = float(scale)
    # S2 = vectors in S1 orthogonal to the coefficient row
    if np.linalg.norm(coeff) <= tol_m0 * scale:
        Q2 = np.eye(s1_dim)
    else:
        _, _, Vh = np.linalg.svd(coeff[None, :])
        Q2 = Vh[1:].T
    s2_dim = Q2.shape[1]
    F2 = F @ Q2
    report.s2_dim = s2_dim
    report.s2_basis = F2
    if s2_dim == 0:
        report.classification = RESONANCE
    elif s2_dim == s1_dim:
        report.classification = EIGENVALUE
    else:
        report.classification = BOTH

    if s2_dim < s1_dim:
        # resonant direction: unit vector in S1 along the coefficient row
        dirn = coeff / np.linalg.norm(coeff)
        f = F @ dirn
        c = float(grid.w @ fv.apply_v(f)[:n])
        if c < 0:
            f, c = -f, -c
        report.c = c
        report.resonance_f = f
        g = resonance_function(grid, mu, fv, f, family.active)
        report.resonance_g = g
        report.diagnostics.update(resonance_growth(grid, g))
    if s2_dim > 0:
        b0 = _b0_matrix(grid, mu, fv, F2, family.active)
        asym = float(np.abs(b0 - b0.T).max() / max(np.abs(b0).max(), 1e-300))
        report.diagnostics["b0_asymmetry"] = asym
        report.b0 = 0.5 * (b0 + b0.T)
        report.b0_cond = float(np.linalg.cond(report.b0))
        if report.b0_cond > 1e-3 / np.finfo(float).eps:
            report.warnings.append(
                f"b(0) numerically singular (cond {report.b0_cond:.2e}); discretization too coarse")
        report.eigenfunctions = np.column_stack(
            [resonance_function(grid, mu, fv, F2[:, j], family.active) for j in range(s2_dim)])
    return report


def resonance_growth(grid: RadialGrid, g: np.ndarray, sigma: float = 0.6) -> dict:
    """Evidence that g is not square integrable while <r>^-sigma g is.

    A 1/r tail makes the squared L^2 norm grow linearly with the radius, so
    the inner-half share of ||g||^2 tends to 1/2; for L^2 functions it is 1.
    """
    w2 = np.tile(grid.w, 2)
    rr = np.tile(grid.r, 2)
    dens = w2 * np.abs(g) ** 2
    total = dens.sum()
    half = dens[rr <= 0.5 * grid.rmax].sum()
    weighted = float(np.sqrt((dens * (1 + rr**2) ** (-sigma)).sum()))
    return {"inner_half_share": float(half / total) if total > 0 else 1.0,
            "l2_norm": float(np.sqrt(total)), "weighted_norm": weighted,
            "weight_exponent": sigma}


# -- coupling tuning -------------------------------------------------------------

def find_resonant_coupling(V: PotentialPair, grid: RadialGrid, mu: float,
                           bracket: tuple[float, float], target: float = 1e-10,
                           return_history: bool = False):
    """Coupling s* in ``bracket`` at which A0(s) = I + s K becomes singular.

    K is assembled once at unit coupling; its negative eigenvalues kappa
    predict s* = -1/kappa. The prediction is refined by secant steps on the
    signed smallest eigenvalue of the re-assembled A0(s).
    """
    lo, hi = sorted(map(float, bracket))
    base = V.scaled(1.0)
    if base.is_zero:
        raise NotFoundError("zero potential has no threshold crossing")
    fam = assemble_A0(grid, mu, factor_potential(base))
    K = fam.A0 - np.eye(fam.size)
    kap = np.linalg.eigvalsh(K)
    preds = sorted(-1.0 / k for k in kap if k < 0 and lo <= -1.0 / k <= hi)
    if not preds:
        raise NotFoundError(f"no threshold crossing for couplings in [{lo}, {hi}]")
    s = preds[0]

    def signed_min(sv: float) -> float:
        A = assemble_A0(grid, mu, factor_potential(V.scaled(sv))).A0
        ev = np.linalg.eigvalsh(A)
        return float(ev[np.argmin(np.abs(ev))])

    history = [(s, signed_min(s))]
    s_prev, f_prev = s * (1 + 1e-6), signed_min(s * (1 + 1e-6))
    for _ in range(20):
        s_cur, f_cur = history[-1]
        if abs(f_cur) <= target:
            break
        if f_cur == f_prev:
            break
        s_new = s_cur - f_cur * (s_cur - s_prev) / (f_cur - f_prev)
        s_prev, f_prev = s_cur, f_cur
        history.append((s_new, signed_min(s_new)))
    s_star, f_star = min(history, key=lambda p: abs(p[1]))
    if return_history:
        return s_star, {"prediction": preds[0], "history": history, "residual": abs(f_star)}
    return s_star


def _ray_crossing(make: Callable[[float, float], PotentialPair], grid: RadialGrid, mu: float,
                  t: float, branch: int):
    """Exact crossing s*(t) on the ray (s1, s2) = (s, s t) for the given branch."""
    fam = assemble_A0(grid, mu, factor_potential(make(1.0, t)))
    kap, vec = np.linalg.eigh(fam.A0 - np.eye(fam.size))
    if branch >= kap.size or kap[branch] >= 0:
        raise NotFoundError(f"branch {branch} has no threshold crossing at t={t}")
    s = -1.0 / kap[branch]
    f = fam.to_values(vec[:, branch])  # null vector of A0(s) up to the sqrt(s) scaling of v
    return s, f, fam


def find_eigenvalue_couplings(make: Callable[[float, float], PotentialPair], grid: RadialGrid,
                              mu: float, t_bracket: tuple[float, float], branch: int = 1,
                              xtol: float = 1e-13) -> tuple[float, float, dict]:
    """Couplings (s1, s2) at which +mu is a threshold eigenvalue.

    Along each ray (s1, s2) = (s, s t) the operator A0 is exactly
    I + s K(t), so the resonant coupling of the chosen branch is
    s*(t) = -1/kappa_branch(t) with the null vector of that eigenvalue.
    The second condition, integral (v f)_1 = 0, is a sign change in t,
    located by bisection. The null vector is oriented against the one at
    the lower bracket end, which keeps the sign test well defined as long
    as the branch does not swap within the bracket.
    """
    n = grid.n
    w2 = np.tile(grid.w, 2)
    _, f_ref, _ = _ray_crossing(make, grid, mu, t_bracket[0], branch)

    def signed_integral(t):
        s, f, fam = _ray_crossing(make, grid, mu, t, branch)
        if w2 @ (f * f_ref) < 0:
            f = -f
        h = fam.fv.apply_v(f)[:n]  # v at unit coupling; the sqrt(s) factor does not move the root
        return float(grid.w @ h / (grid.w @ np.abs(h))), s

    a, b = map(float, t_bracket)
    ca, cb = signed_integral(a)[0], signed_integral(b)[0]
    if ca * cb > 0:
        raise NotFoundError(f"integral of (v f)_1 keeps its sign for t in {t_bracket}")
    t = brentq(lambda x: signed_integral(x)[0], a, b, xtol=xtol, rtol=4 * np.finfo(float).eps)
    c_rel, s = signed_integral(t)
    return s, s * t, {"ray_slope": t, "relative_integral": c_rel, "branch": branch}
