"""Discrete matrix Schrodinger operators on a radial grid.

The linearized operator acts on pairs (f1, f2) stacked as one vector of
length 2N::

    H = [[-Lap + mu - V1,      -V2      ],
         [      V2,       Lap - mu + V1 ]]

Value coordinates are the storage convention. Conjugating by sqrt(w)
(see :meth:`RadialGrid.to_unitary`) gives a real matrix ``Hu`` with
``sigma3 @ Hu`` symmetric, which is what every spectral routine works on.

The potential block [[V1, V2], [V2, V1]] is factored nodewise as v @ v
with v symmetric positive semidefinite, giving ``V = v1 @ v2`` with
``v1 = -sigma3 v`` and ``v2 = v``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError, ConsistencyError, PositivityError, ShapeError
from .radial_grid import RadialGrid, laplacian_tridiagonal

log = logging.getLogger(__name__)

__all__ = [
    "PotentialPair",
    "FactoredPotential",
    "MatrixHamiltonian",
    "AssumptionReport",
    "zero_potential",
    "gaussian_pair",
    "two_bump_pair",
    "fit_decay_beta",
    "factor_potential",
    "assemble_hamiltonian",
    "lminus_tridiagonal",
    "lplus_tridiagonal",
    "check_assumptions",
    "participation_ratio",
    "sigma1",
    "sigma3",
]

SYMMETRY_TOL = 1e-12


def fit_decay_beta(r: np.ndarray, V1: np.ndarray, V2: np.ndarray) -> tuple[float, float]:
    """Fit |V1| + |V2| ~ <r>^{-beta} on the outer half of the grid.

    Returns ``(beta, rms residual of the log fit)``. A potential that
    vanishes identically, or underflows on the whole tail, reports
    ``beta = inf``.
    """
    env = np.abs(V1) + np.abs(V2)
    jr = np.sqrt(1.0 + r**2)
    tail = (r >= 0.5 * r[-1]) & (env > 1e-300)
    if tail.sum() < 4:
        return math.inf, 0.0
    x = np.log(jr[tail])
    y = np.log(env[tail])
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(-slope), resid


@dataclass(frozen=True, eq=False)
class PotentialPair:
    """Radial samples of V1, V2 together with an overall coupling.

    The effective potential is ``coupling * (V1, V2)``; ``V1`` and ``V2``
    are the unscaled shapes.
    """

    V1: np.ndarray = field(repr=False)
    V2: np.ndarray = field(repr=False)
    coupling: float = 1.0
    decay_beta: float = math.inf
    decay_residual: float = 0.0
    label: str = "custom"

    def __post_init__(self):
        V1 = np.asarray(self.V1, dtype=float)
        V2 = np.asarray(self.V2, dtype=float)
        if V1.shape != V2.shape or V1.ndim != 1:
            raise ShapeError("V1 and V2 must be 1D arrays of equal length")
        if not (np.all(np.isfinite(V1)) and np.all(np.isfinite(V2))):
            raise ConfigurationError("potential samples must be finite")
        object.__setattr__(self, "V1", V1)
        object.__setattr__(self, "V2", V2)

    @classmethod
    def from_samples(cls, r, V1, V2, coupling: float = 1.0, label: str = "custom"):
        beta, resid = fit_decay_beta(np.asarray(r), np.asarray(V1), np.asarray(V2))
        return cls(V1, V2, coupling, beta, resid, label)

    @property
    def n(self) -> int:
        return self.V1.size

    @property
    def v1_eff(self) -> np.ndarray:
        return self.coupling * self.V1

    @property
    def v2_eff(self) -> np.ndarray:
        return self.coupling * self.V2

    def scaled(self, s: float) -> "PotentialPair":
        """Same shape with coupling ``s`` (replaces, does not multiply)."""
        return replace(self, coupling=float(s))

    @property
    def is_zero(self) -> bool:
        return self.coupling == 0 or (not self.V1.any() and not self.V2.any())


def zero_potential(grid: RadialGrid) -> PotentialPair:
    z = np.zeros(grid.n)
    return PotentialPair(z, z.copy(), 1.0, math.inf, 0.0, "zero")


def gaussian_pair(grid: RadialGrid, amp1: float = 2.0, amp2: float = 1.0,
                  width: float = 1.0, coupling: float = 1.0) -> PotentialPair:
    """V1 = amp1 e^{-(r/width)^2}, V2 = amp2 e^{-(r/width)^2}."""
    g = np.exp(-(grid.r / width) ** 2)
    return PotentialPair.from_samples(grid.r, amp1 * g, amp2 * g, coupling, "gaussian")


def two_bump_pair(grid: RadialGrid, s1: float, s2: float, *,
                  width1: float = 1.0, width2: float = 0.5, center2: float = 0.0,
                  ratio1: float = 0.9, ratio2: float = -0.9) -> PotentialPair:
    """Two Gaussian bumps with independent couplings and V2/V1 ratios.

    Bump k contributes s_k b_k to V1 and ratio_k s_k b_k to V2, so the
    pair stays positive semidefinite for s_k >= 0 and |ratio_k| <= 1.
    Opposite ratios let the closed lower channel cancel the 1/r tail of
    a zero-energy solution, which is how a threshold eigenvalue is
    reached with two tuning parameters.
    """
    b1 = np.exp(-(grid.r / width1) ** 2)
    b2 = np.exp(-((grid.r - center2) / width2) ** 2)
    V1 = s1 * b1 + s2 * b2
    V2 = ratio1 * s1 * b1 + ratio2 * s2 * b2
    return PotentialPair.from_samples(grid.r, V1, V2, 1.0, "two-bump")


@dataclass(frozen=True, eq=False)
class FactoredPotential:
    """Nodewise square root v = [[a, b], [b, a]] of [[V1, V2], [V2, V1]].

    ``a`` and ``b`` are length-N arrays. The matrices v1 = -sigma3 v and
    v2 = v are applied to stacked pairs with :meth:`apply_v1`/:meth:`apply_v2`.
    """

    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.a.size

    def apply_v(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f)
        n = self.n
        a = self.a.reshape((-1,) + (1,) * (f.ndim - 1))
        b = self.b.reshape((-1,) + (1,) * (f.ndim - 1))
        f1, f2 = f[:n], f[n:]
        return np.concatenate((a * f1 + b * f2, b * f1 + a * f2))

    apply_v2 = apply_v

    def apply_v1(self, f: np.ndarray) -> np.ndarray:
        g = self.apply_v(f)
        g[: self.n] *= -1
        return g

    def blocks(self) -> np.ndarray:
        """Array of shape (N, 2, 2) with the nodewise matrices v."""
        out = np.empty((self.n, 2, 2))
        out[:, 0, 0] = out[:, 1, 1] = self.a
        out[:, 0, 1] = out[:, 1, 0] = self.b
        return out

    def dense_v(self) -> np.ndarray:
        return sp.bmat([[sp.diags(self.a), sp.diags(self.b)],
                        [sp.diags(self.b), sp.diags(self.a)]]).toarray()

    def support(self, rel: float = 1e-24) -> np.ndarray:
        """Indices of nodes where v is not negligible relative to its peak."""
        mag = np.abs(self.a) + np.abs(self.b)
        peak = mag.max() if mag.size else 0.0
        if peak == 0:
            return np.zeros(0, dtype=int)
        return np.nonzero(mag > rel * peak)[0]


def factor_potential(V: PotentialPair) -> FactoredPotential:
    """Symmetric PSD square root of the nodewise block [[V1, V2], [V2, V1]].

    The block has eigenvalues V1 +- V2 on (1, +-1)/sqrt(2), so the root is
    [[a, b], [b, a]] with a, b the half-sum and half-difference of
    sqrt(V1 + V2) and sqrt(V1 - V2).
    """
    V1, V2 = V.v1_eff, V.v2_eff
    plus, minus = V1 + V2, V1 - V2
    scale = max(np.abs(V1).max(initial=0.0), 1e-300)
    bad = np.nonzero((plus < -1e-14 * scale) | (minus < -1e-14 * scale))[0]
    if bad.size:
        k = int(bad[0])
        raise PositivityError(
            f"potential block not positive semidefinite at node {k}: "
            f"V1={V1[k]:.6g}, V2={V2[k]:.6g}")
    sp_ = np.sqrt(np.clip(plus, 0.0, None))
    sm = np.sqrt(np.clip(minus, 0.0, None))
    return FactoredPotential(0.5 * (sp_ + sm), 0.5 * (sp_ - sm))


def sigma3(n: int) -> np.ndarray:
    """Diagonal of sigma3 on stacked pairs of length-n blocks."""
    return np.concatenate((np.ones(n), -np.ones(n)))


def sigma1(x: np.ndarray, n: int) -> np.ndarray:
    """Swap the two components of a stacked vector or matrix rows."""
    return np.concatenate((x[n:], x[:n]))


@dataclass(eq=False)
class MatrixHamiltonian:
    """Discrete H with its grid, threshold and potential.

    The operator is tridiagonal-plus-diagonal, so the sparse unitary form
    is primary. ``H`` (value coordinates) and :meth:`unitary` are dense
    and built on first access. All entries are real, so float64 is used.
    ``flags`` records which structural identities were checked and their
    residuals.
    """

    mu: float
    grid: RadialGrid
    potential: PotentialPair
    flags: dict = field(default_factory=dict)
    _sparse: sp.csr_matrix | None = field(default=None, repr=False)
    _unitary: np.ndarray | None = field(default=None, repr=False)
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def dim(self) -> int:
        return 2 * self.grid.n

    def sparse_unitary(self) -> sp.csr_matrix:
        if self._sparse is None:
            d, e = laplacian_tridiagonal(self.grid)
            V1, V2 = self.potential.v1_eff, self.potential.v2_eff
            Lt = sp.diags([e, d, e], [-1, 0, 1])
            I = sp.identity(self.n)
            top = sp.hstack([Lt + self.mu * I - sp.diags(V1), -sp.diags(V2)])
            bot = sp.hstack([sp.diags(V2), -Lt - self.mu * I + sp.diags(V1)])
            self._sparse = sp.vstack([top, bot]).tocsr()
        return self._sparse

    def unitary(self) -> np.ndarray:
        """Dense real H in coordinates where the weighted norm is Euclidean."""
        if self._unitary is None:
            self._unitary = self.sparse_unitary().toarray()
        return self._unitary

    @property
    def H(self) -> np.ndarray:
        """Dense H in value coordinates."""
        if self._dense is None:
            s = np.tile(self.grid.sqrt_w, 2)
            self._dense = (self.unitary() / s[:, None]) * s[None, :]
        return self._dense

    def release_dense(self) -> None:
        """Drop cached dense copies to free memory."""
        self._unitary = None
        self._dense = None

    def norm(self) -> float:
        """Spectral norm of H in the weighted space (cached)."""
        if "norm" not in self.flags:
            self.flags["norm"] = float(sp_norm2(self.sparse_unitary()))
        return self.flags["norm"]

    def symmetry_residuals(self) -> dict:
        A = self.sparse_unitary().tocsr()
        n = self.n
        s3 = sp.diags(sigma3(n))
        nrm = max(abs(A).max(), 1e-300)
        # weighted adjoint of H becomes the transpose in unitary coordinates
        r3 = abs(s3 @ A @ s3 - A.T).max() / nrm
        perm = np.concatenate((np.arange(n, 2 * n), np.arange(n)))
        r1 = abs(A[perm][:, perm] + A).max() / nrm
        return {"sigma3_adjoint": float(r3), "sigma1_antisymmetry": float(r1)}


def sp_norm2(A) -> float:
    """Largest singular value of a sparse or dense matrix.

    Sparse matrices above 64 rows and dense ones above 600 use a Lanczos
    estimate instead of a full SVD, with power iteration as the fallback
    when ARPACK stalls (it does on exact zeros and tiny rank-deficient
    residuals).
    """
    if (sp.issparse(A) and min(A.shape) > 64) or min(A.shape) > 600:
        from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, svds
        if (abs(A).max() if sp.issparse(A) else np.abs(A).max()) == 0:
            return 0.0
        try:
            return float(svds(A, k=1, return_singular_vectors=False, tol=1e-10,
                              random_state=np.random.default_rng(0))[0])
        except (ArpackError, ArpackNoConvergence):
            return _power_norm2(A)
    return float(np.linalg.norm(A.toarray() if sp.issparse(A) else A, 2))


def _power_norm2(A, iters: int = 300, rtol: float = 1e-8) -> float:
    x = np.random.default_rng(0).standard_normal(A.shape[1])
    est = 0.0
    for _ in range(iters):
        y = A @ x
        x = A.conj().T @ y
        nx = np.linalg.norm(x)
        if nx == 0:
            return 0.0
        new = math.sqrt(nx)
        x = x / nx
        if abs(new - est) <= rtol * new:
            return new
        est = new
    return est


def assemble_hamiltonian(grid: RadialGrid, mu: float, V: PotentialPair | None = None,
                         verify: bool = True) -> MatrixHamiltonian:
    """Assemble H = diag(-Lap + mu, Lap - mu) + [[-V1, -V2], [V2, V1]]."""
    mu = float(mu)
    if not (mu > 0 and math.isfinite(mu)):
        raise ConfigurationError(f"mu must be positive, got {mu}")
    if V is None:
        V = zero_potential(grid)
    if V.n != grid.n:
        raise ShapeError(f"potential has {V.n} samples, grid has {grid.n}")
    ham = MatrixHamiltonian(mu, grid, V)
    if verify:
        res = ham.symmetry_residuals()
        ham.flags.update(res)
        for key, val in res.items():
            if val > SYMMETRY_TOL:
                raise AssemblyError(f"{key} residual {val:.3e} exceeds {SYMMETRY_TOL}")
        ham.flags["verified"] = True
    return ham


def lminus_tridiagonal(grid: RadialGrid, mu: float, V: PotentialPair):
    """L_- = -Lap + mu - V1 + V2 as (diag, offdiag) in unitary coordinates."""
    d, e = laplacian_tridiagonal(grid)
    return d + mu - V.v1_eff + V.v2_eff, e


def lplus_tridiagonal(grid: RadialGrid, mu: float, V: PotentialPair):
    """L_+ = -Lap + mu - V1 - V2 as (diag, offdiag) in unitary coordinates."""
    d, e = laplacian_tridiagonal(grid)
    return d + mu - V.v1_eff - V.v2_eff, e


def participation_ratio(x: np.ndarray) -> float:
    """(sum |x|^2)^2 / sum |x|^4 for a vector in unitary coordinates."""
    p = np.abs(x) ** 2
    return float(p.sum() ** 2 / max((p**2).sum(), 1e-300))


@dataclass
class AssumptionReport:
    """Outcome of the A1-A4 scans with the witnesses that decided them."""

    a1_ok: bool
    a1_min_gap: float
    a2_ok: bool
    a2_min_eig: float
    a3_decay_beta: float
    a3_residual: float
    a3_infinite: bool
    a4_ok: bool
    a4_candidates: list = field(default_factory=list)
    a4_heuristic: bool = True
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return str(x)
            return x
        return {k: clean(v) for k, v in self.__dict__.items()}


def check_assumptions(H: MatrixHamiltonian, V: PotentialPair | None = None,
                      L_minus=None, *, tol_eig: float | None = None,
                      tol_axis: float = 1e-8, eig=None) -> AssumptionReport:
    """Scan A1 (positivity), A2 (L_- >= 0), A3 (decay) and A4 (no embedded eigenvalues).

    Parameters
    ----------
    L_minus : (diag, offdiag) in unitary coordinates, a dense matrix in
        value coordinates, or None to assemble it from ``V``.
    tol_eig : defaults to ``1e-6 * ||H||``.
    eig : optional ``(eigenvalues, right eigenvectors in unitary coordinates)``
        to reuse an existing dense eigen-decomposition for the A4 scan.
    """
    V = H.potential if V is None else V
    grid, mu = H.grid, H.mu
    if V.n != grid.n:
        raise ConsistencyError("potential and Hamiltonian live on different grids")
    if tol_eig is None:
        tol_eig = 1e-6 * H.norm()
    V1, V2 = V.v1_eff, V.v2_eff
    gap = V1 - np.abs(V2)
    a1_min = float(gap.min())
    a1_ok = bool(a1_min >= -1e-14 * max(np.abs(V1).max(), 1e-300))

    if L_minus is None:
        L_minus = lminus_tridiagonal(grid, mu, V)
    if isinstance(L_minus, tuple):
        d, e = L_minus
        lmin = float(sla.eigh_tridiagonal(d, e, eigvals_only=True,
                                          select="i", select_range=(0, 0))[0])
    else:
        lmin = float(np.linalg.eigvals(np.asarray(L_minus)).real.min())
    a2_ok = bool(lmin >= -tol_eig)

    beta, resid = fit_decay_beta(grid.r, V1, V2)

    if V.is_zero:
        vals = None
    elif eig is None:
        vals, vecs = sla.eig(H.unitary())
    else:
        vals, vecs = eig
    candidates = []
    if vals is not None:
        real = np.abs(vals.imag) <= tol_axis * max(H.norm(), 1.0)
        outside = np.abs(vals.real) > mu * (1 + tol_axis)
        for j in np.nonzero(real & outside)[0]:
            pr = participation_ratio(vecs[:, j])
            if pr < 0.2 * grid.n:
                candidates.append({"eigenvalue": float(vals[j].real),
                                   "participation_ratio": pr})
    return AssumptionReport(
        a1_ok=a1_ok, a1_min_gap=a1_min, a2_ok=a2_ok, a2_min_eig=lmin,
        a3_decay_beta=beta, a3_residual=resid, a3_infinite=not math.isfinite(beta),
        a4_ok=not candidates, a4_candidates=candidates,
        tolerances={"tol_eig": float(tol_eig), "tol_axis": tol_axis, "pr_fraction": 0.2})
