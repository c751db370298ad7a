"""Discrete spectrum, Riesz projections and the threshold projections.

All matrices live in the symmetric weighted coordinates of
:class:`~specwave.operator_assembly.MatrixHamiltonian` (value samples
times sqrt(w)), so matrix 2-norms are operator norms on weighted L^2.
In these coordinates H^T = sigma3 H sigma3, and the bilinear form
x^T sigma3 y plays the role of the duality between right and left
eigenvectors.

The projection onto the discrete spectrum is taken from an ordered real
Schur form: with H = Q [[T11, T12], [0, T22]] Q^T and the discrete
eigenvalues in T11, P_d = Q1 [I, X] Q^T where T11 X - X T22 = T12. This
is insensitive to Jordan blocks (the zero cluster of a soliton
linearization is one), unlike sums of eigenvector outer products.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import (ConsistencyError, ContourError, DegeneracyError, DependencyError,
                     InvariantViolation, NumericError)
from .operator_assembly import MatrixHamiltonian, sigma3, sp_norm2
from .radial_grid import RadialGrid
from .threshold_analysis import ThresholdReport, resonance_function

log = logging.getLogger(__name__)

__all__ = [
    "SpectrumReport",
    "ProjectionSet",
    "discrete_spectrum",
    "riesz_projection",
    "threshold_projection",
    "minus_threshold_projection",
    "build_projection_set",
    "swap_components",
    "grid_tolerance",
]


def swap_components(A: np.ndarray, n: int, side: str = "both") -> np.ndarray:
    """sigma1 A sigma1 (or one-sided) for stacked two-component matrices."""
    perm = np.r_[np.arange(n, 2 * n), np.arange(n)]
    if side == "left":
        return A[perm]
    if side == "right":
        return A[:, perm]
    return A[np.ix_(perm, perm)] if A.ndim == 2 else A[perm]


def grid_tolerance(grid: RadialGrid, scale: float = 1.0) -> float:
    """Default tolerance for residuals that are limited by the O(h^2) discretization."""
    return 10.0 * scale * grid.h**2


@dataclass(eq=False)
class SpectrumReport:
    """Eigen-decomposition of H with the discrete part singled out.

    ``clusters`` groups discrete eigenvalues that are numerically one
    eigenvalue (a Jordan block splits into a small star of size
    ~ eps^{1/m}). ``krein`` holds x^T sigma3 x for unit right eigenvectors;
    its reciprocal bounds the size of the corresponding spectral projector.
    """

    H: MatrixHamiltonian = field(repr=False)
    mu: float
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)
    discrete_mask: np.ndarray = field(repr=False)
    clusters: list = field(default_factory=list)
    axis: list = field(default_factory=list)
    nilpotent_index: int = 0
    zero_multiplicity: int = 0
    symmetry_residual: float = 0.0
    max_off_axis: float = 0.0
    krein: np.ndarray | None = field(default=None, repr=False)
    projector_condition: float = 0.0
    schur_Q: np.ndarray | None = field(default=None, repr=False)
    schur_T: np.ndarray | None = field(default=None, repr=False)
    schur_k: int = 0
    schur_X: np.ndarray | None = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def discrete(self) -> np.ndarray:
        return self.eigenvalues[self.discrete_mask]

    @property
    def continuum_index(self) -> np.ndarray:
        return np.nonzero(~self.discrete_mask)[0]

    def P_d(self) -> np.ndarray:
        """Riesz projection onto all discrete eigenvalues."""
        if self.schur_k == 0:
            return np.zeros((self.H.dim, self.H.dim))
        Q1 = self.schur_Q[:, : self.schur_k]
        return Q1 @ self._left_rows()

    def _left_rows(self) -> np.ndarray:
        k = self.schur_k
        Q = self.schur_Q
        return Q[:, :k].T + self.schur_X @ Q[:, k:].T

    def cluster_projectors(self) -> list[tuple[complex, np.ndarray]]:
        """(center, P_zeta) for each discrete cluster, built on the small T11."""
        k = self.schur_k
        if k == 0:
            return []
        T11 = self.schur_T[:k, :k]
        Q1 = self.schur_Q[:, :k]
        left = self._left_rows()
        out = []
        for cl in self.clusters:
            p = _small_cluster_projector(T11, cl["center"], cl["radius"])
            out.append((cl["center"], (Q1 @ p) @ left))
        return out

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "dimension": int(self.eigenvalues.size),
            "discrete": [[float(z.real), float(z.imag)] for z in self.discrete],
            "clusters": [{"center": [float(c["center"].real), float(c["center"].imag)],
                          "multiplicity": int(c["size"]), "kind": c["kind"]}
                         for c in self.clusters],
            "axis": self.axis,
            "nilpotent_index": self.nilpotent_index,
            "zero_multiplicity": self.zero_multiplicity,
            "symmetry_residual": self.symmetry_residual,
            "max_off_axis": self.max_off_axis,
            "projector_condition": self.projector_condition,
            "timings": self.timings,
        }


def _small_cluster_projector(T: np.ndarray, center: complex, radius: float) -> np.ndarray:
    """Spectral projector of a small matrix onto eigenvalues within radius of center."""
    def select(z):
        return abs(z - center) <= radius

    S, Z, sdim = sla.schur(T.astype(complex), output="complex", sort=select)
    m = T.shape[0]
    if sdim == 0:
        return np.zeros((m, m), dtype=complex)
    if sdim == m:
        return np.eye(m, dtype=complex)
    X = sla.solve_sylvester(S[:sdim, :sdim], -S[sdim:, sdim:], S[:sdim, sdim:])
    Z1 = Z[:, :sdim]
    return Z1 @ (Z[:, :sdim].conj().T + X @ Z[:, sdim:].conj().T)


def _cluster(values: np.ndarray, tol: float) -> list[np.ndarray]:
    """Single-linkage groups of points closer than tol."""
    remaining = list(range(values.size))
    groups = []
    while remaining:
        seed = [remaining.pop(0)]
        grew = True
        while grew:
            grew = False
            for j in list(remaining):
                if np.min(np.abs(values[j] - values[seed])) <= tol:
                    seed.append(j)
                    remaining.remove(j)
                    grew = True
        groups.append(np.array(seed))
    return groups


def _nilpotent_index(T11: np.ndarray, p0: np.ndarray, tol: float = 1e-6) -> int:
    N = T11 @ p0
    scale = max(np.linalg.norm(N, 2), 1.0)
    if np.linalg.norm(p0) == 0:
        return 0
    Nk = np.eye(T11.shape[0])
    for k in range(1, T11.shape[0] + 1):
        Nk = Nk @ N
        if np.linalg.norm(Nk @ p0, 2) <= tol * scale**k:
            return k
    return T11.shape[0]


def discrete_spectrum(H: MatrixHamiltonian, mu: float | None = None, tol: float = 1e-6,
                      cluster_tol: float = 1e-4, gap_margin: float = 0.0) -> SpectrumReport:
    """Full dense eigen-decomposition of H and its discrete part.

    Discrete means |Re lambda| < mu - gap_margin or |Im lambda| > tol*||H||.
    ``cluster_tol`` (relative to max(1, |lambda|)) merges the splinters
    of a numerically split multiple eigenvalue.
    """
    import time

    mu = H.mu if mu is None else mu
    A = H.unitary()
    normH = H.norm()
    t0 = time.perf_counter()
    try:
        lam, X = sla.eig(A, check_finite=False)
    except (sla.LinAlgError, ValueError) as exc:
        raise NumericError(f"eigen-solver failed: {exc}") from exc
    t_eig = time.perf_counter() - t0
    im_tol = tol * normH
    mask = (np.abs(lam.real) < mu - gap_margin) | (np.abs(lam.imag) > im_tol)

    # symmetry of the multiset under negation and conjugation
    pts = np.column_stack((lam.real, lam.imag))
    tree = cKDTree(pts)
    d_neg, _ = tree.query(-pts)
    d_conj, _ = tree.query(np.column_stack((lam.real, -lam.imag)))
    sym = float(max(d_neg.max(), d_conj.max()))

    disc_idx = np.nonzero(mask)[0]
    clusters, axis = [], []
    zero_mult = 0
    for grp in _cluster(lam[disc_idx], cluster_tol):
        vals = lam[disc_idx[grp]]
        center = complex(vals.mean())
        if abs(center.real) < 1e-12:
            center = complex(0.0, center.imag)
        if abs(center.imag) < 1e-12:
            center = complex(center.real, 0.0)
        off = float(min(abs(center.real), abs(center.imag)))
        kind = "zero" if abs(center) <= cluster_tol else (
            "real" if abs(center.imag) <= im_tol else
            "imaginary" if abs(center.real) <= im_tol else "off-axis")
        radius = max(float(np.abs(vals - center).max()) * 2.0, cluster_tol)
        clusters.append({"center": center, "size": int(grp.size), "radius": radius,
                         "kind": kind, "indices": disc_idx[grp]})
        axis.append({"center": [center.real, center.imag], "kind": kind,
                     "off_axis_distance": off})
        if kind == "zero":
            zero_mult = int(grp.size)
    max_off = max([a["off_axis_distance"] for a in axis if a["kind"] == "off-axis"],
                  default=0.0)

    # ordered real Schur form with the discrete eigenvalues leading
    t0 = time.perf_counter()

    def leading(re, im):
        return (np.abs(re) < mu - gap_margin) | (np.abs(im) > im_tol)

    T, Q, k = sla.schur(A, output="real", sort=leading, check_finite=False)
    if k != disc_idx.size:
        log.warning("Schur ordering selected %d eigenvalues, eig found %d", k, disc_idx.size)
    Xs = (sla.solve_sylvester(T[:k, :k], -T[k:, k:], T[:k, k:]) if 0 < k < A.shape[0]
          else np.zeros((k, A.shape[0] - k)))
    t_schur = time.perf_counter() - t0

    s3 = sigma3(H.n)
    cont = np.nonzero(~mask)[0]
    Xc = X[:, cont]
    krein = np.einsum("ij,i,ij->j", Xc, s3, Xc)
    cond = float(np.max(1.0 / np.abs(krein))) if krein.size else 0.0

    report = SpectrumReport(H, float(mu), lam, X, mask, clusters, axis, 0, zero_mult, sym,
                            max_off, krein, cond, Q, T, k, Xs,
                            {"eig": t_eig, "schur": t_schur})
    if zero_mult:
        zc = next(c for c in clusters if c["kind"] == "zero")
        p0 = _small_cluster_projector(T[:k, :k], zc["center"], zc["radius"])
        report.nilpotent_index = _nilpotent_index(T[:k, :k], p0)
    return report


def riesz_projection(H: MatrixHamiltonian, center: complex, radius: float, points: int = 64,
                     eigenvalues: np.ndarray | None = None, guard: float | None = None) -> np.ndarray:
    """-(1/2 pi i) times the contour integral of (H - z)^{-1} over a circle.

    Trapezoid rule in the angle, one sparse LU per node. Raises when an
    eigenvalue lies within ``guard`` of the contour (default: 10 times
    the radius/points spacing scale, at least 1e-8 relative).
    """
    A = H.sparse_unitary().astype(complex).tocsc()
    n2 = A.shape[0]
    if eigenvalues is None:
        k = min(12, n2 - 2)
        eigenvalues = spla.eigs(A, k=k, sigma=complex(center) + 1.1 * radius,
                                return_eigenvectors=False)
        eigenvalues = np.concatenate((eigenvalues, spla.eigs(
            A, k=k, sigma=complex(center) - 1.1 * radius, return_eigenvectors=False)))
    guard = 10.0 * max(1e-8, radius * 1e-6) if guard is None else guard
    dist = np.abs(np.abs(np.asarray(eigenvalues) - center) - radius)
    if dist.size and dist.min() <= guard:
        bad = np.asarray(eigenvalues)[np.argmin(dist)]
        raise ContourError(f"eigenvalue {bad:.6g} within {dist.min():.2e} of the contour; "
                           f"try a radius away from {abs(bad - center):.6g}")
    eye = sp.identity(n2, dtype=complex, format="csc")
    I = np.eye(n2, dtype=complex)
    P = np.zeros((n2, n2), dtype=complex)
    for j in range(points):
        e = np.exp(2j * np.pi * j / points)
        z = center + radius * e
        lu = spla.splu((A - z * eye).tocsc())
        # dz = i r e dtheta, so -(1/2 pi i) dz = -(r e / points) per node
        P -= (radius * e / points) * lu.solve(I)
    if np.abs(P.imag).max() <= 1e-12 * max(np.abs(P).max(), 1.0) and abs(complex(center).imag) == 0:
        return P.real
    return P


# -- threshold projections ---------------------------------------------------------

def _unitary_columns(grid: RadialGrid, F: np.ndarray) -> np.ndarray:
    return F * np.tile(np.sqrt(grid.w), 2)[:, None]


def threshold_projection(report: ThresholdReport, grid: RadialGrid | None = None,
                         mu: float | None = None, fv=None, mode: str = "basis") -> dict:
    """P_mu in weighted coordinates, by the basis formula or the kernel formula.

    basis:  P f = -sum_ij phi_i (M^{-1})_ij <f, sigma3 phi_j>, M_ij = -<sigma3 phi_i, phi_j>
    kernel: P = -R0(mu) sigma3 v S2 b(0)^{-1} S2 v R0(mu)

    Returns a dict with the matrix ``P``, the eigenfunctions ``phi``
    (weighted coordinates), the Gram matrix ``M`` and the provenance tag.
    """
    grid = report.grid if grid is None else grid
    mu = report.mu if mu is None else mu
    n = grid.n
    if report.s2_dim == 0:
        return {"P": np.zeros((2 * n, 2 * n)), "phi": np.zeros((2 * n, 0)),
                "M": np.zeros((0, 0)), "mode": mode}
    s3 = sigma3(n)
    Phi = _unitary_columns(grid, np.real(report.eigenfunctions))
    M = -(Phi * s3[:, None]).T @ Phi
    if mode == "basis":
        if np.linalg.cond(M) > 1e12:
            raise DegeneracyError("Gram matrix <sigma3 phi_i, phi_j> is singular")
        P = -Phi @ np.linalg.solve(M, (Phi * s3[:, None]).T)
    elif mode == "kernel":
        if fv is None:
            raise DependencyError("kernel formula needs the factored potential")
        if report.b0 is None:
            raise DependencyError("report has no b(0)")
        # right factor R0 sigma3 v f_j and left factor R0 v f_j, both through the kernels
        F2 = report.s2_basis
        right = np.column_stack([resonance_function(grid, mu, fv, F2[:, j])
                                 for j in range(report.s2_dim)])
        vF = fv.apply_v(F2)
        left = np.column_stack([_apply_free_resolvent(grid, mu, vF[:, j])
                                for j in range(report.s2_dim)])
        R = _unitary_columns(grid, right)
        L = _unitary_columns(grid, left)
        P = -R @ np.linalg.solve(np.real(report.b0), L.T)
    else:
        raise ConsistencyError(f"unknown mode {mode!r}")
    return {"P": P, "phi": Phi, "M": M, "mode": mode}


def _apply_free_resolvent(grid: RadialGrid, mu: float, f: np.ndarray) -> np.ndarray:
    """R0(mu) f on the doubled grid via the kernels (upper 1/(4 pi r_>), lower -Yukawa)."""
    from .free_resolvent import yukawa_kernel

    n = grid.n
    r = grid.r
    idx = np.nonzero(np.abs(f[:n]) + np.abs(f[n:]) > 0)[0]
    up = 1.0 / (4.0 * np.pi * np.maximum(r[:, None], r[idx][None, :]))
    lo = -yukawa_kernel(r, r[idx], math.sqrt(2.0 * mu))
    return np.concatenate((up @ (grid.w[idx] * f[idx]), lo @ (grid.w[idx] * f[n + idx])))


def minus_threshold_projection(P_mu: np.ndarray, H: MatrixHamiltonian | None = None,
                               tol: float = 1e-12) -> np.ndarray:
    """P_{-mu} = sigma1 P_mu sigma1, after confirming sigma1 H sigma1 = -H."""
    n = P_mu.shape[0] // 2
    if H is not None:
        res = H.symmetry_residuals()
        if res["sigma1_antisymmetry"] > tol:
            raise InvariantViolation(f"sigma1 H sigma1 + H residual {res['sigma1_antisymmetry']:.2e}")
    return swap_components(P_mu, n)


@dataclass(eq=False)
class ProjectionSet:
    """P_d, P_mu, P_-mu, P_c and P_s = I - P_d in weighted coordinates."""

    P_d: np.ndarray = field(repr=False)
    P_mu: np.ndarray = field(repr=False)
    P_minus_mu: np.ndarray = field(repr=False)
    P_c: np.ndarray = field(repr=False)
    P_s: np.ndarray = field(repr=False)
    provenance: str = "basis"
    M: np.ndarray | None = field(default=None, repr=False)
    residuals: dict = field(default_factory=dict)

    def check(self, tol: float = 1e-7, strict: bool = False) -> dict:
        """Idempotency and vanishing pairwise products, as relative residuals."""
        out = {}
        for name in ("P_d", "P_mu", "P_minus_mu", "P_c", "P_s"):
            P = getattr(self, name)
            nrm = sp_norm2(P) if np.any(P) else 0.0
            out[f"idempotent_{name}"] = float(sp_norm2(P @ P - P) / nrm) if nrm else 0.0
        pairs = [("P_d", "P_mu"), ("P_mu", "P_minus_mu"), ("P_d", "P_minus_mu")]
        for a, b in pairs:
            A, B = getattr(self, a), getattr(self, b)
            if not (np.any(A) and np.any(B)):
                out[f"product_{a}_{b}"] = 0.0
                continue
            out[f"product_{a}_{b}"] = float(max(sp_norm2(A @ B), sp_norm2(B @ A)))
        self.residuals.update(out)
        if strict:
            bad = {k: v for k, v in out.items() if v > tol}
            if bad:
                raise InvariantViolation(f"projection invariants violated: {bad}")
        return out


def build_projection_set(spectrum: SpectrumReport, threshold: ThresholdReport | None = None,
                         mode: str = "basis", fv=None) -> ProjectionSet:
    H = spectrum.H
    dim = H.dim
    P_d = spectrum.P_d()
    if threshold is None or threshold.s2_dim == 0:
        P_mu = np.zeros((dim, dim))
        M = None
    else:
        tp = threshold_projection(threshold, H.grid, H.mu, fv, mode=mode)
        P_mu, M = tp["P"], tp["M"]
    P_mm = minus_threshold_projection(P_mu, H)
    P_c = np.eye(dim) - P_d - P_mu - P_mm
    P_s = np.eye(dim) - P_d
    return ProjectionSet(P_d, P_mu, P_mm, P_c, P_s, mode, M)
