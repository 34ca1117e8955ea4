"""Complex subspace primitives shared by the channel, precoding and rate code.

Bases are never compared entry-wise (they are non-unique); compare subspaces
through their projectors or principal angles instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RANK_TOL = 1e-10
EIG_FRACTION = 1e-3


@dataclass(frozen=True)
class Subspace:
    """Subspace of C^ambient_dim given by an orthonormal basis (ambient_dim x dim)."""

    basis: np.ndarray

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.conj().T

    @classmethod
    def empty(cls, ambient_dim: int) -> "Subspace":
        return cls(np.zeros((ambient_dim, 0), dtype=complex))


def as_matrix(m) -> np.ndarray:
    if not (isinstance(m, np.ndarray) and m.dtype == np.complex128):
        m = np.asarray(m, dtype=complex)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] < 1:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix has non-finite entries")
    return m


def orthonormalize(m, tol: float = RANK_TOL) -> Subspace:
    """Orthonormal basis of the column space of ``m``.

    The numerical rank counts singular values above ``tol`` times the largest
    one, so rank-deficient and all-zero inputs are fine (the latter gives an
    empty subspace).
    """
    m = as_matrix(m)
    if m.shape[1] == 0:
        return Subspace.empty(m.shape[0])
    u, s, _ = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return Subspace.empty(m.shape[0])
    rank = int(np.count_nonzero(s > tol * s[0]))
    return Subspace(u[:, :rank])


def null_projector(s: Subspace) -> np.ndarray:
    """Projector onto the orthogonal complement of ``s``: I - b b^H."""
    return np.eye(s.ambient_dim, dtype=complex) - s.projector()


def orthogonality_residual(a, b) -> float:
    """Frobenius norm of U_a^H U_b for orthonormal bases of the two column spaces.

    Zero means the column spaces are orthogonal; identical spaces give
    sqrt(dim).
    """
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError("column spaces live in different ambient dimensions")
    ua, ub = orthonormalize(a), orthonormalize(b)
    if ua.dim == 0 or ub.dim == 0:
        return 0.0
    return float(np.linalg.norm(ua.basis.conj().T @ ub.basis))


def hermitian_eig(cov) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues in descending order."""
    cov = as_matrix(cov)
    w, v = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    return w[::-1], v[:, ::-1]


def dominant_direction(cov, fraction: float = EIG_FRACTION) -> Subspace:
    """Eigenvectors of ``cov`` whose eigenvalues exceed ``fraction`` of the largest."""
    cov = as_matrix(cov)
    if cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    scale = np.abs(cov).max()
    if scale > 0 and np.abs(cov - cov.conj().T).max() > 1e-8 * scale:
        raise ValueError("covariance is not Hermitian")
    w, v = hermitian_eig(cov)
    if w[0] <= 0.0:
        return Subspace.empty(cov.shape[0])
    if w[-1] < -1e-8 * w[0]:
        raise ValueError("covariance is not positive semidefinite")
    keep = w > fraction * w[0]
    return Subspace(v[:, keep])


def principal_angle_distance(a: Subspace, b: Subspace) -> float:
    """Spectral-norm distance between the projectors of two subspaces."""
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("ambient dimensions differ")
    if a.dim != b.dim:
        return 1.0
    return float(np.linalg.norm(a.projector() - b.projector(), 2))


def least_eigvecs(cov: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """The ``d`` eigenvectors of smallest eigenvalue, plus all eigenvalues ascending."""
    w, v = np.linalg.eigh(0.5 * (cov + cov.conj().T))
    return v[:, :d], w
