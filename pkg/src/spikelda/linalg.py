"""Dense symmetric eigen-solvers and subspace-perturbation geometry.

Everything here is a pure function of its inputs. Eigenvectors follow one
sign convention throughout the package: each column is flipped so that its
largest-magnitude entry is positive (ties go to the lowest index).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateError, DomainError, ValidationError

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class EigenPairs:
    """Leading eigenpairs: ``values`` non-increasing, ``vectors`` p x k orthonormal."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def k(self) -> int:
        return self.values.shape[0]


def _as_square(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ValidationError(f"expected a non-empty square matrix, got shape {A.shape}")
    return A


def check_symmetric(A, rtol: float = SYMMETRY_RTOL) -> np.ndarray:
    """Return ``A`` as a float array, raising if it is not symmetric."""
    A = _as_square(A)
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny)
    if np.max(np.abs(A - A.T)) > rtol * scale:
        raise ValidationError("matrix is not symmetric")
    return A


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.size == 0:
        return vectors
    # argmax returns the first (lowest-index) maximiser, which is the tie rule
    pivot = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivot, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def sym_eigendecomp(A, k: int) -> EigenPairs:
    """Top-``k`` eigenpairs of a symmetric matrix, largest first."""
    A = check_symmetric(A)
    p = A.shape[0]
    if not 1 <= k <= p:
        raise ValidationError(f"k must lie in [1, {p}], got {k}")
    # eigh only reads one triangle; symmetrise so both halves agree exactly
    A = 0.5 * (A + A.T)
    values, vectors = scipy.linalg.eigh(A, subset_by_index=[p - k, p - 1])
    values = values[::-1].copy()
    vectors = fix_signs(vectors[:, ::-1])
    return EigenPairs(values, vectors)


def gram_spectrum(Xc) -> np.ndarray:
    """All eigenvalues of ``Xc.T @ Xc / n`` that can be nonzero, largest first.

    Uses whichever of the n x n Gram matrix and the p x p scatter matrix is
    smaller; the two share their nonzero spectrum.
    """
    Xc = np.asarray(Xc, dtype=float)
    n, p = Xc.shape
    M = Xc @ Xc.T / n if n <= p else Xc.T @ Xc / n
    values = scipy.linalg.eigh(M, eigvals_only=True)[::-1]
    return np.clip(values, 0.0, None)


def top_eigenpairs_gram(Xc, k: int) -> EigenPairs:
    """Top-``k`` eigenpairs of ``Xc.T @ Xc / n`` through the n x n Gram matrix.

    Intended for p >> n. The caller is responsible for centring the rows.
    """
    Xc = np.asarray(Xc, dtype=float)
    if Xc.ndim != 2:
        raise ValidationError("Xc must be a 2-d array")
    n, p = Xc.shape
    if not 1 <= k <= min(n, p):
        raise ValidationError(f"k must lie in [1, {min(n, p)}], got {k}")
    G = Xc @ Xc.T / n
    G = 0.5 * (G + G.T)
    values, coeffs = scipy.linalg.eigh(G, subset_by_index=[n - k, n - 1])
    values = np.clip(values[::-1], 0.0, None)
    coeffs = coeffs[:, ::-1]

    vectors = np.zeros((p, k))
    tol = max(values[0], np.finfo(float).tiny) * n * np.finfo(float).eps * 10
    good = values > tol
    vectors[:, good] = (Xc.T @ coeffs[:, good]) / np.sqrt(n * values[good])
    if not np.all(good):
        # null-space directions: any orthonormal completion will do
        vectors[:, ~good] = _orthonormal_completion(vectors[:, good], int((~good).sum()))
    return EigenPairs(values, fix_signs(vectors))


def _orthonormal_completion(Q: np.ndarray, m: int) -> np.ndarray:
    p = Q.shape[0]
    basis = np.eye(p)
    basis -= Q @ (Q.T @ basis)
    # pivoted QR picks the m best-conditioned residual directions deterministically
    q, _, _ = scipy.linalg.qr(basis, pivoting=True, mode="economic")
    return q[:, :m]


def two_to_inf_norm(M) -> float:
    """Maximum row l2 norm, i.e. sup over unit x of ``||M x||_inf``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.max(np.linalg.norm(M, axis=1)))


def _check_frames(Uhat, U) -> tuple[np.ndarray, np.ndarray]:
    Uhat = np.asarray(Uhat, dtype=float)
    U = np.asarray(U, dtype=float)
    if Uhat.ndim == 1:
        Uhat = Uhat[:, None]
    if U.ndim == 1:
        U = U[:, None]
    if Uhat.shape != U.shape:
        raise ValidationError(f"shape mismatch: {Uhat.shape} vs {U.shape}")
    return Uhat, U


def procrustes_align(Uhat, U, rtol: float = 1e-12) -> np.ndarray:
    """Orthogonal ``Xi`` minimising ``||W - U.T @ Uhat||_F`` over orthogonal W.

    ``Xi`` is the polar factor of ``U.T @ Uhat``, so ``U @ Xi`` is the copy of
    ``U`` rotated to best match ``Uhat`` (and ``Uhat @ Xi.T`` best matches ``U``).
    """
    Uhat, U = _check_frames(Uhat, U)
    H = U.T @ Uhat
    d = H.shape[0]
    if d == 1:
        return np.array([[1.0 if H[0, 0] >= 0 else -1.0]])
    A, s, Bt = np.linalg.svd(H)
    if s[-1] <= rtol * max(s[0], 1.0):
        raise DegenerateError("U.T @ Uhat is rank deficient; alignment is not unique")
    return A @ Bt


def sin_theta_dist(Uhat, U) -> float:
    """Spectral sin-theta distance ``||(I - U U.T) Uhat||_2`` between subspaces."""
    Uhat, U = _check_frames(Uhat, U)
    residual = Uhat - U @ (U.T @ Uhat)
    value = np.linalg.norm(residual, 2) if residual.size else 0.0
    return float(min(max(value, 0.0), 1.0))


def effective_rank(A) -> float:
    """``tr(A) / ||A||_2`` for a PSD matrix."""
    A = check_symmetric(A)
    p = A.shape[0]
    top = scipy.linalg.eigh(0.5 * (A + A.T), eigvals_only=True, subset_by_index=[p - 1, p - 1])[0]
    if top <= 0:
        raise DomainError("effective rank undefined for the zero matrix")
    return float(np.trace(A) / top)
