"""Dense linear-algebra kernels shared by the solver and the analysis code.

Matrices are plain numpy arrays. Hermitian inputs are validated against a
symmetry tolerance before being handed to LAPACK.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-12
NSD_RTOL = 1e-8


class NotHermitianError(ValueError):
    """Raised when a matrix expected to be Hermitian is not."""


def as_hermitian(H, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate ``H`` and return it as a square complex array.

    The asymmetry check is absolute, ``|H - H^*| <= tol`` entrywise, with the
    tolerance scaled by ``max(1, |H|_max)`` so that large LMI blocks built
    from floating point products do not trip it spuriously.
    """
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    asym = float(np.max(np.abs(H - H.conj().T))) if H.size else 0.0
    if asym > tol * scale:
        raise NotHermitianError(f"matrix is not Hermitian (asymmetry {asym:.3e})")
    return H


def hermitian_eig(H, tol: float = HERMITIAN_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix.

    Returns ``(w, V)`` with ``w`` ascending and the columns of ``V``
    orthonormal, ``H @ V[:, k] == w[k] * V[:, k]``.
    """
    H = as_hermitian(H, tol)
    # symmetrize exactly so LAPACK sees the matrix we validated
    Hs = 0.5 * (H + H.conj().T)
    w, V = np.linalg.eigh(Hs)
    return w, V


def realify(H) -> np.ndarray:
    """Map an n x n Hermitian matrix to its 2n x 2n real symmetric embedding.

    ``[[Re H, -Im H], [Im H, Re H]]``; every eigenvalue of ``H`` appears twice
    in the spectrum of the result, so semidefiniteness is preserved.
    """
    H = as_hermitian(H)
    re, im = H.real, H.imag
    return np.block([[re, -im], [im, re]])


def max_singular_value(A) -> float:
    """Largest singular value of a (possibly rectangular) complex matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if A.size == 0:
        return 0.0
    return float(np.linalg.svd(A, compute_uv=False)[0])


def min_singular_value(A) -> float:
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    return float(np.linalg.svd(A, compute_uv=False)[-1])


def is_nsd(H, rtol: float = NSD_RTOL) -> bool:
    """True when ``H`` is negative semidefinite up to ``rtol * (1 + |H|)``."""
    w, _ = hermitian_eig(H)
    norm = float(np.max(np.abs(w))) if w.size else 0.0
    return bool(w[-1] <= rtol * (1.0 + norm))


def skew_from_vector(v, n: int) -> np.ndarray:
    """Fill the strictly upper triangle of an ``n x n`` antisymmetric matrix.

    Entries are taken row by row; ``len(v)`` must equal ``n*(n-1)/2``.
    """
    v = np.asarray(v, dtype=float)
    if v.size != n * (n - 1) // 2:
        raise ValueError(f"expected {n * (n - 1) // 2} entries, got {v.size}")
    X = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    X[iu] = v
    return X - X.T


def skew_basis(n: int) -> list[np.ndarray]:
    """Basis of real antisymmetric ``n x n`` matrices, in ``skew_from_vector`` order."""
    basis = []
    for i, j in zip(*np.triu_indices(n, 1)):
        E = np.zeros((n, n))
        E[i, j] = 1.0
        E[j, i] = -1.0
        basis.append(E)
    return basis
