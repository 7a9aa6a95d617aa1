"""Dense symmetric linear algebra kernels.

Everything downstream funnels its eigen/SVD work through here so that
determinism (sign canon) and input validation live in one place.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFinite, NonSymmetric

SYMMETRY_RTOL = 1e-10
SIGN_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Eigenvalues (ascending) and matching orthonormal eigenvectors."""

    values: np.ndarray
    vectors: np.ndarray


def _as_square_matrix(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(mat, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise NonSymmetric(f"{name} must be square 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def check_symmetric(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate finiteness and symmetry; returns the array as float64."""
    arr = _as_square_matrix(mat, name)
    asym = arr - arr.T
    if np.max(np.abs(asym)) > 0.0:
        # spectral norms, only computed when the cheap check fails
        if spectral_norm(asym) > SYMMETRY_RTOL * max(spectral_norm(arr), 1e-300):
            raise NonSymmetric(f"{name} is not symmetric within rtol {SYMMETRY_RTOL}")
    return arr


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its first entry larger than SIGN_EPS in magnitude is positive."""
    out = np.array(vectors, dtype=float, copy=True)
    for j in range(out.shape[1]):
        col = out[:, j]
        nz = np.nonzero(np.abs(col) > SIGN_EPS)[0]
        if nz.size and col[nz[0]] < 0.0:
            out[:, j] = -col
    return out


def sym_eigendecompose(mat: np.ndarray) -> EigenPair:
    """Eigendecomposition of a symmetric matrix, ascending and sign-canonical.

    The sign canon makes the function pure: identical inputs give bit-stable
    outputs across calls, which the rest of the package leans on for
    reproducibility.
    """
    arr = check_symmetric(mat)
    values, vectors = np.linalg.eigh(arr)
    return EigenPair(values=values, vectors=canonical_signs(vectors))


def spectral_norm(mat: np.ndarray) -> float:
    """Largest singular value. Zero-size matrices have norm 0."""
    arr = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("spectral_norm input contains NaN or Inf")
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        return 0.0
    return float(np.linalg.norm(arr, 2))


def default_rank_rtol(shape: tuple[int, ...]) -> float:
    return max(shape) * float(np.finfo(float).eps)


def pseudo_inverse(mat: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular value cutoff."""
    arr = np.asarray(mat, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFinite("pseudo_inverse input contains NaN or Inf")
    if rtol is None:
        rtol = default_rank_rtol(arr.shape)
    return np.linalg.pinv(arr, rcond=rtol)


def spectral_apply(mat: np.ndarray, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Apply a scalar function to a symmetric matrix through its spectrum."""
    pair = sym_eigendecompose(mat)
    mapped = np.asarray(fn(pair.values), dtype=float)
    if mapped.shape != pair.values.shape:
        mapped = np.array([fn(v) for v in pair.values], dtype=float)
    if not np.all(np.isfinite(mapped)):
        raise NonFinite("function produced NaN or Inf on the spectrum")
    return (pair.vectors * mapped) @ pair.vectors.T


def check_psd(mat: np.ndarray, name: str = "matrix", tol: float = 1e-10) -> np.ndarray:
    """Validate symmetry plus eigenvalues >= -tol * max(1, lambda_max)."""
    from .errors import NonPSD

    arr = check_symmetric(mat, name)
    values = np.linalg.eigvalsh(arr)
    floor = -tol * max(1.0, float(values[-1]) if values.size else 1.0)
    if values.size and values[0] < floor:
        raise NonPSD(f"{name} has eigenvalue {values[0]:.3e} below PSD tolerance")
    return arr


def symmetrize(mat: np.ndarray) -> np.ndarray:
    """Average a nearly-symmetric matrix with its transpose."""
    return 0.5 * (mat + mat.T)
