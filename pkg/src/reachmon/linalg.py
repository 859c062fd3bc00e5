"""Small dense linear-algebra helpers used throughout the package.

Everything here operates on plain numpy arrays.  Positive-definiteness
is always decided by a symmetric eigenvalue test with a relative
tolerance, so that badly scaled but genuinely definite matrices are
accepted and near-singular ones are rejected consistently.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError

# Relative eigenvalue tolerance for definiteness tests.
PD_REL_TOL = 1e-10

# Eigenvalues of a PSD matrix below this are clipped to zero when
# forming square roots of possibly singular covariances.
PSD_CLIP = 1e-14


def as_vector(x, dim: int | None = None, name: str = "vector") -> np.ndarray:
    """Coerce to a 1-D float array, optionally checking its length."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise DimensionError(f"{name} must have length {dim}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise DimensionError(f"{name} contains non-finite entries")
    return v


def as_matrix(x, shape: tuple[int, int] | None = None, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float array, optionally checking its shape."""
    a = np.asarray(x, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {a.shape}")
    if shape is not None and a.shape != shape:
        raise DimensionError(f"{name} must have shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError(f"{name} contains non-finite entries")
    return a


def check_symmetric(a: np.ndarray, name: str = "matrix", tol: float = 1e-10) -> np.ndarray:
    """Require near-symmetry and return the symmetrised matrix."""
    a = as_matrix(a, name=name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise DimensionError(f"{name} is not symmetric within tolerance {tol}")
    return 0.5 * (a + a.T)


def is_positive_definite(a: np.ndarray, rel_tol: float = PD_REL_TOL) -> bool:
    """Symmetric eigenvalue test: smallest eigenvalue must exceed
    ``rel_tol`` times the largest (in magnitude)."""
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    top = max(float(w[-1]), 0.0)
    if top == 0.0:
        return False
    return float(w[0]) > rel_tol * top


def is_positive_semidefinite(a: np.ndarray, rel_tol: float = PD_REL_TOL) -> bool:
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    top = max(float(np.max(np.abs(w))), 1.0)
    return float(w[0]) >= -rel_tol * top


def sym_sqrt_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues below ``PSD_CLIP`` (relative to the largest) are clipped
    to zero so that singular covariances still factor cleanly.
    """
    a = 0.5 * (np.asarray(a, dtype=float) + np.asarray(a, dtype=float).T)
    w, v = np.linalg.eigh(a)
    top = max(float(w[-1]), 0.0)
    w = np.clip(w, 0.0, None)
    if top > 0.0:
        w[w < PSD_CLIP * top] = 0.0
    return (v * np.sqrt(w)) @ v.T


def noise_factor(cov: np.ndarray) -> np.ndarray:
    """Square-root factor F with F @ F.T == cov, for sampling w = F @ z.

    Uses Cholesky when the covariance is definite and the clipped
    symmetric square root otherwise.
    """
    cov = 0.5 * (cov + cov.T)
    if is_positive_definite(cov):
        return np.linalg.cholesky(cov)
    return sym_sqrt_psd(cov)


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def try_cholesky(a: np.ndarray) -> np.ndarray | None:
    """Cholesky factor of a symmetric matrix, or None if not PD."""
    try:
        return np.linalg.cholesky(0.5 * (a + a.T))
    except np.linalg.LinAlgError:
        return None
