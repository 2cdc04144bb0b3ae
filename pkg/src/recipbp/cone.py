"""Hilbert projective metric and the PSD partial order.

Two cones are supported: the positive orthant (vectors with strictly
positive entries) and the cone of positive definite matrices.
"""

import numpy as np
import scipy.linalg

# Relative threshold below which a matrix is treated as singular.
PD_RTOL = 1e-12
SYM_RTOL = 1e-12


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


def _as_square(X, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DomainError(f"{name} must be a square matrix, got shape {X.shape}")
    return X


def is_symmetric(X, rtol=SYM_RTOL):
    X = np.asarray(X, dtype=np.float64)
    scale = 1.0 + (np.max(np.abs(X)) if X.size else 0.0)
    return bool(np.max(np.abs(X - X.T), initial=0.0) <= rtol * scale)


def symmetrize(X):
    X = np.asarray(X, dtype=np.float64)
    return 0.5 * (X + X.T)


def min_eigenvalue(X):
    """Smallest eigenvalue of a symmetric matrix."""
    X = _as_square(X)
    return float(scipy.linalg.eigvalsh(symmetrize(X))[0])


def is_pos_def(X, rtol=PD_RTOL):
    """True if the smallest eigenvalue exceeds ``rtol * ||X||_2``."""
    X = symmetrize(_as_square(X))
    w = scipy.linalg.eigvalsh(X)
    scale = max(abs(w[0]), abs(w[-1]))
    return bool(w[0] > rtol * scale) if scale > 0 else False


def check_pos_def(X, name="X"):
    X = _as_square(X, name)
    if not is_symmetric(X):
        raise DomainError(f"{name} is not symmetric")
    if not is_pos_def(X):
        raise DomainError(f"{name} is not positive definite")
    return symmetrize(X)


def hilbert_dist_orthant(x, y):
    """Hilbert distance between two vectors in the open positive orthant.

    ``log(max_i(x_i/y_i) / min_i(x_i/y_i))``
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape or x.size == 0:
        raise DomainError(f"length mismatch or bad shape: {x.shape} vs {y.shape}")
    if not (np.all(x > 0) and np.all(y > 0)):
        raise DomainError("entries must be strictly positive")
    # log-ratios avoid overflow for widely scaled vectors
    r = np.log(x) - np.log(y)
    return float(np.max(r) - np.min(r))


def generalized_eigenvalues(X, Y):
    """Eigenvalues of ``X Y^{-1}`` via the symmetric-definite pencil (X, Y)."""
    X = check_pos_def(X, "X")
    Y = check_pos_def(Y, "Y")
    if X.shape != Y.shape:
        raise DomainError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    return scipy.linalg.eigh(X, Y, eigvals_only=True)


def hilbert_dist_psd(X, Y):
    """Hilbert distance between two positive definite matrices.

    Computed as ``log(lambda_max / lambda_min)`` of the pencil ``X v = lambda Y v``,
    which avoids forming the nonsymmetric product ``X Y^{-1}``.
    """
    w = generalized_eigenvalues(X, Y)
    if np.array_equal(X, Y):
        return 0.0  # exact, rather than a rounding-level spread of w
    return float(max(np.log(w[-1]) - np.log(w[0]), 0.0))


def psd_leq(X, Y, tol=0.0):
    """PSD order ``X <= Y``, i.e. ``lambda_min(Y - X) >= -tol``."""
    X = _as_square(X, "X")
    Y = _as_square(Y, "Y")
    if X.shape != Y.shape:
        raise DomainError(f"dimension mismatch: {X.shape} vs {Y.shape}")
    return min_eigenvalue(Y - X) >= -tol
