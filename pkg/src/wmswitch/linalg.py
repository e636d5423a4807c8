"""Small dense real-matrix primitives: norms, eigenvalues, stability, Lyapunov.

Matrices are plain float64 numpy arrays in row-major order. Construction-time
validation (shape, finiteness) goes through :func:`as_matrix`; the operations
below assume validated input and are pure functions of it.
"""

from __future__ import annotations

import numpy as np

SCHUR_MARGIN = 1e-9
SYMMETRY_TOL = 1e-10
LYAPUNOV_RESIDUAL_TOL = 1e-9


class LinalgError(ValueError):
    """Base class for matrix-contract violations."""


class NonSquareError(LinalgError):
    pass


class AsymmetryError(LinalgError):
    """Symmetric-only operation got a matrix asymmetric beyond tolerance."""


class NotSchurStableError(LinalgError):
    pass


class DimensionMismatchError(LinalgError):
    pass


def as_matrix(values, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Validate and return a 2-D float64 array (finite entries, C order)."""
    m = np.array(values, dtype=float, order="C")
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionMismatchError(f"expected 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionMismatchError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionMismatchError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise LinalgError("matrix entries must be finite")
    return m


def as_vector(values, size: int | None = None) -> np.ndarray:
    v = np.array(values, dtype=float).reshape(-1)
    if size is not None and v.shape[0] != size:
        raise DimensionMismatchError(f"expected vector of size {size}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise LinalgError("vector entries must be finite")
    return v


def _require_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSquareError(f"expected square matrix, got shape {m.shape}")


def spectral_norm(m: np.ndarray) -> float:
    """Largest singular value (the operator 2-norm)."""
    m = np.asarray(m, dtype=float)
    if m.size == 0:
        return 0.0
    return float(np.linalg.svd(m, compute_uv=False)[0])


def max_eigenvalue_symmetric(m: np.ndarray) -> float:
    """lambda_max of a symmetric matrix; symmetrized as (M + M^T)/2 first."""
    m = np.asarray(m, dtype=float)
    _require_square(m)
    asym = np.max(np.abs(m - m.T)) if m.size else 0.0
    scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
    if asym > SYMMETRY_TOL * scale:
        raise AsymmetryError(f"asymmetry {asym:.3e} exceeds tolerance {SYMMETRY_TOL:.0e}")
    sym = 0.5 * (m + m.T)
    return float(np.linalg.eigvalsh(sym)[-1])


def spectral_radius(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    _require_square(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def is_schur_stable(m: np.ndarray) -> bool:
    """True iff every eigenvalue lies strictly inside the unit circle.

    A margin of ``SCHUR_MARGIN`` keeps boundary cases (radius == 1) from
    flapping between stable/unstable under round-off.
    """
    return spectral_radius(m) < 1.0 - SCHUR_MARGIN


def solve_discrete_lyapunov(a: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Solve A P A^T - P = -Q for symmetric PSD P.

    Uses the Kronecker vectorization solve (A (x) A - I) vec(P) = -vec(Q);
    fine for the small dimensions this package works at. Residual is checked
    against LYAPUNOV_RESIDUAL_TOL * max(1, ||Q||).
    """
    a = np.asarray(a, dtype=float)
    q = np.asarray(q, dtype=float)
    _require_square(a)
    _require_square(q)
    if a.shape != q.shape:
        raise DimensionMismatchError(f"A is {a.shape} but Q is {q.shape}")
    if not is_schur_stable(a):
        raise NotSchurStableError("A must be Schur stable for a discrete Lyapunov solve")
    n = a.shape[0]
    # Row-major vec: vec(A P A^T) = (A (x) A) vec(P).
    lhs = np.kron(a, a) - np.eye(n * n)
    p = np.linalg.solve(lhs, -q.reshape(n * n)).reshape(n, n)
    p = 0.5 * (p + p.T)
    residual = spectral_norm(a @ p @ a.T - p + q)
    if residual > LYAPUNOV_RESIDUAL_TOL * max(1.0, spectral_norm(q)):
        raise LinalgError(f"Lyapunov residual {residual:.3e} out of tolerance")
    return p


def matrix_power(m: np.ndarray, k: int) -> np.ndarray:
    """M^k for integer k >= 0; M^0 is the identity."""
    m = np.asarray(m, dtype=float)
    _require_square(m)
    if k < 0:
        raise ValueError("power must be nonnegative")
    return np.linalg.matrix_power(m, k)


def symmetric_dilation(b: np.ndarray) -> np.ndarray:
    """Block matrix [[0, B], [B^T, 0]]; its lambda_max equals ||B||."""
    b = np.atleast_2d(np.asarray(b, dtype=float))
    r, c = b.shape
    out = np.zeros((r + c, r + c))
    out[:r, r:] = b
    out[r:, :r] = b.T
    return out
