"""Small shared linear-algebra helpers."""

from __future__ import annotations

import numpy as np

from .errors import IllConditionedScaleError

SYMMETRY_RTOL = 1e-12


def check_symmetric(mat: np.ndarray, name: str = "matrix") -> None:
    """Require symmetry to within 1e-12 relative to the largest entry."""
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise IllConditionedScaleError(f"{name} must be square, got shape {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if float(np.max(np.abs(mat - mat.T))) > SYMMETRY_RTOL * scale:
        raise IllConditionedScaleError(f"{name} is not symmetric to within {SYMMETRY_RTOL} relative")


def chol_spd(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor, retrying with additive jitter when needed.

    Jitter policy: add lam*I with lam = 1e-9 * trace/p, escalating tenfold,
    at most three retries before raising IllConditionedScaleError.
    """
    mat = np.asarray(mat, dtype=np.float64)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    p = mat.shape[0]
    lam = 1e-9 * max(float(np.trace(mat)) / p, 1e-30)
    for _ in range(3):
        try:
            return np.linalg.cholesky(mat + lam * np.eye(p))
        except np.linalg.LinAlgError:
            lam *= 10.0
    raise IllConditionedScaleError(f"{name} is not positive-definite, even after jitter")
