"""Multivariate skew-t kernels: parameters, derived quantities, densities,
and the hierarchical sampler.

A kernel is (mu, sigma, delta, nu). The density couples a p-dimensional
t-PDF over the widened scale omega = sigma + delta @ delta.T with a t-CDF
factor over the residual scale lambda = I - delta.T @ inv(omega) @ delta.
The delta @ delta.T convention follows the latent hierarchy
y = mu + delta*|z0|/sqrt(w) + chol(sigma)*z1/sqrt(w), whose covariance
contribution is delta @ delta.T; the sampler cross-checks in the test suite
pin this convention.

All functions are pure; the sampler's generator state is caller-owned via an
explicit seed. Densities are evaluated in log space and exponentiated only at
the API boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from . import mvtcdf
from .errors import DomainError, IllConditionedScaleError, InvalidSkewnessError
from .linalg import check_symmetric, chol_spd
from .special import ln_gamma

NU_MAX_DEFAULT = 1e4
_LOG_CDF_FLOOR = math.log(1e-300)


@dataclass
class KernelParams:
    """One skew-t component: location mu, scale sigma, skewness delta, dof nu."""

    mu: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    nu: float

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(-1)
        p = self.mu.size
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(p, p)
        self.delta = np.asarray(self.delta, dtype=np.float64).reshape(p, p)
        self.nu = float(self.nu)
        if p < 1:
            raise DomainError("kernel dimension must be at least 1")
        if not np.all(np.isfinite(self.mu)):
            raise DomainError("mu must be finite")
        if not (np.all(np.isfinite(self.sigma)) and np.all(np.isfinite(self.delta))):
            raise DomainError("sigma and delta must be finite")
        if not (math.isfinite(self.nu) and self.nu > 2.0):
            raise DomainError(f"nu must be finite and > 2, got {self.nu!r}")
        check_symmetric(self.sigma, "sigma")
        chol_spd(self.sigma, "sigma")

    @property
    def p(self) -> int:
        return self.mu.size


@dataclass
class DerivedKernelQuantities:
    """Per-observation quantities entering the skew-t density."""

    omega_mat: np.ndarray
    d: float
    c: np.ndarray
    lambda_mat: np.ndarray
    y_star: np.ndarray
    nu_prime: float


class BatchDerived:
    """Shared per-kernel factors plus per-row c, d arrays (internal)."""

    __slots__ = ("omega_mat", "chol_omega", "lambda_mat", "c", "d", "log_det_omega")

    def __init__(self, omega_mat, chol_omega, lambda_mat, c, d, log_det_omega):
        self.omega_mat = omega_mat
        self.chol_omega = chol_omega
        self.lambda_mat = lambda_mat
        self.c = c
        self.d = d
        self.log_det_omega = log_det_omega


def derive_batch(kernel: KernelParams, rows: np.ndarray) -> BatchDerived:
    """Compute c(y), d(y) for every row with a single Cholesky of omega."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    p = kernel.p
    omega = kernel.sigma + kernel.delta @ kernel.delta.T
    omega = 0.5 * (omega + omega.T)
    chol_omega = chol_spd(omega, "omega")
    diff = (rows - kernel.mu[None, :]).T
    w = solve_triangular(chol_omega, diff, lower=True)
    d = np.einsum("pn,pn->n", w, w)
    a = solve_triangular(chol_omega, kernel.delta, lower=True)
    c = (a.T @ w).T
    lam = np.eye(p) - a.T @ a
    lam = 0.5 * (lam + lam.T)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol_omega))))
    return BatchDerived(omega, chol_omega, lam, c, d, log_det)


def derive_quantities(kernel: KernelParams, y: np.ndarray) -> DerivedKernelQuantities:
    """All density ingredients for a single observation."""
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.size != kernel.p:
        raise DomainError(f"y has dimension {y.size}, kernel expects {kernel.p}")
    batch = derive_batch(kernel, y[None, :])
    d = float(batch.d[0])
    c = batch.c[0]
    y_star = c * math.sqrt((kernel.nu + kernel.p) / (kernel.nu + d))
    return DerivedKernelQuantities(
        omega_mat=batch.omega_mat,
        d=d,
        c=c,
        lambda_mat=batch.lambda_mat,
        y_star=y_star,
        nu_prime=kernel.nu + kernel.p,
    )


def _log_t_pdf_core(d, log_det, p: int, nu: float):
    """log t-density given Mahalanobis distances and log|omega|."""
    norm = (
        ln_gamma(0.5 * (nu + p))
        - ln_gamma(0.5 * nu)
        - 0.5 * p * math.log(nu * math.pi)
        - 0.5 * log_det
    )
    return norm - 0.5 * (nu + p) * np.log1p(d / nu)


def log_t_pdf(y, mu, omega_mat, nu: float) -> float:
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    mu = np.asarray(mu, dtype=np.float64).reshape(-1)
    omega_mat = np.asarray(omega_mat, dtype=np.float64)
    p = y.size
    omega_mat = omega_mat.reshape(p, p)
    if mu.size != p:
        raise DomainError("y and mu have inconsistent dimensions")
    if not (math.isfinite(nu) and nu > 0.0):
        raise DomainError(f"nu must be positive, got {nu!r}")
    check_symmetric(omega_mat, "omega_mat")
    chol = chol_spd(omega_mat, "omega_mat")
    w = solve_triangular(chol, y - mu, lower=True)
    d = float(w @ w)
    log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(_log_t_pdf_core(np.asarray(d), log_det, p, nu))


def t_pdf(y, mu, omega_mat, nu: float) -> float:
    """Density of the p-dimensional t-distribution, strictly positive."""
    return math.exp(log_t_pdf(y, mu, omega_mat, nu))


def log_mst_pdf(y, kernel: KernelParams, seed: int = 0) -> float:
    """Log of the multivariate skew-t density at one point."""
    dq = derive_quantities(kernel, y)
    p = kernel.p
    log_t = float(
        _log_t_pdf_core(np.asarray(dq.d), 2.0 * np.sum(np.log(np.diag(chol_spd(dq.omega_mat)))), p, kernel.nu)
    )
    try:
        cdf = mvtcdf.mvt_cdf(dq.y_star, np.zeros(p), dq.lambda_mat, dq.nu_prime, seed=seed)
    except IllConditionedScaleError as exc:
        raise InvalidSkewnessError(
            "lambda matrix is not positive-definite; repair delta before evaluating"
        ) from exc
    return p * math.log(2.0) + log_t + max(math.log(cdf) if cdf > 0.0 else -math.inf, _LOG_CDF_FLOOR)


def mst_pdf(y, kernel: KernelParams, seed: int = 0) -> float:
    """Multivariate skew-t density 2^p * t_pdf * t_cdf, strictly positive."""
    return math.exp(log_mst_pdf(y, kernel, seed=seed))


def log_mst_pdf_rows(
    rows: np.ndarray,
    kernel: KernelParams,
    cell_seeds: np.ndarray,
    call_seed: int,
    tol: float = 1e-6,
    batch: BatchDerived | None = None,
):
    """Vectorized log skew-t density for many rows (shared CDF lattice).

    Returns (log_pdf, batch, t_cdf_values); the caller may pass a
    precomputed BatchDerived to skip repeating the Cholesky work, and can
    reuse the returned CDF values (the e2 denominator of the trainer).
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    p = kernel.p
    if batch is None:
        batch = derive_batch(kernel, rows)
    scale = np.sqrt((kernel.nu + p) / (kernel.nu + batch.d))
    y_star = batch.c * scale[:, None]
    try:
        cdf, _ = mvtcdf.orthant_cdf_batch(
            y_star, batch.lambda_mat, kernel.nu + p, cell_seeds, call_seed, tol=tol
        )
    except IllConditionedScaleError as exc:
        raise InvalidSkewnessError(
            "lambda matrix is not positive-definite; repair delta before evaluating"
        ) from exc
    log_t = _log_t_pdf_core(batch.d, batch.log_det_omega, p, kernel.nu)
    log_cdf = np.log(np.clip(cdf, 1e-300, None))
    return p * math.log(2.0) + log_t + log_cdf, batch, cdf


def mst_mean(kernel: KernelParams) -> np.ndarray:
    """Closed-form mean: mu + sqrt(nu/pi) * Gamma((nu-1)/2)/Gamma(nu/2) * delta @ 1."""
    nu = kernel.nu
    b = math.sqrt(nu / math.pi) * math.exp(ln_gamma(0.5 * (nu - 1.0)) - ln_gamma(0.5 * nu))
    return kernel.mu + b * (kernel.delta @ np.ones(kernel.p))


def sample_mst(kernel: KernelParams, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws via the gamma / half-normal / normal hierarchy.

    w ~ Gamma(nu/2, rate nu/2); u|w ~ |N(0, I/w)|; y|u,w ~ N(mu + delta u, sigma/w).
    Deterministic given seed.
    """
    if n < 1:
        raise DomainError(f"n must be at least 1, got {n}")
    rng = np.random.default_rng(seed)
    p = kernel.p
    w = rng.gamma(shape=0.5 * kernel.nu, scale=2.0 / kernel.nu, size=n)
    u = np.abs(rng.standard_normal((n, p))) / np.sqrt(w)[:, None]
    chol_sigma = chol_spd(kernel.sigma, "sigma")
    eps = rng.standard_normal((n, p)) @ chol_sigma.T / np.sqrt(w)[:, None]
    return kernel.mu[None, :] + u @ kernel.delta.T + eps
