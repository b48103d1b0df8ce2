"""Lower-orthant multivariate t probabilities.

The univariate case is closed form through the regularized incomplete beta
function. Higher dimensions use the separation-of-variables transformation
to the unit cube driven by a randomized rank-1 lattice rule: the first cube
coordinate carries the chi mixing variable (quantiles precomputed outside the
hot loop), the remaining coordinates the sequential conditioning recursion.
Eight random shifts give an error estimate; the point count doubles until the
estimate meets tolerance or the per-integral budget of 2**20 points is spent.

The inner recursion is the hot kernel of the whole package. It is compiled
with numba when the active backend allows it and has a vectorized numpy twin
(see :mod:`fimrest.backend`). Everything here is pure given (inputs, seed):
repeated calls with identical arguments return bit-identical results.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betainc, gammaincinv

from . import backend
from .errors import CdfUnderflowError, DomainError, IllConditionedScaleError
from .linalg import check_symmetric, chol_spd

N_SHIFTS = 8
N_START = 128
N_START_BATCH = 64
MAX_POINTS = 2**20
_TINY_U = 1e-320
_U_EPS = 2.0**-53
_INV_SQRT_2 = 1.0 / math.sqrt(2.0)
_INV_2_64 = 2.0**-64

_PRIMES = (
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149,
    151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
    233, 239, 241, 251, 257, 263, 269, 271, 277, 281,
)

_MASK64 = 0xFFFFFFFFFFFFFFFF


# ---------------------------------------------------------------------------
# counter-based sub-seeds (splitmix64)

def splitmix64(value: int) -> int:
    """One splitmix64 round on a python int, wrapped to 64 bits."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master: int, *tags: int) -> int:
    """Fold integer tags into a 64-bit sub-seed, order sensitive."""
    h = splitmix64(master & _MASK64)
    for tag in tags:
        h = splitmix64(h ^ splitmix64((tag + 0x632BE59BD9B4E019) & _MASK64))
    return h


def _splitmix64_array(values: np.ndarray) -> np.ndarray:
    z = values + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _shift_uniforms(seeds: np.ndarray, n_shift: int, dims: int, salt: int) -> np.ndarray:
    """Per-cell random shifts in [0,1): shape (len(seeds), n_shift, dims)."""
    seeds = np.asarray(seeds, dtype=np.uint64)
    counters = np.arange(n_shift * max(dims, 1), dtype=np.uint64) + np.uint64(
        derive_seed(salt, 0x51) & _MASK64
    )
    hashed = _splitmix64_array(seeds[:, None] ^ _splitmix64_array(counters)[None, :])
    out = (hashed >> np.uint64(11)).astype(np.float64) * (2.0**-53)
    return out.reshape(len(seeds), n_shift, max(dims, 1))[:, :, :dims]


# ---------------------------------------------------------------------------
# rank-1 lattice

def _generating_vector(n: int, dims: int) -> np.ndarray:
    """Odd generating components from fractional parts of sqrt(primes)."""
    if dims > len(_PRIMES):
        raise DomainError(f"lattice supports at most {len(_PRIMES)} dimensions")
    z = np.empty(dims, dtype=np.int64)
    for j in range(dims):
        frac = math.sqrt(_PRIMES[j]) % 1.0
        zj = int(frac * n) | 1
        z[j] = min(zj, n - 1) if n > 2 else 1
    return z


def _lattice_base(n: int, dims: int) -> np.ndarray:
    """Base lattice coordinates frac(k*z/n) for the non-radial dimensions."""
    if dims == 0:
        return np.zeros((n, 0))
    z = _generating_vector(n, dims)
    k = np.arange(n, dtype=np.int64)
    return ((k[:, None] * z[None, :]) % n) / float(n)


def _radial_scales(nu: float, n: int, call_seed: int, salt: int) -> np.ndarray:
    """Chi mixing scales s = chi_nu/sqrt(nu) on the shifted radial coordinate.

    Shape (N_SHIFTS, n); shared by every cell of a batched call.
    """
    shifts = _shift_uniforms(
        np.array([derive_seed(call_seed, 0x7AD1A1)], dtype=np.uint64), N_SHIFTS, 1, salt
    )[0, :, 0]
    u = (np.arange(n) / float(n))[None, :] + shifts[:, None]
    u -= np.floor(u)
    u = np.abs(2.0 * u - 1.0)
    np.clip(u, _U_EPS, 1.0 - _U_EPS, out=u)
    return np.sqrt(2.0 * gammaincinv(0.5 * nu, u) / nu)


# ---------------------------------------------------------------------------
# normal CDF / inverse CDF

def _phi_np(x: np.ndarray) -> np.ndarray:
    from scipy.special import erfc

    return 0.5 * erfc(-x * _INV_SQRT_2)


# Wichura's PPND16 rational approximations (double precision).
_PPND_A = (
    3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3,
)
_PPND_B = (
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3,
)
_PPND_C = (
    1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
    3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4,
)
_PPND_D = (
    1.0, 2.05319162663775882187, 1.67638483018380384940,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_PPND_E = (
    6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
    2.96560571828504891230e-1, 2.65321895265761230930e-2,
    1.24266094738807843860e-3, 2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_PPND_F = (
    1.0, 5.9983220655588793769e-1, 1.3692988092273580531e-1,
    1.4875361290850615023e-2, 7.8686913114561329960e-4,
    1.8463183175100546818e-5, 1.4215117583164458887e-7,
    2.04426310338993978564e-15,
)


def _poly(coeffs, r):
    acc = coeffs[7]
    for i in range(6, -1, -1):
        acc = acc * r + coeffs[i]
    return acc


def _phinv_scalar(u: float) -> float:
    q = u - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_PPND_A, r) / _poly(_PPND_B, r)
    r = u if q < 0.0 else 1.0 - u
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r -= 1.6
        val = _poly(_PPND_C, r) / _poly(_PPND_D, r)
    else:
        r -= 5.0
        val = _poly(_PPND_E, r) / _poly(_PPND_F, r)
    return -val if q < 0.0 else val


def _phinv_np(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=np.float64)
    q = u - 0.5
    out = np.empty_like(u)

    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] * q[central]
    out[central] = q[central] * _poly(_PPND_A, r) / _poly(_PPND_B, r)

    tail = ~central
    if np.any(tail):
        qt = q[tail]
        rt = np.where(qt < 0.0, u[tail], 1.0 - u[tail])
        rt = np.sqrt(-np.log(rt))
        near = rt <= 5.0
        val = np.empty_like(rt)
        rn = rt[near] - 1.6
        val[near] = _poly(_PPND_C, rn) / _poly(_PPND_D, rn)
        rf = rt[~near] - 5.0
        val[~near] = _poly(_PPND_E, rf) / _poly(_PPND_F, rf)
        out[tail] = np.where(qt < 0.0, -val, val)
    return out


# ---------------------------------------------------------------------------
# separation-of-variables recursion (hot kernel, two backends)

def _sov_recursion_py(L, b, svals, base, shifts, out):
    """Reference scalar implementation; numba compiles this body."""
    m, p = b.shape
    n_shift, n = svals.shape
    y = np.empty(p - 1)
    for cell in range(m):
        for r in range(n_shift):
            acc = 0.0
            for k in range(n):
                s = svals[r, k]
                e = 0.5 * math.erfc(-(s * b[cell, 0] / L[0, 0]) * _INV_SQRT_2)
                prob = e
                for i in range(1, p):
                    if prob <= 0.0:
                        break
                    u = base[k, i - 1] + shifts[cell, r, i - 1]
                    u -= math.floor(u)
                    u = abs(2.0 * u - 1.0)
                    ue = u * e
                    if ue < _TINY_U:
                        ue = _TINY_U
                    y[i - 1] = _phinv_scalar(ue)
                    t = s * b[cell, i]
                    for j in range(i):
                        t -= L[i, j] * y[j]
                    e = 0.5 * math.erfc(-(t / L[i, i]) * _INV_SQRT_2)
                    prob *= e
                acc += prob
            out[cell, r] = acc / n
    return out


_sov_recursion_numba = None


def _get_numba_recursion():
    global _sov_recursion_numba
    if _sov_recursion_numba is None:
        from numba import njit

        poly = njit(cache=True)(_poly)

        # jitted twin of _phinv_scalar; keep the two bodies in sync
        @njit(cache=True)
        def phinv(u):
            q = u - 0.5
            if abs(q) <= 0.425:
                r = 0.180625 - q * q
                return q * poly(_PPND_A, r) / poly(_PPND_B, r)
            r = u if q < 0.0 else 1.0 - u
            r = math.sqrt(-math.log(r))
            if r <= 5.0:
                r -= 1.6
                val = poly(_PPND_C, r) / poly(_PPND_D, r)
            else:
                r -= 5.0
                val = poly(_PPND_E, r) / poly(_PPND_F, r)
            return -val if q < 0.0 else val

        from numba import prange

        # parallel over cells only: each (cell, shift) accumulation stays a
        # serial fixed-order sum, so results do not depend on thread count
        @njit(cache=True, parallel=True)
        def kernel(L, b, svals, base, shifts, out):
            m, p = b.shape
            n_shift, n = svals.shape
            for cell in prange(m):
                y = np.empty(p - 1)
                for r in range(n_shift):
                    acc = 0.0
                    for k in range(n):
                        s = svals[r, k]
                        e = 0.5 * math.erfc(-(s * b[cell, 0] / L[0, 0]) * _INV_SQRT_2)
                        prob = e
                        for i in range(1, p):
                            if prob <= 0.0:
                                break
                            u = base[k, i - 1] + shifts[cell, r, i - 1]
                            u -= math.floor(u)
                            u = abs(2.0 * u - 1.0)
                            ue = u * e
                            if ue < _TINY_U:
                                ue = _TINY_U
                            y[i - 1] = phinv(ue)
                            t = s * b[cell, i]
                            for j in range(i):
                                t -= L[i, j] * y[j]
                            e = 0.5 * math.erfc(-(t / L[i, i]) * _INV_SQRT_2)
                            prob *= e
                        acc += prob
                    out[cell, r] = acc / n
            return out

        _sov_recursion_numba = kernel
    return _sov_recursion_numba


def _sov_recursion_numpy(L, b, svals, base, shifts, out):
    """Vectorized twin of the scalar recursion (cells x points at once)."""
    m, p = b.shape
    n_shift, n = svals.shape
    # chunk cells to bound the (cells, points, dims) scratch memory
    max_cells = max(1, int(2**22 / (n * max(p - 1, 1))))
    for lo in range(0, m, max_cells):
        hi = min(m, lo + max_cells)
        bc = b[lo:hi]
        for r in range(n_shift):
            s = svals[r][None, :]
            e = _phi_np(bc[:, 0][:, None] * s / L[0, 0])
            prob = e.copy()
            ys = np.empty((hi - lo, n, p - 1))
            for i in range(1, p):
                u = base[:, i - 1][None, :] + shifts[lo:hi, r, i - 1][:, None]
                u -= np.floor(u)
                u = np.abs(2.0 * u - 1.0)
                ue = np.clip(u * e, _TINY_U, None)
                ys[:, :, i - 1] = _phinv_np(ue)
                t = bc[:, i][:, None] * s
                t -= np.einsum("j,cnj->cn", L[i, :i], ys[:, :, :i])
                e = _phi_np(t / L[i, i])
                prob *= e
            out[lo:hi, r] = prob.mean(axis=1)
    return out


def _run_recursion(L, b, svals, base, shifts):
    out = np.empty((b.shape[0], svals.shape[0]))
    if backend.use_numba():
        _get_numba_recursion()(L, b, svals, base, shifts, out)
    else:
        _sov_recursion_numpy(L, b, svals, base, shifts, out)
    return out


# ---------------------------------------------------------------------------
# univariate closed form

def t_cdf_1d(x, nu: float):
    """Standard univariate t CDF via the regularized incomplete beta."""
    x = np.asarray(x, dtype=np.float64)
    tail = 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + x * x))
    out = np.where(x <= 0.0, tail, 1.0 - tail)
    if out.ndim == 0:
        return float(out)
    return out


# ---------------------------------------------------------------------------
# batched orthant driver

def orthant_cdf_batch(
    b: np.ndarray,
    sigma: np.ndarray,
    nu: float,
    cell_seeds: np.ndarray,
    call_seed: int,
    tol: float = 1e-6,
    n_start: int = N_START_BATCH,
    max_points: int = MAX_POINTS,
):
    """P(X <= b_row) for X ~ t_nu(0, sigma), one probability per row of b.

    Returns (values, error_estimates). All rows share sigma, the lattice and
    the radial stream; each row carries its own shift randomization derived
    from cell_seeds. Rows are refined (point count doubled) until the spread
    of the shifted lattice estimates meets tol or the point budget is spent.
    """
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    m, p = b.shape
    if p == 0:
        return np.ones(m), np.zeros(m)
    if p == 1:
        scale = math.sqrt(float(sigma.reshape(())) if sigma.size == 1 else float(sigma[0, 0]))
        vals = t_cdf_1d(b[:, 0] / scale, nu)
        return np.atleast_1d(vals), np.zeros(m)

    L = chol_spd(sigma, "sigma")
    cell_seeds = np.asarray(cell_seeds, dtype=np.uint64)
    vals = np.empty(m)
    errs = np.empty(m)
    active = np.arange(m)
    n = n_start
    while True:
        svals = _radial_scales(nu, n, call_seed, salt=n)
        base = _lattice_base(n, p - 1)
        shifts = _shift_uniforms(cell_seeds[active], N_SHIFTS, p - 1, salt=n)
        out = _run_recursion(L, b[active], svals, base, shifts)
        v = out.mean(axis=1)
        e = 3.0 * out.std(axis=1, ddof=1) / math.sqrt(N_SHIFTS)
        vals[active] = v
        errs[active] = e
        undone = e > tol
        active = active[undone]
        if active.size == 0 or N_SHIFTS * n * 2 > max_points:
            break
        n *= 2
    return np.clip(vals, 0.0, 1.0), errs


# ---------------------------------------------------------------------------
# variable reordering (single-integral path)

def _genz_order(b: np.ndarray, sigma: np.ndarray):
    """Greedy reorder by smallest conditional probability; returns (L, b).

    Produces the Cholesky factor of the permuted sigma as a byproduct, so the
    caller factors nothing twice. Purely a variance-reduction device: the
    integral value does not depend on the order.
    """
    p = b.size
    c = sigma.copy()
    bb = b.copy()
    L = np.zeros((p, p))
    y = np.zeros(p)
    for i in range(p):
        best, best_val = i, np.inf
        for k in range(i, p):
            denom = math.sqrt(max(c[k, k] - float(L[k, :i] @ L[k, :i]), 1e-300))
            val = 0.5 * math.erfc(-((bb[k] - float(L[k, :i] @ y[:i])) / denom) * _INV_SQRT_2)
            if val < best_val:
                best, best_val = k, val
        if best != i:
            c[[i, best], :] = c[[best, i], :]
            c[:, [i, best]] = c[:, [best, i]]
            L[[i, best], :] = L[[best, i], :]
            bb[[i, best]] = bb[[best, i]]
        diag = c[i, i] - float(L[i, :i] @ L[i, :i])
        if diag <= 0.0:
            raise IllConditionedScaleError("sigma is not positive-definite")
        L[i, i] = math.sqrt(diag)
        for k in range(i + 1, p):
            L[k, i] = (c[k, i] - float(L[k, :i] @ L[i, :i])) / L[i, i]
        beta = (bb[i] - float(L[i, :i] @ y[:i])) / L[i, i]
        cdf = max(0.5 * math.erfc(-beta * _INV_SQRT_2), 1e-300)
        y[i] = -math.exp(-0.5 * beta * beta - 0.5 * math.log(2.0 * math.pi)) / cdf
    return L, bb


def _orthant_cdf_single(b, sigma, nu, seed, tol, max_points=MAX_POINTS):
    p = b.size
    L, bb = _genz_order(b, sigma)
    cell_seeds = np.array([derive_seed(seed, 0xCE11)], dtype=np.uint64)
    call_seed = derive_seed(seed, 0xCA11)
    vals = errs = None
    n = N_START
    while True:
        svals = _radial_scales(nu, n, call_seed, salt=n)
        base = _lattice_base(n, p - 1)
        shifts = _shift_uniforms(cell_seeds, N_SHIFTS, p - 1, salt=n)
        out = _run_recursion(L, bb[None, :], svals, base, shifts)
        vals = float(out.mean())
        errs = 3.0 * float(out.std(ddof=1)) / math.sqrt(N_SHIFTS)
        if errs <= tol or N_SHIFTS * n * 2 > max_points:
            break
        n *= 2
    return min(max(vals, 0.0), 1.0), errs


def _default_tol(p: int) -> float:
    return 1e-6 if p <= 3 else 1e-5


def mvt_cdf(
    upper,
    mu,
    sigma,
    nu: float,
    seed: int = 0,
    tol: float | None = None,
    return_error: bool = False,
):
    """P(X <= upper componentwise) for X ~ t_nu(mu, sigma).

    Deterministic given (inputs, seed). The univariate case is exact
    (incomplete beta); for p >= 2 the absolute error target is ``tol``
    (default 1e-6 for p <= 3, else 1e-5), with the achieved estimate
    available via ``return_error=True``.
    """
    upper = np.atleast_1d(np.asarray(upper, dtype=np.float64))
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    p = upper.size
    if mu.size != p or sigma.shape != (p, p):
        raise DomainError("upper, mu and sigma have inconsistent dimensions")
    if not (np.isfinite(nu) and nu > 0.0):
        raise DomainError(f"nu must be positive and finite, got {nu!r}")
    check_symmetric(sigma, "sigma")
    b = upper - mu
    if p == 1:
        val = float(t_cdf_1d(b[0] / math.sqrt(sigma[0, 0]), nu))
        return (val, 0.0) if return_error else val
    chol_spd(sigma, "sigma")
    val, err = _orthant_cdf_single(b, sigma, nu, seed, tol or _default_tol(p))
    return (val, err) if return_error else val


def mvt_cdf_ratio(
    num_point,
    num_nu: float,
    den_point,
    den_nu: float,
    lambda_mat,
    seed: int = 0,
    tol: float | None = None,
) -> float:
    """T_{p,num_nu}(num_point|0,lambda) / T_{p,den_nu}(den_point|0,lambda).

    Numerator and denominator share one QMC point set (common random
    numbers), so identical arguments give a ratio of exactly 1. Raises
    CdfUnderflowError when the denominator is below 1e-300, which flags the
    observation as an extreme outlier for the kernel at hand.
    """
    num_point = np.atleast_1d(np.asarray(num_point, dtype=np.float64))
    den_point = np.atleast_1d(np.asarray(den_point, dtype=np.float64))
    lambda_mat = np.atleast_2d(np.asarray(lambda_mat, dtype=np.float64))
    p = num_point.size
    if den_point.size != p or lambda_mat.shape != (p, p):
        raise DomainError("points and lambda_mat have inconsistent dimensions")
    check_symmetric(lambda_mat, "lambda_mat")
    tol = tol or _default_tol(p)
    if p == 1:
        scale = math.sqrt(lambda_mat[0, 0])
        num = float(t_cdf_1d(num_point[0] / scale, num_nu))
        den = float(t_cdf_1d(den_point[0] / scale, den_nu))
    else:
        L = chol_spd(lambda_mat, "lambda_mat")
        cell_seeds = np.array([derive_seed(seed, 0xCE11)], dtype=np.uint64)
        call_seed = derive_seed(seed, 0xCA11)
        points = np.vstack([num_point, den_point])
        num = den = 0.0
        n = N_START
        while True:
            base = _lattice_base(n, p - 1)
            shifts = _shift_uniforms(cell_seeds, N_SHIFTS, p - 1, salt=n)
            out = np.empty((2, N_SHIFTS))
            for row, dof in ((0, num_nu), (1, den_nu)):
                svals = _radial_scales(dof, n, call_seed, salt=n)
                out[row] = _run_recursion(L, points[row][None, :], svals, base, shifts)[0]
            num = float(out[0].mean())
            den = float(out[1].mean())
            err = 3.0 * float(out.std(axis=1, ddof=1).max()) / math.sqrt(N_SHIFTS)
            if err <= tol * max(abs(den), 1e-12) or err <= tol or N_SHIFTS * n * 2 > MAX_POINTS:
                break
            n *= 2
    if den < 1e-300:
        raise CdfUnderflowError(
            f"denominator CDF underflowed ({den!r}); observation is an extreme "
            "outlier for this kernel"
        )
    return num / den
