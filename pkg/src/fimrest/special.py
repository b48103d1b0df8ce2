"""Scalar special functions used by the t-family densities and the trainer.

``ln_gamma`` is a Lanczos approximation (g=7, 9 terms) with the reflection
formula below 0.5; ``digamma`` lifts the argument with the recurrence
``psi(x) = psi(x+1) - 1/x`` and then applies the Bernoulli asymptotic series.
Both are plain float functions, pure and thread-safe.
"""

from __future__ import annotations

import math

from .errors import DomainError

_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)

_HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

# psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n}); coefficients of x^{-2n}
_DIGAMMA_ASYMPTOTIC = (
    -1.0 / 12.0,
    1.0 / 120.0,
    -1.0 / 252.0,
    1.0 / 240.0,
    -1.0 / 132.0,
    691.0 / 32760.0,
    -1.0 / 12.0,
)
_DIGAMMA_MIN_X = 10.0


def _ln_gamma_positive(x: float) -> float:
    """Lanczos series for x >= 0.5."""
    acc = _LANCZOS_COEFFS[0]
    for i in range(1, 9):
        acc += _LANCZOS_COEFFS[i] / (x - 1.0 + i)
    t = x + _LANCZOS_G - 0.5
    return _HALF_LOG_TWO_PI + (x - 0.5) * math.log(t) - t + math.log(acc)


def ln_gamma(x: float) -> float:
    """Natural log of the gamma function for x > 0.

    Raises DomainError for non-positive or non-finite arguments.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"ln_gamma requires finite x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the series argument away from the poles
        return math.log(math.pi / math.sin(math.pi * x)) - _ln_gamma_positive(1.0 - x)
    return _ln_gamma_positive(x)


def digamma(x: float) -> float:
    """Digamma psi(x) for x > 0.

    Raises DomainError for non-positive or non-finite arguments.
    """
    x = float(x)
    if not math.isfinite(x) or x <= 0.0:
        raise DomainError(f"digamma requires finite x > 0, got {x!r}")
    acc = 0.0
    while x < _DIGAMMA_MIN_X:
        acc -= 1.0 / x
        x += 1.0
    inv2 = 1.0 / (x * x)
    series = 0.0
    power = inv2
    for coeff in _DIGAMMA_ASYMPTOTIC:
        series += coeff * power
        power *= inv2
    return acc + math.log(x) - 0.5 / x + series
