"""Selection between numba-jitted hot kernels and their pure-numpy twins.

The environment variable ``FIMREST_BACKEND`` picks the implementation at
import time (``numba`` by default, ``numpy`` for the fallback path);
:func:`set_backend` switches at runtime, which the benchmark harness and the
test suite use to exercise both paths. Numeric results of the two backends
agree to roundoff but are not guaranteed bit-identical to each other;
determinism contracts hold within a backend.
"""

from __future__ import annotations

import os
import warnings

_VALID = ("numba", "numpy")
_BACKEND: str | None = None


def _numba_usable() -> bool:
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def get_backend() -> str:
    """Return the active backend name, resolving the env var on first use."""
    global _BACKEND
    if _BACKEND is None:
        requested = os.environ.get("FIMREST_BACKEND", "numba").strip().lower()
        if requested not in _VALID:
            warnings.warn(
                f"FIMREST_BACKEND={requested!r} not recognised; using 'numba'",
                stacklevel=2,
            )
            requested = "numba"
        if requested == "numba" and not _numba_usable():
            warnings.warn(
                "numba is not importable; falling back to the numpy backend",
                stacklevel=2,
            )
            requested = "numpy"
        _BACKEND = requested
    return _BACKEND


def set_backend(name: str) -> None:
    """Switch backends at runtime. Raises ValueError for unknown names."""
    global _BACKEND
    name = name.strip().lower()
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not _numba_usable():
        raise ValueError("numba backend requested but numba is not importable")
    _BACKEND = name


def use_numba() -> bool:
    return get_backend() == "numba"
