"""Kernel backend selection.

The JIT (numba) backend is the default. Set RANGEANN_DISABLE_NUMBA=1 (or
anything truthy) before import to force the pure-numpy fallback; it is also
used automatically when numba is not importable. Both backends expose the
same functions with the same semantics.
"""

from __future__ import annotations

import os

_TRUTHY = {"1", "true", "yes", "on"}


def _want_numpy() -> bool:
    return os.environ.get("RANGEANN_DISABLE_NUMBA", "").strip().lower() in _TRUTHY


if _want_numpy():
    from . import _kernels_numpy as kernels
else:
    try:
        from . import _kernels_numba as kernels
    except ImportError:  # pragma: no cover - exercised only without numba
        from . import _kernels_numpy as kernels


def backend_name() -> str:
    """Name of the active kernel backend ("numba" or "numpy")."""
    return kernels.BACKEND


def set_threads(n: int | None) -> None:
    """Best-effort thread count hint for the JIT backend's runtime."""
    if n is None or kernels.BACKEND != "numba":
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
