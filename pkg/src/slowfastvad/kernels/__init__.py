"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba path is used when numba imports cleanly; set the environment
variable ``SLOWFAST_DISABLE_NUMBA=1`` to force the numpy fallback (useful for
debugging and for the benchmark in ``benchmarks/bench_kernels.py``).
"""

from __future__ import annotations

import os

from ._numpy import gaussian_weights

__all__ = [
    "BACKEND",
    "gaussian_smooth",
    "gaussian_weights",
    "rank_auc",
    "window_entropies",
]


def _numba_disabled() -> bool:
    return os.environ.get("SLOWFAST_DISABLE_NUMBA", "").strip() not in ("", "0", "false")


if _numba_disabled():
    BACKEND = "numpy"
else:
    try:
        from . import _numba  # noqa: F401

        BACKEND = "numba"
    except ImportError:
        BACKEND = "numpy"

if BACKEND == "numba":
    from ._numba import gaussian_smooth, rank_auc, window_entropies
else:
    from ._numpy import gaussian_smooth, rank_auc, window_entropies
