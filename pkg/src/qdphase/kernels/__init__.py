"""Backend selection for the numeric kernels.

Set QDPHASE_BACKEND=numpy to force the pure-numpy fallback; the default is
the numba-compiled path when numba imports cleanly.  `BACKEND` records what
was actually selected.  Run benchmarks/bench_kernels.py to compare the two.
"""

from __future__ import annotations

import os
import warnings

_requested = os.environ.get("QDPHASE_BACKEND", "numba").strip().lower()
if _requested not in {"numba", "numpy"}:
    raise ValueError(
        f"QDPHASE_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

BACKEND = "numpy"
if _requested == "numba":
    try:
        from . import accel as _impl

        BACKEND = "numba"
    except ImportError as exc:  # pragma: no cover - depends on environment
        warnings.warn(f"numba backend unavailable ({exc}); using numpy fallback")
        from . import reference as _impl
else:
    from . import reference as _impl

TICK_US = _impl.TICK_US
bin_expected_counts = _impl.bin_expected_counts
merge_partitions = _impl.merge_partitions
autocorrelation = _impl.autocorrelation

__all__ = [
    "BACKEND",
    "TICK_US",
    "autocorrelation",
    "bin_expected_counts",
    "merge_partitions",
]
