"""Hot numeric kernels with selectable backend.

The numba backend (default) JIT-compiles per-particle loops; the numpy
backend is a vectorized pure-numpy implementation of the same contracts.
Select with the environment variable PRELOADTWIN_BACKEND=numba|numpy
before first import. Results agree to float tolerance across backends
(tests/test_kernels.py); within one backend, runs are bit-reproducible.

benchmarks/kernel_bench.py times the two backends side by side.
"""

from __future__ import annotations

import logging
import os

from . import common  # noqa: F401  (re-exported constants)
from .common import (  # noqa: F401
    GEOM_SIZE,
    ROLLOUT_DEGENERATE,
    ROLLOUT_OK,
    ROLLOUT_STRESS_BELIEF,
    ROLLOUT_STRESS_TRUTH,
)

_log = logging.getLogger(__name__)

_requested = os.environ.get("PRELOADTWIN_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"PRELOADTWIN_BACKEND={_requested!r} not recognized; use 'numba' or 'numpy'"
    )

if _requested == "numpy":
    from . import _numpy as _impl
else:
    try:
        from . import _numba as _impl
    except ImportError as exc:
        if _requested == "numba":
            raise
        _log.warning("numba unavailable (%s); falling back to numpy kernels", exc)
        from . import _numpy as _impl

BACKEND = _impl.NAME

u_vertical = _impl.u_vertical
u_horizontal = _impl.u_horizontal
u_each = _impl.u_each
u_at = _impl.u_at
u_curve = _impl.u_curve
sigma0_at = _impl.sigma0_at
s_inf_batch = _impl.s_inf_batch
t_shift_batch = _impl.t_shift_batch
trajectory_batch = _impl.trajectory_batch
s_tmax_candidates = _impl.s_tmax_candidates
resample_indices = _impl.resample_indices
systematic_indices = _impl.systematic_indices
truth_summary = _impl.truth_summary
bu_rollout = _impl.bu_rollout
