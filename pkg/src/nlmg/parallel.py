"""Worker-count control for the numba-compiled loops."""
from __future__ import annotations

import os

import numba

# the TBB layer shipped with some systems is too old; prefer OpenMP
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

ENV_VAR = "NLMG_THREADS"


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: $NLMG_THREADS wins over ``requested``, default all cores."""
    env = os.environ.get(ENV_VAR)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"{ENV_VAR}={env!r} is not an integer") from None
    elif requested is not None:
        n = int(requested)
    else:
        n = numba.config.NUMBA_NUM_THREADS
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return min(n, numba.config.NUMBA_NUM_THREADS)


def set_threads(requested: int | None = None) -> int:
    n = resolve_threads(requested)
    numba.set_num_threads(n)
    return n
