"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``RAILFD_BACKEND``:

* ``numba`` (default when numba imports cleanly)
* ``numpy`` (forced fallback; also used automatically if numba is missing)

Both modules expose the same functions; ``backend()`` reports which one is live.
"""

from __future__ import annotations

import logging
import os

from . import _numpy

log = logging.getLogger(__name__)

_requested = os.environ.get("RAILFD_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"RAILFD_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

_impl = _numpy
if _requested == "numba":
    try:
        from . import _numba

        _impl = _numba
    except ImportError as exc:  # pragma: no cover - depends on environment
        log.warning("numba unavailable (%s); using numpy kernels", exc)

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
smo_solve = _impl.smo_solve
semi_hard_select = _impl.semi_hard_select
first_median_exceed = _impl.first_median_exceed


def backend() -> str:
    return _impl.NAME


def load(name: str):
    """Import a specific backend module regardless of the env flag (tests, benchmarks)."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        from . import _numba

        return _numba
    raise ValueError(f"unknown backend {name!r}")
