"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback is used.  Setting ``LAGRANGIAN_SBL_PURE_PYTHON=1`` forces the
fallback.
"""

from __future__ import annotations

import os

from . import _pyfallback

T_CONST, T_POW, T_DIFF, T_VEL, T_SIN, T_COS = range(6)


def _load():
    if os.environ.get("LAGRANGIAN_SBL_PURE_PYTHON", "") not in ("", "0"):
        return _pyfallback, "python"
    try:
        from . import _ext
    except ImportError:
        return _pyfallback, "python"
    return _ext, "cython"


_impl, BACKEND = _load()

sweep_indicators = _impl.sweep_indicators
log_marginal = _impl.log_marginal
rk4_term_table = _impl.rk4_term_table
CholeskyError = _pyfallback.CholeskyError


def backends() -> dict:
    """All importable backends keyed by name (for tests and benchmarks)."""
    out = {"python": _pyfallback}
    try:
        from . import _ext
        out["cython"] = _ext
    except ImportError:
        pass
    return out
