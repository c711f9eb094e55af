"""Combinatorial kernels with a compiled backend and a pure-Python fallback.

The Cython extension ``gpnqap._kernels`` is used when it was built; otherwise
(or when ``GPNQAP_PURE_PYTHON=1`` is set) the numpy versions in
``gpnqap._kernels_py`` are used.  ``BACKEND`` names the active one.
"""

import os

from . import _kernels_py

if os.environ.get("GPNQAP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

qap_cost = _impl.qap_cost
tour_length = _impl.tour_length
swap_delta = _impl.swap_delta
two_opt = _impl.two_opt
brute_force_qap = _impl.brute_force_qap
brute_force_tsp = _impl.brute_force_tsp


def backends():
    """Mapping of available backend names to kernel modules."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels  # type: ignore[attr-defined]

        out["cython"] = _kernels
    except ImportError:
        pass
    return out
