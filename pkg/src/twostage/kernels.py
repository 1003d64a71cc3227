"""Hot-loop kernels with a compiled backend and a pure-Python fallback.

The compiled extension is picked when importable. Set
``TWOSTAGE_PURE_PYTHON=1`` to force the fallback, e.g. for benchmarking.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("TWOSTAGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

wrap_angle = _impl.wrap_angle
rocket_dynamics = _impl.rocket_dynamics
nearest_in_window = _impl.nearest_in_window
gae = _impl.gae

__all__ = ["BACKEND", "wrap_angle", "rocket_dynamics", "nearest_in_window", "gae"]
