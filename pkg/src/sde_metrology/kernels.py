"""Hot-loop kernels, compiled when available.

The Cython extension ``_kernels`` is preferred; the pure numpy module
``_kernels_py`` is used when the extension was not built or when the
environment variable ``SDE_METROLOGY_PURE_PYTHON`` is set to a non-empty
value other than ``0``.  ``BACKEND`` names the active implementation.
"""
import os

_force_pure = os.environ.get("SDE_METROLOGY_PURE_PYTHON", "") not in ("", "0")

if _force_pure:
    from . import _kernels_py as _impl
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as _impl
        BACKEND = "python"

register_mask = _impl.register_mask
count_registered = _impl.count_registered
oavar_sum = _impl.oavar_sum
gate_counts = _impl.gate_counts
stream_gate_counts = _impl.stream_gate_counts

__all__ = ["BACKEND", "register_mask", "count_registered", "oavar_sum", "gate_counts", "stream_gate_counts"]
