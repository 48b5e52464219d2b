"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when importable; set ``MBTHP_PURE_PYTHON=1``
to force the fallback. ``BACKEND`` names the active one.
"""
import os

from mbthp._kernels import _fallback

if os.environ.get("MBTHP_PURE_PYTHON", "") not in ("", "0"):
    _impl = _fallback
else:
    try:
        from mbthp._kernels import _core as _impl
    except ImportError:  # extension not built
        _impl = _fallback

BACKEND = "compiled" if _impl is not _fallback else "python"

lq_factor = _impl.lq_factor
thp_feedback = _impl.thp_feedback
simulate_thp_batch = _impl.simulate_thp_batch
modulo = _fallback.modulo


def get_backend(name):
    """Return the kernel module for ``"compiled"`` or ``"python"``."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from mbthp._kernels import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
