"""Pick the kernel implementation once, at import time.

The compiled extension is preferred; ``RESLAB_PURE_PYTHON=1`` forces the
numpy fallback (handy for debugging and for the benchmark).
"""
import logging
import os

from reslab import _pykernels

log = logging.getLogger(__name__)

if os.environ.get("RESLAB_PURE_PYTHON", "") not in ("", "0"):
    kernels = _pykernels
else:
    try:
        from reslab import _kernels as kernels
    except ImportError:  # extension not built
        log.debug("compiled kernels unavailable, using pure-Python fallback")
        kernels = _pykernels

BACKEND = kernels.BACKEND


def available_backends():
    """All importable kernel modules, keyed by backend name."""
    found = {"python": _pykernels}
    try:
        from reslab import _kernels
    except ImportError:
        pass
    else:
        found["cython"] = _kernels
    return found
