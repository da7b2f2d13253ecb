"""Backend selection for the hot loops.

``CIPL_NUMBA=0`` forces the pure-numpy path; otherwise the numba twins are used
when numba imports cleanly. The choice is made once, at import time.
"""

import logging
import os

from . import _kernels_numpy

log = logging.getLogger(__name__)


def _select():
    if os.environ.get("CIPL_NUMBA", "1").strip().lower() in ("0", "false", "no", "off"):
        return _kernels_numpy, "numpy"
    try:
        from . import _kernels_numba
    except ImportError as exc:  # pragma: no cover - depends on environment
        log.warning("numba unavailable (%s); using numpy kernels", exc)
        return _kernels_numpy, "numpy"
    return _kernels_numba, "numba"


_impl, BACKEND = _select()

im2col = _impl.im2col
col2im = _impl.col2im
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
spatial_argmax = _impl.spatial_argmax
sqdist = _impl.sqdist
warp_affine = _impl.warp_affine


def set_threads(n):
    """Cap BLAS worker threads; ``n=1`` gives the deterministic contract.

    The numba kernels are serial, so only the BLAS pools need limiting.
    """
    n = max(1, int(n))
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(n)
    except ImportError:  # pragma: no cover
        pass
