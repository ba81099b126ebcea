"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
implementation is used.  Setting ``ROUGHSYS_PURE_PYTHON=1`` forces the
fallback.
"""
import os

from . import _kernels_py

OP_MEAN = _kernels_py.OP_MEAN
OP_MAX = _kernels_py.OP_MAX
OP_SUM = _kernels_py.OP_SUM

_impl = _kernels_py
BACKEND = "python"
if os.environ.get("ROUGHSYS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

ball_reduce = _impl.ball_reduce
cone_max = _impl.cone_max
cone_sum = _impl.cone_sum
stopping_time = _impl.stopping_time

__all__ = ["BACKEND", "OP_MEAN", "OP_MAX", "OP_SUM", "ball_reduce", "cone_max",
           "cone_sum", "stopping_time"]
