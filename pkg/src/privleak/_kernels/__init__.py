"""Dense kernel backends.

The compiled extension is preferred when built; a numpy implementation is
the fallback. PRIVLEAK_BACKEND=cython|numpy|auto forces the choice at import
time. Both backends follow the same accumulation-order contract, so every
function here returns bit-identical results whichever backend is active.

The softmax family lives in this module rather than in the backends: exp and
log come from numpy either way (one transcendental implementation for both
paths), and the reductions go through the backend's row_sum.
"""

import os

import numpy as np

from privleak._kernels import numpy_backend
from privleak.errors import ConfigError


def _select():
    choice = os.environ.get("PRIVLEAK_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "cython", "numpy"):
        raise ConfigError(f"PRIVLEAK_BACKEND must be auto, cython or numpy, got {choice!r}")
    if choice == "numpy":
        return numpy_backend
    try:
        from privleak._kernels import _core
    except ImportError:
        if choice == "cython":
            raise ConfigError("PRIVLEAK_BACKEND=cython but the compiled extension is not built")
        return numpy_backend
    return _core


_impl = _select()

NAME = _impl.NAME
matmul = _impl.matmul
matmul_nt = _impl.matmul_nt
matmul_tn = _impl.matmul_tn
affine = _impl.affine
col_sum = _impl.col_sum
row_sum = _impl.row_sum
relu_fwd = _impl.relu_fwd
relu_bwd = _impl.relu_bwd
adam_update = _impl.adam_update


def softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / row_sum(e)[:, None]


def softmax_bwd(p, g):
    inner = row_sum(g * p)
    return p * (g - inner[:, None])


def logsumexp_rows(z):
    m = z.max(axis=1)
    e = np.exp(z - m[:, None])
    return m + np.log(row_sum(e))


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return NAME
