"""numpy implementations of the dense kernels.

Fallback used when the compiled extension is unavailable. Both backends
promise the same accumulation-order contract, stated per function below, so
for identical inputs they return bit-identical outputs. That rules out BLAS
and pairwise summation here; this backend trades speed for exact agreement
with the compiled path. Inputs are C-contiguous float64 arrays.
"""

import numpy as np

NAME = "numpy"


def matmul(a, b):
    """a @ b; out[i, j] accumulates a[i, p] * b[p, j] from zero, p ascending."""
    n, k = a.shape
    out = np.zeros((n, b.shape[1]), dtype=np.float64)
    for p in range(k):
        out += a[:, p, None] * b[p]
    return out


def matmul_nt(a, b):
    """a @ b.T; out[i, j] accumulates a[i, p] * b[j, p] from zero, p ascending."""
    n, k = a.shape
    out = np.zeros((n, b.shape[0]), dtype=np.float64)
    for p in range(k):
        out += a[:, p, None] * b[None, :, p]
    return out


def matmul_tn(a, b):
    """a.T @ b; out[p, j] accumulates a[i, p] * b[i, j] from zero, i ascending."""
    n = a.shape[0]
    out = np.zeros((a.shape[1], b.shape[1]), dtype=np.float64)
    for i in range(n):
        out += a[i, :, None] * b[i]
    return out


def affine(x, w, bias):
    """x @ w + bias; out[i, j] starts at bias[j], accumulates p ascending."""
    n, k = x.shape
    out = np.empty((n, w.shape[1]), dtype=np.float64)
    out[:] = bias
    for p in range(k):
        out += x[:, p, None] * w[p]
    return out


def col_sum(a):
    """Column sums accumulated row by row, ascending (add.accumulate order)."""
    if a.shape[0] == 0:
        return np.zeros(a.shape[1], dtype=np.float64)
    return np.cumsum(a, axis=0)[-1].copy()


def row_sum(a):
    """Row sums accumulated column by column, ascending."""
    if a.shape[1] == 0:
        return np.zeros(a.shape[0], dtype=np.float64)
    return np.cumsum(a, axis=1)[:, -1].copy()


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, g):
    # subgradient at exactly 0 is 0
    return np.where(x > 0.0, g, 0.0)


def adam_update(p, g, m, v, lr, beta1, beta2, eps, corr1, corr2):
    """One in-place moment update and parameter step on flat views.

    Expression tree per element, shared with the compiled backend:
    m = beta1*m + (1-beta1)*g; v = beta2*v + (1-beta2)*(g*g);
    p -= lr*(m/corr1) / (sqrt(v/corr2) + eps).
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    p -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
