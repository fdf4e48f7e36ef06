"""Reverse-mode automatic differentiation over dense float64 tensors.

Forward operations record themselves on a Tape; backward replays the records
in exact reverse order, so gradient accumulation order is fixed and a given
computation is bit-identical across runs. Every forward op verifies its
output is finite and raises NumericError otherwise.
"""

from __future__ import annotations

import numpy as np

from privleak import _kernels as K
from privleak.errors import ContractError, DimensionError, NumericError


def _as_array(data) -> np.ndarray:
    # ascontiguousarray alone would promote 0-d scalars to shape (1,)
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
        arr = np.ascontiguousarray(arr)
    return arr


def _require_finite(arr: np.ndarray, op: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op} produced a non-finite value")


class Tensor:
    """A value recorded on a tape. data is row-major float64; grad is
    allocated lazily during the backward pass."""

    __slots__ = ("data", "grad", "tape")

    def __init__(self, data, tape: "Tape"):
        self.data = _as_array(data)
        self.grad = None
        self.tape = tape

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, tape={id(self.tape):#x})"


class Tape:
    """Records forward ops for reverse replay.

    trace holds the op names in execution order; two models with the same
    architecture produce identical traces, which is how the no-extra-inference-
    cost property is asserted.
    """

    __slots__ = ("_records", "_params", "trace", "_finalized")

    def __init__(self):
        self._records = []
        self._params = []
        self.trace = []
        self._finalized = False

    def constant(self, data) -> Tensor:
        t = Tensor(data, self)
        _require_finite(t.data, "constant")
        return t

    def parameter(self, data) -> Tensor:
        """Register a trainable leaf; backward returns its gradient buffer."""
        t = Tensor(data, self)
        _require_finite(t.data, "parameter")
        self._params.append(t)
        return t

    def record(self, name: str, backward_fn) -> None:
        if self._finalized:
            raise ContractError("tape already replayed; build a new tape per step")
        self.trace.append(name)
        self._records.append(backward_fn)


def _common_tape(*tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    for t in tensors[1:]:
        if t.tape is not tape:
            raise ContractError("operands live on different tapes")
    return tape


def _accumulate(t: Tensor, delta: np.ndarray) -> None:
    if t.grad is None:
        t.grad = delta
    else:
        t.grad += delta


def affine(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for a batch of rows."""
    tape = _common_tape(x, w, b)
    xd, wd, bd = x.data, w.data, b.data
    if xd.ndim != 2 or wd.ndim != 2 or bd.ndim != 1:
        raise DimensionError("affine expects x (n,k), w (k,m), b (m,)")
    if xd.shape[1] != wd.shape[0] or wd.shape[1] != bd.shape[0]:
        raise DimensionError(
            f"affine shapes do not line up: x {xd.shape}, w {wd.shape}, b {bd.shape}")
    out = Tensor(K.affine(xd, wd, bd), tape)
    _require_finite(out.data, "affine")

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(x, K.matmul_nt(g, wd))
        _accumulate(w, K.matmul_tn(xd, g))
        _accumulate(b, K.col_sum(g))

    tape.record("affine", backward_fn)
    return out


def relu(x: Tensor) -> Tensor:
    """Elementwise max(x, 0); the subgradient at exactly 0 is 0."""
    out = Tensor(K.relu_fwd(x.data), x.tape)
    _require_finite(out.data, "relu")
    xd = x.data

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(x, K.relu_bwd(xd, g))

    x.tape.record("relu", backward_fn)
    return out


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction; rows sum to 1."""
    zd = logits.data
    if zd.ndim != 2:
        raise DimensionError("softmax expects a (n, classes) array")
    if zd.shape[1] < 2:
        raise ContractError("softmax needs at least 2 classes")
    if not np.isfinite(zd).all():
        raise NumericError("softmax received non-finite logits")
    out = Tensor(K.softmax_rows(zd), logits.tape)
    _require_finite(out.data, "softmax")
    pd = out.data

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(logits, K.softmax_bwd(pd, g))

    logits.tape.record("softmax", backward_fn)
    return out


def dot(a: Tensor, b: Tensor) -> Tensor:
    """Scalar sum of the elementwise product."""
    tape = _common_tape(a, b)
    if a.data.shape != b.data.shape:
        raise DimensionError("dot expects identically shaped operands")
    out = Tensor(np.asarray(np.sum(a.data * b.data)), tape)
    _require_finite(out.data, "dot")
    ad, bd = a.data, b.data

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(a, float(g) * bd)
        _accumulate(b, float(g) * ad)

    tape.record("dot", backward_fn)
    return out


def sum_squares(x: Tensor) -> Tensor:
    """Scalar sum of squared entries."""
    out = Tensor(np.asarray(np.sum(x.data * x.data)), x.tape)
    _require_finite(out.data, "sum_squares")
    xd = x.data

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(x, (2.0 * float(g)) * xd)

    x.tape.record("sum_squares", backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> list[np.ndarray]:
    """Replay the tape in reverse from a scalar loss.

    Returns one gradient array per registered parameter, in registration
    order. Parameters with no path to the loss get exact zeros.
    """
    if loss.tape is not tape:
        raise ContractError("loss lives on a different tape")
    if loss.data.size != 1:
        raise ContractError("backward needs a scalar loss")
    if tape._finalized:
        raise ContractError("backward already ran on this tape")
    tape._finalized = True
    loss.grad = np.ones_like(loss.data)
    for backward_fn in reversed(tape._records):
        backward_fn()
    grads = []
    for p in tape._params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        grads.append(p.grad)
    return grads


class AdamState:
    """First and second moment buffers plus the step counter."""

    __slots__ = ("lr", "beta1", "beta2", "eps", "t", "m", "v")

    def __init__(self, params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One Adam update, in place. The step counter increments before the
    bias correction, so the first step uses t = 1."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ContractError("params, grads and state must have matching lengths")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    state.t += 1
    corr1 = 1.0 - state.beta1 ** state.t
    corr2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        K.adam_update(p.reshape(-1), np.ascontiguousarray(g).reshape(-1),
                      m.reshape(-1), v.reshape(-1),
                      state.lr, state.beta1, state.beta2, state.eps, corr1, corr2)
    return params, state


def grad_check(make_loss, arrays, h: float = 1e-5) -> float:
    """Compare reverse-mode gradients against central finite differences.

    make_loss(tape, params) must build the loss from the given parameter
    tensors alone. arrays is the point at which gradients are checked.
    Returns the worst relative error max(|a - n|) / max(1, |a|, |n|) over
    all coordinates.
    """
    arrays = [_as_array(a) for a in arrays]
    tape = Tape()
    params = [tape.parameter(a.copy()) for a in arrays]
    loss = make_loss(tape, params)
    analytic = backward(tape, loss)

    def value_at(point):
        t = Tape()
        consts = [t.constant(a) for a in point]
        return float(make_loss(t, consts).data)

    worst = 0.0
    for which, base in enumerate(arrays):
        flat = base.reshape(-1)
        for i in range(flat.size):
            bumped = [a.copy() for a in arrays]
            bumped[which].reshape(-1)[i] = flat[i] + h
            up = value_at(bumped)
            bumped[which].reshape(-1)[i] = flat[i] - h
            down = value_at(bumped)
            numeric = (up - down) / (2.0 * h)
            a_val = float(analytic[which].reshape(-1)[i])
            err = abs(a_val - numeric) / max(1.0, abs(a_val), abs(numeric))
            if err > worst:
                worst = err
    return worst
