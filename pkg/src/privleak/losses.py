"""Training objectives.

cross_entropy scores the consensual task. confusion_loss pushes adversary
confidences toward the uniform vector, which is what makes recovered features
uninformative rather than anti-informative. adversarial_loss is the negated
adversary cross-entropy baseline the confusion loss is compared against.
combined_loss mixes task and privacy terms with one weight. All reductions
are means over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from privleak import _kernels as K
from privleak.autodiff import Tensor, _accumulate
from privleak.errors import ConfigError, ContractError, DimensionError

CROSS_ENTROPY_ONLY = "cross_entropy_only"
CONFUSION = "confusion"
ADVERSARIAL = "adversarial"
VALID_KINDS = (CROSS_ENTROPY_ONLY, CONFUSION, ADVERSARIAL)


@dataclass(frozen=True)
class LossKind:
    """Which objective trains the classifier, and the privacy weight."""

    kind: str
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ConfigError(f"loss kind must be one of {VALID_KINDS}, got {self.kind!r}")
        if not (0.0 <= self.lam <= 1.0):
            raise ConfigError(f"privacy weight must lie in [0, 1], got {self.lam}")


def _checked_labels(labels, batch: int, classes: int, what: str) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim != 1 or arr.shape[0] != batch:
        raise DimensionError(f"{what} must be a vector of length {batch}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ContractError(f"{what} must be integers")
    if arr.size and (arr.min() < 0 or arr.max() >= classes):
        raise ContractError(f"{what} out of range for {classes} classes")
    return arr.astype(np.int64)


def _ce_per_example(zd: np.ndarray, labels: np.ndarray) -> np.ndarray:
    # log-sum-exp keeps exponentials of raw logits out of the computation
    lse = K.logsumexp_rows(zd)
    picked = zd[np.arange(zd.shape[0]), labels]
    return lse - picked


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of logits against integer labels."""
    zd = logits.data
    if zd.ndim != 2:
        raise DimensionError("cross_entropy expects (batch, classes) logits")
    n = zd.shape[0]
    if n == 0:
        raise ContractError("cross_entropy needs a non-empty batch")
    lab = _checked_labels(labels, n, zd.shape[1], "labels")
    out = Tensor(np.asarray(np.mean(_ce_per_example(zd, lab))), logits.tape)

    def backward_fn():
        g = out.grad
        if g is None:
            return
        d = K.softmax_rows(zd)
        d[np.arange(n), lab] -= 1.0
        d *= float(g) / n
        _accumulate(logits, d)

    logits.tape.record("cross_entropy", backward_fn)
    return out


def confusion_loss(adversary_probs: Tensor) -> Tensor:
    """Mean squared distance from adversary confidences to the uniform vector.

    Minimized (value 0) exactly when every row is uniform; bounded above by
    (k - 1) / k, attained on one-hot rows.
    """
    q = adversary_probs.data
    if q.ndim != 2:
        raise DimensionError("confusion_loss expects (batch, classes) probabilities")
    n, k = q.shape
    if n == 0:
        raise ContractError("confusion_loss needs a non-empty batch")
    sums = q.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-9:
        raise ContractError("confusion_loss rows must sum to 1; pass post-softmax confidences")
    diff = q - (1.0 / k)
    out = Tensor(np.asarray(np.mean((diff * diff).sum(axis=1))), adversary_probs.tape)

    def backward_fn():
        g = out.grad
        if g is None:
            return
        _accumulate(adversary_probs, diff * (2.0 * float(g) / n))

    adversary_probs.tape.record("confusion_loss", backward_fn)
    return out


def combined_loss(task: Tensor, privacy: Tensor, lam: float) -> Tensor:
    """(1 - lam) * task + lam * privacy.

    At lam == 0 or 1 the zero-weighted branch is skipped in the backward
    pass, so e.g. a lam = 0 run backpropagates exactly the task loss.
    """
    if not (0.0 <= lam <= 1.0):
        raise ContractError(f"privacy weight must lie in [0, 1], got {lam}")
    tape = task.tape
    if privacy.tape is not tape:
        raise ContractError("operands live on different tapes")
    if task.data.size != 1 or privacy.data.size != 1:
        raise ContractError("combined_loss combines scalars")
    out = Tensor(np.asarray((1.0 - lam) * task.data + lam * privacy.data), tape)

    def backward_fn():
        g = out.grad
        if g is None:
            return
        if lam != 1.0:
            _accumulate(task, (1.0 - lam) * g)
        if lam != 0.0:
            _accumulate(privacy, lam * g)

    tape.record("combined_loss", backward_fn)
    return out


def adversarial_loss(adversary_logits: Tensor, private_labels) -> Tensor:
    """Negated mean cross-entropy of the adversary on the private labels.

    Equals -cross_entropy(adversary_logits, private_labels) exactly; training
    the classifier on it rewards fooling the current adversary, which flips
    rather than removes the private information.
    """
    zd = adversary_logits.data
    if zd.ndim != 2:
        raise DimensionError("adversarial_loss expects (batch, classes) logits")
    n = zd.shape[0]
    if n == 0:
        raise ContractError("adversarial_loss needs a non-empty batch")
    lab = _checked_labels(private_labels, n, zd.shape[1], "private labels")
    out = Tensor(np.asarray(-np.mean(_ce_per_example(zd, lab))), adversary_logits.tape)

    def backward_fn():
        g = out.grad
        if g is None:
            return
        d = K.softmax_rows(zd)
        d[np.arange(n), lab] -= 1.0
        d *= -float(g) / n
        _accumulate(adversary_logits, d)

    adversary_logits.tape.record("adversarial_loss", backward_fn)
    return out
