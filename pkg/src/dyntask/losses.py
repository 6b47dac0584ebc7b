"""Task losses with analytic gradients.

Task 1 (verification analog) uses softmax cross-entropy plus an
alpha-weighted center loss on the embedding; task 2 (expression analog) is a
plain cross-entropy. All reductions are batch means, so loss magnitudes, and
therefore the dynamic weights they drive, do not depend on the batch size.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError, ShapeError
from .numerics import as_f64

CENTER_EPS = 1e-12


def _label_indices(labels, n: int, k: int) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim == 2:
        # one-hot rows
        if arr.shape != (n, k):
            raise ShapeError(f"one-hot labels have shape {arr.shape}, expected {(n, k)}")
        arr = arr.argmax(axis=1)
    else:
        arr = arr.astype(np.int64)
    if arr.shape != (n,):
        raise ShapeError(f"labels have shape {arr.shape}, expected ({n},)")
    if arr.size and (arr.min() < 0 or arr.max() >= k):
        raise InvalidArgumentError(f"label out of range [0, {k}): {int(arr.min())}..{int(arr.max())}")
    return arr


def cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits.

    grad = (softmax - onehot) / n, so the loss and gradient are exact
    companions for finite-difference checks.
    """
    x = as_f64(logits)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"logits must be a non-empty 2-D array, got shape {x.shape}")
    n, k = x.shape
    y = _label_indices(labels, n, k)
    shifted = x - x.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logsumexp
    loss = float(-logp[np.arange(n), y].mean())
    grad = np.exp(logp)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, grad


@dataclass
class CenterBank:
    """One center per class of the verification task, plus its update rate."""

    centers: np.ndarray  # (n_classes, dim)
    gamma: float = 0.5

    def __post_init__(self):
        self.centers = as_f64(self.centers)
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidArgumentError(f"center update rate must be in (0, 1], got {self.gamma}")

    def copy(self) -> "CenterBank":
        return CenterBank(self.centers.copy(), self.gamma)


def init_center_bank(n_classes: int, dim: int, gamma: float = 0.5) -> CenterBank:
    return CenterBank(np.zeros((n_classes, dim)), gamma)


def center_loss(x, labels, bank: CenterBank, squared: bool = True) -> tuple[float, np.ndarray]:
    """Pull each embedding toward its class center.

    Default (squared) mode: mean of 0.5 * ||x - c||^2 with gradient
    (x - c) / n. Literal mode uses the plain norm, whose gradient is clamped
    to zero within 1e-12 of the center where it is undefined.
    """
    x = as_f64(x)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeError(f"embeddings must be a non-empty 2-D array, got shape {x.shape}")
    n, d = x.shape
    if bank.centers.shape[1] != d:
        raise ShapeError(f"centers have dim {bank.centers.shape[1]}, embeddings have dim {d}")
    y = _label_indices(labels, n, bank.centers.shape[0])
    diffs = x - bank.centers[y]
    if squared:
        loss = float((diffs * diffs).sum() / (2.0 * n))
        grad = diffs / n
    else:
        norms = np.sqrt((diffs * diffs).sum(axis=1))
        loss = float(norms.mean())
        grad = np.zeros_like(diffs)
        safe = norms >= CENTER_EPS
        grad[safe] = diffs[safe] / (n * norms[safe, None])
    return loss, grad


def update_centers(bank: CenterBank, x, labels) -> CenterBank:
    """Move each center toward the batch mean of its class members.

    c <- c - gamma * mean(c - x) over the class's batch members; classes
    absent from the batch are untouched.
    """
    x = as_f64(x)
    y = _label_indices(labels, x.shape[0], bank.centers.shape[0])
    centers = bank.centers.copy()
    for cls in np.unique(y):
        members = x[y == cls]
        delta = (centers[cls] - members).mean(axis=0)
        centers[cls] = centers[cls] - bank.gamma * delta
    return CenterBank(centers, bank.gamma)


@dataclass
class LossValues:
    l1: float
    l2: float
    ls1: float
    lc: float
    total: float = math.nan


@dataclass
class TaskGradients:
    grad_logits1: np.ndarray | None
    grad_logits2: np.ndarray | None
    grad_x1: np.ndarray | None


def task_losses(
    trace,
    labels1,
    labels2,
    bank: CenterBank | None,
    alpha: float,
    center_squared: bool = True,
) -> tuple[LossValues, TaskGradients]:
    """Both task losses plus every gradient the network backward pass needs.

    L1 = cross-entropy(logits1) + alpha * center(x1); L2 = cross-entropy(logits2).
    grad_x1 already carries the alpha factor. Absent branches yield nan losses
    and None gradients.
    """
    l1 = ls1 = lc = math.nan
    l2 = math.nan
    g_logits1 = g_logits2 = g_x1 = None
    if trace.logits1 is not None:
        if bank is None:
            raise InvalidArgumentError("branch1 present but no center bank supplied")
        ls1, g_logits1 = cross_entropy(trace.logits1, labels1)
        lc, raw_gx1 = center_loss(trace.x1, labels1, bank, squared=center_squared)
        l1 = ls1 + alpha * lc
        g_x1 = alpha * raw_gx1
    if trace.logits2 is not None:
        l2, g_logits2 = cross_entropy(trace.logits2, labels2)
    return LossValues(l1, l2, ls1, lc), TaskGradients(g_logits1, g_logits2, g_x1)


def weighted_total(w, values: LossValues) -> LossValues:
    """Fill in total = w1*L1 + w2*L2; an absent (nan) task needs weight zero."""
    w = as_f64(w)
    total = 0.0
    for wi, li in ((w[0], values.l1), (w[1], values.l2)):
        if math.isnan(li):
            if wi != 0.0:
                raise InvalidArgumentError("nonzero weight on a task with no loss")
            continue
        total += float(wi) * li
    return replace(values, total=total)
