"""Metrics and oracles: classification accuracy, pair verification with
threshold selection, the finite-difference gradient oracle, and the
closed-form one-step prediction for the weight unit."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .net import forward
from .numerics import as_f64, l2_normalize, softmax

METRICS = ("euclidean", "cosine")


def classify_accuracy(params, dataset, split: str = "test", task: int = 1) -> float:
    """Argmax-logit accuracy of one branch on one split."""
    if task not in (1, 2):
        raise InvalidArgumentError(f"task must be 1 or 2, got {task}")
    idx = dataset.splits[split]
    if idx.shape[0] == 0:
        raise ConfigError(f"split {split!r} is empty")
    trace = forward(params, dataset.x[idx])
    logits = trace.logits1 if task == 1 else trace.logits2
    if logits is None:
        raise ConfigError(f"network has no branch for task {task}")
    labels = dataset.identities[idx] if task == 1 else dataset.expressions[idx]
    return float((logits.argmax(axis=1) == labels).mean())


def pair_distances(params, dataset, pairs, metric: str = "euclidean") -> np.ndarray:
    """Distance between the branch-1 embeddings of each pair."""
    if metric not in METRICS:
        raise InvalidArgumentError(f"unknown metric {metric!r}")
    if len(pairs) == 0:
        raise ConfigError("empty pair set")
    needed = np.unique(np.concatenate([pairs.index_a, pairs.index_b]))
    trace = forward(params, dataset.x[needed])
    if trace.x1 is None:
        raise ConfigError("network has no branch-1 embedding")
    lookup = {int(g): i for i, g in enumerate(needed)}
    ea = trace.x1[[lookup[int(i)] for i in pairs.index_a]]
    eb = trace.x1[[lookup[int(i)] for i in pairs.index_b]]
    if metric == "euclidean":
        return np.sqrt(((ea - eb) ** 2).sum(axis=1))
    na = ea / np.maximum(np.linalg.norm(ea, axis=1, keepdims=True), 1e-12)
    nb = eb / np.maximum(np.linalg.norm(eb, axis=1, keepdims=True), 1e-12)
    return 1.0 - (na * nb).sum(axis=1)


def threshold_candidates(distances: np.ndarray) -> np.ndarray:
    """All midpoints of the sorted distances, plus one sentinel on each side."""
    d = np.sort(np.unique(as_f64(distances)))
    mids = (d[:-1] + d[1:]) / 2.0 if d.shape[0] > 1 else np.empty(0)
    return np.concatenate(([d[0] - 1.0], mids, [d[-1] + 1.0]))


def select_threshold(distances, same) -> tuple[float, float]:
    """Pick the distance threshold maximizing accuracy of 'same iff d < t'.

    The sweep covers every midpoint between sorted distances plus sentinels
    outside the range, so it is exact for the given set; ties resolve to the
    smallest threshold.
    """
    d = as_f64(distances)
    s = np.asarray(same, dtype=bool)
    if d.shape != s.shape or d.shape[0] == 0:
        raise ConfigError("distances and labels must be equal-length and non-empty")
    best_t, best_acc = 0.0, -1.0
    for t in threshold_candidates(d):
        acc = float(((d < t) == s).mean())
        if acc > best_acc:
            best_t, best_acc = float(t), acc
    return best_t, best_acc


@dataclass
class VerificationReport:
    best_threshold: float
    val_accuracy: float
    test_accuracy: float
    n_pairs: int


def verify_pairs(params, dataset, val_pairs, test_pairs, metric: str = "euclidean") -> VerificationReport:
    """Threshold chosen on the validation pairs only; accuracy reported on test pairs."""
    val_d = pair_distances(params, dataset, val_pairs, metric)
    threshold, val_acc = select_threshold(val_d, val_pairs.same)
    test_d = pair_distances(params, dataset, test_pairs, metric)
    test_acc = float(((test_d < threshold) == test_pairs.same).mean())
    return VerificationReport(threshold, val_acc, test_acc, len(test_pairs))


def fd_gradient_check(fn, analytic, point, h: float = 1e-5) -> float:
    """Max relative error between central differences of ``fn`` and ``analytic``.

    Per coordinate i: |(f(x + h e_i) - f(x - h e_i)) / 2h - g_i|, normalized
    by max(|g|, 1e-12) with |g| the analytic gradient's norm. Normalizing by
    the gradient magnitude (rather than per coordinate) matters: central
    differences carry ~|f| eps / h of roundoff, which would swamp any
    coordinate whose true gradient happens to be tiny.
    """
    x = as_f64(point).copy()
    g = as_f64(analytic)
    if g.shape != x.shape:
        raise InvalidArgumentError(f"gradient shape {g.shape} != point shape {x.shape}")
    denom = max(float(np.sqrt((g * g).sum())), 1e-12)
    worst = 0.0
    for i in range(x.size):
        orig = x.flat[i]
        x.flat[i] = orig + h
        fp = fn(x)
        x.flat[i] = orig - h
        fm = fn(x)
        x.flat[i] = orig
        fd = (fp - fm) / (2.0 * h)
        worst = max(worst, abs(fd - g.flat[i]) / denom)
    return worst


def one_step_oracle(losses, z, eta: float, normalize_z: bool = True) -> np.ndarray:
    """Closed-form weights after one unit step from zero init, for two tasks.

    With psi = 0 and b = 0 the activations are a_i = 1, so the gradient
    factor a1*a2/(a1+a2)^2 is exactly 1/4 and one descent step gives
    psi_i = -eta * (1/L_i) * 1/4 * z. The predicted weights are the softmax
    of psi_i . z. This path is kept independent of the unit's own gradient
    code so the two can check each other.
    """
    arr = as_f64(losses)
    if arr.shape != (2,):
        raise InvalidArgumentError("one_step_oracle is defined for exactly two tasks")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"losses must be positive and finite, got {arr.tolist()}")
    zu = l2_normalize(z) if normalize_z else as_f64(z)
    a = np.ones(2)
    factor = (a[0] * a[1]) / (a[0] + a[1]) ** 2
    psi = np.stack([-float(eta) * (1.0 / arr[i]) * factor * zu for i in range(2)])
    f = psi @ zu  # b stays zero
    return softmax(f)


def expected_one_step_ratio(losses, z, eta: float, normalize_z: bool = True) -> float:
    """w1/w2 implied by ``one_step_oracle``; cross-checks closed_form_ratio."""
    w = one_step_oracle(losses, z, eta, normalize_z)
    return float(w[0] / w[1])
