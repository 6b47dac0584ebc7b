"""The dynamic weight unit: a softmax over the shared feature that emits task weights.

Each task i gets an affine activation f_i = psi_i . z + b_i and a weight
w_i = softmax(f)_i, so the weights always sit on the simplex. The unit is
trained by the objective L3 = sum_i w_i / L_i with the task losses treated as
constants: descending it moves weight mass toward the task whose current loss
is larger.

Two gradient modes are provided. ``diagonal`` keeps only the diagonal
softmax term per task,

    grad psi_i = (1/L_i) * w_i * (sum_{j!=i} w_j) * z,

while ``full_jacobian`` is the complete derivative

    grad psi_i = w_i * sum_{j!=i} w_j * (1/L_i - 1/L_j) * z.

For two tasks both move psi_1 - psi_2 in the same direction, so the one-step
ordering (the larger-loss task ends up with the larger weight) holds in
either mode. Only psi is updated; b stays at its zero initialisation, which
is what makes the zero-init closed form below exact.

When the shared feature is left unnormalized, a large |f_1 - f_2| saturates
the softmax and w_1 * w_2 underflows: the gradient vanishes. Normalizing z to
unit length before the affine map bounds |f_i| by ||psi_i|| + |b_i| and keeps
the unit trainable; that is the ``normalize_z`` flag (default on).
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, LossFloorError, ShapeError
from .numerics import as_f64, l2_normalize, require_finite, softmax

GRADIENT_MODES = ("diagonal", "full_jacobian")
DEFAULT_LOSS_FLOOR = 1e-8


@dataclass
class WeightUnitParams:
    psi: np.ndarray  # (n_tasks, d_z)
    b: np.ndarray  # (n_tasks,)
    normalize_z: bool = True
    gradient_mode: str = "diagonal"

    def __post_init__(self):
        self.psi = as_f64(self.psi)
        self.b = as_f64(self.b)
        if self.psi.ndim != 2:
            raise ShapeError(f"psi must be 2-D, got shape {self.psi.shape}")
        if self.b.shape != (self.psi.shape[0],):
            raise ShapeError(f"b has shape {self.b.shape}, expected ({self.psi.shape[0]},)")
        require_finite("psi", self.psi)
        require_finite("b", self.b)
        if self.gradient_mode not in GRADIENT_MODES:
            raise InvalidArgumentError(f"unknown gradient mode {self.gradient_mode!r}")

    @property
    def n_tasks(self) -> int:
        return self.psi.shape[0]

    @classmethod
    def zero_init(
        cls,
        n_tasks: int,
        d_z: int,
        normalize_z: bool = True,
        gradient_mode: str = "diagonal",
    ) -> "WeightUnitParams":
        return cls(np.zeros((n_tasks, d_z)), np.zeros(n_tasks), normalize_z, gradient_mode)

    def copy(self) -> "WeightUnitParams":
        return WeightUnitParams(self.psi.copy(), self.b.copy(), self.normalize_z, self.gradient_mode)


@dataclass
class WeightTrace:
    z_used: np.ndarray  # the (possibly normalized) shared feature
    f: np.ndarray  # affine activations
    a: np.ndarray  # exp(f)
    w: np.ndarray  # softmax(f)


def compute_weights(params: WeightUnitParams, z) -> WeightTrace:
    """Evaluate the unit on one shared-feature vector."""
    z = as_f64(z)
    if z.ndim != 1:
        raise ShapeError(f"z must be a vector, got shape {z.shape}")
    if z.shape[0] != params.psi.shape[1]:
        raise ShapeError(f"z has dim {z.shape[0]}, unit expects {params.psi.shape[1]}")
    require_finite("z", z)
    z_used = l2_normalize(z) if params.normalize_z else z.copy()
    f = params.psi @ z_used + params.b
    w = softmax(f)
    a = np.exp(f)  # may saturate to inf at extreme activations; w stays stable
    return WeightTrace(z_used, f, a, w)


def _check_losses(losses, floor: float) -> np.ndarray:
    arr = as_f64(losses)
    if not np.all(np.isfinite(arr)):
        raise LossFloorError("task losses must be finite")
    if np.any(arr < floor):
        raise LossFloorError(f"task loss below floor {floor}: {arr.tolist()}")
    return arr


def l3_loss(w, losses, floor: float = DEFAULT_LOSS_FLOOR) -> float:
    """The weight-update objective: sum_i w_i / L_i, with the L_i held constant."""
    w = as_f64(w)
    arr = _check_losses(losses, floor)
    if w.shape != arr.shape:
        raise ShapeError(f"weights shape {w.shape} != losses shape {arr.shape}")
    return float((w / arr).sum())


def _others(w: np.ndarray) -> np.ndarray:
    # sum_{j != i} w_j, summed directly to avoid 1 - w_i cancellation at saturation
    t = w.shape[0]
    return np.array([w[:i].sum() + w[i + 1 :].sum() for i in range(t)])


def l3_gradient(
    trace: WeightTrace,
    losses,
    mode: str = "diagonal",
    floor: float = DEFAULT_LOSS_FLOOR,
) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of L3 w.r.t. (psi, b) for the given trace.

    Returns (grad_psi, grad_b); grad_psi rows are coef_i * z_used, grad_b is
    coef_i, where coef depends on the mode (see module docstring). Nothing
    outside the unit's own parameters ever receives a gradient.
    """
    if mode not in GRADIENT_MODES:
        raise InvalidArgumentError(f"unknown gradient mode {mode!r}")
    arr = _check_losses(losses, floor)
    w = trace.w
    if arr.shape != w.shape:
        raise ShapeError(f"losses shape {arr.shape} != weights shape {w.shape}")
    t = w.shape[0]
    if mode == "diagonal":
        coef = (1.0 / arr) * w * _others(w)
    else:
        inv = 1.0 / arr
        coef = np.array(
            [w[i] * sum(w[j] * (inv[i] - inv[j]) for j in range(t) if j != i) for i in range(t)]
        )
    grad_psi = np.outer(coef, trace.z_used)
    grad_b = coef
    return grad_psi, grad_b


def closed_form_ratio(losses, a, zzt: float) -> float:
    """Predicted one-step weight ratio w1/w2 from a zero-initialised unit.

    ratio = exp((1/L2 - 1/L1) * a1*a2 / (a1+a2)^2 * z.z) for two tasks; equal
    losses give exactly 1, and the smaller-loss task always ends up with the
    smaller weight.
    """
    arr = as_f64(losses)
    av = as_f64(a)
    if arr.shape != (2,) or av.shape != (2,):
        raise ShapeError("closed_form_ratio is defined for exactly two tasks")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise InvalidArgumentError(f"losses must be positive and finite, got {arr.tolist()}")
    if np.any(av <= 0.0):
        raise InvalidArgumentError(f"activations a must be positive, got {av.tolist()}")
    factor = (av[0] * av[1]) / (av[0] + av[1]) ** 2
    exponent = (1.0 / arr[1] - 1.0 / arr[0]) * factor * float(zzt)
    return math.exp(exponent)


def uniform_weights(n_tasks: int) -> np.ndarray:
    return np.full(n_tasks, 1.0 / n_tasks)


def validate_simplex(w, tol: float = 1e-12, open_interval: bool = False) -> None:
    """Raise unless the weights lie on the probability simplex."""
    w = as_f64(w)
    lo_ok = np.all(w > 0.0) if open_interval else np.all(w >= 0.0)
    hi_ok = np.all(w < 1.0) if open_interval else np.all(w <= 1.0)
    if not (lo_ok and hi_ok):
        raise InvalidArgumentError(f"weights outside the simplex: {w.tolist()}")
    if abs(float(w.sum()) - 1.0) > tol:
        raise InvalidArgumentError(f"weights sum to {float(w.sum())}, expected 1")
