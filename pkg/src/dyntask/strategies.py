"""The four weighting regimes behind one interface.

static          fixed weights chosen up front
single_task     static with a one-hot weight vector (degenerate single-task net)
naive_dynamic   the unit descends the weighted total loss, which demotes the
                hard task (the behaviour the proposed rule is measured against)
proposed_dynamic the unit descends L3 = sum w_i / L_i, which promotes the hard task

Both dynamic kinds keep the stop-gradient at z: only the unit's psi moves, so
the weighting rule is the sole variable between them.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidArgumentError
from .numerics import as_f64
from .weight_unit import (
    WeightTrace,
    WeightUnitParams,
    compute_weights,
    l3_gradient,
    validate_simplex,
)

STATIC = "static"
SINGLE_TASK = "single_task"
NAIVE_DYNAMIC = "naive_dynamic"
PROPOSED_DYNAMIC = "proposed_dynamic"

DYNAMIC_KINDS = (NAIVE_DYNAMIC, PROPOSED_DYNAMIC)


@dataclass
class Strategy:
    kind: str
    label: str
    w: np.ndarray | None = None  # static kinds
    task_index: int | None = None  # single_task, 1-based
    unit: WeightUnitParams | None = None  # dynamic kinds

    @property
    def is_dynamic(self) -> bool:
        return self.kind in DYNAMIC_KINDS

    def copy(self) -> "Strategy":
        return Strategy(
            self.kind,
            self.label,
            self.w.copy() if self.w is not None else None,
            self.task_index,
            self.unit.copy() if self.unit is not None else None,
        )


def static_strategy(w1: float, w2: float | None = None) -> Strategy:
    if w2 is None:
        w2 = 1.0 - w1
    w = as_f64([w1, w2])
    validate_simplex(w)
    return Strategy(STATIC, "static", w=w)


def single_task_strategy(task_index: int) -> Strategy:
    if task_index not in (1, 2):
        raise InvalidArgumentError(f"task_index must be 1 or 2, got {task_index}")
    w = np.zeros(2)
    w[task_index - 1] = 1.0
    return Strategy(SINGLE_TASK, f"single{task_index}", w=w, task_index=task_index)


def naive_dynamic_strategy(
    d_z: int, normalize_z: bool = True, gradient_mode: str = "diagonal"
) -> Strategy:
    unit = WeightUnitParams.zero_init(2, d_z, normalize_z, gradient_mode)
    return Strategy(NAIVE_DYNAMIC, "naive", unit=unit)


def proposed_dynamic_strategy(
    d_z: int, normalize_z: bool = True, gradient_mode: str = "diagonal"
) -> Strategy:
    unit = WeightUnitParams.zero_init(2, d_z, normalize_z, gradient_mode)
    return Strategy(PROPOSED_DYNAMIC, "proposed", unit=unit)


def weights_for_step(strategy: Strategy, z_batch) -> tuple[np.ndarray, WeightTrace | None]:
    """Task weights for one training step.

    Static kinds return their fixed weights. Dynamic kinds evaluate the unit
    on the batch mean of the shared feature (one scalar weight per task per
    step) and also return the weight trace the update step needs.
    """
    if not strategy.is_dynamic:
        return strategy.w.copy(), None
    z = as_f64(z_batch)
    if z.ndim != 2 or z.shape[0] < 1:
        raise InvalidArgumentError(f"z_batch must be a non-empty 2-D array, got shape {z.shape}")
    trace = compute_weights(strategy.unit, z.mean(axis=0))
    return trace.w.copy(), trace


def update_strategy(strategy: Strategy, trace: WeightTrace | None, losses, eta: float) -> Strategy:
    """One descent step on the unit; static kinds are a no-op.

    proposed: psi <- psi - eta * dL3/dpsi (mode taken from the unit).
    naive:    psi <- psi - eta * d(sum w_i L_i)/dpsi with the L_i constant,
              i.e. coef_i = w_i * sum_{j!=i} w_j (L_i - L_j), which lowers the
              activation of the larger-loss task.

    Only psi moves; b keeps its zero initialisation. Returns a new Strategy,
    never mutating the input.
    """
    if not strategy.is_dynamic:
        return strategy
    if trace is None:
        raise InvalidArgumentError("dynamic strategy update needs the weight trace")
    unit = strategy.unit
    if strategy.kind == PROPOSED_DYNAMIC:
        grad_psi, _ = l3_gradient(trace, losses, mode=unit.gradient_mode)
    else:
        arr = as_f64(losses)
        w = trace.w
        t = w.shape[0]
        coef = np.array(
            [w[i] * sum(w[j] * (arr[i] - arr[j]) for j in range(t) if j != i) for i in range(t)]
        )
        grad_psi = np.outer(coef, trace.z_used)
    new_unit = replace(unit, psi=unit.psi - float(eta) * grad_psi, b=unit.b.copy())
    return replace(strategy, unit=new_unit)
