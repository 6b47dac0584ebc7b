"""The training loop: per step, the network descends the weighted total loss
while the weight unit descends its own objective, both from the same pre-step
state ("parallel" updates, so their textual order is irrelevant).

Everything is driven by a single config seed; two runs with the same config
produce identical logs byte for byte.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DivergenceError
from .losses import CenterBank, init_center_bank, task_losses, update_centers, weighted_total
from .net import NetworkParams, backward, forward
from .numerics import Rng
from .strategies import (
    Strategy,
    naive_dynamic_strategy,
    proposed_dynamic_strategy,
    single_task_strategy,
    static_strategy,
    update_strategy,
    weights_for_step,
)
from .weight_unit import GRADIENT_MODES, l3_loss

OPTIMIZERS = ("sgd_momentum", "rmsprop")

CSV_HEADER = "step,w1,w2,L1,L2,L3,total,acc1,acc2"


@dataclass(frozen=True)
class TrainConfig:
    strategy: str = "proposed"  # static | single1 | single2 | naive | proposed
    w1: float = 0.5  # task-1 weight for the static strategy
    steps: int = 2000
    batch_size: int = 64
    eta_theta: float = 0.05
    eta_psi: float | None = None  # None: match eta_theta
    lr_decay_steps: tuple[int, ...] = ()
    lr_decay_factor: float = 10.0
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    weight_decay: float = 0.0
    alpha: float = 1e-4  # center-loss weight inside L1
    center_gamma: float = 0.5
    center_squared: bool = True
    loss_floor: float = 1e-8
    loss_ema: float = 0.0  # EMA decay for the losses fed to the unit; 0 = raw
    normalize_z: bool = True
    gradient_mode: str = "diagonal"
    dropout: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.strategy not in ("static", "single1", "single2", "naive", "proposed"):
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eta_theta < 0 or (self.eta_psi is not None and self.eta_psi < 0):
            raise ConfigError("learning rates must be >= 0")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 < self.rms_decay < 1.0:
            raise ConfigError(f"rms_decay must be in (0, 1), got {self.rms_decay}")
        if not 0.0 < self.center_gamma <= 1.0:
            raise ConfigError(f"center_gamma must be in (0, 1], got {self.center_gamma}")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ConfigError(f"unknown gradient_mode {self.gradient_mode!r}")
        if not 0.0 <= self.loss_ema < 1.0:
            raise ConfigError(f"loss_ema must be in [0, 1), got {self.loss_ema}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.loss_floor <= 0:
            raise ConfigError(f"loss_floor must be > 0, got {self.loss_floor}")

    @property
    def effective_eta_psi(self) -> float:
        return self.eta_theta if self.eta_psi is None else self.eta_psi


def build_strategy(cfg: TrainConfig, d_z: int) -> Strategy:
    if cfg.strategy == "static":
        return static_strategy(cfg.w1)
    if cfg.strategy == "single1":
        return single_task_strategy(1)
    if cfg.strategy == "single2":
        return single_task_strategy(2)
    if cfg.strategy == "naive":
        return naive_dynamic_strategy(d_z, cfg.normalize_z, cfg.gradient_mode)
    return proposed_dynamic_strategy(d_z, cfg.normalize_z, cfg.gradient_mode)


def decay_multiplier(step: int, cfg: TrainConfig) -> float:
    """Piecewise-constant decade decay: one factor per milestone reached."""
    k = sum(1 for m in cfg.lr_decay_steps if step >= m)
    return cfg.lr_decay_factor ** (-k)


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    return cfg.eta_theta * decay_multiplier(step, cfg)


class _SgdMomentum:
    def __init__(self, momentum: float):
        self.momentum = momentum
        self.slots = None

    def step(self, pairs, lr: float):
        if self.slots is None:
            self.slots = [np.zeros_like(p) for p, _ in pairs]
        for (p, g), v in zip(pairs, self.slots):
            v *= self.momentum
            v += g
            p -= lr * v


class _RmsProp:
    def __init__(self, decay: float, eps: float):
        self.decay = decay
        self.eps = eps
        self.slots = None

    def step(self, pairs, lr: float):
        if self.slots is None:
            self.slots = [np.zeros_like(p) for p, _ in pairs]
        for (p, g), s in zip(pairs, self.slots):
            s *= self.decay
            s += (1.0 - self.decay) * g * g
            p -= lr * g / (np.sqrt(s) + self.eps)


def _make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd_momentum":
        return _SgdMomentum(cfg.momentum)
    return _RmsProp(cfg.rms_decay, cfg.rms_eps)


def _param_grad_pairs(params: NetworkParams, grads, weight_decay: float):
    pairs = []
    for section_p, section_g in (
        (params.shared, grads.shared),
        (params.branch1, grads.branch1),
        (params.branch2, grads.branch2),
    ):
        if section_p is None:
            continue
        for lp, lg in zip(section_p, section_g):
            for p, g in ((lp.w, lg.w), (lp.b, lg.b)):
                pairs.append((p, g + weight_decay * p if weight_decay else g))
    return pairs


@dataclass
class TrainRecord:
    step: int
    w1: float
    w2: float
    l1: float
    l2: float
    l3: float
    total: float
    acc1: float
    acc2: float


@dataclass
class TrainResult:
    params: NetworkParams
    strategy: Strategy
    bank: CenterBank | None
    records: list


def _batch_accuracy(logits, labels) -> float:
    if logits is None:
        return math.nan
    return float((logits.argmax(axis=1) == labels).mean())


def train(params: NetworkParams, strategy: Strategy, dataset, cfg: TrainConfig) -> TrainResult:
    """Run ``cfg.steps`` training steps; inputs are never mutated.

    Per step: sample a batch, forward, compute both task losses, get the task
    weights from the current unit, then apply the network step (weighted
    total, optimizer + weight decay), the unit step (same pre-step losses,
    clamped to the floor), and the center update. Any non-finite loss aborts
    with a diagnostics record.
    """
    cfg.validate()
    params = params.copy()
    strategy = strategy.copy()

    spec = params.spec
    if params.branch1 is None or params.branch2 is None:
        if strategy.is_dynamic:
            raise ConfigError("dynamic strategies need both branches present")
        if params.branch1 is None and strategy.w[0] != 0.0:
            raise ConfigError("branch1 is absent but its task weight is nonzero")
        if params.branch2 is None and strategy.w[1] != 0.0:
            raise ConfigError("branch2 is absent but its task weight is nonzero")

    train_idx = dataset.splits["train"]
    n_train = train_idx.shape[0]
    if cfg.batch_size > n_train:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds train split size {n_train}")

    bank = None
    if params.branch1 is not None:
        bank = init_center_bank(spec.k1, spec.embed_dim1, cfg.center_gamma)

    optimizer = _make_optimizer(cfg)
    batch_rng = Rng(cfg.seed).split("batches")
    drop_rng = Rng(cfg.seed).split("dropout") if cfg.dropout > 0 else None
    both_tasks = params.branch1 is not None and params.branch2 is not None

    records = []
    ema = None
    for t in range(cfg.steps):
        step = t + 1
        scale = decay_multiplier(step, cfg)
        pos = batch_rng.choice(n_train, size=cfg.batch_size, replace=False)
        bidx = train_idx[pos]
        xb = dataset.x[bidx]
        y1 = dataset.identities[bidx]
        y2 = dataset.expressions[bidx]

        trace = forward(params, xb, dropout=cfg.dropout, rng=drop_rng)
        values, tgrads = task_losses(trace, y1, y2, bank, cfg.alpha, cfg.center_squared)
        for name, present, v in (
            ("L1", params.branch1 is not None, values.l1),
            ("L2", params.branch2 is not None, values.l2),
        ):
            if present and not math.isfinite(v):
                raise DivergenceError(
                    f"{name} became non-finite at step {step}",
                    {"step": step, "L1": values.l1, "L2": values.l2},
                )

        w, wtrace = weights_for_step(strategy, trace.z)
        values = weighted_total(w, values)

        l3val = math.nan
        clamped = None
        if both_tasks:
            raw = np.array([values.l1, values.l2])
            if cfg.loss_ema > 0:
                ema = raw if ema is None else cfg.loss_ema * ema + (1.0 - cfg.loss_ema) * raw
                fed = ema
            else:
                fed = raw
            clamped = np.maximum(fed, cfg.loss_floor)
            l3val = l3_loss(w, clamped, floor=cfg.loss_floor)

        # Both updates below consume only pre-step state; their order is immaterial.
        net_grads = backward(params, trace, tgrads.grad_logits1, tgrads.grad_logits2, tgrads.grad_x1, w)
        new_strategy = (
            update_strategy(strategy, wtrace, clamped, cfg.effective_eta_psi * scale)
            if strategy.is_dynamic
            else strategy
        )
        new_bank = update_centers(bank, trace.x1, y1) if bank is not None else None
        optimizer.step(_param_grad_pairs(params, net_grads, cfg.weight_decay), cfg.eta_theta * scale)
        strategy = new_strategy
        bank = new_bank

        records.append(
            TrainRecord(
                step,
                float(w[0]),
                float(w[1]),
                values.l1,
                values.l2,
                l3val,
                values.total,
                _batch_accuracy(trace.logits1, y1),
                _batch_accuracy(trace.logits2, y2),
            )
        )
    return TrainResult(params, strategy, bank, records)


def _fmt(x: float) -> str:
    return repr(float(x))


def records_to_csv(records, path) -> None:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(
            ",".join(
                [str(r.step)]
                + [_fmt(v) for v in (r.w1, r.w2, r.l1, r.l2, r.l3, r.total, r.acc1, r.acc2)]
            )
        )
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_csv_records(path) -> list[TrainRecord]:
    records = []
    with open(path) as f:
        header = f.readline().strip()
        if header != CSV_HEADER:
            raise ConfigError(f"unexpected log header: {header}")
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            records.append(TrainRecord(int(parts[0]), *[float(v) for v in parts[1:]]))
    return records
