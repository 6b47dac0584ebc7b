"""Dynamic multi-task loss weighting at desk scale.

A softmax weight unit over the shared feature emits per-task loss weights and
is trained by its own objective (sum of w_i / L_i), so weight mass moves
toward whichever task currently has the larger loss. The package bundles the
unit, static/single-task/naive baselines, a small two-branch network with
manual backprop, synthetic two-task data, a deterministic trainer, and the
oracles that verify the closed-form weight dynamics.
"""

from .errors import (
    ConfigError,
    DivergenceError,
    InvalidArgumentError,
    LossFloorError,
    ShapeError,
)
from .evaluation import (
    VerificationReport,
    classify_accuracy,
    fd_gradient_check,
    one_step_oracle,
    pair_distances,
    select_threshold,
    verify_pairs,
)
from .losses import (
    CenterBank,
    LossValues,
    TaskGradients,
    center_loss,
    cross_entropy,
    init_center_bank,
    task_losses,
    update_centers,
    weighted_total,
)
from .net import (
    ForwardTrace,
    Layer,
    LayerSpec,
    NetworkGrads,
    NetworkParams,
    NetworkSpec,
    backward,
    desk_spec,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
)
from .numerics import Rng, l2_normalize, softmax
from .strategies import (
    Strategy,
    naive_dynamic_strategy,
    proposed_dynamic_strategy,
    single_task_strategy,
    static_strategy,
    update_strategy,
    weights_for_step,
)
from .synthdata import (
    Dataset,
    PairSet,
    SynthConfig,
    generate,
    nearest_centroid_accuracy,
    read_dataset,
    read_pairs,
    sample_pairs,
    write_dataset,
    write_pairs,
)
from .trainer import (
    TrainConfig,
    TrainRecord,
    TrainResult,
    build_strategy,
    lr_schedule,
    read_csv_records,
    records_to_csv,
    train,
)
from .weight_unit import (
    WeightTrace,
    WeightUnitParams,
    closed_form_ratio,
    compute_weights,
    l3_gradient,
    l3_loss,
)

__version__ = "0.1.0"
