"""Synthetic two-task data: identity + expression labels on a common vector.

Each sample is sigma_id * mu[identity] + sigma_ex * nu[expression] + noise,
with the label prototypes drawn once per label. The two scale knobs tune the
tasks' difficulty independently, which the dynamics experiments rely on.
Splits are 70/15/15, stratified per (identity, expression) cell.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InvalidArgumentError
from .numerics import Rng

SPLIT_NAMES = ("train", "val", "test")


@dataclass(frozen=True)
class SynthConfig:
    n_identities: int = 20
    n_expressions: int = 6
    dim: int = 16
    samples_per_cell: int = 30
    sigma_id: float = 1.0
    sigma_ex: float = 0.5
    sigma_noise: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.n_identities < 2 or self.n_expressions < 2:
            raise ConfigError("need at least 2 identities and 2 expressions")
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        if self.samples_per_cell < 1:
            raise ConfigError(f"samples_per_cell must be >= 1, got {self.samples_per_cell}")
        if self.sigma_id <= 0 or self.sigma_ex <= 0:
            raise ConfigError("signal scales sigma_id and sigma_ex must be > 0")
        if self.sigma_noise < 0:
            raise ConfigError(f"sigma_noise must be >= 0, got {self.sigma_noise}")


@dataclass
class Dataset:
    x: np.ndarray  # (n, dim)
    identities: np.ndarray  # (n,)
    expressions: np.ndarray  # (n,)
    splits: dict  # name -> index array
    config: SynthConfig

    @property
    def n(self) -> int:
        return self.x.shape[0]


def _split_sizes(m: int) -> tuple[int, int, int]:
    n_tr = int(0.70 * m)
    n_va = int(0.15 * m)
    n_te = m - n_tr - n_va
    return n_tr, n_va, n_te


def generate(cfg: SynthConfig) -> Dataset:
    """Deterministically generate the dataset described by ``cfg``."""
    n_tr, n_va, n_te = _split_sizes(cfg.samples_per_cell)
    if min(n_tr, n_va, n_te) < 1:
        raise ConfigError(
            f"samples_per_cell={cfg.samples_per_cell} cannot give every split at least "
            "one sample per (identity, expression) cell"
        )
    rng = Rng(cfg.seed)
    id_means = rng.split("identity-means").normal(size=(cfg.n_identities, cfg.dim))
    ex_means = rng.split("expression-means").normal(size=(cfg.n_expressions, cfg.dim))
    noise_rng = rng.split("noise")
    split_rng = rng.split("splits")

    m = cfg.samples_per_cell
    n_total = cfg.n_identities * cfg.n_expressions * m
    x = np.empty((n_total, cfg.dim))
    identities = np.empty(n_total, dtype=np.int64)
    expressions = np.empty(n_total, dtype=np.int64)
    train, val, test = [], [], []
    row = 0
    for i in range(cfg.n_identities):
        for e in range(cfg.n_expressions):
            base = cfg.sigma_id * id_means[i] + cfg.sigma_ex * ex_means[e]
            eps = noise_rng.normal(size=(m, cfg.dim))
            x[row : row + m] = base + cfg.sigma_noise * eps
            identities[row : row + m] = i
            expressions[row : row + m] = e
            local = row + split_rng.permutation(m)
            train.extend(local[:n_tr])
            val.extend(local[n_tr : n_tr + n_va])
            test.extend(local[n_tr + n_va :])
            row += m
    splits = {
        "train": np.array(train, dtype=np.int64),
        "val": np.array(val, dtype=np.int64),
        "test": np.array(test, dtype=np.int64),
    }
    for arr in (x, identities, expressions, *splits.values()):
        arr.flags.writeable = False
    return Dataset(x, identities, expressions, splits, cfg)


@dataclass
class PairSet:
    index_a: np.ndarray
    index_b: np.ndarray
    same: np.ndarray  # bool

    def __len__(self) -> int:
        return self.index_a.shape[0]


def sample_pairs(dataset: Dataset, split: str, n_pairs: int, seed: int) -> PairSet:
    """Balanced same/different identity pairs from one split.

    Positives prefer a partner with a different expression when one exists,
    so verification is not reduced to expression matching. Positive and
    negative counts differ by at most one.
    """
    if split not in dataset.splits:
        raise InvalidArgumentError(f"unknown split {split!r}")
    if n_pairs < 1:
        raise ConfigError(f"n_pairs must be >= 1, got {n_pairs}")
    idx = dataset.splits[split]
    ids = dataset.identities[idx]
    classes = np.unique(ids)
    if classes.shape[0] < 2:
        raise ConfigError(f"split {split!r} has fewer than 2 identities")
    by_id = {int(c): idx[ids == c] for c in classes}
    multi = [c for c in classes if by_id[int(c)].shape[0] >= 2]
    if not multi:
        raise ConfigError(f"split {split!r} has no identity with 2+ samples")

    rng = Rng(seed)
    n_pos = (n_pairs + 1) // 2
    n_neg = n_pairs - n_pos
    a_list, b_list, same_list = [], [], []
    for _ in range(n_pos):
        cls = multi[int(rng.integers(len(multi)))]
        members = by_id[int(cls)]
        a = int(members[int(rng.integers(len(members)))])
        expr_a = dataset.expressions[a]
        others = members[members != a]
        diff_expr = others[dataset.expressions[others] != expr_a]
        pool = diff_expr if diff_expr.shape[0] else others
        b = int(pool[int(rng.integers(len(pool)))])
        a_list.append(a)
        b_list.append(b)
        same_list.append(True)
    for _ in range(n_neg):
        pos = rng.choice(classes.shape[0], 2, replace=False)
        c1, c2 = int(classes[pos[0]]), int(classes[pos[1]])
        a = int(by_id[c1][int(rng.integers(len(by_id[c1])))])
        b = int(by_id[c2][int(rng.integers(len(by_id[c2])))])
        a_list.append(a)
        b_list.append(b)
        same_list.append(False)
    return PairSet(
        np.array(a_list, dtype=np.int64),
        np.array(b_list, dtype=np.int64),
        np.array(same_list, dtype=bool),
    )


def write_dataset(dataset: Dataset, path) -> None:
    """Self-describing text format: '#' header with config and splits, then CSV rows."""
    cfg = dataset.config
    lines = ["# dyntask-dataset v1"]
    for f in fields(SynthConfig):
        lines.append(f"# {f.name} = {getattr(cfg, f.name)!r}")
    for name in SPLIT_NAMES:
        lines.append(f"# split {name} = " + " ".join(str(i) for i in dataset.splits[name]))
    header = ",".join(f"x{j}" for j in range(cfg.dim)) + ",identity,expression"
    lines.append(header)
    for i in range(dataset.n):
        row = ",".join(repr(float(v)) for v in dataset.x[i])
        lines.append(f"{row},{dataset.identities[i]},{dataset.expressions[i]}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_dataset(path) -> Dataset:
    cfg_kwargs = {}
    splits = {}
    rows = []
    field_types = {f.name: f.type for f in fields(SynthConfig)}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("dyntask-dataset"):
                    continue
                key, _, value = body.partition("=")
                key = key.strip()
                value = value.strip()
                if key.startswith("split "):
                    name = key.split()[1]
                    splits[name] = np.array(
                        [int(v) for v in value.split()] if value else [], dtype=np.int64
                    )
                elif key in field_types:
                    caster = int if field_types[key] in (int, "int") else float
                    cfg_kwargs[key] = caster(value)
                else:
                    raise ConfigError(f"unknown dataset header key: {key}")
            elif line.startswith("x0,"):
                continue  # column header
            else:
                rows.append(line.split(","))
    cfg = SynthConfig(**cfg_kwargs)
    n = len(rows)
    x = np.empty((n, cfg.dim))
    identities = np.empty(n, dtype=np.int64)
    expressions = np.empty(n, dtype=np.int64)
    for i, parts in enumerate(rows):
        if len(parts) != cfg.dim + 2:
            raise ConfigError(f"dataset row {i} has {len(parts)} fields, expected {cfg.dim + 2}")
        x[i] = [float(v) for v in parts[: cfg.dim]]
        identities[i] = int(parts[cfg.dim])
        expressions[i] = int(parts[cfg.dim + 1])
    for name in SPLIT_NAMES:
        if name not in splits:
            raise ConfigError(f"dataset file is missing split {name!r}")
    for arr in (x, identities, expressions, *splits.values()):
        arr.flags.writeable = False
    return Dataset(x, identities, expressions, splits, cfg)


def write_pairs(pairs: PairSet, path) -> None:
    lines = ["# dyntask-pairs v1", "index_a,index_b,same"]
    for a, b, s in zip(pairs.index_a, pairs.index_b, pairs.same):
        lines.append(f"{a},{b},{int(s)}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_pairs(path) -> PairSet:
    a_list, b_list, same_list = [], [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("index_a"):
                continue
            a, b, s = line.split(",")
            a_list.append(int(a))
            b_list.append(int(b))
            same_list.append(bool(int(s)))
    return PairSet(
        np.array(a_list, dtype=np.int64),
        np.array(b_list, dtype=np.int64),
        np.array(same_list, dtype=bool),
    )


def nearest_centroid_accuracy(dataset: Dataset, split: str, task: int) -> float:
    """Oracle classifier: class centroids from the train split, nearest wins.

    Used to verify that the sigma knobs actually order the tasks' difficulty.
    """
    labels = dataset.identities if task == 1 else dataset.expressions
    train_idx = dataset.splits["train"]
    eval_idx = dataset.splits[split]
    classes = np.unique(labels[train_idx])
    centroids = np.stack(
        [dataset.x[train_idx][labels[train_idx] == c].mean(axis=0) for c in classes]
    )
    xe = dataset.x[eval_idx]
    d2 = ((xe[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    pred = classes[d2.argmin(axis=1)]
    return float((pred == labels[eval_idx]).mean())
