"""Command-line front end.

Commands: generate (dataset + pair files), train (one run directory), sweep
(the 11-point static-weight grid), compare (static vs naive vs proposed on a
shared dataset), verify (the oracle/property battery). Every run directory
gets a config snapshot that reproduces it exactly via --config.
"""

import argparse
import json
import sys
import zlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError, DivergenceError
from .evaluation import classify_accuracy, verify_pairs
from .net import desk_spec, init_params, save_checkpoint
from .numerics import Rng
from .synthdata import SynthConfig, generate, sample_pairs, write_dataset, write_pairs
from .trainer import TrainConfig, build_strategy, records_to_csv, train
from .verification import run_verification

SWEEP_HEADER = "w1,w2,verify_acc,expr_acc"
COMPARE_HEADER = "strategy,L1,L2,total,verify_acc,expr_acc"
DYNAMICS_HEADER = "strategy,step,w1,w2,L1,L2,L3,total"


@dataclass(frozen=True)
class RunConfig:
    # data
    n_identities: int = 20
    n_expressions: int = 6
    dim: int = 16
    samples_per_cell: int = 30
    sigma_id: float = 1.0
    sigma_ex: float = 0.5
    sigma_noise: float = 0.3
    n_pairs: int = 200
    # model
    trunk_dims: tuple = (32, 16)
    bottleneck_dim: int = 8
    # training
    strategy: str = "proposed"
    w1: float = 0.5
    steps: int = 2000
    batch_size: int = 64
    lr: float = 0.05
    lr_psi: float | None = None
    lr_decay_steps: tuple = ()
    lr_decay_factor: float = 10.0
    optimizer: str = "sgd_momentum"
    momentum: float = 0.9
    rms_decay: float = 0.99
    rms_eps: float = 1e-8
    weight_decay: float = 0.0
    alpha: float = 1e-4
    center_gamma: float = 0.5
    center_squared: bool = True
    loss_floor: float = 1e-8
    loss_ema: float = 0.0
    normalize_z: bool = True
    gradient_mode: str = "diagonal"
    dropout: float = 0.0
    seed: int = 0


def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {s!r}")


def _parse_int_tuple(s: str) -> tuple:
    s = s.strip()
    if not s:
        return ()
    return tuple(int(v) for v in s.replace(",", " ").split())


def _parse_opt_float(s: str) -> float | None:
    return None if s.strip().lower() == "none" else float(s)


_PARSERS = {
    "n_identities": int,
    "n_expressions": int,
    "dim": int,
    "samples_per_cell": int,
    "sigma_id": float,
    "sigma_ex": float,
    "sigma_noise": float,
    "n_pairs": int,
    "trunk_dims": _parse_int_tuple,
    "bottleneck_dim": int,
    "strategy": str,
    "w1": float,
    "steps": int,
    "batch_size": int,
    "lr": float,
    "lr_psi": _parse_opt_float,
    "lr_decay_steps": _parse_int_tuple,
    "lr_decay_factor": float,
    "optimizer": str,
    "momentum": float,
    "rms_decay": float,
    "rms_eps": float,
    "weight_decay": float,
    "alpha": float,
    "center_gamma": float,
    "center_squared": _parse_bool,
    "loss_floor": float,
    "loss_ema": float,
    "normalize_z": _parse_bool,
    "gradient_mode": str,
    "dropout": float,
    "seed": int,
}


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(str(i) for i in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; unknown keys are rejected."""
    values = {}
    with open(path) as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key = key.strip()
            if key not in _PARSERS:
                raise ConfigError(f"{path}:{lineno}: unknown config key: {key}")
            try:
                values[key] = _PARSERS[key](value.strip())
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return values


def write_run_config(rc: RunConfig, path) -> None:
    lines = ["# dyntask run config"]
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {_format_value(getattr(rc, f.name))}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_run_config(path=None, overrides: dict | None = None) -> RunConfig:
    values = parse_config_file(path) if path else {}
    if overrides:
        values.update(overrides)
    return replace(RunConfig(), **values)


def synth_config(rc: RunConfig) -> SynthConfig:
    return SynthConfig(
        rc.n_identities,
        rc.n_expressions,
        rc.dim,
        rc.samples_per_cell,
        rc.sigma_id,
        rc.sigma_ex,
        rc.sigma_noise,
        rc.seed,
    )


def train_config(rc: RunConfig) -> TrainConfig:
    return TrainConfig(
        strategy=rc.strategy,
        w1=rc.w1,
        steps=rc.steps,
        batch_size=rc.batch_size,
        eta_theta=rc.lr,
        eta_psi=rc.lr_psi,
        lr_decay_steps=tuple(rc.lr_decay_steps),
        lr_decay_factor=rc.lr_decay_factor,
        optimizer=rc.optimizer,
        momentum=rc.momentum,
        rms_decay=rc.rms_decay,
        rms_eps=rc.rms_eps,
        weight_decay=rc.weight_decay,
        alpha=rc.alpha,
        center_gamma=rc.center_gamma,
        center_squared=rc.center_squared,
        loss_floor=rc.loss_floor,
        loss_ema=rc.loss_ema,
        normalize_z=rc.normalize_z,
        gradient_mode=rc.gradient_mode,
        dropout=rc.dropout,
        seed=rc.seed,
    )


def _pair_seed(seed: int, split: str) -> int:
    return int(seed) ^ zlib.crc32(f"pairs-{split}".encode())


def _ensure_outdir(out: Path, force: bool) -> None:
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)


def _build_network(rc: RunConfig):
    spec = desk_spec(
        input_dim=rc.dim,
        n_identities=rc.n_identities,
        n_expressions=rc.n_expressions,
        trunk_dims=tuple(rc.trunk_dims),
        bottleneck_dim=rc.bottleneck_dim,
    )
    params = init_params(spec, Rng(rc.seed).split("init"))
    return spec, params


def _fmt(x: float) -> str:
    return repr(float(x))


def _run_one(rc: RunConfig, dataset, tcfg: TrainConfig):
    spec, params = _build_network(rc)
    strategy = build_strategy(tcfg, spec.d_z)
    return train(params, strategy, dataset, tcfg)


def _final_metrics(rc: RunConfig, dataset, result) -> dict:
    val_pairs = sample_pairs(dataset, "val", rc.n_pairs, _pair_seed(rc.seed, "val"))
    test_pairs = sample_pairs(dataset, "test", rc.n_pairs, _pair_seed(rc.seed, "test"))
    report = verify_pairs(result.params, dataset, val_pairs, test_pairs)
    return {
        "task1_test": classify_accuracy(result.params, dataset, "test", task=1),
        "task2_test": classify_accuracy(result.params, dataset, "test", task=2),
        "verification": {
            "best_threshold": report.best_threshold,
            "val_accuracy": report.val_accuracy,
            "test_accuracy": report.test_accuracy,
            "n_pairs": report.n_pairs,
        },
    }


def cmd_generate(rc: RunConfig, out: Path, force: bool) -> int:
    _ensure_outdir(out, force)
    dataset = generate(synth_config(rc))
    write_dataset(dataset, out / "data.csv")
    for split in ("val", "test"):
        pairs = sample_pairs(dataset, split, rc.n_pairs, _pair_seed(rc.seed, split))
        write_pairs(pairs, out / f"pairs_{split}.csv")
    write_run_config(rc, out / "config.txt")
    print(
        f"generated {dataset.n} samples: {rc.n_identities} identities x "
        f"{rc.n_expressions} expressions, {rc.samples_per_cell} per cell"
    )
    for name in ("train", "val", "test"):
        print(f"  split {name}: {dataset.splits[name].shape[0]} samples")
    print(f"  pairs per split file: {rc.n_pairs}")
    return 0


def cmd_train(rc: RunConfig, out: Path, force: bool) -> int:
    _ensure_outdir(out, force)
    dataset = generate(synth_config(rc))
    result = _run_one(rc, dataset, train_config(rc))
    records_to_csv(result.records, out / "log.csv")
    save_checkpoint(result.params, out / "checkpoint.json")
    write_run_config(rc, out / "config.txt")
    final = None
    if result.records:
        last = result.records[-1]
        final = {
            "w1": last.w1,
            "w2": last.w2,
            "L1": last.l1,
            "L2": last.l2,
            "L3": last.l3,
            "total": last.total,
        }
    report = {
        "strategy": result.strategy.label,
        "steps": len(result.records),
        "final": final,
        "accuracy": _final_metrics(rc, dataset, result),
    }
    with open(out / "report.json", "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    acc = report["accuracy"]
    print(f"trained {report['strategy']} for {report['steps']} steps -> {out}")
    print(
        f"  task1 test acc {acc['task1_test']:.4f}, task2 test acc {acc['task2_test']:.4f}, "
        f"verification test acc {acc['verification']['test_accuracy']:.4f}"
    )
    return 0


def cmd_sweep(rc: RunConfig, out: Path, force: bool) -> int:
    _ensure_outdir(out, force)
    dataset = generate(synth_config(rc))
    rows = []
    for i in range(11):
        w1 = i / 10.0
        cfg = replace(train_config(rc), strategy="static", w1=w1)
        result = _run_one(replace(rc, strategy="static", w1=w1), dataset, cfg)
        metrics = _final_metrics(rc, dataset, result)
        rows.append(
            (
                w1,
                1.0 - w1,
                metrics["verification"]["test_accuracy"],
                metrics["task2_test"],
            )
        )
        print(
            f"  w1={w1:.1f}: verify_acc={rows[-1][2]:.4f} expr_acc={rows[-1][3]:.4f}"
        )
    lines = [SWEEP_HEADER] + [",".join(_fmt(v) for v in row) for row in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n")
    write_run_config(rc, out / "config.txt")
    print(f"sweep written to {out / 'sweep.csv'}")
    return 0


def cmd_compare(rc: RunConfig, out: Path, force: bool) -> int:
    _ensure_outdir(out, force)
    dataset = generate(synth_config(rc))
    runs = []
    for strat, extra in (("static", {"w1": 0.5}), ("naive", {}), ("proposed", {})):
        cfg = replace(train_config(rc), strategy=strat, **extra)
        result = _run_one(replace(rc, strategy=strat, **extra), dataset, cfg)
        metrics = _final_metrics(rc, dataset, result)
        runs.append((result.strategy.label, result, metrics))
        print(f"  {result.strategy.label}: done ({len(result.records)} steps)")
    compare_lines = [COMPARE_HEADER]
    for label, result, metrics in runs:
        last = result.records[-1] if result.records else None
        compare_lines.append(
            ",".join(
                [label]
                + [
                    _fmt(v)
                    for v in (
                        last.l1 if last else float("nan"),
                        last.l2 if last else float("nan"),
                        last.total if last else float("nan"),
                        metrics["verification"]["test_accuracy"],
                        metrics["task2_test"],
                    )
                ]
            )
        )
    (out / "compare.csv").write_text("\n".join(compare_lines) + "\n")
    dyn_lines = [DYNAMICS_HEADER]
    for label, result, _ in runs:
        if label not in ("naive", "proposed"):
            continue
        for r in result.records:
            dyn_lines.append(
                ",".join(
                    [label, str(r.step)]
                    + [_fmt(v) for v in (r.w1, r.w2, r.l1, r.l2, r.l3, r.total)]
                )
            )
    (out / "dynamics.csv").write_text("\n".join(dyn_lines) + "\n")
    write_run_config(rc, out / "config.txt")
    print(f"compare written to {out / 'compare.csv'} and {out / 'dynamics.csv'}")
    return 0


def _collect_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    for name in ("strategy", "w1", "steps", "lr", "alpha"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if getattr(args, "lr_psi", None) is not None:
        overrides["lr_psi"] = args.lr_psi
    if getattr(args, "no_normalize_z", False):
        overrides["normalize_z"] = False
    gm = getattr(args, "gradient_mode", None)
    if gm is not None:
        overrides["gradient_mode"] = {"diagonal": "diagonal", "full": "full_jacobian"}[gm]
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="dyntask", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="plain-text key = value config file")
    common.add_argument("--out", type=Path, help="output directory (default runs/<command>)")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--force", action="store_true", help="overwrite a non-empty output directory")

    over = argparse.ArgumentParser(add_help=False)
    over.add_argument("--strategy", choices=("static", "single1", "single2", "naive", "proposed"))
    over.add_argument("--w1", type=float, help="task-1 weight for the static strategy")
    over.add_argument("--steps", type=int)
    over.add_argument("--lr", type=float, help="network learning rate")
    over.add_argument("--lr-psi", dest="lr_psi", type=float, help="weight-unit learning rate")
    over.add_argument("--alpha", type=float, help="center-loss weight inside L1")
    over.add_argument("--no-normalize-z", dest="no_normalize_z", action="store_true")
    over.add_argument("--gradient-mode", dest="gradient_mode", choices=("diagonal", "full"))

    sub.add_parser("generate", parents=[common], help="write dataset and pair files")
    sub.add_parser("train", parents=[common, over], help="train one run")
    sub.add_parser("sweep", parents=[common, over], help="static-weight grid w1 = 0.0 .. 1.0")
    sub.add_parser("compare", parents=[common, over], help="static vs naive vs proposed")
    vp = sub.add_parser("verify", parents=[], help="run the oracle/property battery")
    vp.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)

    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            return 0 if run_verification(corrupt_gradient=args.corrupt_gradient) else 1
        rc = load_run_config(args.config, _collect_overrides(args))
        out = args.out if args.out is not None else Path("runs") / args.command
        handler = {
            "generate": cmd_generate,
            "train": cmd_train,
            "sweep": cmd_sweep,
            "compare": cmd_compare,
        }[args.command]
        return handler(rc, out, args.force)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
