"""Command-line surface: dataset generation, training, evaluation, baselines,
transport debugging, and ablation sweeps.

Config files are flat ``key = value`` text; unknown keys are errors. All
numeric artifacts are plain text (CSV / line-delimited key=value records)
except the checkpoint. Exit status: 0 success, 1 usage error, 2 numerical
abort.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import SpectralConfig, classical_spectral, kmeans_lloyd
from .data import Dataset, gen_dataset, load_dataset, save_dataset
from .errors import NumericalError
from .metrics import ClusteringReport, evaluate
from .network import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, TrainHistory, fit, predict
from .transport import sinkhorn_algorithm1, sinkhorn_marginal

__all__ = ["main"]

# config keys accepted in key=value files; "lambda" maps to TrainConfig.lam
_CONFIG_KEYS = {
    "eta": ("eta", float),
    "sinkhorn_iters": ("sinkhorn_iters", int),
    "lambda": ("lam", float),
    "batch_size": ("batch_size", int),
    "epochs": ("epochs", int),
    "embed_dim": ("embed_dim", int),
    "num_clusters": ("num_clusters", int),
    "base_lr": ("base_lr", float),
    "momentum": ("momentum", float),
    "weight_decay": ("weight_decay", float),
    "restart_period": ("restart_period", int),
    "noise_sigma": ("noise_sigma", float),
    "feature_dropout_prob": ("feature_dropout_prob", float),
    "scale_jitter": ("scale_jitter", float),
    "seed": ("seed", int),
    "orth_mode": ("orth_mode", str),
    "penalty_rho": ("penalty_rho", float),
    "keep_diagonal": ("keep_diagonal", bool),
    "tau_a_init": ("tau_a_init", float),
    "tau_c_init": ("tau_c_init", float),
}

ETA_GRID = [round(0.01 * i, 2) for i in range(1, 11)]
ISK_GRID = [1, 3, 5, 10]
LAMBDA_GRID = [0.5, 1.0, 1.5, 2.0]
RHO_GRID = [0.5, 1.0, 2.0]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{message}\n{self.format_usage()}")


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_config(path) -> dict:
    """Parse a flat key = value config file into TrainConfig kwargs."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    kwargs = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        field_name, caster = _CONFIG_KEYS[key]
        if caster is bool:
            kwargs[field_name] = _parse_bool(value)
        else:
            kwargs[field_name] = caster(value)
    return kwargs


def load_train_config(path, overrides: dict | None = None) -> TrainConfig:
    kwargs = parse_config(path)
    if overrides:
        kwargs.update(overrides)
    if "num_clusters" not in kwargs:
        raise ValueError("config must set num_clusters")
    return TrainConfig(**kwargs)


# -- artifact serialization ---------------------------------------------------

_REPORT_KEYS = ("dataset", "n", "nmi", "acc", "ari", "matching", "contingency")


def format_report(report: ClusteringReport, dataset_name: str, n: int) -> str:
    matching = ",".join(f"{p}:{t}" for p, t in sorted(report.matching.items()))
    contingency = ";".join(
        ",".join(str(v) for v in row) for row in report.contingency.tolist()
    )
    values = {
        "dataset": dataset_name,
        "n": n,
        "nmi": repr(report.nmi),
        "acc": repr(report.acc),
        "ari": repr(report.ari),
        "matching": matching,
        "contingency": contingency,
    }
    return "".join(f"{k}={values[k]}\n" for k in _REPORT_KEYS)


def format_history(history: TrainHistory) -> str:
    lines = []
    for rec in history.records:
        parts = [f"epoch={rec.epoch}"]
        for name in (
            "affinity_loss",
            "clustering_loss",
            "total_loss",
            "tau_a",
            "tau_c",
            "mean_inconsistency",
            "cross_affinity_intensity",
            "lr",
        ):
            parts.append(f"{name}={getattr(rec, name)!r}")
        lines.append(" ".join(parts))
    return "".join(line + "\n" for line in lines)


def _fingerprint(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, cfg: TrainConfig, dataset_path, started, outputs):
    manifest = {
        "config": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "dataset": str(dataset_path),
        "dataset_fingerprint": _fingerprint(dataset_path),
        "code_version": __version__,
        "started_at": started,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": {k: str(v) for k, v in outputs.items()},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _evaluate_model(model, ds: Dataset) -> tuple[str, np.ndarray]:
    labels, _ = predict(model, ds.features)
    if ds.labels is None:
        raise ValueError("dataset has no labels to evaluate against")
    report = evaluate(ds.labels, labels)
    return format_report(report, ds.name, ds.n), labels


# -- subcommands --------------------------------------------------------------


def _cmd_gen_dataset(args) -> None:
    ds = gen_dataset(
        args.kind,
        args.n,
        args.noise,
        args.seed,
        k=args.k,
        separation=args.separation,
        dim=args.dim,
    )
    save_dataset(ds, args.out)
    print(f"wrote {args.out} ({ds.n} rows, dim {ds.dim})")


def _train_run(cfg: TrainConfig, ds: Dataset, out_dir: Path, dataset_path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    model, history = fit(ds.features, cfg)
    ckpt = out_dir / "checkpoint.npz"
    from .network import OptimizerState  # local import avoids cycle at module load

    save_checkpoint(ckpt, model, OptimizerState(base_lr=cfg.lr), cfg.epochs, None)
    (out_dir / "history.txt").write_text(format_history(history))
    outputs = {"checkpoint": ckpt, "history": out_dir / "history.txt"}
    if ds.labels is not None:
        text, _ = _evaluate_model(model, ds)
        (out_dir / "report.txt").write_text(text)
        outputs["report"] = out_dir / "report.txt"
        print(text, end="")
    _write_manifest(out_dir, cfg, dataset_path, started, outputs)
    return ckpt


def _cmd_train(args) -> None:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.eta is not None:
        overrides["eta"] = args.eta
    if args.lam is not None:
        overrides["lam"] = args.lam
    if args.sinkhorn_iters is not None:
        overrides["sinkhorn_iters"] = args.sinkhorn_iters
    if args.orth_mode is not None:
        overrides["orth_mode"] = args.orth_mode
    if args.keep_diagonal:
        overrides["keep_diagonal"] = True
    cfg = load_train_config(args.config, overrides)
    ds = load_dataset(args.dataset)
    _train_run(cfg, ds, Path(args.out), args.dataset)


def _cmd_eval(args) -> None:
    model, _, _, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.dataset)
    text, _ = _evaluate_model(model, ds)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(text)
    print(text, end="")


def _cmd_baseline(args) -> None:
    ds = load_dataset(args.dataset)
    if ds.labels is None:
        raise ValueError("baseline evaluation needs a labeled dataset")
    k = args.k if args.k is not None else int(ds.labels.max()) + 1
    if args.method == "kmeans":
        labels, _, _ = kmeans_lloyd(ds.features, k, restarts=args.restarts, seed=args.seed)
    else:
        cfg = SpectralConfig(
            num_clusters=k,
            bandwidth_mode=args.bandwidth_mode,
            sigma=args.sigma,
            k_neighbor=args.k_neighbor,
        )
        labels, _ = classical_spectral(ds.features, cfg, seed=args.seed)
    report = evaluate(ds.labels, labels)
    text = format_report(report, ds.name, ds.n)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(text)
    print(text, end="")


def _cmd_ot_debug(args) -> None:
    cost = np.loadtxt(args.cost, delimiter=",", ndmin=2)
    if args.variant == "algorithm1":
        # the fixed-iteration solver takes similarities; a cost is its negation
        plan = sinkhorn_algorithm1(-cost, args.eta, args.iterations)
    else:
        m, n = cost.shape
        plan, _ = sinkhorn_marginal(
            cost,
            np.full(m, 1.0),
            np.full(n, m / n),
            args.eta,
            tol=args.tol,
            max_iter=args.max_iter,
        )
    for row in plan.plan:
        print(",".join(f"{v:.12g}" for v in row))
    print(f"row_residual={plan.row_marginal_residual!r}", file=sys.stderr)
    print(f"col_residual={plan.col_marginal_residual!r}", file=sys.stderr)
    print(f"iterations_used={plan.iterations_used}", file=sys.stderr)


def _sweep_points(axis: str):
    if axis == "eta":
        return [("eta-%.2f" % v, {"eta": v}) for v in ETA_GRID]
    if axis == "sinkhorn-iters":
        return [(f"isk-{v}", {"sinkhorn_iters": v}) for v in ISK_GRID]
    if axis == "lambda":
        return [("lambda-%.1f" % v, {"lam": v}) for v in LAMBDA_GRID]
    if axis == "orth":
        points = [(f"orth-{m}", {"orth_mode": m}) for m in ("none", "qr", "procrustes")]
        points += [
            ("orth-penalty-%.1f" % rho, {"orth_mode": "penalty", "penalty_rho": rho})
            for rho in RHO_GRID
        ]
        return points
    raise ValueError(f"unknown sweep axis {axis!r}")


def _cmd_ablate(args) -> None:
    cfg = load_train_config(args.config)
    ds = load_dataset(args.dataset)
    out_root = Path(args.out)
    for name, overrides in _sweep_points(args.sweep):
        point_cfg = replace(cfg, **overrides)
        point_dir = out_root / name
        print(f"== sweep point {name}")
        _train_run(point_cfg, ds, point_dir, args.dataset)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="otsc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate a synthetic dataset CSV")
    p.add_argument("--kind", required=True, choices=("moons", "rings", "blobs"))
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=4, help="blob count (blobs only)")
    p.add_argument("--separation", type=float, default=10.0, help="blobs only")
    p.add_argument("--dim", type=int, default=2, help="feature dim (blobs only)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_dataset)

    p = sub.add_parser("train", help="train on a dataset CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--sinkhorn-iters", type=int, default=None)
    p.add_argument("--orth-mode", choices=("procrustes", "qr", "none", "penalty"), default=None)
    p.add_argument("--keep-diagonal", action="store_true")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("baseline", help="run a classical baseline")
    p.add_argument("--method", required=True, choices=("kmeans", "spectral"))
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--bandwidth-mode", choices=("fixed", "self_tuning"), default="self_tuning")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--k-neighbor", type=int, default=7)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("ot-debug", help="solve a transport instance from a cost CSV")
    p.add_argument("--cost", required=True)
    p.add_argument("--eta", type=float, default=0.05)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--variant", choices=("algorithm1", "marginal"), default="algorithm1")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.set_defaults(func=_cmd_ot_debug)

    p = sub.add_parser("ablate", help="run a hyperparameter sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sweep", required=True, choices=("eta", "sinkhorn-iters", "lambda", "orth"))
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except NumericalError as err:
        print(f"numerical abort: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
