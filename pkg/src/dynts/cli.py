"""Command-line entry point: ``dynts {decay,run,model-select,reproduce}``.

Configuration is TOML.  Precedence for the shared flags is command line, then
``DYNTS_*`` environment variables, then the config file, then built-in
defaults.  Every output file is a pure function of the effective config, so
reruns are byte-identical regardless of ``--threads``.
"""
from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .decay import DriftSchedule, classify_rate, decay_table, log_spaced_steps
from .experiments import Arm, compare, replicate_seeds, select_schedule, standard_arms
from .policies import PolicyConfig
from .simulator import EnvironmentSpec, ExperimentRecord, ModelSelectionPlan, aggregate, default_grid

ENV_PREFIX = "DYNTS_"
STEP_COLUMNS = ("t", "arm", "theta_hat", "theta_star", "reward_ratio", "avg_regret")
DECAY_COLUMNS = ("T", "lambda", "asymptote", "ratio", "lower_bound")
CURVE_COLUMNS = ("curve", "t", "reward_ratio_mean", "reward_ratio_se", "avg_regret_mean", "avg_regret_se")
SELECTION_COLUMNS = ("family", "eta", "p", "train_mean", "train_se", "heldout_mean")
FIGURES = ("decay_rates", "stationary", "nonstationary")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config


def _default_tree() -> dict:
    return {
        "seed": 0,
        "n_seeds": 20,
        "threads": 1,
        "environment": EnvironmentSpec.stationary().to_dict(),
        "policy": PolicyConfig().to_dict(),
        "inference": {
            "drift": DriftSchedule.power(0.01, 1.0).to_dict(),
            "prior_scale": 1.0,
            "n_iter": 1,
            "dim": 0,
        },
        "model_select": {
            "n_datasets": 6,
            "n_train": 5,
            "etas": [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0],
            "powers": [1.0, 2.0],
            "metric": "estimated",
        },
        "decay": {"family": "power", "eta": 1.0, "p": 2.0, "gamma": 1.0, "t_max": 1_000_000, "n_points": 50},
    }


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict) and key != "drift":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a table")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    environment: EnvironmentSpec
    policy: PolicyConfig
    inference_drift: DriftSchedule
    prior_scale: float = 1.0
    n_iter: int = 1
    dim: int = 0  # 0 means "same as the environment"
    seed: int = 0
    n_seeds: int = 20
    threads: int = 1
    selection: ModelSelectionPlan = field(default_factory=ModelSelectionPlan)
    selection_metric: str = "estimated"
    decay: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @classmethod
    def from_tree(cls, tree: dict) -> "ExperimentConfig":
        tree = _merge(_default_tree(), tree)
        ms = tree["model_select"]
        try:
            return cls(
                environment=EnvironmentSpec.from_dict(tree["environment"]),
                policy=PolicyConfig.from_dict(tree["policy"]),
                inference_drift=DriftSchedule.from_dict(tree["inference"]["drift"]),
                prior_scale=float(tree["inference"]["prior_scale"]),
                n_iter=int(tree["inference"]["n_iter"]),
                dim=int(tree["inference"]["dim"]),
                seed=int(tree["seed"]),
                n_seeds=int(tree["n_seeds"]),
                threads=int(tree["threads"]),
                selection=ModelSelectionPlan(
                    int(ms["n_datasets"]),
                    int(ms["n_train"]),
                    tuple(default_grid(tuple(ms["etas"]), tuple(ms["powers"]))),
                ),
                selection_metric=str(ms["metric"]),
                decay=dict(tree["decay"]),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    def to_tree(self) -> dict:
        """Effective settings; ``threads`` is left out as it cannot change any result."""
        grid = self.selection.grid
        return {
            "seed": self.seed,
            "n_seeds": self.n_seeds,
            "environment": self.environment.to_dict(),
            "policy": self.policy.to_dict(),
            "inference": {
                "drift": self.inference_drift.to_dict(),
                "prior_scale": self.prior_scale,
                "n_iter": self.n_iter,
                "dim": self.dim,
            },
            "model_select": {
                "n_datasets": self.selection.n_datasets,
                "n_train": self.selection.n_train,
                "etas": sorted({g.eta for g in grid}),
                "powers": sorted({g.p for g in grid}),
                "metric": self.selection_metric,
            },
            "decay": dict(self.decay),
        }

    @property
    def run_kw(self) -> dict:
        return {"prior_scale": self.prior_scale, "n_iter": self.n_iter, "dim": self.dim or None}


def load_tree(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc.strerror}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path!r}: {exc}") from exc


def resolve_config(args: argparse.Namespace, base: Optional[dict] = None) -> ExperimentConfig:
    tree = _merge(_default_tree(), base or {})
    tree = _merge(tree, load_tree(args.config))
    for key in ("seed", "n_seeds", "threads"):
        value = getattr(args, key, None)
        if value is not None:
            tree[key] = value
    return ExperimentConfig.from_tree(tree)


# ---------------------------------------------------------------- output


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, str)):
        return str(value)
    if isinstance(value, int) or (hasattr(value, "dtype") and value.dtype.kind in "iu"):
        return str(int(value))
    return format(float(value), ".17g")


def render_csv(columns: Sequence[str], rows, header_line: Optional[str] = None) -> str:
    buf = io.StringIO()
    if header_line is not None:
        buf.write(header_line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def render_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


class Writer:
    """Collects artifacts in memory, then writes them all at once."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def flush(self) -> list[Path]:
        self.out.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in self.files.items():
            path = self.out / name
            path.write_text(text, encoding="utf-8")
            paths.append(path)
        return paths


def step_rows(rec: ExperimentRecord):
    ratio, regret = rec.reward_ratio, rec.avg_regret
    for i in range(rec.horizon):
        yield i + 1, rec.arms[i], rec.theta_hat[i], rec.theta_star[i], ratio[i], regret[i]


def curve_rows(results: dict[str, list[ExperimentRecord]]):
    for label, records in results.items():
        s = aggregate(records)
        for i in range(s.mean_reward.size):
            yield label, i + 1, s.mean_reward[i], s.se_reward[i], s.mean_regret[i], s.se_regret[i]


def results_summary(results: dict[str, list[ExperimentRecord]]) -> dict:
    out = {}
    for label, records in results.items():
        r0 = records[0]
        out[label] = {
            "policy": r0.policy,
            "inference_drift": r0.inference_drift,
            **aggregate(records).final,
            "true_reward_ratio_mean": sum(r.true_reward_ratio for r in records) / len(records),
            "per_seed": [r.summary() for r in records],
        }
    return out


def seed_table(cfg: ExperimentConfig) -> list[dict]:
    return [
        dict(zip(("replicate", "dataset_seed", "policy_seed"), (k, *replicate_seeds(cfg.seed, k))))
        for k in range(cfg.n_seeds)
    ]


def selection_rows(result):
    for g, sched in enumerate(result.grid):
        train = result.train_rewards[g]
        se = float(train.std(ddof=1) / math.sqrt(train.size)) if train.size > 1 else 0.0
        yield sched.family, sched.eta, sched.p, float(train.mean()), se, float(result.heldout_rewards[g].mean())


def selection_summary(result) -> dict:
    best = result.best_index
    held = result.heldout_rewards.mean(axis=1)
    return {
        "selected": result.best.to_dict(),
        "selected_label": result.best.label(),
        "selected_train_mean": float(result.mean_train[best]),
        "selected_heldout": float(held[best]),
        "best_heldout": float(held.max()),
        "best_heldout_schedule": result.grid[int(held.argmax())].to_dict(),
        "dataset_seeds": [int(s) for s in result.dataset_seeds],
    }


# ---------------------------------------------------------------- commands


def decay_schedule(spec: dict) -> DriftSchedule:
    family = spec.get("family")
    eta, p, gamma = (float(spec.get(k, d)) for k, d in (("eta", 1.0), ("p", 2.0), ("gamma", 1.0)))
    if family == "static":
        return DriftSchedule.static()
    if family == "constant":
        return DriftSchedule.constant(eta)
    if family == "power":
        return DriftSchedule.power(eta, p)
    if family == "exponential":
        return DriftSchedule.exponential(eta, gamma)
    raise ConfigError(f"unknown decay family {family!r}")


def decay_csv(schedule: DriftSchedule, t_max: int, n_points: int) -> str:
    rate = classify_rate(schedule)
    rows = decay_table(schedule, log_spaced_steps(int(t_max), int(n_points)))
    header = "# " + json.dumps(rate.to_dict(), allow_nan=False)
    return render_csv(DECAY_COLUMNS, ([r[c] for c in DECAY_COLUMNS] for r in rows), header)


def cmd_decay(args: argparse.Namespace) -> Writer:
    tree = _merge(_default_tree()["decay"], load_tree(args.config).get("decay", {}), "decay.")
    for key in ("family", "eta", "p", "gamma", "t_max", "n_points"):
        value = getattr(args, key)
        if value is not None:
            tree[key] = value
    if float(tree["t_max"]) != int(float(tree["t_max"])):
        raise ConfigError("t_max must be an integer")
    schedule = decay_schedule(tree)
    w = Writer(Path(args.out))
    w.add("decay.csv", decay_csv(schedule, int(float(tree["t_max"])), int(tree["n_points"])))
    return w


def cmd_run(args: argparse.Namespace) -> Writer:
    cfg = resolve_config(args)
    arm = Arm(cfg.policy.kind, cfg.policy, cfg.inference_drift)
    results = compare(cfg.environment, [arm], cfg.seed, cfg.n_seeds, cfg.threads, **cfg.run_kw)
    w = Writer(Path(args.out))
    for k, rec in enumerate(results[arm.label]):
        w.add(f"steps_seed{k:03d}.csv", render_csv(STEP_COLUMNS, step_rows(rec)))
    w.add(
        "summary.json",
        render_json({"config": cfg.to_tree(), "seeds": seed_table(cfg), "results": results_summary(results)}),
    )
    return w


def cmd_model_select(args: argparse.Namespace) -> Writer:
    cfg = resolve_config(args)
    result = select_schedule(
        cfg.environment, cfg.selection, cfg.policy, cfg.seed, metric=cfg.selection_metric, **cfg.run_kw
    )
    w = Writer(Path(args.out))
    w.add("model_select.csv", render_csv(SELECTION_COLUMNS, selection_rows(result)))
    w.add("model_select.json", render_json({"config": cfg.to_tree(), **selection_summary(result)}))
    return w


FIGURE_BASE = {
    "stationary": {"environment": EnvironmentSpec.stationary().to_dict()},
    "nonstationary": {"environment": EnvironmentSpec.nonstationary().to_dict()},
}
DECAY_CURVES = [DriftSchedule.power(1.0, p) for p in (-1.0, 0.0, 0.5, 1.0, 2.0)] + [
    DriftSchedule.exponential(1.0, g) for g in (0.5, 1.0, 2.0)
]


def decay_file_name(s: DriftSchedule) -> str:
    tag = f"p{s.p:g}" if s.family == "power" else f"gamma{s.gamma:g}"
    return f"decay_{s.family}_{tag}.csv"


def cmd_reproduce(args: argparse.Namespace) -> Writer:
    if args.figure not in FIGURES:
        raise ConfigError(f"unknown figure id {args.figure!r}; choose from {', '.join(FIGURES)}")
    w = Writer(Path(args.out))
    if args.figure == "decay_rates":
        tree = _merge(_default_tree()["decay"], load_tree(args.config).get("decay", {}), "decay.")
        for s in DECAY_CURVES:
            w.add(decay_file_name(s), decay_csv(s, int(float(tree["t_max"])), int(tree["n_points"])))
        return w

    cfg = resolve_config(args, FIGURE_BASE[args.figure])
    thompson = PolicyConfig("thompson")
    selection = select_schedule(
        cfg.environment, cfg.selection, thompson, cfg.seed, metric=cfg.selection_metric, **cfg.run_kw
    )
    w.add("model_select.csv", render_csv(SELECTION_COLUMNS, selection_rows(selection)))
    # stationary curves use the configured schedule; non-stationary ones use the selected one
    drift = cfg.inference_drift if args.figure == "stationary" else selection.best
    arms = standard_arms(drift, epsilon=cfg.policy.epsilon, c=cfg.policy.c)
    results = compare(cfg.environment, arms, cfg.seed, cfg.n_seeds, cfg.threads, **cfg.run_kw)
    w.add("curves.csv", render_csv(CURVE_COLUMNS, curve_rows(results)))
    w.add(
        "summary.json",
        render_json(
            {
                "figure": args.figure,
                "config": cfg.to_tree(),
                "inference_drift": drift.to_dict(),
                "model_select": selection_summary(selection),
                "seeds": seed_table(cfg),
                "results": results_summary(results),
            }
        ),
    )
    return w


# ---------------------------------------------------------------- parser


def _env(name: str, cast=str):
    raw = os.environ.get(ENV_PREFIX + name)
    if raw is None or raw == "":
        return None
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {ENV_PREFIX + name}: {raw!r}") from exc


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dynts", description="Dynamic logistic bandits with Thompson sampling.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seeds=True):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory (default: current directory)")
        if seeds:
            p.add_argument("--seed", type=_u64, help="master seed")
            p.add_argument("--seeds", dest="n_seeds", type=_positive, help="number of replicates")
            p.add_argument("--threads", type=_positive, help="worker threads")

    p = sub.add_parser("decay", help="cumulative discount curve and its rate class")
    common(p, seeds=False)
    p.add_argument("--family", choices=("static", "constant", "power", "exponential"))
    p.add_argument("--eta", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--t-max", dest="t_max", type=float)
    p.add_argument("--n-points", dest="n_points", type=_positive)
    p.set_defaults(handler=cmd_decay)

    p = sub.add_parser("run", help="replicated bandit experiment")
    common(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("model-select", help="grid search over inference drift schedules")
    common(p)
    p.set_defaults(handler=cmd_model_select)

    p = sub.add_parser("reproduce", help="plot-ready data for a canned figure")
    p.add_argument("figure", help=f"one of: {', '.join(FIGURES)}")
    common(p)
    p.set_defaults(handler=cmd_reproduce)
    return parser


def apply_env(args: argparse.Namespace):
    for attr, name, cast in (
        ("config", "CONFIG", str),
        ("out", "OUT", str),
        ("seed", "SEED", _u64),
        ("n_seeds", "SEEDS", _positive),
        ("threads", "THREADS", _positive),
    ):
        if hasattr(args, attr) and getattr(args, attr) is None:
            try:
                setattr(args, attr, _env(name, cast))
            except argparse.ArgumentTypeError as exc:
                raise ConfigError(f"{ENV_PREFIX + name}: {exc}") from exc
    if args.out is None:
        args.out = "."


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        apply_env(args)
        writer = args.handler(args)
        paths = writer.flush()
    except (ValueError, OSError) as exc:
        print(f"dynts {args.command}: error: {exc}", file=sys.stderr)
        return 2
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
