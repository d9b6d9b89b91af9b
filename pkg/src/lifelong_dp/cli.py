"""Command line experiment runner.

Verbs::

    lifelong-dp run CONFIG [--set key=value ...] [--seeds 0,1,2] [--output DIR]
    lifelong-dp compare DIR [DIR ...] --output DIR
    lifelong-dp budget CONFIG [--set key=value ...]
    lifelong-dp gen-data SPEC [--output DIR]

Configs are flat YAML mappings whose keys are the fields of
:class:`ExperimentConfig`; unknown keys are rejected. Relative output
directories resolve against ``$LIFELONG_DP_OUTPUT_ROOT`` when it is set.
Exit codes: 0 ok, 1 config or input error, 2 at least one run failed.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data import (generate_multirate_stream, generate_permuted_tasks, load_task_dataset,
                   make_base_dataset, save_task_dataset, TaskDataset)
from .exceptions import (ComparisonError, ConfigurationError, LifelongDPError, ParameterError)
from .metrics import (accuracy_matrix, average_accuracy, average_forgetting, pvalue_curve,
                      write_metrics_csv)
from .model import ModelShape, save_checkpoint
from .privacy import PrivacyConfig, gaussian_baseline_config
from .trainer import TrainConfig, run_budget, train_lifelong, write_step_log

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "LIFELONG_DP_OUTPUT_ROOT"
GENERATORS = ("permuted", "multirate", "files")
DATA_KEYS = ("name", "generator", "n_tasks", "n_train", "n_test", "n_features", "n_classes",
             "class_sep", "data_seed", "rates", "sizes", "channels", "data_dir", "task_order",
             "output_dir")
METRIC_FIELDS = ("run_id", "tau", "avg_accuracy", "avg_forgetting")

EXIT_OK, EXIT_CONFIG, EXIT_RUN = 0, 1, 2


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    # dataset
    generator: str = "permuted"
    n_tasks: int = 5
    n_train: int = 2000
    n_test: int = 500
    n_features: int = 64
    n_classes: int = 10
    class_sep: float = 2.0
    data_seed: int = 0
    rates: list = field(default_factory=lambda: [20.0, 5.0, 10.0, 50.0])
    sizes: list = field(default_factory=lambda: [88, 755, 62, 1560])
    channels: int = 3
    data_dir: str | None = None
    task_order: list | None = None
    # privacy
    mechanism: str = "l2dp"
    eps1: float = 0.1
    eps2: float = 0.1
    delta: float = 0.0
    theta1_column_norm_bound: float = 1.0
    target_epsilon: float | None = None
    noise_multiplier: float | None = None
    clip_bound: float | None = None
    # model and training
    h1_size: int = 32
    hidden_sizes: list = field(default_factory=lambda: [64])
    learning_rate: float = 1e-3
    batch_size: int | None = 100
    epochs_per_task: int | list = 1
    balanced_steps: int | None = None
    projection_mode: str = "always"
    loss_form: str = "taylor"
    # protocol
    repeat: int = 10
    seeds: list | None = None
    output_dir: str = "runs"
    workers: int = 1

    def seed_list(self) -> list:
        return list(self.seeds) if self.seeds is not None else list(range(self.repeat))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of the fields that affect numeric results."""
        d = self.to_dict()
        for k in ("output_dir", "workers", "repeat", "seeds"):
            d.pop(k)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    def privacy(self) -> PrivacyConfig:
        return PrivacyConfig(self.eps1, self.eps2, self.delta, self.theta1_column_norm_bound)

    def train_config(self, seed: int) -> TrainConfig:
        z, clip = self.noise_multiplier, self.clip_bound
        if self.mechanism == "naive-gaussian":
            override = None if z is None and clip is None else (z, clip)
            z, clip = gaussian_baseline_config(self.target_epsilon, override)
        epochs = self.epochs_per_task
        return TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                           epochs_per_task=epochs if np.isscalar(epochs) else list(epochs),
                           balanced_steps=self.balanced_steps,
                           projection_mode=self.projection_mode, mechanism=self.mechanism,
                           seed=int(seed), noise_multiplier=z, clip_bound=clip,
                           target_epsilon=self.target_epsilon, loss_form=self.loss_form)


_NUM = (int, float)
FIELD_TYPES = {
    "name": (str,), "generator": (str,), "n_tasks": (int,), "n_train": (int,),
    "n_test": (int,), "n_features": (int,), "n_classes": (int,), "class_sep": _NUM,
    "data_seed": (int,), "rates": (list,), "sizes": (list,), "channels": (int,),
    "data_dir": (str, type(None)), "task_order": (list, type(None)), "mechanism": (str,),
    "eps1": _NUM, "eps2": _NUM, "delta": _NUM, "theta1_column_norm_bound": _NUM,
    "target_epsilon": _NUM + (type(None),), "noise_multiplier": _NUM + (type(None),),
    "clip_bound": _NUM + (type(None),), "h1_size": (int,), "hidden_sizes": (list,),
    "learning_rate": _NUM, "batch_size": (int, type(None)), "epochs_per_task": (int, list),
    "balanced_steps": (int, type(None)), "projection_mode": (str,), "loss_form": (str,),
    "repeat": (int,), "seeds": (list, type(None)), "output_dir": (str,), "workers": (int,),
}


def _check_type(key, value, where):
    allowed = FIELD_TYPES[key]
    if isinstance(value, bool) or not isinstance(value, allowed):
        names = "/".join("null" if t is type(None) else t.__name__ for t in allowed)
        raise ConfigurationError(f"{where}: field {key!r} expects {names}, got {value!r}")


def _load_mapping(text: str, source: str) -> list:
    """(key, value, line) triples of a flat YAML mapping."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ConfigurationError(f"{loc}: {getattr(exc, 'problem', exc)}") from None
    if node is None:
        return []
    if not isinstance(node, yaml.MappingNode):
        raise ConfigurationError(f"{source}: top level must be a key: value mapping")
    out = []
    loader = yaml.SafeLoader("")
    for key_node, value_node in node.value:
        line = key_node.start_mark.line + 1
        out.append((loader.construct_object(key_node, deep=True),
                    loader.construct_object(value_node, deep=True), line))
    return out


def parse_config(text: str, source: str = "<config>", overrides=(), allowed=None) -> ExperimentConfig:
    """Build and validate an ExperimentConfig; errors name the file, line and field."""
    allowed = set(FIELD_TYPES) if allowed is None else set(allowed)
    values, seen = {}, {}
    entries = _load_mapping(text, source) + [(k, v, None) for k, v in overrides]
    for key, value, line in entries:
        where = f"{source}:{line}" if line is not None else "--set"
        if key not in allowed:
            raise ConfigurationError(f"{where}: unknown key {key!r}")
        if key in seen and line is not None:
            raise ConfigurationError(f"{where}: duplicate key {key!r} (first on line {seen[key]})")
        _check_type(key, value, where)
        seen[key] = line
        values[key] = value
    cfg = ExperimentConfig(**values)
    validate_config(cfg, source)
    return cfg


def validate_config(cfg: ExperimentConfig, source: str = "<config>") -> None:
    def bad(key, msg):
        raise ConfigurationError(f"{source}: field {key!r}: {msg}")

    if cfg.generator not in GENERATORS:
        bad("generator", f"must be one of {GENERATORS}")
    if cfg.generator == "files" and not cfg.data_dir:
        bad("data_dir", "required when generator is 'files'")
    if cfg.generator == "multirate" and len(cfg.rates) != len(cfg.sizes):
        bad("sizes", "needs one size per rate")
    for key in ("n_tasks", "n_train", "n_test", "n_features", "n_classes", "h1_size",
                "repeat", "workers", "channels"):
        if getattr(cfg, key) < 1:
            bad(key, "must be >= 1")
    if not cfg.hidden_sizes or any(not isinstance(h, int) or h < 1 for h in cfg.hidden_sizes):
        bad("hidden_sizes", "must be a non-empty list of positive integers")
    if cfg.seeds is not None and (not cfg.seeds or any(not isinstance(s, int) for s in cfg.seeds)):
        bad("seeds", "must be a non-empty list of integers")
    if cfg.task_order is not None:
        expected = {"permuted": list(range(cfg.n_tasks)), "multirate": sorted(cfg.rates)}.get(
            cfg.generator)
        if expected is not None and sorted(cfg.task_order) != sorted(expected):
            bad("task_order", f"must be a permutation of {expected}")
    if cfg.mechanism == "naive-gaussian" and cfg.target_epsilon is None:
        bad("target_epsilon", "required for naive-gaussian")
    try:
        cfg.privacy()
        cfg.train_config(0)
    except LifelongDPError as exc:
        raise ConfigurationError(f"{source}: {exc}") from None


def read_config(path, overrides=(), allowed=None) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path), overrides, allowed)


def resolve_output(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


# --- data ------------------------------------------------------------------------

def build_tasks(cfg: ExperimentConfig) -> list:
    if cfg.generator == "permuted":
        n = cfg.n_tasks * (cfg.n_train + cfg.n_test)
        X, y = make_base_dataset(n, cfg.n_features, cfg.n_classes, cfg.class_sep, cfg.data_seed)
        tasks = generate_permuted_tasks(X, y, cfg.n_tasks, cfg.n_train, cfg.n_test,
                                        seed=cfg.data_seed, n_classes=cfg.n_classes)
        order = cfg.task_order or list(range(len(tasks)))
        return [tasks[i] for i in order]
    if cfg.generator == "multirate":
        tasks = generate_multirate_stream(rates=tuple(cfg.rates), n_classes=cfg.n_classes,
                                          sizes=tuple(cfg.sizes), seed=cfg.data_seed,
                                          channels=cfg.channels)
        if not cfg.task_order:
            return tasks
        by_rate = {float(r): t for r, t in zip(cfg.rates, tasks)}
        return [by_rate[float(r)] for r in cfg.task_order]
    return load_task_dir(cfg.data_dir, cfg.task_order)


def load_task_dir(data_dir, order=None) -> list:
    root = resolve_output(data_dir)
    trains = sorted(root.glob("task_*_train.ldpd"))
    if not trains:
        raise ConfigurationError(f"{root}: no task_*_train.ldpd files")
    tasks = []
    for path in trains:
        train = load_task_dataset(path)
        test = load_task_dataset(str(path).replace("_train.ldpd", "_test.ldpd"))
        tasks.append(TaskDataset(train.inputs, train.labels, train.task_id,
                                 test_inputs=test.inputs, test_labels=test.labels,
                                 provenance={"generator": "files", "path": str(path)}))
    return [tasks[i] for i in order] if order else tasks


def write_tasks(tasks, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, task in enumerate(tasks):
        save_task_dataset(task, out_dir / f"task_{i:02d}_train.ldpd")
        test = TaskDataset(task.test_inputs, task.test_labels, task.task_id)
        save_task_dataset(test, out_dir / f"task_{i:02d}_test.ldpd")


# --- runs --------------------------------------------------------------------------

def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_accuracy_matrix(A, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tau"] + [f"t{t}" for t in range(1, A.m + 1)])
        for tau in range(1, A.m + 1):
            writer.writerow([tau] + ["" if np.isnan(v) else repr(float(v))
                                     for v in A.values[tau - 1]])


def metric_rows(A, run_id: str) -> list:
    return [{"run_id": run_id, "tau": tau, "avg_accuracy": average_accuracy(A, tau),
             "avg_forgetting": None if tau < 2 else average_forgetting(A, tau)}
            for tau in range(1, A.m + 1)]


def run_seed(cfg_dict: dict, seed: int, out_dir: str) -> dict:
    """Train and evaluate one seed; never raises for numeric or data failures."""
    cfg = ExperimentConfig(**cfg_dict)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run_id = f"{cfg.name}-seed{seed}"
    manifest = {"run_id": run_id, "seed": seed, "config_hash": cfg.config_hash(),
                "version": __version__, "status": "ok"}
    try:
        tasks = build_tasks(cfg)
        shape = ModelShape(tasks[0].d, cfg.h1_size, tuple(cfg.hidden_sizes), tasks[0].K)
        with np.errstate(over="raise", invalid="raise"):
            res = train_lifelong(tasks, shape, cfg.privacy(), cfg.train_config(seed), run_id)
        A = accuracy_matrix(res.releases, tasks)
        _write_accuracy_matrix(A, out / "accuracy_matrix.csv")
        write_metrics_csv(metric_rows(A, run_id), out / "metrics.csv", METRIC_FIELDS)
        (out / "budget.csv").write_text(res.budget.to_csv())
        res.memory.write_manifest(out / "memory_manifest.csv")
        write_step_log(res.log, out / "step_log.csv")
        ckpt = out / "checkpoints"
        ckpt.mkdir(exist_ok=True)
        for tau, params in enumerate(res.releases, start=1):
            save_checkpoint(params, ckpt / f"release_{tau:02d}.npz")
        manifest["noise_digest"] = res.noise.digest() if res.noise is not None else ""
    except (LifelongDPError, ArithmeticError) as exc:
        logger.error("run %s failed: %s", run_id, exc)
        manifest["status"] = "failed"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    _write_json(out / "manifest.json", manifest)
    return manifest


def _read_metrics(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _mean_std(values) -> tuple:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1)) if v.size > 1 else 0.0


def aggregate(run_dirs, out_path: Path) -> list:
    """Mean and std across seeds of each metric per tau."""
    per_run = [_read_metrics(d / "metrics.csv") for d in run_dirs]
    rows = []
    if not per_run:
        return rows
    for i in range(len(per_run[0])):
        acc = [float(r[i]["avg_accuracy"]) for r in per_run]
        fg = [float(r[i]["avg_forgetting"]) for r in per_run if r[i]["avg_forgetting"] != ""]
        acc_m, acc_s = _mean_std(acc)
        fg_m, fg_s = _mean_std(fg) if fg else (None, None)
        rows.append({"tau": i + 1, "avg_accuracy_mean": acc_m, "avg_accuracy_std": acc_s,
                     "avg_forgetting_mean": fg_m, "avg_forgetting_std": fg_s,
                     "n_runs": len(per_run)})
    write_metrics_csv(rows, out_path, list(rows[0]))
    return rows


def run_experiment(cfg: ExperimentConfig, out_dir: Path | None = None) -> int:
    out = out_dir or resolve_output(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    seeds = cfg.seed_list()
    jobs = [(cfg.to_dict(), s, str(out / f"seed_{s}")) for s in seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            manifests = list(pool.map(run_seed, *zip(*jobs)))
    else:
        manifests = [run_seed(*job) for job in jobs]
    ok = [out / f"seed_{m['seed']}" for m in manifests if m["status"] == "ok"]
    aggregate(ok, out / "summary.csv")
    budget = run_budget(*_budget_inputs(cfg)).as_record()
    _write_json(out / "manifest.json", {
        "name": cfg.name, "mechanism": cfg.mechanism, "config_hash": cfg.config_hash(),
        "version": __version__, "budget": budget,
        "runs": [{"seed": m["seed"], "status": m["status"], "dir": f"seed_{m['seed']}"}
                 for m in manifests]})
    failed = [m["seed"] for m in manifests if m["status"] != "ok"]
    if failed:
        logger.error("seeds failed: %s", failed)
        return EXIT_RUN
    return EXIT_OK


def _task_sizes(cfg: ExperimentConfig) -> list:
    if cfg.generator == "permuted":
        return [cfg.n_train] * cfg.n_tasks
    if cfg.generator == "multirate":
        return [int(s) for s in cfg.sizes]
    return [len(t.inputs) for t in load_task_dir(cfg.data_dir, cfg.task_order)]


def _budget_inputs(cfg: ExperimentConfig) -> tuple:
    sizes = _task_sizes(cfg)
    d = cfg.n_features if cfg.generator == "permuted" else None
    if d is None:
        d = (100 * cfg.channels if cfg.generator == "multirate"
             else load_task_dir(cfg.data_dir)[0].d)
    shape = ModelShape(d, cfg.h1_size, tuple(cfg.hidden_sizes), cfg.n_classes)
    return shape, cfg.privacy(), cfg.train_config(0), sizes


# --- compare ---------------------------------------------------------------------------

def _load_experiment(path: Path) -> dict:
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except (OSError, ValueError) as exc:
        raise ComparisonError(f"{path}: not an experiment directory ({exc})") from None
    runs = [path / r["dir"] for r in manifest["runs"] if r["status"] == "ok"]
    if not runs:
        raise ComparisonError(f"{path}: no successful runs")
    metrics = [_read_metrics(r / "metrics.csv") for r in runs]
    curves = np.array([[float(row["avg_accuracy"]) for row in m] for m in metrics])
    final_fg = [float(m[-1]["avg_forgetting"]) for m in metrics if m[-1]["avg_forgetting"] != ""]
    return {"name": manifest["name"], "mechanism": manifest["mechanism"],
            "epsilon": manifest["budget"]["total_epsilon"], "curves": curves,
            "forgetting": final_fg}


def compare_runs(dirs, out_dir: Path) -> dict:
    """Forgetting table, mean accuracy curves and pairwise p-value curves."""
    if not dirs:
        raise ParameterError("compare needs at least one run directory")
    exps = [_load_experiment(Path(d)) for d in dirs]
    m = exps[0]["curves"].shape[1]
    for d, e in zip(dirs, exps):
        if e["curves"].shape[1] != m:
            raise ComparisonError(f"{d}: {e['curves'].shape[1]} tasks, expected {m}")
    labels, used = [], {}
    for e in exps:
        k = used.get(e["name"], 0)
        used[e["name"]] = k + 1
        labels.append(e["name"] if k == 0 else f"{e['name']}#{k + 1}")
    out_dir.mkdir(parents=True, exist_ok=True)

    table = []
    for label, e in zip(labels, exps):
        fm, fs = _mean_std(e["forgetting"]) if e["forgetting"] else (None, None)
        table.append({"label": label, "mechanism": e["mechanism"], "epsilon": e["epsilon"],
                      "forgetting_mean": fm, "forgetting_std": fs, "n_runs": len(e["curves"])})
    write_metrics_csv(table, out_dir / "forgetting_table.csv", list(table[0]))

    curves, means = [], []
    for label, e in zip(labels, exps):
        mean = e["curves"].mean(axis=0)
        std = e["curves"].std(axis=0, ddof=1) if len(e["curves"]) > 1 else np.zeros(m)
        means.append(mean)
        curves += [{"label": label, "i": i + 1, "avg_accuracy_mean": float(mean[i]),
                    "avg_accuracy_std": float(std[i])} for i in range(m)]
    write_metrics_csv(curves, out_dir / "curves.csv", list(curves[0]))

    pvals = []
    for a in range(len(exps)):
        for b in range(a + 1, len(exps)):
            for i, p in enumerate(pvalue_curve(list(means[a]), list(means[b])), start=1):
                pvals.append({"label_a": labels[a], "label_b": labels[b], "i": i, "p_value": p})
    if pvals:
        write_metrics_csv(pvals, out_dir / "pvalues.csv", list(pvals[0]))
    return {"table": table, "curves": curves, "pvalues": pvals}


# --- entry point -------------------------------------------------------------------------

def _parse_set(items) -> list:
    out = []
    for item in items or ():
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigurationError(f"--set expects key=value, got {item!r}")
        try:
            out.append((key.strip(), yaml.safe_load(raw)))
        except yaml.YAMLError:
            raise ConfigurationError(f"--set {key}: cannot parse value {raw!r}") from None
    return out


def _number_list(text: str) -> list:
    vals = [yaml.safe_load(v) for v in text.split(",") if v.strip()]
    if not vals or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in vals):
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}")
    return vals


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lifelong-dp", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def overrides(p):
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--seeds", type=_number_list, help="comma separated seeds")
        p.add_argument("--task-order", type=_number_list, help="e.g. 50,20,10,5")
        p.add_argument("--output", help="output directory")

    p = sub.add_parser("run", help="train and evaluate every seed of an experiment")
    p.add_argument("config")
    overrides(p)
    p.add_argument("--workers", type=int)

    p = sub.add_parser("budget", help="print the privacy budget without training")
    p.add_argument("config")
    overrides(p)

    p = sub.add_parser("compare", help="compare finished experiments")
    p.add_argument("dirs", nargs="*")
    p.add_argument("--output", required=True)

    p = sub.add_parser("gen-data", help="write generated tasks to disk")
    p.add_argument("spec")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--output")
    return parser


def _collect_overrides(args) -> list:
    items = _parse_set(args.set)
    if getattr(args, "seeds", None):
        items.append(("seeds", [int(s) for s in args.seeds]))
    if getattr(args, "task_order", None):
        items.append(("task_order", args.task_order))
    if getattr(args, "output", None):
        items.append(("output_dir", args.output))
    if getattr(args, "workers", None):
        items.append(("workers", args.workers))
    return items


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = read_config(args.config, _collect_overrides(args))
            return run_experiment(cfg)
        if args.command == "budget":
            cfg = read_config(args.config, _collect_overrides(args))
            sys.stdout.write(run_budget(*_budget_inputs(cfg)).to_csv())
            return EXIT_OK
        if args.command == "compare":
            compare_runs(args.dirs, resolve_output(args.output))
            return EXIT_OK
        cfg = read_config(args.spec, _collect_overrides(args), allowed=DATA_KEYS)
        if cfg.generator == "files":
            raise ConfigurationError(f"{args.spec}: gen-data needs a synthetic generator")
        write_tasks(build_tasks(cfg), resolve_output(cfg.output_dir))
        return EXIT_OK
    except (ConfigurationError, ParameterError, ComparisonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except LifelongDPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUN


if __name__ == "__main__":
    sys.exit(main())
