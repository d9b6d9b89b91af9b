"""Lifelong training loops: L2DP-ML, noiseless A-gem and the NaiveGaussian baseline."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import (DataError, DegenerateReferenceError, NumericError, ParameterError,
                         UsageError)
from .memory import (BatchPartition, EpisodicMemory, append_task_memory, partition,
                     sample_reference)
from .model import (L_QUADRATIC, ModelParams, ModelShape, PerturbedDataset, _classifier,
                    clip_theta1_columns, encode, init_params, joint_gradient, objective_L_polynomial,
                    objective_R_polynomial, per_example_gradients, perturb_dataset)
from .privacy import (BudgetReport, NoiseBundle, PrivacyConfig, compute_sensitivities,
                      draw_noise, lifelong_budget, naive_budget)

logger = logging.getLogger(__name__)

MECHANISMS = ("l2dp", "naive-gaussian", "noiseless-agem")
PROJECTION_MODES = ("always", "on-violation")
STEP_LOG_FIELDS = ("run_id", "task", "epoch", "step", "loss_R", "loss_L", "projected", "grad_norm")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int | None = 100  # None trains on the whole task per step
    epochs_per_task: int | Sequence[int] = 1
    balanced_steps: int | None = None
    projection_mode: str = "always"
    mechanism: str = "l2dp"
    seed: int = 0
    noise_multiplier: float | None = None  # NaiveGaussian z
    clip_bound: float | None = None  # NaiveGaussian C
    target_epsilon: float | None = None  # NaiveGaussian per-task budget, reporting only
    loss_form: str = "taylor"

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ParameterError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        epochs = ([self.epochs_per_task] if np.isscalar(self.epochs_per_task)
                  else list(self.epochs_per_task))
        if not epochs or min(epochs) < 1:
            raise ParameterError(f"epochs must be >= 1 per task, got {self.epochs_per_task}")
        if self.balanced_steps is not None and self.balanced_steps < 1:
            raise ParameterError("balanced_steps must be >= 1")
        if self.projection_mode not in PROJECTION_MODES:
            raise ParameterError(f"projection_mode must be one of {PROJECTION_MODES}")
        if self.loss_form not in L_QUADRATIC:
            raise ParameterError(f"loss_form must be one of {list(L_QUADRATIC)}")
        if self.mechanism not in MECHANISMS:
            raise ParameterError(f"mechanism must be one of {MECHANISMS}")
        if self.mechanism == "naive-gaussian":
            if self.noise_multiplier is None or self.clip_bound is None:
                raise ParameterError("naive-gaussian needs noise_multiplier and clip_bound")
            if self.noise_multiplier < 0 or self.clip_bound <= 0:
                raise ParameterError("naive-gaussian needs z >= 0 and C > 0")


@dataclass
class StepRecord:
    run_id: str
    task: int
    epoch: int
    step: int
    loss_R: float
    loss_L: float
    projected: int
    grad_norm: float
    noise_digest: str = ""
    reference: tuple | None = None  # (task_id, batch_id) of the memory entry used

    def row(self) -> dict:
        return {k: getattr(self, k) for k in STEP_LOG_FIELDS}


def write_step_log(records: Sequence[StepRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=STEP_LOG_FIELDS)
        writer.writeheader()
        for rec in records:
            row = rec.row()
            row["loss_R"] = repr(float(row["loss_R"]))
            row["loss_L"] = repr(float(row["loss_L"]))
            row["grad_norm"] = repr(float(row["grad_norm"]))
            writer.writerow(row)


def _project(g: np.ndarray, g_ref: np.ndarray, mode: str) -> tuple:
    dot = float(g @ g_ref)
    if mode == "on-violation" and not dot < 0:
        return g, False
    if mode not in PROJECTION_MODES:
        raise ParameterError(f"unknown projection mode {mode!r}")
    ref_sq = float(g_ref @ g_ref)
    if ref_sq == 0.0:
        raise DegenerateReferenceError("episodic gradient is zero")
    return g - (dot / ref_sq) * g_ref, True


def project_gradient(g, g_ref, mode: str = "always") -> np.ndarray:
    """A-gem projection g - (g.g_ref / g_ref.g_ref) g_ref.

    ``always`` projects unconditionally; ``on-violation`` only when
    g.g_ref < 0. Raises DegenerateReferenceError for a zero g_ref when a
    projection is due.
    """
    g = np.asarray(g, dtype=np.float64)
    g_ref = np.asarray(g_ref, dtype=np.float64)
    if g.shape != g_ref.shape:
        raise ParameterError(f"shape mismatch {g.shape} vs {g_ref.shape}")
    return _project(g, g_ref, mode)[0]


def schedule_epochs(task_sizes: Sequence[int], cfg: TrainConfig) -> list:
    """Epoch count per task.

    Balanced mode picks round(balanced_steps / batches-per-task), at least 1,
    so tasks run (about) the same number of steps. A list of epochs passes
    through; a scalar is repeated.
    """
    sizes = list(task_sizes)
    if any(s < 1 for s in sizes):
        raise ParameterError("task sizes must be >= 1")
    if cfg.balanced_steps is not None:
        out = []
        for size in sizes:
            n_batches = 1 if cfg.batch_size is None else -(-size // cfg.batch_size)
            out.append(max(1, int(round(cfg.balanced_steps / n_batches))))
        return out
    if np.isscalar(cfg.epochs_per_task):
        return [int(cfg.epochs_per_task)] * len(sizes)
    epochs = [int(e) for e in cfg.epochs_per_task]
    if len(epochs) != len(sizes):
        raise ParameterError(f"{len(epochs)} epoch counts for {len(sizes)} tasks")
    return epochs


def _descend(params: ModelParams, direction: np.ndarray, lr: float, bound: float) -> ModelParams:
    new = params.unflatten(params.flatten() - lr * direction)
    clip_theta1_columns(new.theta1, bound)
    return new


def _task_partition(n_examples: int, cfg: TrainConfig, rng) -> BatchPartition | None:
    if cfg.batch_size is None:
        return None
    return partition(n_examples, cfg.batch_size, rng)


def _batch_indices(batches: BatchPartition | None, n_examples: int) -> tuple:
    if batches is None:
        return (np.arange(n_examples),)
    return batches.batches


def train_task_l2dp(params: ModelParams, task: PerturbedDataset, mem: EpisodicMemory,
                    noise: NoiseBundle, cfg: TrainConfig, rng: np.random.Generator,
                    epochs: int = 1, theta1_column_norm_bound: float = 1.0,
                    batches: BatchPartition | None = None, run_id: str = "run",
                    log: list | None = None) -> tuple:
    """Train one task on its fixed batches; returns (params, batches, step records)."""
    shape = params.shape
    if noise.shape != (shape.d, shape.h1_size, shape.h_pi_size):
        raise UsageError(f"noise bundle shape {noise.shape} does not match the model")
    if batches is None and cfg.batch_size is not None:
        batches = partition(len(task), cfg.batch_size, rng)
    log = [] if log is None else log
    digest = noise.digest()
    step = 0
    for epoch in range(epochs):
        for idx in _batch_indices(batches, len(task)):
            xb, yb = task.subset(idx)
            g, loss_R, loss_L = joint_gradient(params, xb, yb, noise, task.n, cfg.loss_form)
            projected, ref_id = False, None
            if len(mem):
                ref = sample_reference(mem, rng)
                ref_id = (ref.task_id, ref.batch_id)
                g_ref = joint_gradient(params, ref.xbar, ref.labels, noise, ref.n,
                                       cfg.loss_form)[0]
                try:
                    g, projected = _project(g, g_ref, cfg.projection_mode)
                except DegenerateReferenceError:
                    logger.warning("zero episodic gradient at task %s step %s", task.task_id, step)
            params = _descend(params, g, cfg.learning_rate, theta1_column_norm_bound)
            log.append(StepRecord(run_id, task.task_id, epoch, step, loss_R, loss_L,
                                  int(projected), float(np.linalg.norm(g)), digest, ref_id))
            step += 1
    return params, batches, log


def clip_per_example(per_example: np.ndarray, clip: float) -> np.ndarray:
    """Scale each row to L2 norm at most ``clip``."""
    norms = np.linalg.norm(per_example, axis=1, keepdims=True)
    return per_example / np.maximum(1.0, norms / clip)


def train_task_naive_gaussian(params: ModelParams, task: PerturbedDataset, mem: EpisodicMemory,
                              cfg: TrainConfig, rng: np.random.Generator, epochs: int = 1,
                              theta1_column_norm_bound: float = 1.0,
                              batches: BatchPartition | None = None, run_id: str = "run",
                              log: list | None = None) -> tuple:
    """DP-SGD style step: clip per-example gradients to C, average, add N(0, (zC/lambda)^2).

    ``task`` holds raw (unperturbed) inputs with ``n`` = lambda. Noise is
    added to both g and g_ref before the projection.
    """
    z, clip = cfg.noise_multiplier, cfg.clip_bound
    if z is None or clip is None or z < 0 or clip <= 0:
        raise ParameterError(f"need z >= 0 and C > 0, got z={z}, C={clip}")
    if batches is None and cfg.batch_size is not None:
        batches = partition(len(task), cfg.batch_size, rng)
    log = [] if log is None else log
    lam = task.n

    def noisy_grad(x, y):
        per = clip_per_example(per_example_gradients(params, x, y, cfg.loss_form), clip)
        g = per.sum(axis=0) / lam
        if z > 0:
            g = g + rng.normal(0.0, z * clip / lam, size=g.shape)
        return g

    step = 0
    for epoch in range(epochs):
        for idx in _batch_indices(batches, len(task)):
            xb, yb = task.subset(idx)
            g = noisy_grad(xb, yb)
            projected, ref_id = False, None
            if len(mem):
                ref = sample_reference(mem, rng)
                ref_id = (ref.task_id, ref.batch_id)
                g_ref = noisy_grad(ref.xbar, ref.labels)
                try:
                    g, projected = _project(g, g_ref, cfg.projection_mode)
                except DegenerateReferenceError:
                    pass
            params = _descend(params, g, cfg.learning_rate, theta1_column_norm_bound)
            loss_R = objective_R_polynomial(params.theta1, xb)
            h_pi = _classifier(params, encode(params.theta1, xb))[-1]
            loss_L = objective_L_polynomial(params.W_pi, h_pi, yb, cfg.loss_form)
            log.append(StepRecord(run_id, task.task_id, epoch, step, loss_R, loss_L,
                                  int(projected), float(np.linalg.norm(g)), "", ref_id))
            step += 1
    return params, batches, log


@dataclass
class LifelongResult:
    releases: list
    log: list
    budget: BudgetReport
    memory: EpisodicMemory
    noise: NoiseBundle | None
    partitions: list = field(default_factory=list)
    epochs: list = field(default_factory=list)


def check_disjoint(tasks) -> None:
    seen = {}
    for task in tasks:
        ids = getattr(task, "global_ids", None)
        if ids is None:
            continue
        for gid in np.asarray(ids).tolist():
            if gid in seen:
                raise DataError(f"example {gid} appears in tasks {seen[gid]} and {task.task_id}")
            seen[gid] = task.task_id


def lifelong_denominator(task_sizes: Sequence[int], cfg: TrainConfig) -> int:
    """n for the budget: lambda when streaming, else the largest task (worst case)."""
    return cfg.batch_size if cfg.batch_size is not None else max(task_sizes)


def run_budget(shape: ModelShape, privacy: PrivacyConfig, cfg: TrainConfig,
               task_sizes: Sequence[int]) -> BudgetReport:
    m = len(task_sizes)
    if cfg.mechanism == "naive-gaussian":
        eps = cfg.target_epsilon if cfg.target_epsilon is not None else 0.0
        per_task = [(eps, eps if i > 0 else 0.0) for i in range(m)]
        return naive_budget(per_task, "sum", delta=privacy.delta or 1e-5)
    sens = compute_sensitivities(shape.d, shape.h1_size, shape.h_pi_size,
                                 lifelong_denominator(task_sizes, cfg), privacy)
    if cfg.mechanism == "noiseless-agem":
        # no privacy: report infinite budget in the lifelong layout
        return BudgetReport(float("inf"), (float("inf"),) * 4, "lifelong", m)
    return lifelong_budget(sens, privacy, m)


def train_lifelong(tasks: Sequence, shape: ModelShape, privacy: PrivacyConfig, cfg: TrainConfig,
                   run_id: str = "run", params: ModelParams | None = None) -> LifelongResult:
    """Train the task stream in order and release a parameter copy after each task.

    For ``l2dp`` the Laplace noise is drawn once, every task is perturbed once
    with it, and the reported budget does not depend on the number, order or
    epochs of tasks.
    """
    if len(tasks) == 0:
        raise ParameterError("no tasks to train")
    check_disjoint(tasks)
    rng = np.random.default_rng(cfg.seed)
    init_rng, noise_rng, train_rng = rng.spawn(3)
    sizes = [len(t.inputs) for t in tasks]
    epochs = schedule_epochs(sizes, cfg)
    if params is None:
        params = init_params(shape, init_rng, privacy.theta1_column_norm_bound)
    bound = privacy.theta1_column_norm_bound

    noise = None
    if cfg.mechanism == "l2dp":
        n0 = lifelong_denominator(sizes, cfg)
        sens = compute_sensitivities(shape.d, shape.h1_size, shape.h_pi_size, n0, privacy)
        noise = draw_noise(shape.d, shape.h1_size, shape.h_pi_size, sens, privacy, noise_rng)
    elif cfg.mechanism == "noiseless-agem":
        noise = NoiseBundle.zeros(shape.d, shape.h1_size, shape.h_pi_size)

    releases, log, partitions = [], [], []
    mem = EpisodicMemory()
    for task, n_epochs in zip(tasks, epochs):
        n = cfg.batch_size if cfg.batch_size is not None else len(task.inputs)
        if cfg.mechanism == "naive-gaussian":
            data = PerturbedDataset(task.inputs, task.labels, n, "", task.task_id)
        else:
            data = perturb_dataset(task.inputs, task.labels, noise, n, task.task_id)
        batches = _task_partition(len(data), cfg, train_rng)
        if cfg.mechanism == "naive-gaussian":
            params, batches, log = train_task_naive_gaussian(
                params, data, mem, cfg, train_rng, n_epochs, bound, batches, run_id, log)
        else:
            params, batches, log = train_task_l2dp(
                params, data, mem, noise, cfg, train_rng, n_epochs, bound, batches, run_id, log)
        if not params.all_finite():
            raise NumericError(f"non-finite parameters after task {task.task_id}")
        releases.append(params.copy())
        partitions.append(batches)
        append_task_memory(mem, data, batches, train_rng)
    budget = run_budget(shape, privacy, cfg, sizes)
    return LifelongResult(releases, log, budget, mem, noise, partitions, epochs)
