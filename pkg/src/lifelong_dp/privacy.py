"""Laplace sampling, sensitivities and the two budget accountants."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, ParameterError

REGIMES = ("lifelong", "naive-max", "naive-sum")

# Grid-search winners for the NaiveGaussian baseline: epsilon -> (z, C).
GAUSSIAN_BASELINE_GRID = {
    4.0: (2.2, 0.01),
    7.0: (1.7, 0.01),
    10.0: (1.4, 0.01),
}


@dataclass(frozen=True)
class PrivacyConfig:
    eps1: float
    eps2: float
    delta: float = 0.0
    theta1_column_norm_bound: float = 1.0

    def __post_init__(self):
        if not self.eps1 > 0:
            raise ParameterError(f"eps1 must be > 0, got {self.eps1}")
        if not self.eps2 > 0:
            raise ParameterError(f"eps2 must be > 0, got {self.eps2}")
        if not 0 <= self.delta < 1:
            raise ParameterError(f"delta must lie in [0, 1), got {self.delta}")
        if not self.theta1_column_norm_bound > 0:
            raise ParameterError("theta1_column_norm_bound must be > 0")


@dataclass(frozen=True)
class SensitivityReport:
    delta_R: float
    delta_L: float
    gamma_x: float
    gamma: float


@dataclass(frozen=True)
class BudgetReport:
    total_epsilon: float
    per_component: tuple
    regime: str
    task_count: int
    delta: float = 0.0

    def as_record(self) -> dict:
        """Flat key-value record; naive regimes leave the breakdown empty."""
        if self.regime == "lifelong":
            eps1, eps1_gx, eps1_g, eps2 = self.per_component
        else:
            eps1 = eps1_gx = eps1_g = eps2 = ""
        return {
            "total_epsilon": self.total_epsilon,
            "eps1": eps1,
            "eps1_over_gamma_x": eps1_gx,
            "eps1_over_gamma": eps1_g,
            "eps2": eps2,
            "delta": self.delta,
            "regime": self.regime,
            "task_count": self.task_count,
        }

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        record = self.as_record()
        writer = csv.DictWriter(buf, fieldnames=list(record), lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerow({k: repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for k, v in record.items()})
        return buf.getvalue()


@dataclass(frozen=True)
class NoiseBundle:
    """Laplace vectors drawn once per run and reused for every batch."""

    chi1: np.ndarray
    chi2: np.ndarray
    chi3: np.ndarray
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("chi1", "chi2", "chi3"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ParameterError(f"{name} must be a vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def zeros(cls, d: int, h1_size: int, h_pi_size: int) -> "NoiseBundle":
        return cls(np.zeros(d), np.zeros(h1_size), np.zeros(h_pi_size))

    @property
    def shape(self) -> tuple:
        return (self.chi1.size, self.chi2.size, self.chi3.size)

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.chi1, self.chi2, self.chi3):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()


def laplace_sample(scale: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. zero-mean Laplace variates with scale ``b``.

    Inverse-CDF transform of u ~ U(-1/2, 1/2): x = -b sgn(u) ln(1 - 2|u|).
    The open interval keeps the log finite.
    """
    if not scale > 0:
        raise ParameterError(f"Laplace scale must be > 0, got {scale}")
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    u = rng.uniform(np.nextafter(-0.5, 0.0), 0.5, size=int(count))
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_cdf(x, scale: float = 1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x < 0, 0.5 * np.exp(x / scale), 1.0 - 0.5 * np.exp(-x / scale))


def compute_sensitivities(d: int, h1_size: int, h_pi_size: int, n: int,
                          cfg: PrivacyConfig) -> SensitivityReport:
    """Global sensitivities of the two polynomial objectives and the scaling factors.

    ``n`` is the perturbation denominator: the task size when the whole
    dataset is used per step, the batch size for streaming training.
    """
    for name, value in (("d", d), ("h1_size", h1_size), ("h_pi_size", h_pi_size), ("n", n)):
        if int(value) != value or value < 1:
            raise ParameterError(f"{name} must be a positive integer, got {value}")
    delta_R = float(d * (h1_size + 2))
    delta_L = float(2 * h_pi_size)
    gamma_x = delta_R / n
    gamma = 2.0 * gamma_x / cfg.theta1_column_norm_bound
    return SensitivityReport(delta_R, delta_L, gamma_x, gamma)


def draw_noise(d: int, h1_size: int, h_pi_size: int, sens: SensitivityReport,
               cfg: PrivacyConfig, rng: np.random.Generator) -> NoiseBundle:
    chi1 = laplace_sample(sens.delta_R / cfg.eps1, d, rng)
    chi2 = laplace_sample(sens.delta_R / cfg.eps1, h1_size, rng)
    chi3 = laplace_sample(sens.delta_L / cfg.eps2, h_pi_size, rng)
    return NoiseBundle(chi1, chi2, chi3)


def lifelong_budget(sens: SensitivityReport, cfg: PrivacyConfig, task_count: int) -> BudgetReport:
    """Fixed budget eps1 + eps1/gamma_x + eps1/gamma + eps2, whatever the task count."""
    if int(task_count) != task_count or task_count < 1:
        raise ParameterError(f"task_count must be a positive integer, got {task_count}")
    parts = (cfg.eps1, cfg.eps1 / sens.gamma_x, cfg.eps1 / sens.gamma, cfg.eps2)
    total = ((parts[0] + parts[1]) + parts[2]) + parts[3]
    return BudgetReport(total, parts, "lifelong", int(task_count), delta=0.0)


def lifelong_budget_exact(eps1, eps2, d: int, h1_size: int, n: int, norm_bound=1) -> Fraction:
    """Rational-arithmetic twin of :func:`lifelong_budget` for audits."""
    eps1, eps2, norm_bound = Fraction(str(eps1)), Fraction(str(eps2)), Fraction(str(norm_bound))
    delta_R = Fraction(d * (h1_size + 2))
    gamma_x = delta_R / n
    gamma = 2 * gamma_x / norm_bound
    return eps1 + eps1 / gamma_x + eps1 / gamma + eps2


def naive_budget(per_task_budgets: Sequence[tuple], mode: str = "sum",
                 delta: float = 0.0) -> BudgetReport:
    """Budget of repeating a per-task mechanism over the stream.

    ``max`` is parallel composition over disjoint tasks; it ignores the
    adaptive accumulation of privacy loss through the released parameters
    and understates the cost. ``sum`` is the sound upper bound.
    """
    if len(per_task_budgets) == 0:
        raise ParameterError("per_task_budgets must be non-empty")
    per_task = []
    for pair in per_task_budgets:
        eps_d, eps_m = pair
        if eps_d < 0 or eps_m < 0:
            raise ParameterError(f"budgets must be non-negative, got {pair}")
        per_task.append(eps_d + eps_m)
    if mode == "max":
        total = max(per_task)
    elif mode == "sum":
        total = float(sum(per_task))
    else:
        raise ParameterError(f"mode must be 'max' or 'sum', got {mode!r}")
    return BudgetReport(total, tuple(per_task), f"naive-{mode}", len(per_task), delta=delta)


def gaussian_baseline_config(target_epsilon: float, override: tuple | None = None) -> tuple:
    """(noise multiplier z, clipping bound C) for the NaiveGaussian baseline."""
    if override is not None:
        z, clip = override
        if not (z >= 0 and clip > 0):
            raise ParameterError(f"override must have z >= 0 and C > 0, got {override}")
        return float(z), float(clip)
    try:
        return GAUSSIAN_BASELINE_GRID[float(target_epsilon)]
    except KeyError:
        known = ", ".join(str(k) for k in GAUSSIAN_BASELINE_GRID)
        raise ConfigurationError(
            f"no (z, C) mapping for epsilon={target_epsilon}; known: {known}; pass an override"
        ) from None
