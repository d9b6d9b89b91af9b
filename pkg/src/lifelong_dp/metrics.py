"""Continual-learning metrics over released checkpoints.

Task indices are 1-based in the public functions to match the usual
definitions: ``A[tau][t]`` is the accuracy on task t's test set after
training through task tau.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np
from scipy import stats

from .exceptions import UsageError
from .model import predict


class AccuracyMatrix:
    """m x m matrix of accuracies; entries not yet measured are NaN."""

    def __init__(self, m: int):
        if m < 1:
            raise UsageError("need at least one task")
        self.values = np.full((m, m), np.nan)

    @classmethod
    def from_array(cls, a) -> "AccuracyMatrix":
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise UsageError("accuracy matrix must be square")
        out = cls(a.shape[0])
        out.values[...] = a
        return out

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, key):
        tau, t = key
        return self.values[tau - 1, t - 1]

    def __setitem__(self, key, value):
        tau, t = key
        if not 0.0 <= value <= 1.0:
            raise UsageError(f"accuracy must lie in [0, 1], got {value}")
        self.values[tau - 1, t - 1] = value

    def row(self, tau: int) -> np.ndarray:
        return self.values[tau - 1, :tau]


def accuracy_matrix(releases: Sequence, tasks: Sequence) -> AccuracyMatrix:
    """Evaluate release tau on the test split of every task t <= tau."""
    A = AccuracyMatrix(len(tasks))
    for tau, params in enumerate(releases, start=1):
        for t in range(1, tau + 1):
            task = tasks[t - 1]
            pred = predict(params, task.test_inputs)
            A[tau, t] = float(np.mean(pred == task.test_y))
    return A


def average_accuracy(A: AccuracyMatrix, tau: int) -> float:
    row = A.row(tau)
    if row.size != tau or np.isnan(row).any():
        raise UsageError(f"row {tau} of the accuracy matrix is incomplete")
    total = 0.0
    for t in range(1, tau + 1):
        total += A[tau, t]
    return total / tau


def average_forgetting(A: AccuracyMatrix, tau: int) -> float:
    """Mean over t < tau of max_{l < tau} (a[l, t] - a[tau, t]).

    Unmeasured entries (l < t in a lower-triangular matrix) are skipped.
    """
    if tau < 2:
        raise UsageError("forgetting is undefined for tau = 1")
    total = 0.0
    for t in range(1, tau):
        if np.isnan(A[tau, t]) or np.isnan(A[t, t]):
            raise UsageError(f"accuracy a[{tau}, {t}] or a[{t}, {t}] is missing")
        worst = -math.inf
        for l in range(1, tau):
            a_lt = A[l, t]
            if not np.isnan(a_lt):
                worst = max(worst, a_lt - A[tau, t])
        total += worst
    return total / (tau - 1)


def running_average_curve(A: AccuracyMatrix) -> list:
    return [average_accuracy(A, i) for i in range(1, A.m + 1)]


def welch_pvalue(a, b) -> float:
    """Two-tailed Welch t-test p-value.

    Zero variance in both samples gives p = 1 for equal means and p = 0
    otherwise.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va == 0 and vb == 0:
        return 1.0 if a.mean() == b.mean() else 0.0
    p = stats.ttest_ind(a, b, equal_var=False).pvalue
    return float(p)


def pvalue_curve(curve_a: Sequence[float], curve_b: Sequence[float], tau: int | None = None) -> list:
    """p-values between prefixes of two running-average accuracy curves.

    Entry i (0-based) compares the first i+1 points; entries with fewer than
    two points are None.
    """
    if len(curve_a) != len(curve_b):
        raise UsageError("curves must have equal length")
    tau = len(curve_a) if tau is None else tau
    out = []
    for i in range(1, tau + 1):
        out.append(None if i < 2 else welch_pvalue(curve_a[:i], curve_b[:i]))
    return out


def write_metrics_csv(rows, path, fields) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _cell(row[k]) for k in fields})


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
