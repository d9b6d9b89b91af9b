"""Fixed disjoint batch partitions and the episodic memory.

A task's perturbed data is split once into disjoint batches that stay the
same for every epoch. After a task finishes, one of its batches (or the
whole dataset) is stored as a memory entry. Training reads entries whole;
it never draws fresh sub-samples from memory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, UsageError


@dataclass(frozen=True)
class BatchPartition:
    batches: tuple
    batch_size: int
    n_examples: int

    def __len__(self):
        return len(self.batches)

    def is_disjoint_cover(self) -> bool:
        allidx = np.concatenate(self.batches) if self.batches else np.empty(0, dtype=np.intp)
        return (allidx.size == self.n_examples
                and np.array_equal(np.sort(allidx), np.arange(self.n_examples)))


def partition(n_examples: int, batch_size: int, rng: np.random.Generator) -> BatchPartition:
    """Random permutation of ``range(n_examples)`` cut into chunks of ``batch_size``.

    The last chunk may be short; it is kept so the batches cover the data.
    """
    if n_examples < 1:
        raise ParameterError("cannot partition an empty dataset")
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(n_examples)
    batches = []
    for start in range(0, n_examples, batch_size):
        chunk = np.sort(order[start:start + batch_size])
        chunk.setflags(write=False)
        batches.append(chunk)
    return BatchPartition(tuple(batches), int(batch_size), int(n_examples))


@dataclass(frozen=True)
class MemoryEntry:
    task_id: int
    batch_id: int  # -1 when the whole dataset is stored
    indices: np.ndarray
    xbar: np.ndarray
    labels: np.ndarray
    n: int  # perturbation denominator the entry was built with

    def __len__(self):
        return self.indices.size


@dataclass
class EpisodicMemory:
    """Append-only store of perturbed reference sets, one per finished task."""

    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def task_ids(self) -> list:
        return [e.task_id for e in self.entries]

    def append(self, entry: MemoryEntry) -> None:
        if entry.task_id in self.task_ids:
            raise UsageError(f"task {entry.task_id} already has a memory entry")
        for arr in (entry.indices, entry.xbar, entry.labels):
            arr.setflags(write=False)
        self.entries.append(entry)

    def manifest(self) -> list:
        """(task_id, batch_id, index list) records."""
        return [(e.task_id, e.batch_id, [int(i) for i in e.indices]) for e in self.entries]

    def write_manifest(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task_id", "batch_id", "indices"])
            for task_id, batch_id, idx in self.manifest():
                writer.writerow([task_id, batch_id, " ".join(map(str, idx))])


def read_manifest(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["task_id"]), int(r["batch_id"]),
             [int(i) for i in r["indices"].split()]) for r in rows]


def append_task_memory(mem: EpisodicMemory, dataset, batches: BatchPartition | None,
                       rng: np.random.Generator, task_id: int | None = None) -> EpisodicMemory:
    """Store one uniformly chosen batch of ``dataset``, or all of it when ``batches`` is None.

    ``dataset`` is a :class:`~lifelong_dp.model.PerturbedDataset`; only its
    perturbed inputs are kept.
    """
    task_id = dataset.task_id if task_id is None else task_id
    if batches is None:
        idx = np.arange(len(dataset))
        batch_id = -1
    else:
        batch_id = int(rng.integers(len(batches)))
        idx = np.array(batches.batches[batch_id])
    xbar, labels = dataset.subset(idx)
    mem.append(MemoryEntry(int(task_id), batch_id, idx, xbar.copy(), labels.copy(), int(dataset.n)))
    return mem


def sample_reference(mem: EpisodicMemory, rng: np.random.Generator) -> MemoryEntry:
    if len(mem) == 0:
        raise UsageError("episodic memory is empty; skip projection on the first task")
    return mem.entries[int(rng.integers(len(mem)))]
