"""Task streams and preprocessing.

Generators here are pure functions of their arguments and seed. Every
emitted task keeps inputs in [-1, 1] and carries ``global_ids`` so that
disjointness across tasks can be audited.
"""

from __future__ import annotations

import gzip
import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.datasets import make_classification
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ConfigurationError, DataError, ParameterError
from .model import one_hot

logger = logging.getLogger(__name__)

WINDOW = 100
SESSION_GAP_MS = 300.0
DATASET_MAGIC = b"LDPD"
DATASET_VERSION = 1


@dataclass
class TaskDataset:
    inputs: np.ndarray
    labels: np.ndarray  # one-hot, N x K
    task_id: int = 0
    global_ids: np.ndarray | None = None
    test_inputs: np.ndarray | None = None
    test_labels: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.inputs.ndim != 2 or self.labels.ndim != 2 or len(self.inputs) != len(self.labels):
            raise DataError("inputs must be N x d and labels N x K one-hot")
        if not np.all(self.labels.sum(axis=1) == 1) or not np.isin(self.labels, (0, 1)).all():
            raise DataError("labels must be one-hot")
        if np.abs(self.inputs).max(initial=0.0) > 1.0:
            raise DataError("inputs must lie in [-1, 1]")

    def __len__(self):
        return len(self.inputs)

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    @property
    def K(self) -> int:
        return self.labels.shape[1]

    @property
    def y(self) -> np.ndarray:
        return self.labels.argmax(axis=1)

    @property
    def test_y(self) -> np.ndarray | None:
        return None if self.test_labels is None else np.asarray(self.test_labels).argmax(axis=1)


# --- normalization -----------------------------------------------------------

def scale_to_unit(values, lo: float = -2.0, hi: float = 2.0) -> np.ndarray:
    """Clip to [lo, hi], then map linearly onto [-1, 1]: 2 * ((v - lo)/(hi - lo) - 1/2)."""
    v = np.clip(np.asarray(values, dtype=np.float64), lo, hi)
    return 2.0 * ((v - lo) / (hi - lo) - 0.5)


class RangeNormalizer(TransformerMixin, BaseEstimator):
    """Per-channel z-score from training data, clip to [lo, hi], scale to [-1, 1].

    Columns are channels. ``var_floor`` guards zero-variance channels; with
    ``var_floor=0`` such a channel is rejected at fit time.
    """

    def __init__(self, clip_min: float = -2.0, clip_max: float = 2.0, var_floor: float = 1e-8):
        self.clip_min = clip_min
        self.clip_max = clip_max
        self.var_floor = var_floor

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if not self.clip_min < self.clip_max:
            raise ConfigurationError("clip_min must be below clip_max")
        var = X.var(axis=0)
        if self.var_floor <= 0 and np.any(var == 0):
            raise ConfigurationError("zero-variance channel in training data")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.sqrt(np.maximum(var, self.var_floor))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ConfigurationError(f"expected {self.n_features_in_} channels, got {X.shape[1]}")
        return scale_to_unit((X - self.mean_) / self.scale_, self.clip_min, self.clip_max)


def normalize(values, train_values, clip_min: float = -2.0, clip_max: float = 2.0) -> np.ndarray:
    """Normalize ``values`` with statistics taken from ``train_values`` only."""
    return RangeNormalizer(clip_min, clip_max).fit(train_values).transform(values)


# --- permuted tasks ------------------------------------------------------------

def make_base_dataset(n_samples: int, n_features: int = 64, n_classes: int = 10,
                      class_sep: float = 2.0, seed: int = 0) -> tuple:
    """Synthetic stand-in for an image dataset: (X in [-1, 1], integer y).

    Gaussian class clusters from sklearn's ``make_classification`` pushed
    through :class:`RangeNormalizer`.
    """
    n_informative = max(2, min(n_features, n_features // 2))
    X, y = make_classification(
        n_samples=n_samples, n_features=n_features, n_informative=n_informative,
        n_redundant=0, n_classes=n_classes, n_clusters_per_class=1,
        class_sep=class_sep, flip_y=0.0, random_state=seed,
    )
    return RangeNormalizer().fit_transform(X), y


def generate_permuted_tasks(X, y, m: int, n_train: int, n_test: int, seed: int = 0,
                            n_classes: int | None = None) -> list:
    """Split (X, y) into ``m`` disjoint chunks and permute the features of chunk i with pi_i.

    pi_1 is the identity. Train and test of a task share the permutation.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if m < 1:
        raise ParameterError("m must be >= 1")
    if np.abs(X).max() > 1.0:
        raise DataError("base inputs must lie in [-1, 1]")
    need = m * (n_train + n_test)
    if need > len(X):
        raise DataError(f"{m} disjoint tasks need {need} examples, base has {len(X)}")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(X))
    tasks = []
    for i in range(m):
        perm = np.arange(X.shape[1]) if i == 0 else rng.permutation(X.shape[1])
        chunk = order[i * (n_train + n_test):(i + 1) * (n_train + n_test)]
        tr, te = chunk[:n_train], chunk[n_train:]
        tasks.append(TaskDataset(
            X[tr][:, perm], one_hot(y[tr], K), task_id=i, global_ids=tr,
            test_inputs=X[te][:, perm], test_labels=one_hot(y[te], K),
            provenance={"generator": "permuted", "seed": seed, "permutation": perm.tolist()},
        ))
    return tasks


# --- stream segmentation --------------------------------------------------------

@dataclass
class StreamSegment:
    values: np.ndarray  # WINDOW x C
    sampling_rate: float
    label: int

    @property
    def flat(self) -> np.ndarray:
        return self.values.T.ravel()


def split_sessions(timestamps_ms, gap_ms: float = SESSION_GAP_MS) -> list:
    """Index ranges of gap-free sessions; breaks at any gap larger than ``gap_ms``."""
    t = np.asarray(timestamps_ms, dtype=np.float64)
    if t.size == 0:
        return []
    if np.any(np.diff(t) < 0):
        raise DataError("timestamps must be monotone")
    breaks = np.flatnonzero(np.diff(t) > gap_ms) + 1
    bounds = np.concatenate([[0], breaks, [t.size]])
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]


def segment_stream(timestamps_ms, values, label: int, overlap: float = 0.25,
                   sampling_rate: float = 0.0, window: int = WINDOW,
                   gap_ms: float = SESSION_GAP_MS) -> list:
    """Sliding windows of ``window`` points that never cross a session break.

    ``overlap`` is the fraction shared by consecutive windows. Sessions
    shorter than one window are skipped with a log entry.
    """
    if not 0 <= overlap < 1:
        raise ParameterError(f"overlap must lie in [0, 1), got {overlap}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    stride = max(1, int(round(window * (1.0 - overlap))))
    segments = []
    for start, stop in split_sessions(timestamps_ms, gap_ms):
        if stop - start < window:
            logger.info("skipping session [%d, %d): shorter than %d points", start, stop, window)
            continue
        for a in range(start, stop - window + 1, stride):
            segments.append(StreamSegment(values[a:a + window].copy(), sampling_rate, int(label)))
    return segments


def class_overlaps(class_counts, low: float = 0.25, high: float = 0.90) -> dict:
    """Overlap per class: ``low`` for the majority class up to ``high`` for the rarest."""
    counts = {k: float(v) for k, v in dict(class_counts).items()}
    top, bottom = max(counts.values()), min(counts.values())
    if top == bottom:
        return {k: low for k in counts}
    return {k: high - (high - low) * (np.log(v) - np.log(bottom)) / (np.log(top) - np.log(bottom))
            for k, v in counts.items()}


def _class_signal(label: int, rate: float, n_points: int, channels: int, rng) -> np.ndarray:
    t = np.arange(n_points) / rate
    freq = 0.4 + 0.45 * label
    out = np.empty((n_points, channels))
    for c in range(channels):
        phase = rng.uniform(0, 2 * np.pi)
        amp = 1.0 + 0.3 * label + 0.2 * c
        out[:, c] = (amp * np.sin(2 * np.pi * freq * t + phase)
                     + 0.25 * label * (c - 1) + rng.normal(0, 0.6, n_points))
    return out


def generate_multirate_stream(rates=(20.0, 5.0, 10.0, 50.0), n_classes: int = 5,
                              sizes=(88, 755, 62, 1560), seed: int = 0, channels: int = 3,
                              test_fraction: float = 0.15,
                              class_weights=(0.3, 0.3, 0.25, 0.1, 0.05)) -> list:
    """One task per sampling rate with class-conditional synthetic sensor windows.

    Each task is built by simulating continuous sessions per class at its
    rate, segmenting them with class-dependent overlap, keeping ``size``
    training windows plus a test share, and normalizing with training
    statistics. ``sizes`` are training counts; windows of all channels are
    flattened to d = 100 * channels.
    """
    if len(rates) != len(sizes):
        raise ParameterError("need one size per rate")
    weights = np.asarray(class_weights[:n_classes], dtype=np.float64)
    if weights.size < n_classes:
        weights = np.ones(n_classes)
    weights = weights / weights.sum()
    rng = np.random.default_rng(seed)
    overlaps = class_overlaps({k: w for k, w in enumerate(weights)})
    tasks, next_id = [], 0
    for task_id, (rate, size) in enumerate(zip(rates, sizes)):
        n_total = int(size) + max(1, int(round(size * test_fraction / (1 - test_fraction))))
        per_class = np.maximum(1, np.round(weights * n_total).astype(int))
        windows, labels = [], []
        for k in range(n_classes):
            got = []
            while len(got) < per_class[k]:
                n_pts = int(rng.integers(3, 8) * WINDOW)
                ts = np.arange(n_pts) * (1000.0 / rate)
                gap_at = int(rng.integers(WINDOW, n_pts))
                ts[gap_at:] += 5 * SESSION_GAP_MS
                sig = _class_signal(k, rate, n_pts, channels, rng)
                got += segment_stream(ts, sig, k, overlaps[k], rate)
            take = rng.permutation(len(got))[:per_class[k]]
            windows += [got[i].values for i in take]
            labels += [k] * len(take)
        order = rng.permutation(len(windows))
        W = np.stack([windows[i] for i in order])  # N x WINDOW x C
        y = np.asarray(labels)[order]
        n_train = min(int(size), len(W) - 1)
        norm = RangeNormalizer().fit(W[:n_train].reshape(-1, channels))

        def flat(block):
            z = norm.transform(block.reshape(-1, channels)).reshape(block.shape)
            return z.transpose(0, 2, 1).reshape(len(block), -1)

        ids = np.arange(next_id, next_id + n_train)
        next_id += len(W)
        tasks.append(TaskDataset(
            flat(W[:n_train]), one_hot(y[:n_train], n_classes), task_id=task_id,
            global_ids=ids, test_inputs=flat(W[n_train:]),
            test_labels=one_hot(y[n_train:], n_classes),
            provenance={"generator": "multirate", "seed": seed, "rate": float(rate)},
        ))
    return tasks


# --- files ---------------------------------------------------------------------

def save_task_dataset(task: TaskDataset, path) -> None:
    """Columnar binary: magic, version, then d, K, N, task_id (uint32, little endian),
    float64 inputs row-major, uint16 labels."""
    N, d = task.inputs.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<5I", DATASET_VERSION, d, task.K, N, task.task_id))
        fh.write(np.ascontiguousarray(task.inputs, dtype="<f8").tobytes())
        fh.write(task.y.astype("<u2").tobytes())


def load_task_dataset(path) -> TaskDataset:
    with open(path, "rb") as fh:
        if fh.read(4) != DATASET_MAGIC:
            raise DataError(f"{path}: not a task dataset file")
        version, d, K, N, task_id = struct.unpack("<5I", fh.read(20))
        if version != DATASET_VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        X = np.frombuffer(fh.read(8 * N * d), dtype="<f8").reshape(N, d).astype(np.float64)
        y = np.frombuffer(fh.read(2 * N), dtype="<u2").astype(np.intp)
    return TaskDataset(X, one_hot(y, K), task_id=task_id)


def read_idx(path) -> np.ndarray:
    """Read an IDX file (optionally gzipped), e.g. the MNIST image/label files."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as fh:
        zero, dtype_code, ndim = struct.unpack(">HBB", fh.read(4))
        if zero != 0:
            raise DataError(f"{path}: bad IDX magic")
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        dtypes = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}
        if dtype_code not in dtypes:
            raise DataError(f"{path}: unknown IDX type 0x{dtype_code:02x}")
        data = np.frombuffer(fh.read(), dtype=dtypes[dtype_code])
    return data.reshape(dims)


def load_idx_images(images_path, labels_path) -> tuple:
    """IDX images scaled to [-1, 1] and flattened, with integer labels."""
    images = read_idx(images_path).astype(np.float64)
    labels = read_idx(labels_path).astype(np.intp)
    X = images.reshape(len(images), -1)
    X = 2.0 * (X / 255.0) - 1.0
    return X, labels
