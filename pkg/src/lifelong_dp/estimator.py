"""scikit-learn style wrapper around the lifelong trainer.

Each call to :meth:`L2DPClassifier.partial_fit` is one task. The Laplace
noise is drawn on the first call and reused afterwards, so calling
``partial_fit`` once per task gives the same releases as
:func:`~lifelong_dp.trainer.train_lifelong` on the whole sequence.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigurationError, NumericError, UsageError
from .memory import EpisodicMemory, append_task_memory, partition
from .model import (ModelShape, PerturbedDataset, init_params, one_hot, predict_scores,
                    perturb_dataset)
from .privacy import NoiseBundle, PrivacyConfig, compute_sensitivities, draw_noise
from .trainer import (TrainConfig, run_budget, train_lifelong, train_task_l2dp,
                      train_task_naive_gaussian)


class L2DPClassifier(ClassifierMixin, BaseEstimator):
    """Autoencoder plus tanh MLP trained task by task under a fixed privacy budget.

    Inputs are expected in [-1, 1] (see :class:`~lifelong_dp.data.RangeNormalizer`).

    Attributes set by fitting: ``classes_``, ``params_`` (latest release),
    ``releases_``, ``budget_``, ``memory_``, ``noise_`` and ``log_``.
    """

    def __init__(self, h1_size=32, hidden_sizes=(64,), eps1=0.1, eps2=0.5,
                 theta1_column_norm_bound=4.0, mechanism="l2dp", learning_rate=1e-3,
                 batch_size=100, epochs=1, projection_mode="always", noise_multiplier=None,
                 clip_bound=None, target_epsilon=None, loss_form="taylor", random_state=0):
        self.h1_size = h1_size
        self.hidden_sizes = hidden_sizes
        self.eps1 = eps1
        self.eps2 = eps2
        self.theta1_column_norm_bound = theta1_column_norm_bound
        self.mechanism = mechanism
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.projection_mode = projection_mode
        self.noise_multiplier = noise_multiplier
        self.clip_bound = clip_bound
        self.target_epsilon = target_epsilon
        self.loss_form = loss_form
        self.random_state = random_state

    def _configs(self):
        privacy = PrivacyConfig(self.eps1, self.eps2,
                                theta1_column_norm_bound=self.theta1_column_norm_bound)
        train = TrainConfig(learning_rate=self.learning_rate, batch_size=self.batch_size,
                            epochs_per_task=self.epochs, projection_mode=self.projection_mode,
                            mechanism=self.mechanism, seed=self.random_state,
                            noise_multiplier=self.noise_multiplier, clip_bound=self.clip_bound,
                            target_epsilon=self.target_epsilon, loss_form=self.loss_form)
        return privacy, train

    def _shape(self, d, K):
        return ModelShape(int(d), int(self.h1_size), tuple(self.hidden_sizes), int(K))

    def fit_tasks(self, tasks):
        """Train on a sequence of :class:`~lifelong_dp.data.TaskDataset` in order."""
        privacy, cfg = self._configs()
        shape = self._shape(tasks[0].d, tasks[0].K)
        res = train_lifelong(tasks, shape, privacy, cfg)
        self.classes_ = np.arange(shape.K)
        self.n_features_in_ = shape.d
        self.releases_ = res.releases
        self.params_ = res.releases[-1]
        self.budget_ = res.budget
        self.memory_ = res.memory
        self.noise_ = res.noise
        self.log_ = res.log
        self._task_sizes = [len(t.inputs) for t in tasks]
        return self

    def fit(self, X, y):
        """Train from scratch with (X, y) as the only task."""
        for attr in ("classes_", "params_", "_state"):
            self.__dict__.pop(attr, None)
        return self.partial_fit(X, y, classes=unique_labels(y))

    def partial_fit(self, X, y, classes=None):
        """Train on (X, y) as the next task."""
        first = not hasattr(self, "_state")
        X, y = check_X_y(X, y, dtype=np.float64)
        if first:
            if classes is None:
                raise UsageError("classes must be given on the first call to partial_fit")
            self.classes_ = np.asarray(classes)
            self.n_features_in_ = X.shape[1]
            self._init_state(X.shape[1])
        elif X.shape[1] != self.n_features_in_:
            raise UsageError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        lookup = {c: i for i, c in enumerate(self.classes_)}
        try:
            labels = one_hot(np.array([lookup[v] for v in y]), len(self.classes_))
        except KeyError as exc:
            raise UsageError(f"label {exc.args[0]!r} not among classes_") from None
        self._train_task(X, labels)
        return self

    def _init_state(self, d):
        privacy, cfg = self._configs()
        if cfg.mechanism == "l2dp" and cfg.batch_size is None:
            raise ConfigurationError("partial_fit needs a batch_size so the noise can be drawn "
                                     "before all tasks are known; use fit_tasks instead")
        shape = self._shape(d, len(self.classes_))
        init_rng, noise_rng, train_rng = np.random.default_rng(cfg.seed).spawn(3)
        params = init_params(shape, init_rng, privacy.theta1_column_norm_bound)
        if cfg.mechanism == "l2dp":
            sens = compute_sensitivities(shape.d, shape.h1_size, shape.h_pi_size,
                                         cfg.batch_size, privacy)
            noise = draw_noise(shape.d, shape.h1_size, shape.h_pi_size, sens, privacy, noise_rng)
        elif cfg.mechanism == "noiseless-agem":
            noise = NoiseBundle.zeros(shape.d, shape.h1_size, shape.h_pi_size)
        else:
            noise = None
        self._state = {"shape": shape, "privacy": privacy, "cfg": cfg, "rng": train_rng}
        self._task_sizes = []
        self.params_ = params
        self.releases_ = []
        self.memory_ = EpisodicMemory()
        self.noise_ = noise
        self.log_ = []

    def _train_task(self, X, labels):
        st = self._state
        cfg, bound = st["cfg"], st["privacy"].theta1_column_norm_bound
        task_id = len(self.releases_)
        n = cfg.batch_size if cfg.batch_size is not None else len(X)
        if cfg.mechanism == "naive-gaussian":
            data = PerturbedDataset(X, labels, n, "", task_id)
        else:
            data = perturb_dataset(X, labels, self.noise_, n, task_id)
        batches = None if cfg.batch_size is None else partition(len(data), cfg.batch_size, st["rng"])
        epochs = cfg.epochs_per_task
        if not np.isscalar(epochs):
            epochs = list(epochs)[task_id]
        if cfg.mechanism == "naive-gaussian":
            params, batches, self.log_ = train_task_naive_gaussian(
                self.params_, data, self.memory_, cfg, st["rng"], epochs, bound, batches,
                log=self.log_)
        else:
            params, batches, self.log_ = train_task_l2dp(
                self.params_, data, self.memory_, self.noise_, cfg, st["rng"], epochs, bound,
                batches, log=self.log_)
        if not params.all_finite():
            raise NumericError(f"non-finite parameters after task {task_id}")
        self.params_ = params
        self.releases_.append(params.copy())
        append_task_memory(self.memory_, data, batches, st["rng"])
        self._task_sizes.append(len(X))
        self.budget_ = run_budget(st["shape"], st["privacy"], cfg, self._task_sizes)

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return predict_scores(self.params_, X)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
