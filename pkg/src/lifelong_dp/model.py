"""Auto-encoder + tanh classifier with Taylor-polynomial objectives.

The encoder maps x to h = clip(theta1^T x, -1, 1). The classifier stacks
affine+tanh layers on the (noisy) code and ends in a bias-free layer
``W_pi`` whose scores go through softmax.

Both objectives are sums over examples. Gradients are closed form:

* reconstruction: d R / d theta1[s, j] = sum_r hbar[r, j] * (1/2 - xbar[r, s]),
  with the code ``hbar`` held fixed (it enters as a data-side coefficient);
* classification: exact backprop of the polynomial loss through the
  classifier layers. The encoder does not receive classification gradient.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import NumericError, ShapeError, UsageError
from .privacy import NoiseBundle

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelShape:
    d: int
    h1_size: int
    hidden_sizes: tuple
    K: int

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_sizes)
        object.__setattr__(self, "hidden_sizes", hidden)
        if not hidden:
            raise ShapeError("hidden_sizes needs at least one layer (the last is h_pi)")
        if min((self.d, self.h1_size, self.K) + hidden) < 1:
            raise ShapeError(f"all sizes must be >= 1: {self}")

    @property
    def h_pi_size(self) -> int:
        return self.hidden_sizes[-1]

    @property
    def n_params(self) -> int:
        total, fan_in = self.d * self.h1_size, self.h1_size
        for width in self.hidden_sizes:
            total += fan_in * width + width
            fan_in = width
        return total + fan_in * self.K


@dataclass
class ModelParams:
    theta1: np.ndarray
    weights: list
    biases: list
    W_pi: np.ndarray

    @property
    def shape(self) -> ModelShape:
        return ModelShape(self.theta1.shape[0], self.theta1.shape[1],
                          tuple(w.shape[1] for w in self.weights), self.W_pi.shape[1])

    def copy(self) -> "ModelParams":
        return ModelParams(self.theta1.copy(), [w.copy() for w in self.weights],
                           [b.copy() for b in self.biases], self.W_pi.copy())

    def theta2_arrays(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        out.append(self.W_pi)
        return out

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.theta1.ravel()] + [a.ravel() for a in self.theta2_arrays()])

    def unflatten(self, vec: np.ndarray) -> "ModelParams":
        """New params with the same structure, filled from ``vec``."""
        vec = np.asarray(vec, dtype=np.float64)
        arrays = [self.theta1] + self.theta2_arrays()
        total = sum(a.size for a in arrays)
        if vec.size != total:
            raise ShapeError(f"expected {total} values, got {vec.size}")
        out, pos = [], 0
        for a in arrays:
            out.append(vec[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        n_hidden = len(self.weights)
        weights = out[1:1 + 2 * n_hidden:2]
        biases = out[2:2 + 2 * n_hidden:2]
        return ModelParams(out[0], weights, biases, out[-1])

    def max_column_norm(self) -> float:
        return float(np.abs(self.theta1).sum(axis=0).max())

    def all_finite(self) -> bool:
        return bool(np.isfinite(self.flatten()).all())


def clip_theta1_columns(theta1: np.ndarray, bound: float) -> np.ndarray:
    """Rescale any column of theta1 whose 1-norm exceeds ``bound`` (in place)."""
    norms = np.abs(theta1).sum(axis=0)
    over = norms > bound
    if over.any():
        theta1[:, over] *= bound / norms[over]
        # rounding can leave a column a hair above the bound
        norms = np.abs(theta1).sum(axis=0)
        still = norms > bound
        while still.any():
            theta1[:, still] = np.nextafter(theta1[:, still], 0.0)
            norms = np.abs(theta1).sum(axis=0)
            still = norms > bound
    return theta1


def init_params(shape: ModelShape, rng: np.random.Generator,
                theta1_column_norm_bound: float = 1.0) -> ModelParams:
    """Uniform(-r, r) with r = 1/sqrt(fan_in); theta1 columns then clipped."""
    def uniform(fan_in, size):
        r = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-r, r, size=size)

    theta1 = clip_theta1_columns(uniform(shape.d, (shape.d, shape.h1_size)),
                                 theta1_column_norm_bound)
    weights, biases = [], []
    fan_in = shape.h1_size
    for width in shape.hidden_sizes:
        weights.append(uniform(fan_in, (fan_in, width)))
        biases.append(np.zeros(width))
        fan_in = width
    W_pi = uniform(fan_in, (fan_in, shape.K))
    return ModelParams(theta1, weights, biases, W_pi)


@dataclass(frozen=True)
class PerturbedDataset:
    """Inputs shifted by the single noise draw: xbar = x + chi1 / n."""

    xbar: np.ndarray
    labels: np.ndarray
    n: int
    noise_digest: str = field(default="", compare=False)
    task_id: int = 0

    def __post_init__(self):
        xbar = np.array(self.xbar, dtype=np.float64)
        labels = np.array(self.labels, dtype=np.float64)
        if xbar.ndim != 2 or labels.ndim != 2 or xbar.shape[0] != labels.shape[0]:
            raise ShapeError("xbar must be N x d and labels N x K")
        xbar.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "xbar", xbar)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.xbar.shape[0]

    def subset(self, indices) -> tuple:
        idx = np.asarray(indices, dtype=np.intp)
        return self.xbar[idx], self.labels[idx]


def one_hot(y, K: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim == 2:
        return y.astype(np.float64)
    out = np.zeros((y.size, K))
    out[np.arange(y.size), y.astype(np.intp)] = 1.0
    return out


def perturb_dataset(inputs: np.ndarray, labels: np.ndarray, noise: NoiseBundle, n: int,
                    task_id: int = 0) -> PerturbedDataset:
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != noise.chi1.size:
        raise ShapeError(f"inputs of shape {inputs.shape} do not match chi1 of length "
                         f"{noise.chi1.size}")
    if n < 1:
        raise ShapeError(f"denominator must be >= 1, got {n}")
    xbar = inputs + noise.chi1 / n
    return PerturbedDataset(xbar, labels, int(n), noise.digest(), task_id)


def _check_noise(params: ModelParams, noise: NoiseBundle):
    shape = params.shape
    if noise.shape != (shape.d, shape.h1_size, shape.h_pi_size):
        raise UsageError(f"noise bundle of shape {noise.shape} does not match model "
                         f"{(shape.d, shape.h1_size, shape.h_pi_size)}")


def encode(theta1: np.ndarray, xbar: np.ndarray) -> np.ndarray:
    return np.clip(xbar @ theta1, -1.0, 1.0)


def noisy_code(params: ModelParams, xbar: np.ndarray, noise: NoiseBundle, n: int) -> np.ndarray:
    """hbar = clip(theta1^T xbar) + 2 chi2 / n."""
    return encode(params.theta1, xbar) + 2.0 * noise.chi2 / n


def _classifier(params: ModelParams, hbar: np.ndarray) -> list:
    """Activations per classifier layer, input first, h_pi last."""
    acts = [hbar]
    for w, b in zip(params.weights, params.biases):
        acts.append(np.tanh(acts[-1] @ w + b))
    return acts


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: ModelParams, xbar: np.ndarray, noise: NoiseBundle, n: int) -> tuple:
    """Returns (h, hbar, class_scores) for a batch of perturbed inputs."""
    _check_noise(params, noise)
    xbar = np.atleast_2d(np.asarray(xbar, dtype=np.float64))
    h = encode(params.theta1, xbar)
    hbar = h + 2.0 * noise.chi2 / n
    h_pi = _classifier(params, hbar)[-1]
    scores = softmax(h_pi @ params.W_pi)
    if not (np.isfinite(hbar).all() and np.isfinite(scores).all()):
        raise NumericError("non-finite activations in forward pass")
    return h, hbar, scores


def predict_scores(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Class scores on clean inputs (the released model is noise-free at inference)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    h_pi = _classifier(params, encode(params.theta1, x))[-1]
    return softmax(h_pi @ params.W_pi)


def predict(params: ModelParams, x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lowest index
    return np.argmax(predict_scores(params, x), axis=1)


# --- reconstruction objective -------------------------------------------------

def objective_R_polynomial(theta1: np.ndarray, x: np.ndarray, h: np.ndarray | None = None) -> float:
    """sum_r sum_s theta1[s] . h_r * (1/2 - x_rs) on clean data."""
    x = np.asarray(x, dtype=np.float64)
    if h is None:
        h = encode(theta1, x)
    return float(np.sum((h @ theta1.T) * (0.5 - x)))


def objective_R_perturbed(params: ModelParams, xbar: np.ndarray, noise: NoiseBundle, n: int,
                          hbar: np.ndarray | None = None) -> float:
    """Perturbed reconstruction objective.

    sum_r [ sum_s 1/2 theta1[s] . hbar_r - xbar_r . xtilde_r ] with
    xtilde_r = theta1 hbar_r, evaluated in the factored form
    sum_{r,s} xtilde_rs (1/2 - xbar_rs). Pass ``hbar`` to hold the code fixed.
    """
    _check_noise(params, noise)
    xbar = np.asarray(xbar, dtype=np.float64)
    if hbar is None:
        hbar = noisy_code(params, xbar, noise, n)
    xtilde = hbar @ params.theta1.T
    return float(np.sum(xtilde * (0.5 - xbar)))


def grad_R(params: ModelParams, xbar: np.ndarray, noise: NoiseBundle, n: int,
           hbar: np.ndarray | None = None) -> np.ndarray:
    """Gradient w.r.t. theta1; row s is sum_r hbar_r (1/2 - xbar_rs)."""
    _check_noise(params, noise)
    xbar = np.asarray(xbar, dtype=np.float64)
    if hbar is None:
        hbar = noisy_code(params, xbar, noise, n)
    return (0.5 - xbar).T @ hbar


# --- classification objective -------------------------------------------------

# Sign of the quadratic term. "printed" is the expression exactly as usually
# written, z - zy - |z|/2 - z^2/8; it is concave in z and unbounded below, so
# descent diverges. "taylor" uses + z^2/8, the second-order coefficient of
# log(1 + e^z), and is the form used for training.
L_QUADRATIC = {"taylor": 0.125, "printed": -0.125}


def _quad(form: str) -> float:
    try:
        return L_QUADRATIC[form]
    except KeyError:
        raise ShapeError(f"unknown loss form {form!r}; expected one of {list(L_QUADRATIC)}") from None


def _l_terms(z_lin: np.ndarray, z: np.ndarray, y: np.ndarray, quad: float) -> float:
    return float(np.sum(z_lin - z_lin * y) - np.sum(0.5 * np.abs(z) - quad * (z * z)))


def objective_L_polynomial(W_pi: np.ndarray, h_pi: np.ndarray, y: np.ndarray,
                           form: str = "taylor") -> float:
    """sum_k sum_r [z - z y - |z|/2 +/- z^2/8] with z = h_pi . W_pi[:, k]."""
    z = h_pi @ W_pi
    return _l_terms(z, z, np.asarray(y, dtype=np.float64), _quad(form))


def objective_L_perturbed(params: ModelParams, hbar: np.ndarray, y: np.ndarray,
                          noise: NoiseBundle, n: int, form: str = "taylor") -> float:
    """Classification objective with h_pi + chi3/n in the first-order terms."""
    _check_noise(params, noise)
    h_pi = _classifier(params, hbar)[-1]
    z = h_pi @ params.W_pi
    z_lin = (h_pi + noise.chi3 / n) @ params.W_pi
    return _l_terms(z_lin, z, np.asarray(y, dtype=np.float64), _quad(form))


def _dz_quad(z: np.ndarray, quad: float) -> np.ndarray:
    return 0.5 * np.sign(z) - 2.0 * quad * z


def grad_L(params: ModelParams, hbar: np.ndarray, y: np.ndarray, noise: NoiseBundle,
           n: int, form: str = "taylor") -> list:
    """Gradients of the perturbed classification objective, in theta2 order.

    Returns [dW_1, db_1, ..., dW_L, db_L, dW_pi]. Where some z is exactly 0
    the subgradient of |z| is taken as 0.
    """
    _check_noise(params, noise)
    y = np.asarray(y, dtype=np.float64)
    acts = _classifier(params, hbar)
    h_pi = acts[-1]
    z = h_pi @ params.W_pi
    dz_quad = _dz_quad(z, _quad(form))
    # first-order terms see h_pi + chi3/n, higher-order ones see h_pi
    dW_pi = (h_pi + noise.chi3 / n).T @ (1.0 - y) - h_pi.T @ dz_quad
    delta = ((1.0 - y) - dz_quad) @ params.W_pi.T
    grads = [dW_pi]
    for layer in range(len(params.weights) - 1, -1, -1):
        delta = delta * (1.0 - acts[layer + 1] ** 2)
        grads.append(delta.sum(axis=0))
        grads.append(acts[layer].T @ delta)
        if layer > 0:
            delta = delta @ params.weights[layer].T
    grads.reverse()
    return grads


def joint_gradient(params: ModelParams, xbar: np.ndarray, y: np.ndarray, noise: NoiseBundle,
                   n: int, form: str = "taylor") -> tuple:
    """Flattened (grad_R, grad_L) on one batch plus the two objective values."""
    hbar = noisy_code(params, xbar, noise, n)
    g1 = grad_R(params, xbar, noise, n, hbar=hbar)
    g2 = grad_L(params, hbar, y, noise, n, form)
    vec = np.concatenate([g1.ravel()] + [g.ravel() for g in g2])
    loss_R = objective_R_perturbed(params, xbar, noise, n, hbar=hbar)
    loss_L = objective_L_perturbed(params, hbar, y, noise, n, form)
    return vec, loss_R, loss_L


def per_example_gradients(params: ModelParams, x: np.ndarray, y: np.ndarray,
                          form: str = "taylor") -> np.ndarray:
    """Noise-free per-example joint gradients, one flattened row per example."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h = encode(params.theta1, x)
    g1 = np.einsum("rs,rj->rsj", 0.5 - x, h).reshape(x.shape[0], -1)
    acts = _classifier(params, h)
    h_pi = acts[-1]
    z = h_pi @ params.W_pi
    dz = (1.0 - y) - _dz_quad(z, _quad(form))
    parts = [np.einsum("ri,rk->rik", h_pi, dz).reshape(x.shape[0], -1)]
    delta = dz @ params.W_pi.T
    for layer in range(len(params.weights) - 1, -1, -1):
        delta = delta * (1.0 - acts[layer + 1] ** 2)
        parts.append(delta)
        parts.append(np.einsum("ri,rj->rij", acts[layer], delta).reshape(x.shape[0], -1))
        if layer > 0:
            delta = delta @ params.weights[layer].T
    parts.reverse()
    return np.concatenate([g1] + parts, axis=1)


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(params: ModelParams, path) -> None:
    """Versioned npz: JSON header plus little-endian float64 arrays."""
    shape = params.shape
    header = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "order": "C",
        "d": shape.d,
        "h1_size": shape.h1_size,
        "hidden_sizes": list(shape.hidden_sizes),
        "K": shape.K,
    }
    arrays = {"theta1": params.theta1, "W_pi": params.W_pi}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"W_{i}"] = w
        arrays[f"b_{i}"] = b
    arrays = {k: np.ascontiguousarray(v, dtype="<f8") for k, v in arrays.items()}
    header_arr = np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)
    if hasattr(path, "write"):
        np.savez(path, header=header_arr, **arrays)
        return
    with open(path, "wb") as fh:
        np.savez(fh, header=header_arr, **arrays)


def load_checkpoint(path) -> ModelParams:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise UsageError(f"unsupported checkpoint version {header.get('format_version')}")
        n_hidden = len(header["hidden_sizes"])
        params = ModelParams(
            data["theta1"].astype(np.float64),
            [data[f"W_{i}"].astype(np.float64) for i in range(n_hidden)],
            [data[f"b_{i}"].astype(np.float64) for i in range(n_hidden)],
            data["W_pi"].astype(np.float64),
        )
    if params.shape != ModelShape(header["d"], header["h1_size"], tuple(header["hidden_sizes"]),
                                  header["K"]):
        raise UsageError("checkpoint arrays disagree with the header")
    return params


def checkpoint_bytes(params: ModelParams) -> bytes:
    buf = io.BytesIO()
    save_checkpoint(params, buf)
    return buf.getvalue()
