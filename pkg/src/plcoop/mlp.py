"""Three-layer perceptron with confidence-weighted cross-entropy training.

Architecture: input -> hidden (ReLU) -> hidden (ReLU) -> linear output,
softmax probabilities, per-replica loss l_k = -log p_k[y_k]. The batch
objective is the plain dot product w . l of per-replica confidence scores
and losses (no batch-size normalization; the scale is absorbed by the
learning rate). Gradients are exact and analytic; optimization is standard
Adam with bias correction. Everything runs in float64 and is deterministic
per seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAM_KEYS = ("W1", "b1", "W2", "b2", "W3", "b3")
CHECKPOINT_FORMAT = "plcoop-mlp-v1"
PROB_FLOOR = 1e-12
_MAX_LOSS = -float(np.log(PROB_FLOOR))


class TrainingDivergedError(RuntimeError):
    """Raised when losses or gradients stop being finite."""


@dataclass
class MlpParameters:
    """Weights, biases, Adam moment state, and hyperparameters."""

    weights: dict[str, np.ndarray]
    m: dict[str, np.ndarray] = field(repr=False, default=None)
    v: dict[str, np.ndarray] = field(repr=False, default=None)
    step: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.m is None:
            self.m = {k: np.zeros_like(w) for k, w in self.weights.items()}
        if self.v is None:
            self.v = {k: np.zeros_like(w) for k, w in self.weights.items()}

    @property
    def input_dim(self) -> int:
        return self.weights["W1"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weights["W1"].shape[1]

    @property
    def num_classes(self) -> int:
        return self.weights["W3"].shape[1]

    def copy(self) -> "MlpParameters":
        return MlpParameters(
            weights={k: w.copy() for k, w in self.weights.items()},
            m={k: w.copy() for k, w in self.m.items()},
            v={k: w.copy() for k, w in self.v.items()},
            step=self.step,
            learning_rate=self.learning_rate,
            beta1=self.beta1,
            beta2=self.beta2,
            epsilon=self.epsilon,
        )


@dataclass
class BatchForward:
    """Forward-pass results plus cached activations for backprop."""

    inputs: np.ndarray            # (B, d)
    labels: np.ndarray | None     # (B,) or None for inference
    hidden1: np.ndarray           # (B, h) post-ReLU
    hidden2: np.ndarray           # (B, h) post-ReLU
    logits: np.ndarray            # (B, c)
    probabilities: np.ndarray     # (B, c) softmax rows
    losses: np.ndarray | None     # (B,) -log p[label], None for inference

    @property
    def predictions(self) -> np.ndarray:
        return np.argmax(self.probabilities, axis=1)


def init(d: int, h: int, c: int, seed: int) -> MlpParameters:
    """Uniform(-a, a) weights with a = sqrt(6/(fan_in+fan_out)); zero biases."""
    if min(d, h, c) < 1:
        raise ValueError("d, h and c must all be >= 1")
    rng = np.random.default_rng(seed)

    def layer(fan_in: int, fan_out: int) -> np.ndarray:
        scale = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-scale, scale, size=(fan_in, fan_out))

    return MlpParameters(
        weights={
            "W1": layer(d, h),
            "b1": np.zeros(h),
            "W2": layer(h, h),
            "b2": np.zeros(h),
            "W3": layer(h, c),
            "b3": np.zeros(c),
        }
    )


def forward(
    params: MlpParameters,
    batch_features: np.ndarray,
    batch_labels: np.ndarray | None = None,
) -> BatchForward:
    """Run the network; with labels, also compute per-replica losses."""
    x = np.asarray(batch_features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.input_dim:
        raise ValueError(f"expected (B, {params.input_dim}) features, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input features")
    w = params.weights

    h1 = np.maximum(x @ w["W1"] + w["b1"], 0.0)
    h2 = np.maximum(h1 @ w["W2"] + w["b2"], 0.0)
    logits = h2 @ w["W3"] + w["b3"]

    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_norm
    probs = np.exp(log_probs)

    losses = None
    labels = None
    if batch_labels is not None:
        labels = np.asarray(batch_labels, dtype=np.int64)
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= params.num_classes:
            raise ValueError("labels outside [0, num_classes)")
        picked = log_probs[np.arange(x.shape[0]), labels]
        losses = np.minimum(-picked, _MAX_LOSS)

    return BatchForward(
        inputs=x,
        labels=labels,
        hidden1=h1,
        hidden2=h2,
        logits=logits,
        probabilities=probs,
        losses=losses,
    )


def weighted_loss(fwd: BatchForward, w_b: np.ndarray) -> float:
    """Dot product of per-replica confidence scores and losses."""
    w_b = np.asarray(w_b, dtype=np.float64)
    if fwd.losses is None:
        raise ValueError("forward pass was run without labels")
    if w_b.shape != fwd.losses.shape:
        raise ValueError(f"weights shape {w_b.shape} != losses shape {fwd.losses.shape}")
    return float(w_b @ fwd.losses)


def backward(
    params: MlpParameters, fwd: BatchForward, w_b: np.ndarray
) -> dict[str, np.ndarray]:
    """Exact gradients of the weighted loss w . l for every parameter.

    The output-layer error for replica k is w_k * (softmax_k - onehot(y_k)).
    """
    w_b = np.asarray(w_b, dtype=np.float64)
    if fwd.labels is None:
        raise ValueError("backward needs a forward pass with labels")
    batch = fwd.inputs.shape[0]
    if w_b.shape != (batch,):
        raise ValueError(f"weights shape {w_b.shape} != batch ({batch},)")
    w = params.weights

    dlogits = fwd.probabilities.copy()
    dlogits[np.arange(batch), fwd.labels] -= 1.0
    dlogits *= w_b[:, None]

    grads: dict[str, np.ndarray] = {}
    grads["W3"] = fwd.hidden2.T @ dlogits
    grads["b3"] = dlogits.sum(axis=0)
    dh2 = (dlogits @ w["W3"].T) * (fwd.hidden2 > 0.0)
    grads["W2"] = fwd.hidden1.T @ dh2
    grads["b2"] = dh2.sum(axis=0)
    dh1 = (dh2 @ w["W2"].T) * (fwd.hidden1 > 0.0)
    grads["W1"] = fwd.inputs.T @ dh1
    grads["b1"] = dh1.sum(axis=0)
    return grads


def adam_step(params: MlpParameters, grads: dict[str, np.ndarray]) -> MlpParameters:
    """One bias-corrected Adam update, in place; returns ``params``."""
    for key in PARAM_KEYS:
        if grads[key].shape != params.weights[key].shape:
            raise ValueError(f"gradient shape mismatch for {key}")
        if not np.all(np.isfinite(grads[key])):
            raise TrainingDivergedError(f"non-finite gradient in {key}")
    params.step += 1
    t = params.step
    correct1 = 1.0 - params.beta1 ** t
    correct2 = 1.0 - params.beta2 ** t
    for key in PARAM_KEYS:
        g = grads[key]
        params.m[key] = params.beta1 * params.m[key] + (1.0 - params.beta1) * g
        params.v[key] = params.beta2 * params.v[key] + (1.0 - params.beta2) * g * g
        m_hat = params.m[key] / correct1
        v_hat = params.v[key] / correct2
        params.weights[key] -= params.learning_rate * m_hat / (np.sqrt(v_hat) + params.epsilon)
    return params


def gradient_check(
    seed: int,
    d: int = 4,
    h: int = 6,
    c: int = 3,
    batch: int = 5,
    step: float = 1e-4,
    backward_fn=backward,
) -> float:
    """Worst relative error of analytic gradients vs central differences.

    Builds a random small network and batch whose pre-activations stay away
    from the ReLU kink (so the finite-difference stencil never crosses it)
    and compares ``backward_fn`` against (L(x+e) - L(x-e)) / 2e for every
    parameter. Relative error is |a - n| / max(|a|, |n|, 1).
    """
    rng = np.random.default_rng(seed)
    for attempt in range(64):
        params = init(d, h, c, seed=int(rng.integers(2**31)))
        # Shift weights off zero a little so many ReLUs are active.
        for key in ("b1", "b2"):
            params.weights[key] = rng.uniform(-0.3, 0.3, size=params.weights[key].shape)
        x = rng.standard_normal((batch, d))
        labels = rng.integers(0, c, size=batch)
        fwd = forward(params, x, labels)
        margin = 20.0 * step
        pre1 = fwd.inputs @ params.weights["W1"] + params.weights["b1"]
        pre2 = fwd.hidden1 @ params.weights["W2"] + params.weights["b2"]
        if min(np.abs(pre1).min(), np.abs(pre2).min()) > margin:
            break
    w_b = rng.uniform(0.05, 1.0, size=batch)

    analytic = backward_fn(params, fwd, w_b)
    worst = 0.0
    for key in PARAM_KEYS:
        flat = params.weights[key].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            loss_plus = weighted_loss(forward(params, x, labels), w_b)
            flat[idx] = original - step
            loss_minus = weighted_loss(forward(params, x, labels), w_b)
            flat[idx] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            a = analytic[key].reshape(-1)[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1.0)
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint serialization (lossless round trip)


def save_checkpoint(params: MlpParameters, path: str | Path) -> None:
    header = json.dumps(
        {
            "format": CHECKPOINT_FORMAT,
            "step": params.step,
            "learning_rate": params.learning_rate,
            "beta1": params.beta1,
            "beta2": params.beta2,
            "epsilon": params.epsilon,
        },
        sort_keys=True,
    )
    arrays = {f"weights_{k}": params.weights[k] for k in PARAM_KEYS}
    arrays.update({f"m_{k}": params.m[k] for k in PARAM_KEYS})
    arrays.update({f"v_{k}": params.v[k] for k in PARAM_KEYS})
    np.savez(path, header=np.bytes_(header.encode()), **arrays)


def load_checkpoint(path: str | Path) -> MlpParameters:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")
        return MlpParameters(
            weights={k: data[f"weights_{k}"] for k in PARAM_KEYS},
            m={k: data[f"m_{k}"] for k in PARAM_KEYS},
            v={k: data[f"v_{k}"] for k in PARAM_KEYS},
            step=int(header["step"]),
            learning_rate=float(header["learning_rate"]),
            beta1=float(header["beta1"]),
            beta2=float(header["beta2"]),
            epsilon=float(header["epsilon"]),
        )
