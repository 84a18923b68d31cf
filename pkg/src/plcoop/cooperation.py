"""Cooperative two-network training with confidence exchange.

Each batch, both networks forward the same replicas, independently screen
for reliable replicas and build their own group confidence scores, then swap:
network alpha backpropagates the loss weighted by beta's scores and vice
versa. Two single-network regimes reuse the same loop: ``no_nc`` keeps the
progressive screening but feeds a network its own scores, and the
uniform-averaging baseline trains one network on constant 1/|S| scores.
``no_pd`` keeps both networks but applies loss-softmax confidences to every
group from epoch 0, bypassing the screening schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import mlp
from .disambiguation import (
    ScheduleConfig,
    disambiguation_accuracy,
    group_softmax_confidences,
    schedule_T,
    select_reliable,
    uniform_confidences,
    update_confidences,
)
from .duplication import DuplicatedDataset, group_minibatches
from .mlp import MlpParameters, TrainingDivergedError
from .seeding import ROLE_BATCHES, ROLE_NET_ALPHA, ROLE_NET_BETA, derive_seed

MODES = ("full", "no_nc", "no_pd")
_UNIFORM_MODE = "uniform_avg"  # internal: the averaging baseline shares the loop
_TWO_NETWORK_MODES = ("full", "no_pd")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    t_r: int = 100
    total_epochs: int = 200
    hidden_dim: int = 128
    learning_rate: float = 1e-3
    seed: int = 0
    mode: str = "full"
    standardize: bool = True
    early_stop_patience: int | None = None  # epochs without holdout improvement

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.total_epochs < 1:
            raise ValueError("total_epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainingCurves:
    """Per-epoch diagnostics; lists all share one length."""

    t_value: list[float] = field(default_factory=list)
    train_loss_alpha: list[float] = field(default_factory=list)
    train_loss_beta: list[float] = field(default_factory=list)      # nan if absent
    val_accuracy: list[float] = field(default_factory=list)         # nan without holdout
    disambiguation_accuracy: list[float] = field(default_factory=list)  # nan without truth
    reliable_fraction: list[float] = field(default_factory=list)    # nan if unscreened


@dataclass
class TrainedModel:
    alpha: MlpParameters
    beta: MlpParameters | None
    mode: str
    config: TrainConfig
    curves: TrainingCurves


@dataclass
class BatchRecord:
    """Snapshot handed to ``on_batch`` instrumentation callbacks."""

    epoch: int
    batch_index: int
    replica_indices: np.ndarray
    t_value: float
    reliable_cap: int
    losses_alpha: np.ndarray
    losses_beta: np.ndarray | None
    weights_alpha: np.ndarray
    weights_beta: np.ndarray | None
    reliable_alpha: np.ndarray | None
    reliable_beta: np.ndarray | None


OnBatch = Callable[[BatchRecord], None]


def network_seeds(seed: int) -> tuple[int, int]:
    """Init seeds for the two networks, derived from the config seed."""
    return derive_seed(seed, ROLE_NET_ALPHA), derive_seed(seed, ROLE_NET_BETA)


def batch_shuffle_seed(seed: int) -> int:
    return derive_seed(seed, ROLE_BATCHES)


def train(
    dd: DuplicatedDataset,
    cfg: TrainConfig,
    holdout: tuple[np.ndarray, np.ndarray] | None = None,
    group_truth: np.ndarray | None = None,
    on_batch: OnBatch | None = None,
    init_seeds: tuple[int, int] | None = None,
) -> TrainedModel:
    """Run the configured training mode.

    ``holdout`` is an optional (features, labels) evaluation set scored every
    epoch; ``group_truth`` optionally supplies per-group true labels for the
    disambiguation-accuracy curve. Both are diagnostics and never influence
    an update (except through the opt-in early-stopping patience, which reads
    holdout accuracy). ``init_seeds`` overrides the derived per-network init
    seeds, e.g. to tie both networks to one initialization in experiments.
    """
    return _train_loop(dd, cfg, cfg.mode, holdout, group_truth, on_batch, init_seeds)


def train_no_nc(dd, cfg: TrainConfig, holdout=None, **kwargs) -> TrainedModel:
    """Single network with progressive screening (cooperation removed)."""
    return _train_loop(dd, cfg, "no_nc", holdout, **kwargs)


def train_no_pd(dd, cfg: TrainConfig, holdout=None, **kwargs) -> TrainedModel:
    """Two cooperating networks, loss-softmax confidences for every group."""
    return _train_loop(dd, cfg, "no_pd", holdout, **kwargs)


def train_uniform_average(dd, cfg: TrainConfig, holdout=None, **kwargs) -> TrainedModel:
    """Single network, uniform 1/|S| confidences at every step."""
    return _train_loop(dd, cfg, _UNIFORM_MODE, holdout, **kwargs)


def _confidences(mode, batch, fwd, dd, t_value):
    """(weights, reliable) for one network under the given regime."""
    if mode == _UNIFORM_MODE:
        return 1.0 / dd.group_sizes[dd.group_of[batch]].astype(np.float64), None
    if mode == "no_pd":
        return group_softmax_confidences(batch, fwd.losses, dd), None
    reliable = select_reliable(batch, fwd, dd, t_value)
    return update_confidences(batch, fwd.losses, dd, reliable), reliable


def _train_loop(
    dd: DuplicatedDataset,
    cfg: TrainConfig,
    mode: str,
    holdout=None,
    group_truth=None,
    on_batch: OnBatch | None = None,
    init_seeds: tuple[int, int] | None = None,
) -> TrainedModel:
    two_networks = mode in _TWO_NETWORK_MODES
    schedule = ScheduleConfig(t_r=cfg.t_r)
    seed_alpha, seed_beta = init_seeds if init_seeds is not None else network_seeds(cfg.seed)
    shuffle_seed = batch_shuffle_seed(cfg.seed)

    d = dd.features.shape[1]
    c = dd.num_classes
    net_a = mlp.init(d, cfg.hidden_dim, c, seed_alpha)
    net_b = mlp.init(d, cfg.hidden_dim, c, seed_beta) if two_networks else None
    for net in (net_a, net_b):
        if net is not None:
            net.learning_rate = cfg.learning_rate

    # Diagnostic store of alpha's most recent group confidences.
    conf_store = uniform_confidences(dd).scores.copy()
    curves = TrainingCurves()
    best_val, since_best = -np.inf, 0

    for epoch in range(cfg.total_epochs):
        t_value = schedule_T(epoch, schedule)
        batches = group_minibatches(dd, cfg.batch_size, shuffle_seed, epoch)
        loss_sum_a = loss_sum_b = 0.0
        reliable_count = 0

        for batch_index, batch in enumerate(batches):
            x = dd.replica_features(batch)
            y = dd.replica_labels[batch]

            fwd_a = mlp.forward(net_a, x, y)
            _check_finite(fwd_a.losses, mode, epoch, batch_index, "alpha")
            w_a, rel_a = _confidences(mode, batch, fwd_a, dd, t_value)

            if two_networks:
                fwd_b = mlp.forward(net_b, x, y)
                _check_finite(fwd_b.losses, mode, epoch, batch_index, "beta")
                w_b, rel_b = _confidences(mode, batch, fwd_b, dd, t_value)
                # The exchange: each network learns from its peer's scores.
                loss_sum_a += float(w_b @ fwd_a.losses)
                loss_sum_b += float(w_a @ fwd_b.losses)
                mlp.adam_step(net_a, mlp.backward(net_a, fwd_a, w_b))
                mlp.adam_step(net_b, mlp.backward(net_b, fwd_b, w_a))
            else:
                fwd_b, w_b, rel_b = None, None, None
                loss_sum_a += float(w_a @ fwd_a.losses)
                mlp.adam_step(net_a, mlp.backward(net_a, fwd_a, w_a))

            conf_store[batch] = w_a
            if rel_a is not None:
                reliable_count += rel_a.shape[0]
            if on_batch is not None:
                on_batch(BatchRecord(
                    epoch=epoch,
                    batch_index=batch_index,
                    replica_indices=batch,
                    t_value=t_value,
                    reliable_cap=int(np.floor(t_value * batch.shape[0])),
                    losses_alpha=fwd_a.losses,
                    losses_beta=None if fwd_b is None else fwd_b.losses,
                    weights_alpha=w_a,
                    weights_beta=w_b,
                    reliable_alpha=rel_a,
                    reliable_beta=rel_b,
                ))

        curves.t_value.append(t_value)
        curves.train_loss_alpha.append(loss_sum_a / dd.num_replicas)
        curves.train_loss_beta.append(
            loss_sum_b / dd.num_replicas if two_networks else float("nan")
        )
        screened = mode in ("full", "no_nc")
        curves.reliable_fraction.append(
            reliable_count / dd.num_replicas if screened else float("nan")
        )
        curves.disambiguation_accuracy.append(
            _disamb_accuracy(conf_store, dd, group_truth)
        )
        val_acc = float("nan")
        if holdout is not None:
            val_x, val_y = holdout
            preds = _predict_networks(net_a, net_b, val_x)
            val_acc = float(np.mean(preds == np.asarray(val_y)))
        curves.val_accuracy.append(val_acc)

        if cfg.early_stop_patience is not None and holdout is not None:
            if val_acc > best_val:
                best_val, since_best = val_acc, 0
            else:
                since_best += 1
                if since_best >= cfg.early_stop_patience:
                    break

    return TrainedModel(alpha=net_a, beta=net_b, mode=mode, config=cfg, curves=curves)


def _disamb_accuracy(conf_store, dd, group_truth):
    if group_truth is None:
        return float("nan")
    return disambiguation_accuracy(conf_store, dd, group_truth)


def _check_finite(losses, mode, epoch, batch_index, which):
    if not np.all(np.isfinite(losses)):
        raise TrainingDivergedError(
            f"non-finite loss in network {which} ({mode} mode) "
            f"at epoch {epoch}, batch {batch_index}"
        )


def _predict_networks(net_a, net_b, features) -> np.ndarray:
    probs = mlp.forward(net_a, features).probabilities
    if net_b is not None:
        probs = (probs + mlp.forward(net_b, features).probabilities) / 2.0
    return np.argmax(probs, axis=1)


def predict(model: TrainedModel, features: np.ndarray) -> np.ndarray:
    """Class predictions: elementwise-averaged softmax of the available
    networks, argmax with ties toward the lower class index."""
    return _predict_networks(model.alpha, model.beta, np.asarray(features, dtype=np.float64))


def predict_proba(model: TrainedModel, features: np.ndarray) -> np.ndarray:
    probs = mlp.forward(model.alpha, np.asarray(features, dtype=np.float64)).probabilities
    if model.beta is not None:
        probs = (probs + mlp.forward(model.beta, features).probabilities) / 2.0
    return probs
