"""Adam optimization with halving learning-rate schedule and seeded runs.

Training is deterministic end-to-end: the same (dataset, config) pair gives
bit-identical loss traces and final parameters.  Subjects are grouped into
batches of equal sequence length (variable-length cohorts fall back to
smaller groups), gradients are accumulated by the batched forward pass in a
fixed order, and the optimizer walks parameters in sorted-name order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .data import Dataset, LagPair, prepared_pair
from .errors import ConfigError, TrainingError
from .loss import bce_graph, freq_loss_graph
from .model import ModelConfig, NetworkParams, batch_steps, forward_graph, init_params, weight_tensors


@dataclass
class TrainConfig:
    lr0: float = 0.005
    epochs: int = 100
    lr_halving_period: int = 8
    alpha: float = 1e-4
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0

    def validate(self) -> None:
        if self.lr0 <= 0:
            raise ConfigError(f"lr0 must be > 0, got {self.lr0}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr_halving_period < 1:
            raise ConfigError(f"lr_halving_period must be >= 1, got {self.lr_halving_period}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be >= 0, got {self.alpha}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in params.items()},
            v={k: np.zeros_like(a) for k, a in params.items()},
            step=0,
        )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; pure (inputs are never mutated)."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be > 0, got {lr}")
    t = state.step + 1
    new_params: dict[str, np.ndarray] = {}
    new_m: dict[str, np.ndarray] = {}
    new_v: dict[str, np.ndarray] = {}
    for name in sorted(params):
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {name}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**t)
        v_hat = v / (1.0 - beta2**t)
        new_params[name] = params[name] - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v
    return new_params, AdamState(m=new_m, v=new_v, step=t)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """lr0 halved once per full halving period elapsed."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * 0.5 ** (epoch // cfg.lr_halving_period)


@dataclass
class TrainTrace:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    clip_events: int = 0


@dataclass
class TrainResult:
    params: NetworkParams
    trace: TrainTrace


@dataclass
class _Prepared:
    subject_id: str
    y: float
    pair: LagPair


def _prepare(dataset: Dataset, lag: int) -> list[_Prepared]:
    return [
        _Prepared(subject_id=s.subject_id, y=float(s.label), pair=prepared_pair(s, lag))
        for s in dataset.subjects
    ]


def _batches(order: np.ndarray, prepared: list[_Prepared], batch_size: int) -> list[list[int]]:
    """Chunk the shuffled order into equal-length groups of at most batch_size."""
    groups: list[list[int]] = []
    for idx in order:
        t_len = prepared[idx].pair.input.shape[1]
        if groups and len(groups[-1]) < batch_size and prepared[groups[-1][0]].pair.input.shape[1] == t_len:
            groups[-1].append(int(idx))
        else:
            groups.append([int(idx)])
    return groups


def _batch_loss(
    weights: dict[str, Tensor],
    prepared: list[_Prepared],
    batch: Sequence[int],
    heads: int,
    alpha: float,
    compute_freq: bool,
) -> tuple[Tensor, float, float]:
    """Build the summed batch objective; returns (total graph, bce, freq)."""
    members = [prepared[i] for i in batch]
    xs = [Tensor(step) for step in batch_steps([m.pair.input for m in members])]
    out = forward_graph(weights, xs, heads)
    y = Tensor(np.array([[m.y] for m in members]))
    bce_term = bce_graph(out.p, y)
    target_stack = Tensor(np.concatenate([m.pair.target for m in members], axis=0))
    freq_value = 0.0
    if alpha > 0:
        freq_term = freq_loss_graph(out.xhat_stack, target_stack)
        total = bce_term + alpha * freq_term
        freq_value = freq_term.item()
    else:
        total = bce_term
        if compute_freq:
            freq_value = freq_loss_graph(out.xhat_stack, target_stack).item()
    return total, bce_term.item(), freq_value


def _clip_grads(grads: dict[str, np.ndarray], clip_norm: float) -> tuple[dict[str, np.ndarray], bool]:
    total = math.sqrt(sum(float((g * g).sum()) for _, g in sorted(grads.items())))
    if clip_norm > 0 and total > clip_norm:
        factor = clip_norm / total
        return {k: g * factor for k, g in grads.items()}, True
    return grads, False


def evaluate_probs(params: NetworkParams, prepared: list[_Prepared], batch_size: int = 32) -> np.ndarray:
    """Class probabilities for prepared subjects, batched by equal length."""
    probs = np.zeros(len(prepared))
    order = np.arange(len(prepared))
    for batch in _batches(order, prepared, batch_size):
        weights = weight_tensors(params)
        xs = [Tensor(step) for step in batch_steps([prepared[i].pair.input for i in batch])]
        out = forward_graph(weights, xs, params.heads)
        probs[list(batch)] = out.p.value.ravel()
    return probs


def train(
    dataset: Dataset,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    val_dataset: Dataset | None = None,
    log_stream=None,
    initial_params: NetworkParams | None = None,
    compute_freq_metrics: bool = True,
) -> TrainResult:
    """Run the fixed-epoch training loop; returns final params and the trace.

    One JSON object per epoch (epoch, lr, bce, freq, total, val_accuracy) is
    written to ``log_stream`` when given.  Losses in the trace are per-subject
    means; the step records hold raw batch sums.
    """
    cfg.validate()
    model_cfg.validate()
    if not dataset.subjects:
        raise ConfigError("training split is empty")
    prepared = _prepare(dataset, model_cfg.lag)
    val_prepared = _prepare(val_dataset, model_cfg.lag) if val_dataset is not None else None
    if initial_params is None:
        params = init_params(dataset.n_channels, model_cfg, seed=cfg.seed)
    else:
        params = initial_params.copy()
    weights_np = params.weights
    adam = AdamState.zeros_like(weights_np)
    shuffle_rng = np.random.default_rng([cfg.seed, 23])
    trace = TrainTrace()
    step_counter = 0
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        order = shuffle_rng.permutation(len(prepared))
        epoch_bce = 0.0
        epoch_freq = 0.0
        for batch in _batches(order, prepared, cfg.batch_size):
            weights = {name: Tensor(arr, needs_grad=True) for name, arr in weights_np.items()}
            total, bce_value, freq_value = _batch_loss(
                weights, prepared, batch, params.heads, cfg.alpha, compute_freq_metrics
            )
            total_value = total.item()
            if not math.isfinite(total_value):
                raise TrainingError(f"non-finite loss at epoch {epoch} batch {batch}")
            total.backward()
            grads = {}
            for name, w in weights.items():
                g = w.grad if w.grad is not None else np.zeros_like(w.value)
                if not np.all(np.isfinite(g)):
                    raise TrainingError(
                        f"non-finite gradient in parameter {name} at epoch {epoch} batch {batch}"
                    )
                grads[name] = g
            grads, clipped = _clip_grads(grads, cfg.clip_norm)
            if clipped:
                trace.clip_events += 1
            weights_np, adam = adam_step(
                weights_np, grads, adam, lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps
            )
            trace.steps.append(
                {
                    "step": step_counter,
                    "epoch": epoch,
                    "bce": bce_value,
                    "freq": freq_value,
                    "total": bce_value + cfg.alpha * freq_value,
                }
            )
            step_counter += 1
            epoch_bce += bce_value
            epoch_freq += freq_value
        params = NetworkParams(
            n=params.n, hidden=params.hidden, heads=params.heads, lag=params.lag,
            seed=params.seed, weights=weights_np,
        )
        n_subjects = len(prepared)
        val_accuracy = None
        if val_prepared:
            probs = evaluate_probs(params, val_prepared)
            predicted = (probs > 0.5).astype(int)
            labels = np.array([m.y for m in val_prepared])
            val_accuracy = float((predicted == labels).mean())
        record = {
            "epoch": epoch,
            "lr": lr,
            "bce": epoch_bce / n_subjects,
            "freq": epoch_freq / n_subjects,
            "total": (epoch_bce + cfg.alpha * epoch_freq) / n_subjects,
            "val_accuracy": val_accuracy,
        }
        trace.epochs.append(record)
        if log_stream is not None:
            log_stream.write(json.dumps(record, sort_keys=True) + "\n")
    return TrainResult(params=params, trace=trace)


__all__ = [
    "TrainConfig",
    "AdamState",
    "TrainTrace",
    "TrainResult",
    "adam_step",
    "lr_schedule",
    "train",
    "evaluate_probs",
]
