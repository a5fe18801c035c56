"""The forecast-classify network.

A single-layer LSTM encodes the multichannel input sequence; its hidden
states feed two consumers built on the same embeddings:

* a 2-layer LSTM decoder plus linear projection that forecasts the signal
  one lag ahead (column j of the forecast predicts target column j), and
* a multihead attentional pooling over the time steps followed by a dense
  head that emits the class probability.

All computation runs on the autodiff tensors so the trainer gets exact
gradients; the public single-subject entry points accept and return plain
numpy arrays.  ``forward`` is read-only on the parameters, so concurrent
forward passes over different subjects are safe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import LagPair
from .errors import ConfigError, ShapeError


class LstmLayer(NamedTuple):
    """Weights of one LSTM layer: gates stacked as [input, forget, cell, output]."""

    wx: Tensor  # 4H x in
    wh: Tensor  # 4H x H
    b: Tensor  # 1 x 4H


@dataclass
class LstmState:
    h: Tensor
    c: Tensor


@dataclass
class ForecastResult:
    x_hat: np.ndarray  # N x T'
    embeddings: np.ndarray  # H x T'


@dataclass
class ModelConfig:
    hidden: int = 64
    heads: int = 4
    lag: int = 1

    def validate(self) -> None:
        if self.hidden < 2 or self.hidden % 2 != 0:
            raise ConfigError(f"hidden size must be even and >= 2, got {self.hidden}")
        if self.heads < 1 or self.hidden % self.heads != 0:
            raise ConfigError(f"hidden size {self.hidden} not divisible by {self.heads} heads")
        if self.lag < 1:
            raise ConfigError(f"lag must be >= 1, got {self.lag}")


def param_shapes(n: int, hidden: int) -> dict[str, tuple[int, int]]:
    h = hidden
    return {
        "enc.wx": (4 * h, n),
        "enc.wh": (4 * h, h),
        "enc.b": (1, 4 * h),
        "dec1.wx": (4 * h, h),
        "dec1.wh": (4 * h, h),
        "dec1.b": (1, 4 * h),
        "dec2.wx": (4 * h, h),
        "dec2.wh": (4 * h, h),
        "dec2.b": (1, 4 * h),
        "proj.w": (n, h),
        "proj.b": (1, n),
        "pool.wq": (h, h),
        "pool.wk": (h, h),
        "pool.wv": (h, h),
        "pool.wo": (h, h),
        "head.w1": (h // 2, h),
        "head.b1": (1, h // 2),
        "head.w2": (1, h // 2),
        "head.b2": (1, 1),
    }


def _fan_in(name: str, n: int, hidden: int) -> int:
    # LSTM gate matrices act on the concatenated [x; h] vector.
    if name.startswith("enc."):
        return n + hidden
    if name.startswith(("dec1.", "dec2.")):
        return 2 * hidden
    if name == "head.w2":
        return hidden // 2
    return hidden


@dataclass
class NetworkParams:
    """All trainable weights plus the shape/seed config they were built from."""

    n: int
    hidden: int
    heads: int
    lag: int
    seed: int
    weights: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        expected = param_shapes(self.n, self.hidden)
        if set(self.weights) != set(expected):
            missing = set(expected) ^ set(self.weights)
            raise ShapeError(f"parameter names mismatch: {sorted(missing)}")
        for name, shape in expected.items():
            if self.weights[name].shape != shape:
                raise ShapeError(f"{name}: shape {self.weights[name].shape}, expected {shape}")

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            n=self.n,
            hidden=self.hidden,
            heads=self.heads,
            lag=self.lag,
            seed=self.seed,
            weights={k: v.copy() for k, v in self.weights.items()},
        )


def init_params(n: int, cfg: ModelConfig, seed: int) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights; forget-gate bias 1."""
    cfg.validate()
    rng = np.random.default_rng([seed, 11])
    h = cfg.hidden
    weights: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(n, h).items():
        if name.endswith(".b") or name.startswith("head.b") or name == "proj.b":
            weights[name] = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(_fan_in(name, n, h))
            weights[name] = rng.uniform(-bound, bound, size=shape)
    for layer in ("enc", "dec1", "dec2"):
        weights[f"{layer}.b"][0, h : 2 * h] = 1.0  # forget gate starts open
    return NetworkParams(n=n, hidden=h, heads=cfg.heads, lag=cfg.lag, seed=seed, weights=weights)


def lstm_cell(x_t, state: LstmState, layer: LstmLayer) -> tuple[Tensor, LstmState]:
    """One LSTM update; returns (h', new state).

    Gates follow the standard recipe: i, f, o = sigmoid(W [x; h] + b),
    g = tanh(.), c' = f*c + i*g, h' = o*tanh(c').
    """
    x_t = ad.as_tensor(x_t)
    hidden = state.h.cols
    z = ad.add(
        ad.add(ad.matmul(x_t, ad.transpose(layer.wx)), ad.matmul(state.h, ad.transpose(layer.wh))),
        layer.b,
    )
    if z.cols != 4 * hidden:
        raise ShapeError(f"gate pre-activation has {z.cols} columns, expected {4 * hidden}")
    i = ad.sigmoid(ad.slice_cols(z, 0, hidden))
    f = ad.sigmoid(ad.slice_cols(z, hidden, 2 * hidden))
    g = ad.tanh(ad.slice_cols(z, 2 * hidden, 3 * hidden))
    o = ad.sigmoid(ad.slice_cols(z, 3 * hidden, 4 * hidden))
    c_new = ad.add(ad.mul(f, state.c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, LstmState(h=h_new, c=c_new)


def zero_state(batch: int, hidden: int) -> LstmState:
    return LstmState(h=Tensor(np.zeros((batch, hidden))), c=Tensor(np.zeros((batch, hidden))))


def _run_layer(xs: Sequence[Tensor], layer: LstmLayer, hidden: int) -> list[Tensor]:
    state = zero_state(xs[0].rows, hidden)
    outputs = []
    for x_t in xs:
        h, state = lstm_cell(x_t, state, layer)
        outputs.append(h)
    return outputs


def _layer_from(weights: dict[str, Tensor], prefix: str) -> LstmLayer:
    return LstmLayer(wx=weights[f"{prefix}.wx"], wh=weights[f"{prefix}.wh"], b=weights[f"{prefix}.b"])


@dataclass
class GraphOutputs:
    """Batched forward-pass graph: probabilities, forecasts, embeddings."""

    p: Tensor  # B x 1
    xhat_stack: Tensor  # (B*N) x T', row s*N + i = channel i of subject s
    tokens: Tensor  # (B*T') x H, row s*T' + t = step-t embedding of subject s
    batch: int
    steps: int


def forward_graph(weights: dict[str, Tensor], xs: Sequence[Tensor], heads: int) -> GraphOutputs:
    """Run encoder, decoder, pooling, and head over a batch of step tensors.

    ``xs`` is the time-major input: one BxN tensor per step.  Causality holds
    by construction, each step's outputs depend only on steps 0..t.
    """
    hidden = weights["enc.wh"].cols
    batch = xs[0].rows
    steps = len(xs)
    enc_states = _run_layer(xs, _layer_from(weights, "enc"), hidden)
    dec1 = _run_layer(enc_states, _layer_from(weights, "dec1"), hidden)
    dec2 = _run_layer(dec1, _layer_from(weights, "dec2"), hidden)
    proj_t = ad.transpose(weights["proj.w"])
    y_steps = [ad.add(ad.matmul(h, proj_t), weights["proj.b"]) for h in dec2]
    xhat_stack = ad.stack_channel_rows(y_steps)
    tokens = ad.stack_token_rows(enc_states)
    pooled = _attention_pool_tokens(tokens, weights, heads, batch, steps)
    p = _classify_tensor(pooled, weights)
    return GraphOutputs(p=p, xhat_stack=xhat_stack, tokens=tokens, batch=batch, steps=steps)


def _attention_pool_tokens(
    tokens: Tensor, weights: dict[str, Tensor], heads: int, batch: int, steps: int
) -> Tensor:
    """Scaled dot-product attention over time steps, then mean over time.

    Projections are computed once on the full (B*T')xH token stack; the
    attention itself runs per subject so scores never mix subjects.
    """
    hidden = tokens.cols
    if hidden % heads != 0:
        raise ConfigError(f"hidden size {hidden} not divisible by {heads} heads")
    d_k = hidden // heads
    scale = 1.0 / math.sqrt(d_k)
    q = ad.matmul(tokens, ad.transpose(weights["pool.wq"]))
    k = ad.matmul(tokens, ad.transpose(weights["pool.wk"]))
    v = ad.matmul(tokens, ad.transpose(weights["pool.wv"]))
    wo_t = ad.transpose(weights["pool.wo"])
    pooled_rows = []
    for s in range(batch):
        lo, hi = s * steps, (s + 1) * steps
        q_s, k_s, v_s = ad.slice_rows(q, lo, hi), ad.slice_rows(k, lo, hi), ad.slice_rows(v, lo, hi)
        head_outs = []
        for head in range(heads):
            c0, c1 = head * d_k, (head + 1) * d_k
            q_h = ad.slice_cols(q_s, c0, c1)
            k_h = ad.slice_cols(k_s, c0, c1)
            v_h = ad.slice_cols(v_s, c0, c1)
            scores = ad.mul(ad.matmul(q_h, ad.transpose(k_h)), scale)
            att = ad.softmax_rows(scores)
            head_outs.append(ad.matmul(att, v_h))
        merged = ad.matmul(ad.concat_cols(head_outs), wo_t)
        pooled_rows.append(ad.mean_rows(merged))
    return ad.concat_rows(pooled_rows)


def _classify_tensor(pooled: Tensor, weights: dict[str, Tensor]) -> Tensor:
    hid = ad.tanh(ad.add(ad.matmul(pooled, ad.transpose(weights["head.w1"])), weights["head.b1"]))
    logit = ad.add(ad.matmul(hid, ad.transpose(weights["head.w2"])), weights["head.b2"])
    return ad.sigmoid(logit)


def weight_tensors(params: NetworkParams, needs_grad: bool = False) -> dict[str, Tensor]:
    return {name: Tensor(arr, needs_grad=needs_grad) for name, arr in params.weights.items()}


def batch_steps(inputs: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Turn a batch of equal-shape NxT' inputs into time-major BxN arrays."""
    shapes = {x.shape for x in inputs}
    if len(shapes) != 1:
        raise ShapeError(f"batch members disagree on shape: {sorted(shapes)}")
    cube = np.stack(inputs, axis=0)  # B x N x T'
    return [cube[:, :, t].copy() for t in range(cube.shape[2])]


def _subject_steps(x: np.ndarray) -> list[Tensor]:
    return [Tensor(x[:, t].reshape(1, -1)) for t in range(x.shape[1])]


def encode(x: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Hidden-state sequence of the encoder over one subject, H x T'."""
    weights = weight_tensors(params)
    states = _run_layer(_subject_steps(np.asarray(x, dtype=np.float64)), _layer_from(weights, "enc"), params.hidden)
    return np.column_stack([h.value.ravel() for h in states])


def decode(embeddings: np.ndarray, params: NetworkParams) -> np.ndarray:
    """Forecast matrix N x T' from an H x T' embedding sequence."""
    weights = weight_tensors(params)
    emb = np.asarray(embeddings, dtype=np.float64)
    xs = _subject_steps(emb)
    dec1 = _run_layer(xs, _layer_from(weights, "dec1"), params.hidden)
    dec2 = _run_layer(dec1, _layer_from(weights, "dec2"), params.hidden)
    proj_t = ad.transpose(weights["proj.w"])
    cols = [ad.add(ad.matmul(h, proj_t), weights["proj.b"]).value.ravel() for h in dec2]
    return np.column_stack(cols)


def attention_pool(embeddings: np.ndarray, params: NetworkParams, heads: int | None = None) -> np.ndarray:
    """Pool an H x T' embedding sequence to a single H-vector."""
    heads = params.heads if heads is None else heads
    emb = np.asarray(embeddings, dtype=np.float64)
    tokens = Tensor(emb.T)  # T' x H
    weights = weight_tensors(params)
    pooled = _attention_pool_tokens(tokens, weights, heads, batch=1, steps=emb.shape[1])
    return pooled.value.ravel()


def classify(pooled: np.ndarray, params: NetworkParams) -> float:
    """Class probability from a pooled H-vector."""
    weights = weight_tensors(params)
    return _classify_tensor(Tensor(np.asarray(pooled, dtype=np.float64).reshape(1, -1)), weights).item()


def forward(pair: LagPair, params: NetworkParams) -> tuple[ForecastResult, float]:
    """Full single-subject pass: forecast and class probability."""
    weights = weight_tensors(params)
    xs = [Tensor(step) for step in batch_steps([pair.input])]
    out = forward_graph(weights, xs, params.heads)
    result = ForecastResult(x_hat=out.xhat_stack.value.copy(), embeddings=out.tokens.value.T.copy())
    return result, out.p.item()


def forward_batch(pairs: Sequence[LagPair], params: NetworkParams) -> tuple[list[ForecastResult], np.ndarray]:
    """Batched inference over equal-shape pairs; returns per-subject results."""
    weights = weight_tensors(params)
    xs = [Tensor(step) for step in batch_steps([p.input for p in pairs])]
    out = forward_graph(weights, xs, params.heads)
    n = pairs[0].input.shape[0]
    results = []
    for s in range(len(pairs)):
        x_hat = out.xhat_stack.value[s * n : (s + 1) * n, :].copy()
        emb = out.tokens.value[s * out.steps : (s + 1) * out.steps, :].T.copy()
        results.append(ForecastResult(x_hat=x_hat, embeddings=emb))
    return results, out.p.value.ravel().copy()


CHECKPOINT_FORMAT = "causalcast-checkpoint-v1"


def save_checkpoint(params: NetworkParams, path) -> None:
    """Write a self-describing JSON checkpoint (named shapes + config)."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": {
            "n": params.n,
            "hidden": params.hidden,
            "heads": params.heads,
            "lag": params.lag,
            "seed": params.seed,
        },
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in sorted(params.weights.items())
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> NetworkParams:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unrecognised checkpoint format: {payload.get('format')!r}")
    cfg = payload["config"]
    weights = {
        name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    return NetworkParams(
        n=int(cfg["n"]),
        hidden=int(cfg["hidden"]),
        heads=int(cfg["heads"]),
        lag=int(cfg["lag"]),
        seed=int(cfg["seed"]),
        weights=weights,
    )


__all__ = [
    "LstmLayer",
    "LstmState",
    "ForecastResult",
    "ModelConfig",
    "NetworkParams",
    "GraphOutputs",
    "param_shapes",
    "init_params",
    "lstm_cell",
    "zero_state",
    "forward_graph",
    "weight_tensors",
    "batch_steps",
    "encode",
    "decode",
    "attention_pool",
    "classify",
    "forward",
    "forward_batch",
    "save_checkpoint",
    "load_checkpoint",
]
