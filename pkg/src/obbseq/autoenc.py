"""Composite recurrent sequence autoencoder, from scratch on numpy.

One encoder cell reads the first t_in frames of a corner-feature sequence;
its final hidden vector is the low-dimensional representation.  Two decoder
cells consume that vector as their input at every step (repeat-vector
semantics, zero initial state): one reconstructs the input window, the
other predicts the remaining future frames.  Time-shared linear heads map
decoder states to corner features.  Both LSTM cells (gate order: input,
forget, candidate, output; no peepholes) and simple tanh RNN cells are
supported.  Gradients are exact backpropagation through time, updates are
Adam with bias correction, and everything is float64 and deterministic
given a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import SimulationRecord, SplitDataset, normalize_records

__all__ = [
    "AdamState",
    "CellParams",
    "DenseParams",
    "History",
    "ModelParams",
    "TrainConfig",
    "adam_step",
    "backward",
    "cell_step",
    "decode",
    "encode",
    "forward",
    "init_adam",
    "init_model",
    "loss",
    "param_count",
    "predict_components",
    "train",
]


@dataclass
class CellParams:
    """Recurrent cell weights; the gate count G is implied by the shapes
    (rows = G*H), 4 for LSTM and 1 for the simple RNN."""

    w_x: np.ndarray  # (G*H, D)
    w_h: np.ndarray  # (G*H, H)
    b: np.ndarray  # (G*H,)

    @property
    def hidden_size(self) -> int:
        return self.w_h.shape[1]

    @property
    def gates(self) -> int:
        return self.w_x.shape[0] // self.w_h.shape[1]


@dataclass
class DenseParams:
    w: np.ndarray  # (H, O)
    b: np.ndarray  # (O,)


@dataclass
class ModelParams:
    encoder: CellParams
    dec_recon: CellParams
    dec_pred: CellParams
    head_recon: DenseParams
    head_pred: DenseParams
    cell_type: str  # "lstm" or "rnn"


@dataclass(frozen=True)
class TrainConfig:
    t_in: int = 12
    t_fin: int = 31
    epochs: int = 150
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.t_in < self.t_fin:
            raise ValueError(f"need 0 < t_in < t_fin, got t_in={self.t_in}, t_fin={self.t_fin}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _gate_count(cell_type: str) -> int:
    if cell_type == "lstm":
        return 4
    if cell_type == "rnn":
        return 1
    raise ValueError(f"cell_type must be 'lstm' or 'rnn', got {cell_type!r}")


def _glorot(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def _init_cell(rng: np.random.Generator, d: int, h: int, cell_type: str) -> CellParams:
    gates = _gate_count(cell_type)
    b = np.zeros(gates * h)
    if cell_type == "lstm":
        b[h : 2 * h] = 1.0  # forget gate open at the start of training
    return CellParams(
        w_x=_glorot(rng, gates * h, d), w_h=_glorot(rng, gates * h, h), b=b
    )


def init_model(
    cell_type: str,
    seed: int = 0,
    d_in: int = 24,
    h_enc: int = 24,
    h_dec: int = 256,
) -> ModelParams:
    _gate_count(cell_type)
    rng = np.random.default_rng(seed)
    return ModelParams(
        encoder=_init_cell(rng, d_in, h_enc, cell_type),
        dec_recon=_init_cell(rng, h_enc, h_dec, cell_type),
        dec_pred=_init_cell(rng, h_enc, h_dec, cell_type),
        head_recon=DenseParams(w=_glorot(rng, h_dec, d_in), b=np.zeros(d_in)),
        head_pred=DenseParams(w=_glorot(rng, h_dec, d_in), b=np.zeros(d_in)),
        cell_type=cell_type,
    )


def param_count(model: ModelParams) -> dict[str, int]:
    counts = {}
    for name in ("encoder", "dec_recon", "dec_pred"):
        cell: CellParams = getattr(model, name)
        counts[name] = cell.w_x.size + cell.w_h.size + cell.b.size
    for name in ("head_recon", "head_pred"):
        head: DenseParams = getattr(model, name)
        counts[name] = head.w.size + head.b.size
    counts["total"] = sum(counts.values())
    return counts


def _param_items(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    items = []
    for name in ("encoder", "dec_recon", "dec_pred"):
        cell = getattr(model, name)
        items += [(f"{name}.w_x", cell.w_x), (f"{name}.w_h", cell.w_h), (f"{name}.b", cell.b)]
    for name in ("head_recon", "head_pred"):
        head = getattr(model, name)
        items += [(f"{name}.w", head.w), (f"{name}.b", head.b)]
    return items


# ---------------------------------------------------------------------------
# forward pass


def _step_batch(
    params: CellParams, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray, tuple]:
    """One cell step on a batch; returns (h', c', cache-for-backprop)."""
    z = x @ params.w_x.T + h @ params.w_h.T + params.b
    hidden = params.hidden_size
    if params.gates == 4:
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = _sigmoid(z[:, 3 * hidden :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        return h_new, c_new, (i, f, g, o, c, tc)
    h_new = np.tanh(z)
    return h_new, c, (h_new,)


def cell_step(
    params: CellParams, x: np.ndarray, h: np.ndarray, c: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Single cell step on vectors (LSTM or RNN depending on the shapes)."""
    x, h, c = (np.asarray(a, dtype=float) for a in (x, h, c))
    if x.shape != (params.w_x.shape[1],) or h.shape != (params.hidden_size,):
        raise ValueError(
            f"shape mismatch: x {x.shape}, h {h.shape} for cell "
            f"(D={params.w_x.shape[1]}, H={params.hidden_size})"
        )
    h_new, c_new, _ = _step_batch(params, x[None], h[None], c[None])
    return h_new[0], c_new[0]


def _unroll(params: CellParams, inputs: np.ndarray) -> tuple[np.ndarray, list[tuple]]:
    """Run the cell over (T, N, D) inputs from zero state; collect caches."""
    t_steps, n, _ = inputs.shape
    hidden = params.hidden_size
    h = np.zeros((n, hidden))
    c = np.zeros((n, hidden))
    hs = np.empty((t_steps, n, hidden))
    caches = []
    for t in range(t_steps):
        h, c, cache = _step_batch(params, inputs[t], h, c)
        hs[t] = h
        caches.append(cache)
    return hs, caches


def _unroll_repeat(
    params: CellParams, latent: np.ndarray, steps: int
) -> tuple[np.ndarray, list[tuple]]:
    """Decoder unroll: the latent vector is the input at every step."""
    inputs = np.broadcast_to(latent, (steps, *latent.shape))
    return _unroll(params, inputs)


def encode(params: CellParams, seq: np.ndarray) -> np.ndarray:
    """Final hidden vector after reading the whole (T, D) sequence."""
    seq = np.asarray(seq, dtype=float)
    if seq.ndim != 2 or seq.shape[1] != params.w_x.shape[1]:
        raise ValueError(f"expected (T, {params.w_x.shape[1]}) input, got {seq.shape}")
    hs, _ = _unroll(params, seq[:, None, :])
    return hs[-1, 0]


def decode(cell: CellParams, head: DenseParams, latent: np.ndarray, steps: int) -> np.ndarray:
    """Roll the decoder for ``steps`` steps from the latent vector."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    latent = np.asarray(latent, dtype=float)
    hs, _ = _unroll_repeat(cell, latent[None], steps)
    return hs[:, 0, :] @ head.w + head.b


def forward(
    model: ModelParams, seq_in: np.ndarray, pred_steps: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode the input window, decode reconstruction and prediction."""
    seq_in = np.asarray(seq_in, dtype=float)
    hidden = encode(model.encoder, seq_in)
    recon = decode(model.dec_recon, model.head_recon, hidden, seq_in.shape[0])
    pred = decode(model.dec_pred, model.head_pred, hidden, pred_steps)
    return recon, pred, hidden


def predict_components(
    model: ModelParams, record: SimulationRecord, t_in: int, pred_steps: int
) -> dict[str, np.ndarray]:
    """Future-window predictions for every component of one simulation."""
    out = {}
    for seq in record.components:
        _, pred, _ = forward(model, seq.frames[:t_in], pred_steps)
        out[seq.component_id] = pred
    return out


# ---------------------------------------------------------------------------
# loss and gradients

def _stack_batch(
    records: list[SimulationRecord], t_in: int
) -> tuple[np.ndarray, np.ndarray]:
    """Stack all component sequences of a batch: (N, T, 24) plus per-sample
    weights 1/n_simulations (components sum, simulations average)."""
    if not records:
        raise ValueError("empty batch")
    frames, weights = [], []
    for record in records:
        if not record.components:
            raise ValueError(f"simulation {record.sim_id} has no components")
        for seq in record.components:
            if not seq.normalized:
                raise ValueError(
                    f"sequence ({seq.sim_id}, {seq.component_id}) is not normalized"
                )
            if seq.frames.shape[0] <= t_in:
                raise ValueError(
                    f"sequence length {seq.frames.shape[0]} leaves no prediction "
                    f"window for t_in={t_in}"
                )
            frames.append(seq.frames)
            weights.append(1.0 / len(records))
    return np.stack(frames), np.asarray(weights)


def _batch_outputs(model: ModelParams, x_in: np.ndarray):
    """Forward pass for (N, t_in, D) inputs; returns outputs plus caches."""
    t_in = x_in.shape[1]
    enc_inputs = np.ascontiguousarray(np.swapaxes(x_in, 0, 1))  # (T, N, D)
    enc_hs, enc_caches = _unroll(model.encoder, enc_inputs)
    latent = enc_hs[-1]
    return latent, enc_inputs, enc_hs, enc_caches, t_in


def _forward_training(model: ModelParams, x: np.ndarray, t_in: int):
    """Full composite forward on (N, T_fin, D) normalized sequences."""
    pred_steps = x.shape[1] - t_in
    latent, enc_inputs, enc_hs, enc_caches, _ = _batch_outputs(model, x[:, :t_in])
    rec_hs, rec_caches = _unroll_repeat(model.dec_recon, latent, t_in)
    prd_hs, prd_caches = _unroll_repeat(model.dec_pred, latent, pred_steps)
    recon = rec_hs @ model.head_recon.w + model.head_recon.b  # (T, N, O)
    pred = prd_hs @ model.head_pred.w + model.head_pred.b
    cache = {
        "enc_inputs": enc_inputs,
        "enc_hs": enc_hs,
        "enc_caches": enc_caches,
        "latent": latent,
        "rec_hs": rec_hs,
        "rec_caches": rec_caches,
        "prd_hs": prd_hs,
        "prd_caches": prd_caches,
        "recon": recon,
        "pred": pred,
    }
    return cache


def _batch_loss_value(x: np.ndarray, t_in: int, cache: dict, weights: np.ndarray) -> float:
    target_r = np.swapaxes(x[:, :t_in], 0, 1)
    target_p = np.swapaxes(x[:, t_in:], 0, 1)
    err_r = cache["recon"] - target_r
    err_p = cache["pred"] - target_p
    per_sample = np.mean(err_r**2, axis=(0, 2)) + np.mean(err_p**2, axis=(0, 2))
    return float(per_sample @ weights)


def loss(
    model: ModelParams,
    records: list[SimulationRecord],
    t_in: int,
) -> float:
    """Composite reconstruction + prediction MSE.

    Per component: mean squared error over the reconstruction window plus
    mean squared error over the prediction window (each averaged over its
    time steps and 24 features).  Components of a simulation are summed,
    simulations of the batch averaged.  Requires normalized sequences.
    """
    x, weights = _stack_batch(records, t_in)
    cache = _forward_training(model, x, t_in)
    return _batch_loss_value(x, t_in, cache, weights)


def _backward_cell(
    params: CellParams,
    inputs: np.ndarray,
    hs: np.ndarray,
    caches: list[tuple],
    d_hs: np.ndarray,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """BPTT through one unrolled cell.

    d_hs holds the gradients flowing into each step's hidden output from
    outside the cell (heads or downstream consumers); the recurrent flow is
    handled internally.  Returns parameter gradients and d_inputs.
    """
    t_steps, n, _ = inputs.shape
    hidden = params.hidden_size
    g_wx = np.zeros_like(params.w_x)
    g_wh = np.zeros_like(params.w_h)
    g_b = np.zeros_like(params.b)
    d_inputs = np.empty_like(inputs)
    dh_next = np.zeros((n, hidden))
    dc_next = np.zeros((n, hidden))

    for t in range(t_steps - 1, -1, -1):
        dh = d_hs[t] + dh_next
        h_prev = hs[t - 1] if t > 0 else np.zeros((n, hidden))
        if params.gates == 4:
            i, f, g, o, c_prev, tc = caches[t]
            do = dh * tc
            dct = dh * o * (1.0 - tc * tc) + dc_next
            di = dct * g
            df = dct * c_prev
            dg = dct * i
            dc_next = dct * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
        else:
            (h_new,) = caches[t]
            dz = dh * (1.0 - h_new * h_new)
        g_wx += dz.T @ inputs[t]
        g_wh += dz.T @ h_prev
        g_b += dz.sum(axis=0)
        d_inputs[t] = dz @ params.w_x
        dh_next = dz @ params.w_h
    return {"w_x": g_wx, "w_h": g_wh, "b": g_b}, d_inputs


def backward(
    model: ModelParams,
    records: list[SimulationRecord],
    t_in: int,
) -> tuple[dict[str, np.ndarray], float]:
    """Exact loss gradient for a batch, by backpropagation through time.

    The latent vector feeds every step of both decoders, so its gradient
    accumulates the input-gradients of all their steps before flowing back
    through the encoder.  Returns ({parameter name: gradient}, loss value).
    """
    x, weights = _stack_batch(records, t_in)
    cache = _forward_training(model, x, t_in)
    value = _batch_loss_value(x, t_in, cache, weights)

    pred_steps = x.shape[1] - t_in
    target_r = np.swapaxes(x[:, :t_in], 0, 1)
    target_p = np.swapaxes(x[:, t_in:], 0, 1)
    d_out = x.shape[2]
    w_col = weights[None, :, None]
    d_recon = 2.0 * (cache["recon"] - target_r) * w_col / (t_in * d_out)
    d_pred = 2.0 * (cache["pred"] - target_p) * w_col / (pred_steps * d_out)

    grads: dict[str, np.ndarray] = {}
    grads["head_recon.w"] = np.einsum("tnh,tno->ho", cache["rec_hs"], d_recon)
    grads["head_recon.b"] = d_recon.sum(axis=(0, 1))
    grads["head_pred.w"] = np.einsum("tnh,tno->ho", cache["prd_hs"], d_pred)
    grads["head_pred.b"] = d_pred.sum(axis=(0, 1))

    d_rec_hs = d_recon @ model.head_recon.w.T
    d_prd_hs = d_pred @ model.head_pred.w.T
    rec_inputs = np.broadcast_to(cache["latent"], (t_in, *cache["latent"].shape))
    prd_inputs = np.broadcast_to(cache["latent"], (pred_steps, *cache["latent"].shape))
    rec_grads, d_rec_in = _backward_cell(
        model.dec_recon, rec_inputs, cache["rec_hs"], cache["rec_caches"], d_rec_hs
    )
    prd_grads, d_prd_in = _backward_cell(
        model.dec_pred, prd_inputs, cache["prd_hs"], cache["prd_caches"], d_prd_hs
    )
    for key, val in rec_grads.items():
        grads[f"dec_recon.{key}"] = val
    for key, val in prd_grads.items():
        grads[f"dec_pred.{key}"] = val

    # repeat-vector fan-in: every decoder step pulled on the latent vector
    d_latent = d_rec_in.sum(axis=0) + d_prd_in.sum(axis=0)
    d_enc_hs = np.zeros_like(cache["enc_hs"])
    d_enc_hs[-1] = d_latent
    enc_grads, _ = _backward_cell(
        model.encoder, cache["enc_inputs"], cache["enc_hs"], cache["enc_caches"], d_enc_hs
    )
    for key, val in enc_grads.items():
        grads[f"encoder.{key}"] = val
    return grads, value


# ---------------------------------------------------------------------------
# optimization


def init_adam(model: ModelParams) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in _param_items(model)},
        v={k: np.zeros_like(p) for k, p in _param_items(model)},
        step=0,
    )


def adam_step(
    model: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
) -> None:
    """In-place Adam update with bias correction."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    scale1 = 1.0 - b1**state.step
    scale2 = 1.0 - b2**state.step
    for key, param in _param_items(model):
        grad = grads[key]
        state.m[key] = b1 * state.m[key] + (1.0 - b1) * grad
        state.v[key] = b2 * state.v[key] + (1.0 - b2) * grad * grad
        m_hat = state.m[key] / scale1
        v_hat = state.v[key] / scale2
        param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def train(
    split: SplitDataset,
    config: TrainConfig,
    cell_type: str,
) -> tuple[ModelParams, History]:
    """Mini-batch Adam training on per-simulation batches.

    Batches are whole simulations (all their components), shuffled each
    epoch by the seeded RNG.  History records the running mean training
    loss and the full test loss per epoch.  Raises RuntimeError if the
    loss goes non-finite.
    """
    if config.t_in != split.t_in or config.t_fin != split.t_fin:
        raise ValueError(
            f"config windows (t_in={config.t_in}, t_fin={config.t_fin}) do not match "
            f"the split (t_in={split.t_in}, t_fin={split.t_fin})"
        )
    model = init_model(cell_type, seed=config.seed)
    state = init_adam(model)
    rng = np.random.default_rng(config.seed)

    train_records = normalize_records(split.train, split.stats)
    test_records = normalize_records(split.test, split.stats)
    history = History()

    for epoch in range(config.epochs):
        order = rng.permutation(len(train_records))
        weighted_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_records[i] for i in order[start : start + config.batch_size]]
            grads, value = backward(model, batch, split.t_in)
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch + 1}; lower the learning rate"
                )
            adam_step(model, grads, state, config)
            weighted_sum += value * len(batch)
        history.train_loss.append(weighted_sum / len(train_records))
        history.test_loss.append(loss(model, test_records, split.t_in))
    return model, history
