"""Nearest-neighbor baselines and the method-comparison harness.

Both baselines predict a test simulation's future frames by copying the
future of its nearest training simulation: one measures distance in the
input-parameter space (per-dimension standardized), the other on the
observed input windows (summed squared Frobenius distance over
components).  The harness evaluates them against the trained composite
networks with the same prediction-window MSE used in training.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autoenc import ModelParams, TrainConfig, predict_components, train
from .dataset import SimulationRecord, SplitDataset, normalize_records

__all__ = [
    "EvalReport",
    "MethodResult",
    "evaluate",
    "nn_param_predict",
    "nn_sequence_predict",
    "run_comparison",
]

METHOD_ORDER = ("nn-param", "nn-sequence", "composite-rnn", "composite-lstm")


@dataclass
class MethodResult:
    test_mse: float
    std_over_seeds: float | None = None
    per_seed: list[float] | None = None


@dataclass
class EvalReport:
    rows: dict[str, MethodResult]


def _future_frames(record: SimulationRecord, t_in: int) -> dict[str, np.ndarray]:
    return {seq.component_id: seq.frames[t_in:] for seq in record.components}


def nn_param_predict(
    train_records: list[SimulationRecord], query_params: np.ndarray, t_in: int
) -> dict[str, np.ndarray]:
    """Copy the future of the train simulation nearest in parameter space.

    Parameters are standardized per dimension by the training statistics so
    no raw scale dominates; constant dimensions are left unscaled.  Ties go
    to the lowest sim_id.
    """
    if not train_records:
        raise ValueError("empty training set")
    query = np.asarray(query_params, dtype=float)
    all_params = np.stack([np.asarray(r.params, dtype=float) for r in train_records])
    if query.shape != all_params.shape[1:]:
        raise ValueError(
            f"parameter dimension mismatch: query {query.shape}, train {all_params.shape[1:]}"
        )
    # centering cancels inside a distance, so only the scales matter
    std = all_params.std(axis=0)
    std[std < 1e-12] = 1.0

    best = None
    best_dist = np.inf
    for record in sorted(train_records, key=lambda r: r.sim_id):
        dist = float(np.sum(((np.asarray(record.params, dtype=float) - query) / std) ** 2))
        if dist < best_dist:
            best_dist = dist
            best = record
    return _future_frames(best, t_in)


def nn_sequence_predict(
    train_records: list[SimulationRecord],
    query_input: dict[str, np.ndarray],
    t_in: int,
) -> dict[str, np.ndarray]:
    """Copy the future of the train simulation whose input windows are
    nearest: distance sums the squared Frobenius distances over components.
    Ties go to the lowest sim_id."""
    if not train_records:
        raise ValueError("empty training set")
    best = None
    best_dist = np.inf
    for record in sorted(train_records, key=lambda r: r.sim_id):
        windows = {seq.component_id: seq.frames[:t_in] for seq in record.components}
        if set(windows) != set(query_input):
            raise ValueError(
                f"component sets differ: train sim {record.sim_id} has {sorted(windows)}, "
                f"query has {sorted(query_input)}"
            )
        dist = 0.0
        for comp_id, window in windows.items():
            diff = window - np.asarray(query_input[comp_id], dtype=float)
            dist += float(np.sum(diff * diff))
        if dist < best_dist:
            best_dist = dist
            best = record
    return _future_frames(best, t_in)


def evaluate(
    predictions: dict[str, dict[str, np.ndarray]],
    truth: list[SimulationRecord],
    t_in: int,
) -> float:
    """Prediction-window MSE, training-loss semantics: per component the
    error is averaged over time steps and features, components of one
    simulation are summed, simulations averaged."""
    if not truth:
        raise ValueError("empty evaluation set")
    total = 0.0
    for record in truth:
        if record.sim_id not in predictions:
            raise ValueError(f"no prediction for simulation {record.sim_id}")
        per_sim = 0.0
        sim_pred = predictions[record.sim_id]
        for seq in record.components:
            if seq.component_id not in sim_pred:
                raise ValueError(
                    f"no prediction for component ({record.sim_id}, {seq.component_id})"
                )
            future = seq.frames[t_in:]
            pred = np.asarray(sim_pred[seq.component_id], dtype=float)
            if pred.shape != future.shape:
                raise ValueError(
                    f"shape mismatch for ({record.sim_id}, {seq.component_id}): "
                    f"prediction {pred.shape}, truth {future.shape}"
                )
            per_sim += float(np.mean((pred - future) ** 2))
        total += per_sim
    return total / len(truth)


def _network_mse(model: ModelParams, test: list[SimulationRecord], t_in: int, t_fin: int) -> float:
    preds = {
        record.sim_id: predict_components(model, record, t_in, t_fin - t_in)
        for record in test
    }
    return evaluate(preds, test, t_in)


def run_comparison(
    split: SplitDataset, train_config: TrainConfig, n_seeds: int = 5
) -> EvalReport:
    """Table of prediction MSEs: two copy baselines (deterministic, one
    number) and both network variants (mean and ddof-1 std over n_seeds
    training runs)."""
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be >= 1, got {n_seeds}")
    train_norm = normalize_records(split.train, split.stats)
    test_norm = normalize_records(split.test, split.stats)
    t_in = split.t_in

    param_preds = {
        r.sim_id: nn_param_predict(train_norm, r.params, t_in) for r in test_norm
    }
    seq_preds = {
        r.sim_id: nn_sequence_predict(
            train_norm,
            {seq.component_id: seq.frames[:t_in] for seq in r.components},
            t_in,
        )
        for r in test_norm
    }
    rows = {
        "nn-param": MethodResult(test_mse=evaluate(param_preds, test_norm, t_in)),
        "nn-sequence": MethodResult(test_mse=evaluate(seq_preds, test_norm, t_in)),
    }

    for cell_type in ("rnn", "lstm"):
        per_seed = []
        for s in range(n_seeds):
            config = replace(train_config, seed=train_config.seed + s)
            model, _ = train(split, config, cell_type)
            per_seed.append(_network_mse(model, test_norm, t_in, split.t_fin))
        rows[f"composite-{cell_type}"] = MethodResult(
            test_mse=float(np.mean(per_seed)),
            std_over_seeds=float(np.std(per_seed, ddof=1)) if n_seeds > 1 else None,
            per_seed=per_seed,
        )
    return EvalReport(rows=rows)
