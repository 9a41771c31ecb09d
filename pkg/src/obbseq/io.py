"""File formats: cloud JSONL, box/params/label CSVs, checkpoint JSON.

All writers are deterministic: fixed row order, LF newlines, UTF-8, no
timestamps, floats serialized with repr (shortest round-trip form), so
identical inputs produce byte-identical files.  Readers validate
structure and report the offending line number.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .autoenc import CellParams, DenseParams, ModelParams, TrainConfig
from .baselines import METHOD_ORDER, EvalReport
from .dataset import ComponentSequence, NormalizationStats, SimulationRecord
from .synthgen import SimulationClouds, SynthLabel

__all__ = [
    "BOX_HEADER",
    "load_checkpoint",
    "read_boxes",
    "read_clouds",
    "read_labels",
    "read_params",
    "save_checkpoint",
    "write_boxes",
    "write_clouds",
    "write_embedding",
    "write_history",
    "write_labels",
    "write_params",
    "write_report",
]

CHECKPOINT_VERSION = 1

BOX_HEADER = "sim_id,component_id,t," + ",".join(
    f"c{corner:02d}{axis}" for corner in range(8) for axis in ("x", "y", "z")
)


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# clouds (JSON Lines)


def write_clouds(path: str | Path, sims: list[SimulationClouds]) -> None:
    """One JSON object per line: sim_id, component_id, 1-based t, points."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sim in sorted(sims, key=lambda s: s.sim_id):
            for comp in sorted(sim.components, key=lambda c: c.component_id):
                for t_idx in range(comp.clouds.shape[0]):
                    row = {
                        "sim_id": sim.sim_id,
                        "component_id": comp.component_id,
                        "t": t_idx + 1,
                        # json serializes floats with repr: round-trip exact
                        "points": [[float(v) for v in p] for p in comp.clouds[t_idx]],
                    }
                    fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def read_clouds(path: str | Path) -> dict[tuple[str, str], np.ndarray]:
    """Load cloud series keyed by (sim_id, component_id), shape (T, N, 3).

    Validates that every (sim, component) covers t = 1..T without gaps.
    """
    rows: dict[tuple[str, str], dict[int, np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            try:
                key = (str(obj["sim_id"]), str(obj["component_id"]))
                t = int(obj["t"])
                points = np.array(obj["points"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed cloud record ({exc})") from None
            if points.ndim != 2 or points.shape[1] != 3:
                raise ValueError(
                    f"{path}:{lineno}: points must be an Nx3 array, got shape {points.shape}"
                )
            if t < 1:
                raise ValueError(f"{path}:{lineno}: t must be >= 1, got {t}")
            per_key = rows.setdefault(key, {})
            if t in per_key:
                raise ValueError(
                    f"{path}:{lineno}: duplicate time step (sim {key[0]}, "
                    f"component {key[1]}, t={t})"
                )
            per_key[t] = points

    out: dict[tuple[str, str], np.ndarray] = {}
    for (sim_id, comp_id), by_t in rows.items():
        t_max = max(by_t)
        missing = sorted(set(range(1, t_max + 1)) - set(by_t))
        if missing:
            raise ValueError(
                f"{path}: missing time step (sim {sim_id}, component {comp_id}, "
                f"t={missing[0]})"
            )
        out[(sim_id, comp_id)] = np.stack([by_t[t] for t in range(1, t_max + 1)])
    if not out:
        raise ValueError(f"{path}: no cloud records found")
    return out


# ---------------------------------------------------------------------------
# boxes (CSV, one row per sim/component/time step)


def write_frame_rows(
    path: str | Path, rows: list[tuple[str, str, int, np.ndarray]]
) -> None:
    """Write explicit (sim_id, component_id, t, 24-frame) rows as box CSV."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(BOX_HEADER + "\n")
        for sim_id, comp_id, t, frame in rows:
            values = ",".join(_fmt(v) for v in frame)
            fh.write(f"{sim_id},{comp_id},{t},{values}\n")


def write_boxes(path: str | Path, records: list[SimulationRecord]) -> None:
    rows = []
    for record in sorted(records, key=lambda r: r.sim_id):
        for seq in sorted(record.components, key=lambda s: s.component_id):
            for t_idx, frame in enumerate(seq.frames, start=1):
                rows.append((record.sim_id, seq.component_id, t_idx, frame))
    write_frame_rows(path, rows)


def read_boxes(path: str | Path) -> dict[tuple[str, str], np.ndarray]:
    """Load corner-frame series keyed by (sim_id, component_id), (T, 24).

    Validates the header, the column count and gap-free 1-based time steps.
    """
    frames: dict[tuple[str, str], dict[int, np.ndarray]] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != BOX_HEADER:
            raise ValueError(f"{path}:1: unexpected header")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 27:
                raise ValueError(f"{path}:{lineno}: expected 27 columns, got {len(parts)}")
            sim_id, comp_id = parts[0], parts[1]
            try:
                t = int(parts[2])
                values = np.array([float(v) for v in parts[3:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed box row ({exc})") from None
            per_key = frames.setdefault((sim_id, comp_id), {})
            if t in per_key:
                raise ValueError(
                    f"{path}:{lineno}: duplicate time step (sim {sim_id}, "
                    f"component {comp_id}, t={t})"
                )
            per_key[t] = values

    out: dict[tuple[str, str], np.ndarray] = {}
    for (sim_id, comp_id), by_t in frames.items():
        t_max = max(by_t)
        missing = sorted(set(range(1, t_max + 1)) - set(by_t))
        if missing:
            raise ValueError(
                f"{path}: missing time step (sim {sim_id}, component {comp_id}, "
                f"t={missing[0]})"
            )
        out[(sim_id, comp_id)] = np.stack([by_t[t] for t in range(1, t_max + 1)])
    if not out:
        raise ValueError(f"{path}: no box rows found")
    return out


def boxes_to_records(
    boxes: dict[tuple[str, str], np.ndarray], params: dict[str, np.ndarray]
) -> list[SimulationRecord]:
    """Join box frames with per-simulation parameters into records."""
    by_sim: dict[str, list[ComponentSequence]] = {}
    for (sim_id, comp_id), frames in sorted(boxes.items()):
        by_sim.setdefault(sim_id, []).append(
            ComponentSequence(sim_id=sim_id, component_id=comp_id, frames=frames)
        )
    records = []
    for sim_id, comps in sorted(by_sim.items()):
        if sim_id not in params:
            raise ValueError(f"no parameters for simulation {sim_id}")
        records.append(
            SimulationRecord(sim_id=sim_id, params=params[sim_id], components=comps)
        )
    return records


# ---------------------------------------------------------------------------
# params / labels (CSV)


def write_params(path: str | Path, sims: list[SimulationClouds]) -> None:
    n_params = len(sims[0].params) if sims else 0
    header = "sim_id," + ",".join(f"p{i}" for i in range(n_params))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for sim in sorted(sims, key=lambda s: s.sim_id):
            fh.write(sim.sim_id + "," + ",".join(_fmt(v) for v in sim.params) + "\n")


def read_params(path: str | Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split(",")
        if not header or header[0] != "sim_id":
            raise ValueError(f"{path}:1: unexpected header")
        width = len(header) - 1
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != width + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {width + 1} columns, got {len(parts)}"
                )
            try:
                out[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed parameter row ({exc})") from None
    if not out:
        raise ValueError(f"{path}: no parameter rows found")
    return out


def write_labels(path: str | Path, labels: list[SynthLabel]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sim_id,component_id,mode\n")
        for label in sorted(labels, key=lambda l: (l.sim_id, l.component_id)):
            fh.write(f"{label.sim_id},{label.component_id},{label.mode}\n")


def read_labels(path: str | Path) -> dict[tuple[str, str], str]:
    out: dict[tuple[str, str], str] = {}
    with open(path, encoding="utf-8") as fh:
        if fh.readline().rstrip("\n") != "sim_id,component_id,mode":
            raise ValueError(f"{path}:1: unexpected header")
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 columns, got {len(parts)}")
            out[(parts[0], parts[1])] = parts[2]
    if not out:
        raise ValueError(f"{path}: no label rows found")
    return out


# ---------------------------------------------------------------------------
# checkpoint (JSON)


def save_checkpoint(
    path: str | Path,
    model: ModelParams,
    stats: NormalizationStats,
    config: TrainConfig,
    split_info: dict[str, int],
) -> None:
    """Single JSON document: version, config, stats, row-major layers."""
    layers = []
    for name in ("encoder", "dec_recon", "dec_pred"):
        cell: CellParams = getattr(model, name)
        for part in ("w_x", "w_h", "b"):
            arr = getattr(cell, part)
            layers.append(
                {"name": f"{name}.{part}", "shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            )
    for name in ("head_recon", "head_pred"):
        head: DenseParams = getattr(model, name)
        for part in ("w", "b"):
            arr = getattr(head, part)
            layers.append(
                {"name": f"{name}.{part}", "shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            )
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config": {"cell_type": model.cell_type, **asdict(config), "split": split_info},
        "stats": {"mean": stats.mean.tolist(), "std": stats.std},
        "layers": layers,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(
    path: str | Path,
) -> tuple[ModelParams, NormalizationStats, TrainConfig, dict[str, int]]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"{path}: unsupported checkpoint version {doc.get('format_version')!r}"
        )
    arrays: dict[str, np.ndarray] = {}
    for layer in doc["layers"]:
        arr = np.array(layer["data"], dtype=float).reshape(layer["shape"])
        arrays[layer["name"]] = arr
    expected = {
        f"{cell}.{part}" for cell in ("encoder", "dec_recon", "dec_pred") for part in ("w_x", "w_h", "b")
    } | {f"{head}.{part}" for head in ("head_recon", "head_pred") for part in ("w", "b")}
    if set(arrays) != expected:
        raise ValueError(f"{path}: checkpoint layers do not match the expected set")

    def cell(name: str) -> CellParams:
        return CellParams(w_x=arrays[f"{name}.w_x"], w_h=arrays[f"{name}.w_h"], b=arrays[f"{name}.b"])

    conf = dict(doc["config"])
    cell_type = conf.pop("cell_type")
    split_info = conf.pop("split")
    model = ModelParams(
        encoder=cell("encoder"),
        dec_recon=cell("dec_recon"),
        dec_pred=cell("dec_pred"),
        head_recon=DenseParams(w=arrays["head_recon.w"], b=arrays["head_recon.b"]),
        head_pred=DenseParams(w=arrays["head_pred.w"], b=arrays["head_pred.b"]),
        cell_type=cell_type,
    )
    stats = NormalizationStats(
        mean=np.array(doc["stats"]["mean"], dtype=float), std=float(doc["stats"]["std"])
    )
    return model, stats, TrainConfig(**conf), dict(split_info)


# ---------------------------------------------------------------------------
# training history, evaluation report, embedding


def write_history(path: str | Path, train_loss: list[float], test_loss: list[float]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,test_loss\n")
        for epoch, (tr, te) in enumerate(zip(train_loss, test_loss), start=1):
            fh.write(f"{epoch},{_fmt(tr)},{_fmt(te)}\n")


def write_report(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("method,test_mse,std_over_seeds,per_seed\n")
        for method in METHOD_ORDER:
            row = report.rows[method]
            std = "" if row.std_over_seeds is None else _fmt(row.std_over_seeds)
            seeds = "" if not row.per_seed else ";".join(_fmt(v) for v in row.per_seed)
            fh.write(f"{method},{_fmt(row.test_mse)},{std},{seeds}\n")


def write_embedding(
    path: str | Path,
    ids: list[tuple[str, str]],
    coords: np.ndarray,
    clusters: np.ndarray,
) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("sim_id,component_id,x,y,cluster\n")
        for (sim_id, comp_id), (x, y), cluster in zip(ids, coords, clusters):
            fh.write(f"{sim_id},{comp_id},{_fmt(x)},{_fmt(y)},{int(cluster)}\n")


def write_summary(path: str | Path, entries: list[tuple[str, object]]) -> None:
    """Small metric,value CSV; floats round-trip exact, ints plain."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("metric,value\n")
        for key, value in entries:
            text = _fmt(value) if isinstance(value, float) else str(value)
            fh.write(f"{key},{text}\n")
