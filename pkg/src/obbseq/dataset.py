"""Corner-feature datasets: normalization, rigid-motion removal, splits.

A fitted box sequence becomes a T x 24 matrix of corner coordinates
(8 corners, canonical binary order, xyz interleaved).  Normalization
centers each spatial axis separately but scales by one pooled standard
deviation so the relative proportions of the boxes survive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import Obb, obb_corners

__all__ = [
    "ComponentSequence",
    "NormalizationStats",
    "SimulationRecord",
    "SplitDataset",
    "denormalize",
    "denormalize_frames",
    "normalize_apply",
    "normalize_fit",
    "normalize_records",
    "orthogonality_defect",
    "remove_rigid",
    "remove_rigid_frame",
    "remove_rigid_records",
    "split",
]

_AXIS_OF_FEATURE = np.tile(np.arange(3), 8)  # feature 3k+a lives on axis a


@dataclass
class ComponentSequence:
    """Corner-feature time series of one structural component."""

    sim_id: str
    component_id: str
    frames: np.ndarray  # (T, 24)
    normalized: bool = False


@dataclass
class SimulationRecord:
    sim_id: str
    params: np.ndarray
    components: list[ComponentSequence]


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray  # (3,) per spatial axis
    std: float  # one pooled scale for all axes


@dataclass
class SplitDataset:
    train: list[SimulationRecord]
    test: list[SimulationRecord]
    stats: NormalizationStats
    t_in: int
    t_fin: int


def _check_frames(frames: np.ndarray) -> np.ndarray:
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 2 or frames.shape[1] != 24:
        raise ValueError(f"frames must have shape (T, 24), got {frames.shape}")
    if not np.all(np.isfinite(frames)):
        raise ValueError("frames contain non-finite values")
    return frames


def _all_sequences(records: list[SimulationRecord]) -> list[ComponentSequence]:
    return [seq for record in records for seq in record.components]


def normalize_fit(train: list[SimulationRecord]) -> NormalizationStats:
    """Center per axis, scale by one pooled standard deviation.

    The mean is taken per spatial axis across every corner, time step,
    component and simulation of the training split; the std pools the
    centered values of all axes into a single scalar.
    """
    seqs = _all_sequences(train)
    if not seqs:
        raise ValueError("cannot fit normalization on an empty training set")
    stacked = np.concatenate([_check_frames(s.frames) for s in seqs], axis=0)
    mean = np.array([stacked[:, _AXIS_OF_FEATURE == a].mean() for a in range(3)])
    centered = stacked - mean[_AXIS_OF_FEATURE]
    std = float(np.sqrt(np.mean(centered**2)))
    if std < 1e-12:
        raise ValueError("training data is constant; normalization is degenerate")
    return NormalizationStats(mean=mean, std=std)


def normalize_apply(seq: ComponentSequence, stats: NormalizationStats) -> ComponentSequence:
    frames = (_check_frames(seq.frames) - stats.mean[_AXIS_OF_FEATURE]) / stats.std
    return replace(seq, frames=frames, normalized=True)


def denormalize_frames(frames: np.ndarray, stats: NormalizationStats) -> np.ndarray:
    return np.asarray(frames, dtype=float) * stats.std + stats.mean[_AXIS_OF_FEATURE]


def denormalize(seq: ComponentSequence, stats: NormalizationStats) -> ComponentSequence:
    return replace(seq, frames=denormalize_frames(seq.frames, stats), normalized=False)


def normalize_records(
    records: list[SimulationRecord], stats: NormalizationStats
) -> list[SimulationRecord]:
    return [
        replace(r, components=[normalize_apply(s, stats) for s in r.components])
        for r in records
    ]


def remove_rigid(box: Obb) -> np.ndarray:
    """Corner vector of the box re-posed at the origin, axes aligned.

    Translation and rotation are discarded; only the extent evolution
    (the plastic shape change) survives.  Output is the canonical
    24-vector of Obb(center=0, rotation=identity, extents=box.extents).
    """
    return obb_corners(
        Obb(center=np.zeros(3), rotation=np.eye(3), extents=np.asarray(box.extents, float))
    )


def remove_rigid_frame(frame: np.ndarray) -> np.ndarray:
    """Rigid removal for a stored corner 24-vector.

    Extents are measured from the three edges at corner 0, so for corner
    vectors of exact boxes this agrees with remove_rigid on the box itself.
    """
    corners = np.asarray(frame, dtype=float).reshape(8, 3)
    extents = np.array(
        [
            np.linalg.norm(corners[4] - corners[0]),
            np.linalg.norm(corners[2] - corners[0]),
            np.linalg.norm(corners[1] - corners[0]),
        ]
    )
    return obb_corners(Obb(center=np.zeros(3), rotation=np.eye(3), extents=extents))


def remove_rigid_records(records: list[SimulationRecord]) -> list[SimulationRecord]:
    out = []
    for record in records:
        comps = [
            replace(seq, frames=np.array([remove_rigid_frame(f) for f in seq.frames]))
            for seq in record.components
        ]
        out.append(replace(record, components=comps))
    return out


def orthogonality_defect(frame: np.ndarray) -> float:
    """How far 8 points deviate from a rectangular box, 0 iff exact.

    Edge vectors are taken at corner 0 (e1 toward corner 1, e2 toward
    corner 2, e3 toward corner 4).  The defect adds |cos| of the angle
    between each well-defined edge pair, plus every corner's deviation
    from the parallelepiped closure c0 + sum(b_i e_i), scaled by the
    diagonal length.  Degenerate terms are skipped; a fully collapsed
    frame scores 0.
    """
    corners = np.asarray(frame, dtype=float).reshape(8, 3)
    edges = [corners[1] - corners[0], corners[2] - corners[0], corners[4] - corners[0]]
    norms = [np.linalg.norm(e) for e in edges]

    defect = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            if norms[i] > 1e-12 and norms[j] > 1e-12:
                defect += abs(edges[i] @ edges[j]) / (norms[i] * norms[j])

    diag = np.linalg.norm(corners[7] - corners[0])
    if diag > 1e-12:
        # closure residual: corner b should sit at c0 plus its binary
        # combination of the three edges (bit0 -> e1, bit1 -> e2, bit2 -> e3)
        for b in range(8):
            expected = (
                corners[0]
                + (b & 1) * edges[0]
                + (b >> 1 & 1) * edges[1]
                + (b >> 2 & 1) * edges[2]
            )
            defect += np.linalg.norm(corners[b] - expected) / diag
    return float(defect)


def split(
    records: list[SimulationRecord],
    n_train: int,
    seed: int,
    t_in: int = 12,
) -> SplitDataset:
    """Seeded shuffled split; normalization stats come from train only."""
    if not 1 <= n_train < len(records):
        raise ValueError(
            f"n_train must be in [1, {len(records) - 1}] for {len(records)} records, got {n_train}"
        )
    t_fin = _check_frames(records[0].components[0].frames).shape[0]
    for record in records:
        for seq in record.components:
            if _check_frames(seq.frames).shape[0] != t_fin:
                raise ValueError(
                    f"sequence ({seq.sim_id}, {seq.component_id}) has a different length"
                )
    if not 1 <= t_in < t_fin:
        raise ValueError(f"t_in must be in [1, {t_fin - 1}], got {t_in}")

    order = np.random.default_rng(seed).permutation(len(records))
    train = [records[i] for i in order[:n_train]]
    test = [records[i] for i in order[n_train:]]
    return SplitDataset(
        train=train,
        test=test,
        stats=normalize_fit(train),
        t_in=t_in,
        t_fin=t_fin,
    )
