"""Hidden-representation analysis: extraction, exact t-SNE, 2-means purity.

The trained encoder compresses each (simulation, component) input window
into one hidden vector.  With rigid-motion removal switched on, sequences
are first re-posed at the origin (only plastic deformation survives) and
re-normalized with statistics fitted on the rigid-removed training split,
so the clusters reflect deformation behavior rather than trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoenc import ModelParams, encode
from .dataset import (
    SplitDataset,
    normalize_fit,
    normalize_records,
    remove_rigid_records,
)

__all__ = [
    "Embedding2D",
    "HiddenRepSet",
    "KMeans2Result",
    "extract_hidden",
    "joint_probabilities",
    "kmeans2",
    "mode_purity",
    "tsne",
]


@dataclass
class HiddenRepSet:
    rows: np.ndarray  # (N, H) one hidden vector per (simulation, component)
    ids: list[tuple[str, str]]  # aligned (sim_id, component_id)


@dataclass
class Embedding2D:
    coords: np.ndarray  # (N, 2)
    kl_final: float
    kl_initial: float  # KL right after early exaggeration ends


@dataclass
class KMeans2Result:
    labels: np.ndarray  # (N,) values in {0, 1}
    centers: np.ndarray  # (2, d)
    inertia_history: list[float]


def extract_hidden(
    model: ModelParams,
    split: SplitDataset,
    components: list[str] | None = None,
    rigid_removed: bool = False,
) -> HiddenRepSet:
    """One encoder hidden vector per (simulation, component) input window.

    Pools train and test simulations, sorted by sim_id.  ``components``
    filters by component id (None = all).  With ``rigid_removed``, frames
    are re-posed at the origin first and normalization statistics are
    refitted on the rigid-removed training split.
    """
    records = sorted(split.train + split.test, key=lambda r: r.sim_id)
    known = {seq.component_id for record in records for seq in record.components}
    if components is not None:
        unknown = set(components) - known
        if unknown:
            raise ValueError(f"unknown component ids: {sorted(unknown)}")
        keep = set(components)
    else:
        keep = known

    if rigid_removed:
        records = remove_rigid_records(records)
        stats = normalize_fit(remove_rigid_records(split.train))
    else:
        stats = split.stats
    records = normalize_records(records, stats)

    rows, ids = [], []
    for record in records:
        for seq in record.components:
            if seq.component_id not in keep:
                continue
            rows.append(encode(model.encoder, seq.frames[: split.t_in]))
            ids.append((seq.sim_id, seq.component_id))
    return HiddenRepSet(rows=np.array(rows), ids=ids)


# ---------------------------------------------------------------------------
# exact t-SNE


def _entropy_and_probs(d_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # shifted for overflow safety; the shift cancels in the normalization
    p = np.exp(-(d_row - d_row.min()) * beta)
    total = p.sum()
    p /= total
    # H = -sum p log p, computed stably
    nonzero = p > 1e-300
    h = float(-(p[nonzero] * np.log(p[nonzero])).sum())
    return h, p


def joint_probabilities(
    distances_sq: np.ndarray, perplexity: float, tol: float = 1e-5, max_steps: int = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Symmetrized t-SNE P matrix plus the conditional rows.

    Each row's Gaussian bandwidth is found by bisection so the conditional
    distribution's entropy matches log(perplexity) within tol.  Returns
    (P, P_cond): P symmetric, nonnegative, summing to 1.
    """
    n = distances_sq.shape[0]
    target = np.log(perplexity)
    p_cond = np.zeros((n, n))
    for i in range(n):
        d_row = np.delete(distances_sq[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        h, p = _entropy_and_probs(d_row, beta)
        for _ in range(max_steps):
            if abs(h - target) < tol:
                break
            if h > target:  # too spread out: sharpen
                lo = beta
                beta = beta * 2.0 if hi == np.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
            h, p = _entropy_and_probs(d_row, beta)
        p_cond[i] = np.insert(p, i, 0.0)
    p_joint = (p_cond + p_cond.T) / (2.0 * n)
    return p_joint, p_cond


def _kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    p_safe = np.maximum(p, 1e-12)
    q_safe = np.maximum(q, 1e-12)
    mask = p > 0
    return float(np.sum(p_safe[mask] * np.log(p_safe[mask] / q_safe[mask])))


def _student_q(y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.sum(y * y, axis=1)
    d2 = np.maximum(norms[:, None] + norms[None, :] - 2.0 * (y @ y.T), 0.0)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    return num / num.sum(), num


def tsne(
    x: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    learning_rate: float = 200.0,
    seed: int = 0,
) -> Embedding2D:
    """Exact O(N^2) t-SNE to 2-D.

    Early exaggeration multiplies P by 12 for the first 250 iterations;
    momentum is 0.5 until iteration 250 and 0.8 after.  kl_initial is the
    divergence right after exaggeration ends, kl_final at the last
    iteration, both against the plain P.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to embed, got shape {x.shape}")
    n = x.shape[0]
    if not 1.0 < perplexity < n / 3.0:
        raise ValueError(
            f"perplexity must lie in (1, N/3) = (1, {n / 3:.1f}), got {perplexity}"
        )
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")

    sq_norms = np.sum(x * x, axis=1)
    d2 = np.maximum(sq_norms[:, None] + sq_norms[None, :] - 2.0 * (x @ x.T), 0.0)
    p, _ = joint_probabilities(d2, perplexity)

    exaggeration_end = min(250, iterations)
    rng = np.random.default_rng(seed)
    y = rng.normal(scale=1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    kl_initial = None

    for it in range(iterations):
        p_eff = p * 12.0 if it < exaggeration_end else p
        q, num = _student_q(y)
        pq = (p_eff - q) * num
        grad = 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)
        momentum = 0.5 if it < 250 else 0.8
        velocity = momentum * velocity - learning_rate * grad
        y = y + velocity
        y = y - y.mean(axis=0)
        if it == exaggeration_end - 1 and exaggeration_end < iterations:
            q_now, _ = _student_q(y)
            kl_initial = _kl_divergence(p, q_now)

    q_final, _ = _student_q(y)
    kl_final = _kl_divergence(p, q_final)
    if kl_initial is None:
        kl_initial = kl_final
    return Embedding2D(coords=y, kl_final=kl_final, kl_initial=kl_initial)


# ---------------------------------------------------------------------------
# 2-means and purity


def kmeans2(rows: np.ndarray, seed: int = 0, max_iter: int = 100) -> KMeans2Result:
    """Lloyd's k-means with k=2 and k-means++ initialization."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise ValueError(f"need at least 2 rows to cluster, got shape {rows.shape}")
    n = rows.shape[0]
    rng = np.random.default_rng(seed)

    first = int(rng.integers(n))
    d2 = np.sum((rows - rows[first]) ** 2, axis=1)
    if d2.sum() <= 0.0:  # all points identical: arbitrary but valid split
        second = (first + 1) % n
    else:
        second = int(rng.choice(n, p=d2 / d2.sum()))
    centers = rows[[first, second]].copy()

    labels = np.zeros(n, dtype=int)
    inertia_history: list[float] = []
    for _ in range(max_iter):
        dists = np.stack([np.sum((rows - c) ** 2, axis=1) for c in centers])
        new_labels = np.argmin(dists, axis=0)
        for k in range(2):
            members = rows[new_labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
            else:  # empty cluster: grab the point farthest from the other center
                centers[k] = rows[np.argmax(dists[1 - k])]
                new_labels = np.argmin(
                    np.stack([np.sum((rows - c) ** 2, axis=1) for c in centers]), axis=0
                )
        inertia = float(
            sum(np.sum((rows[new_labels == k] - centers[k]) ** 2) for k in range(2))
        )
        inertia_history.append(inertia)
        if np.array_equal(new_labels, labels) and len(inertia_history) > 1:
            break
        labels = new_labels
    return KMeans2Result(labels=labels, centers=centers, inertia_history=inertia_history)


def mode_purity(assignments: np.ndarray, labels) -> float:
    """Best-matching fraction between 2 clusters and 2 ground-truth modes."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape:
        raise ValueError(
            f"length mismatch: {assignments.shape} assignments vs {labels.shape} labels"
        )
    classes = np.unique(labels)
    if len(classes) > 2:
        raise ValueError(f"expected at most 2 label classes, got {len(classes)}")
    truth = (labels == classes[-1]).astype(int)
    match = int(np.sum(assignments == truth))
    return max(match, len(truth) - match) / len(truth)
