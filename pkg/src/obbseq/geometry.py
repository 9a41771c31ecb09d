"""Minimum-volume oriented bounding boxes for 3D point clouds.

The fitter searches over rotations only: for a fixed rotation the optimal
box is the axis-aligned bounding box of the rotated cloud, so the problem
reduces to minimizing that volume over SO(3).  A genetic algorithm explores
the rotation space globally and a Nelder-Mead simplex search (run in a local
axis-angle chart) refines the best candidate.  Sequences of clouds are
fitted with temporal warm starts: the best rotation of step t-1 seeds the
population of step t.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "GeometryOpts",
    "Obb",
    "ObbSequence",
    "aabb_volume",
    "align_box_to_reference",
    "axis_angle_to_matrix",
    "box_from_rotation",
    "enclosure_violation",
    "fit_obb",
    "fit_obb_sequence",
    "genetic_search_so3",
    "nelder_mead_so3",
    "obb_corners",
    "pca_obb",
    "pca_rotation",
    "project_to_rotation",
    "random_rotation",
    "rotated_bounds",
]


@dataclass(frozen=True)
class GeometryOpts:
    """Search parameters for the hybrid OBB fitter.

    The genetic stage stops after ``generations`` rounds or once the best
    volume has not improved by a relative ``ga_tol`` for ``stall_generations``
    consecutive rounds; the simplex stage stops on ``nm_tol`` relative spread
    of the vertex volumes or after ``nm_max_iter`` iterations.
    """

    population: int = 30
    generations: int = 50
    elite_count: int = 2
    mutation_angle: float = 0.2
    mutation_decay: float = 0.95
    stall_generations: int = 6
    ga_tol: float = 1e-3
    cold_rounds: int = 2
    nm_max_iter: int = 200
    nm_tol: float = 1e-9
    nm_step: float = 0.05
    nm_reflect: float = 1.0
    nm_expand: float = 2.0
    nm_contract: float = 0.5
    nm_shrink: float = 0.5
    seed: int = 0


@dataclass
class Obb:
    """Oriented bounding box: ``rotation`` maps world coordinates into the
    frame in which the box is axis aligned, ``center`` is in world
    coordinates and ``extents`` are the full side lengths."""

    center: np.ndarray
    rotation: np.ndarray
    extents: np.ndarray

    @property
    def volume(self) -> float:
        return float(np.prod(self.extents))


@dataclass
class ObbSequence:
    """Per-time-step boxes for one component plus objective-evaluation
    counters (diagnostics for warm-start studies)."""

    boxes: list[Obb]
    eval_counts: list[int]

    def __len__(self) -> int:
        return len(self.boxes)


# Corner sign pattern: corner index b in 0..7, bit 2 -> x, bit 1 -> y,
# bit 0 -> z; a set bit selects the positive half extent.
_CORNER_SIGNS = np.array(
    [[(b >> 2 & 1) * 2 - 1, (b >> 1 & 1) * 2 - 1, (b & 1) * 2 - 1] for b in range(8)],
    dtype=float,
)


def _as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError(f"point cloud must have shape (N, 3) with N >= 1, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def rotated_bounds(points, rotation) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis min/max of the cloud expressed in the rotated frame."""
    pts = _as_cloud(points)
    rotated = pts @ np.asarray(rotation, dtype=float).T
    return rotated.min(axis=0), rotated.max(axis=0)


def aabb_volume(points, rotation) -> float:
    """Volume of the axis-aligned bounding box of the rotated cloud."""
    mins, maxs = rotated_bounds(points, rotation)
    return float(np.prod(maxs - mins))


def _batch_volumes(points: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    # rotations: (K, 3, 3); one fused evaluation for a whole population.
    rotated = np.einsum("kij,nj->kni", rotations, points)
    spans = rotated.max(axis=1) - rotated.min(axis=1)
    return spans.prod(axis=1)


def project_to_rotation(m) -> np.ndarray:
    """Nearest proper rotation by Gram-Schmidt on the rows.

    The third row's sign is flipped if needed so the determinant is +1.
    Raises ValueError for (numerically) rank-deficient input.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    rows = []
    for i in range(3):
        v = m[i].copy()
        for u in rows:
            v -= (v @ u) * u
        norm = np.linalg.norm(v)
        if norm < 1e-12:
            raise ValueError("matrix rows are linearly dependent; cannot orthonormalize")
        rows.append(v / norm)
    r = np.array(rows)
    if np.linalg.det(r) < 0:
        r[2] = -r[2]
    return r


def axis_angle_to_matrix(v) -> np.ndarray:
    """Rodrigues map from an axis-angle 3-vector to a rotation matrix."""
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v)
    k = np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )
    if theta < 1e-8:
        # second-order series keeps the result orthogonal to ~1e-16 here
        return np.eye(3) + k + 0.5 * (k @ k)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * k + b * (k @ k)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Rotation drawn uniformly from SO(3) via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def pca_rotation(points) -> np.ndarray:
    """Covariance eigenbasis as a rotation, rows ordered by descending
    eigenvalue with a deterministic sign convention."""
    pts = _as_cloud(points)
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(-eigvals, kind="stable")
    rows = eigvecs.T[order]
    for i in range(3):
        nz = np.nonzero(np.abs(rows[i]) > 1e-12)[0]
        if nz.size and rows[i, nz[0]] < 0:
            rows[i] = -rows[i]
    if np.linalg.det(rows) < 0:
        rows[2] = -rows[2]
    return rows


def box_from_rotation(points, rotation) -> Obb:
    """Tightest box with the given orientation."""
    pts = _as_cloud(points)
    rotation = np.asarray(rotation, dtype=float)
    mins, maxs = rotated_bounds(pts, rotation)
    center_rotated = 0.5 * (mins + maxs)
    return Obb(
        center=center_rotated @ rotation,
        rotation=rotation,
        extents=maxs - mins,
    )


def pca_obb(points) -> Obb:
    return box_from_rotation(points, pca_rotation(points))


def obb_corners(box: Obb) -> np.ndarray:
    """All 8 corners in world coordinates, flattened corner-major.

    Corner b carries the local offset sign pattern given by the binary
    digits of b (bit 2 -> x, bit 1 -> y, bit 0 -> z); the world position is
    rotation^T . local + center.  The result is the 24-vector
    (x0, y0, z0, x1, y1, z1, ...).
    """
    local = _CORNER_SIGNS * (0.5 * np.asarray(box.extents, dtype=float))
    world = local @ np.asarray(box.rotation, dtype=float) + np.asarray(box.center, dtype=float)
    return world.reshape(-1)


def enclosure_violation(box: Obb, points) -> float:
    """Largest distance by which any point exceeds the box, in the box frame."""
    pts = _as_cloud(points)
    rotation = np.asarray(box.rotation, dtype=float)
    local = pts @ rotation.T - np.asarray(box.center, dtype=float) @ rotation.T
    overshoot = np.abs(local) - 0.5 * np.asarray(box.extents, dtype=float)
    return float(max(overshoot.max(), 0.0))


def nelder_mead_so3(points, init, opts: GeometryOpts | None = None) -> tuple[np.ndarray, int]:
    """Simplex refinement of a rotation.

    The search runs over a 3-vector v in the axis-angle chart at ``init``
    (candidate rotation = init . exp(v)), so the simplex has the manifold's
    own dimension and never needs re-projection.  Returns the best rotation
    found (never worse than ``init``) and the objective-evaluation count.
    """
    opts = opts or GeometryOpts()
    pts = _as_cloud(points)
    init = np.asarray(init, dtype=float)

    def rot_of(v: np.ndarray) -> np.ndarray:
        return init @ axis_angle_to_matrix(v)

    verts = np.zeros((4, 3))
    verts[1:] = np.eye(3) * opts.nm_step
    rotations = np.array([rot_of(v) for v in verts])
    vols = _batch_volumes(pts, rotations)
    evals = 4

    for _ in range(opts.nm_max_iter):
        order = np.argsort(vols, kind="stable")
        verts, vols = verts[order], vols[order]
        spread = vols[-1] - vols[0]
        if spread <= opts.nm_tol * max(abs(vols[0]), 1e-30):
            break
        if np.max(np.abs(verts[1:] - verts[0])) < 1e-12:
            break

        centroid = verts[:-1].mean(axis=0)
        reflected = centroid + opts.nm_reflect * (centroid - verts[-1])
        f_r = aabb_volume(pts, rot_of(reflected))
        evals += 1
        if f_r < vols[0]:
            expanded = centroid + opts.nm_expand * (reflected - centroid)
            f_e = aabb_volume(pts, rot_of(expanded))
            evals += 1
            if f_e < f_r:
                verts[-1], vols[-1] = expanded, f_e
            else:
                verts[-1], vols[-1] = reflected, f_r
        elif f_r < vols[-2]:
            verts[-1], vols[-1] = reflected, f_r
        else:
            if f_r < vols[-1]:
                contracted = centroid + opts.nm_contract * (reflected - centroid)
            else:
                contracted = centroid + opts.nm_contract * (verts[-1] - centroid)
            f_c = aabb_volume(pts, rot_of(contracted))
            evals += 1
            if f_c < min(f_r, vols[-1]):
                verts[-1], vols[-1] = contracted, f_c
            else:
                verts[1:] = verts[0] + opts.nm_shrink * (verts[1:] - verts[0])
                vols[1:] = _batch_volumes(pts, np.array([rot_of(v) for v in verts[1:]]))
                evals += 3

    best = int(np.argmin(vols))
    return project_to_rotation(rot_of(verts[best])), evals


def genetic_search_so3(
    points,
    opts: GeometryOpts | None = None,
    initial: tuple[np.ndarray, ...] = (),
) -> tuple[np.ndarray, int]:
    """Global rotation search by a genetic algorithm.

    The initial population holds (in order) any ``initial`` seed rotations,
    the PCA rotation, the identity, and uniform random rotations.  Crossover
    mixes rows of two tournament-selected parents and re-orthonormalizes;
    mutation composes with a random small rotation whose angle shrinks each
    generation.  Elitism keeps the ``elite_count`` best unchanged, so the
    best volume never increases.
    """
    opts = opts or GeometryOpts()
    if opts.population < 4:
        raise ValueError(f"population must be at least 4, got {opts.population}")
    pts = _as_cloud(points)
    rng = np.random.default_rng(opts.seed)

    pop = [np.asarray(r, dtype=float) for r in initial]
    pop.append(pca_rotation(pts))
    pop.append(np.eye(3))
    del pop[opts.population :]
    while len(pop) < opts.population:
        pop.append(random_rotation(rng))
    pop = np.array(pop)
    vols = _batch_volumes(pts, pop)
    evals = len(pop)

    n_children = opts.population - opts.elite_count
    best_vol = vols.min()
    stall = 0

    for gen in range(opts.generations):
        order = np.argsort(vols, kind="stable")
        pop, vols = pop[order], vols[order]
        angle_cap = opts.mutation_angle * opts.mutation_decay**gen

        children = np.empty((n_children, 3, 3))
        for i in range(n_children):
            parents = []
            for _ in range(2):
                a, b = rng.integers(0, opts.population, size=2)
                parents.append(pop[a] if vols[a] <= vols[b] else pop[b])
            take = rng.integers(0, 2, size=3)
            mixed = np.where(take[:, None] == 0, parents[0], parents[1])
            try:
                child = project_to_rotation(mixed)
            except ValueError:
                child = parents[0]  # degenerate row mix; keep the fitter parent
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            child = axis_angle_to_matrix(axis * rng.uniform(0.0, angle_cap)) @ child
            children[i] = child

        child_vols = _batch_volumes(pts, children)
        evals += n_children
        pop = np.concatenate([pop[: opts.elite_count], children])
        vols = np.concatenate([vols[: opts.elite_count], child_vols])

        new_best = vols.min()
        if best_vol - new_best > opts.ga_tol * max(abs(best_vol), 1e-30):
            stall = 0
        else:
            stall += 1
        best_vol = min(best_vol, new_best)
        if stall >= opts.stall_generations:
            break

    best = int(np.argmin(vols))
    return pop[best], evals


def fit_obb(
    points,
    warm_start: np.ndarray | None = None,
    opts: GeometryOpts | None = None,
) -> tuple[Obb, int]:
    """Hybrid minimum-volume OBB fit: genetic exploration, simplex polish.

    A ``warm_start`` rotation (typically the previous time step's optimum)
    is injected at the head of the genetic population.  Because the PCA
    rotation and the identity are always population members and both stages
    only ever improve, the result's volume never exceeds the PCA box or the
    axis-aligned box.

    Cold fits (no warm start) run ``cold_rounds`` independent
    search rounds and keep the best box: the genetic population can
    collapse into a local basin before the stall cutoff, and a fresh
    random stream escapes that far more reliably than a longer run of
    the converged population.  A warm start already pins the basin, so
    warm fits use a single round.
    """
    opts = opts or GeometryOpts()
    pts = _as_cloud(points)
    initial = () if warm_start is None else (np.asarray(warm_start, dtype=float),)
    rounds = 1 if warm_start is not None else max(1, opts.cold_rounds)

    best_box: Obb | None = None
    total_evals = 0
    for round_idx in range(rounds):
        round_opts = opts
        if round_idx > 0:
            round_seed = int(
                np.random.SeedSequence([opts.seed, 7919 + round_idx]).generate_state(1)[0]
            )
            round_opts = replace(opts, seed=round_seed)
        best, evals_ga = genetic_search_so3(pts, round_opts, initial=initial)
        rotation, evals_nm = nelder_mead_so3(pts, best, round_opts)
        box = box_from_rotation(pts, rotation)
        total_evals += evals_ga + evals_nm
        if best_box is None or box.volume < best_box.volume:
            best_box = box
    return best_box, total_evals


# All 24 proper symmetries of an axis-aligned cuboid: signed permutation
# matrices with determinant +1.  Used to keep consecutive boxes of a
# sequence in the same corner-labelling branch.
_CUBE_SYMMETRIES = tuple(
    np.array(mat)
    for mat in (
        [[s0 * (p[0] == 0), s0 * (p[0] == 1), s0 * (p[0] == 2)],
         [s1 * (p[1] == 0), s1 * (p[1] == 1), s1 * (p[1] == 2)],
         [s2 * (p[2] == 0), s2 * (p[2] == 1), s2 * (p[2] == 2)]]
        for p in itertools.permutations(range(3))
        for s0 in (1, -1)
        for s1 in (1, -1)
        for s2 in (1, -1)
    )
    if round(np.linalg.det(np.array(mat))) == 1
)


def align_box_to_reference(box: Obb, ref_corners: np.ndarray) -> Obb:
    """Re-label an equivalent box so its corners are closest to a reference.

    A cuboid has 24 rotational symmetries, so the same geometric box admits
    24 (rotation, extents) encodings.  Fitting each time step independently
    may jump between them; this picks the encoding whose corner 24-vector is
    nearest the previous step's, leaving geometry, volume and enclosure
    untouched.
    """
    best_box = box
    best_dist = np.inf
    for sym in _CUBE_SYMMETRIES:
        candidate = Obb(
            center=box.center,
            rotation=sym @ box.rotation,
            extents=np.abs(sym) @ box.extents,
        )
        dist = float(np.sum((obb_corners(candidate) - ref_corners) ** 2))
        if dist < best_dist - 1e-15:
            best_dist = dist
            best_box = candidate
    return best_box


def fit_obb_sequence(clouds, opts: GeometryOpts | None = None) -> ObbSequence:
    """Fit one box per time step, warm-starting each from the previous one.

    Step t > 1 seeds the search with step t-1's rotation and the result is
    re-labelled into the symmetry branch closest to the previous corners, so
    corner trajectories stay temporally coherent.
    """
    clouds = list(clouds)
    if not clouds:
        raise ValueError("empty cloud sequence")
    opts = opts or GeometryOpts()

    boxes: list[Obb] = []
    counts: list[int] = []
    prev_rotation = None
    prev_corners = None
    for t, cloud in enumerate(clouds):
        step_seed = int(np.random.SeedSequence([opts.seed, t]).generate_state(1)[0])
        box, evals = fit_obb(cloud, warm_start=prev_rotation, opts=replace(opts, seed=step_seed))
        if prev_corners is not None:
            box = align_box_to_reference(box, prev_corners)
        boxes.append(box)
        counts.append(evals)
        prev_rotation = box.rotation
        prev_corners = obb_corners(box)
    return ObbSequence(boxes=boxes, eval_counts=counts)
