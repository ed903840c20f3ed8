"""SE(3) estimation: closed-form alignment, RANSAC, robust FGR, and ICP."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .errors import (
    DegenerateSample,
    InsufficientData,
    InvalidParameter,
    NoOverlap,
    NumericalFailure,
)
from .geometry import RigidTransform, rotation_angle, so3_exp
from .matching import CorrespondenceSet

Array = NDArray[np.float64]

RANSAC_SAMPLE_SIZE = 3


@dataclass(frozen=True)
class RegistrationResult:
    """Estimated transform plus estimator diagnostics."""

    transform: RigidTransform
    inlier_indices: NDArray[np.intp]
    rms_residual: float
    iterations: int
    converged: bool
    stage_timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rms_residual < 0:
            raise ValueError("rms_residual must be >= 0")


@dataclass(frozen=True)
class RansacParams:
    """RANSAC configuration; the minimal sample is always 3 correspondences."""

    max_iterations: int = 10000
    inlier_threshold: float = 0.5
    min_inlier_fraction: float = 0.1
    seed: int = 0

    sample_size: int = RANSAC_SAMPLE_SIZE

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise InvalidParameter("inlier_threshold must be > 0")
        if self.sample_size != RANSAC_SAMPLE_SIZE:
            raise InvalidParameter("sample_size is fixed at 3")


@dataclass(frozen=True)
class FgrParams:
    """Graduated non-convexity schedule for the scaled Geman-McClure cost.

    mu_init None defers to the squared diagonal of the target correspondence
    bounding box. mu is divided by division_factor every 4 iterations until it
    reaches mu_min.
    """

    mu_init: float | None = None
    mu_min: float = 1e-4
    division_factor: float = 1.4
    max_outer_iterations: int = 64
    tuple_test_enabled: bool = True
    tuple_scale: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.division_factor <= 1.0:
            raise InvalidParameter("division_factor must be > 1")
        if self.mu_min <= 0:
            raise InvalidParameter("mu_min must be > 0")
        if self.mu_init is not None and self.mu_init <= self.mu_min:
            raise InvalidParameter("mu_init must exceed mu_min")


def kabsch_umeyama(source, target) -> RigidTransform:
    """Least-squares rigid motion mapping source points onto target points.

    Minimizes sum ||R s_i + t - t_i||^2 via SVD of the centered covariance,
    with the determinant forced to +1 by flipping the smallest singular
    direction. Raises DegenerateSample for coincident or collinear inputs.
    """
    src = np.asarray(source, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target, dtype=np.float64).reshape(-1, 3)
    if src.shape != tgt.shape:
        raise InvalidParameter("source and target must pair up")
    if len(src) < 3:
        raise DegenerateSample("need at least 3 point pairs")

    c_src = src.mean(axis=0)
    c_tgt = tgt.mean(axis=0)
    h = (src - c_src).T @ (tgt - c_tgt)
    u, s, vt = np.linalg.svd(h)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise DegenerateSample("point pairs are collinear or coincident")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rotation = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    translation = c_tgt - rotation @ c_src
    return RigidTransform(rotation, translation)


def _corr_pairs(correspondences: CorrespondenceSet, source_positions, target_positions):
    src = np.asarray(source_positions, dtype=np.float64).reshape(-1, 3)
    tgt = np.asarray(target_positions, dtype=np.float64).reshape(-1, 3)
    return src[correspondences.source_indices], tgt[correspondences.target_indices]


def _distinct_triples(rng: np.random.Generator, n: int, count: int) -> NDArray[np.int64]:
    triples = rng.integers(0, n, size=(count, 3))
    while True:
        dup = (
            (triples[:, 0] == triples[:, 1])
            | (triples[:, 1] == triples[:, 2])
            | (triples[:, 0] == triples[:, 2])
        )
        bad = np.flatnonzero(dup)
        if bad.size == 0:
            return triples
        triples[bad] = rng.integers(0, n, size=(bad.size, 3))


def _batched_kabsch(src_triples: Array, tgt_triples: Array) -> tuple[Array, Array, NDArray[np.bool_]]:
    """Rigid fits for stacked 3-point samples; flags degenerate triples."""
    c_src = src_triples.mean(axis=1, keepdims=True)
    c_tgt = tgt_triples.mean(axis=1, keepdims=True)
    a = src_triples - c_src
    b = tgt_triples - c_tgt
    h = np.einsum("hni,hnj->hij", a, b)
    u, s, vt = np.linalg.svd(h)
    ok = s[:, 1] > 1e-12 * np.maximum(s[:, 0], 1e-300)
    det = np.linalg.det(np.einsum("hij,hkj->hik", vt.transpose(0, 2, 1), u))
    signs = np.where(det < 0, -1.0, 1.0)
    vt_fixed = vt.copy()
    vt_fixed[:, 2, :] *= signs[:, None]
    rot = np.einsum("hij,hjk->hik", vt_fixed.transpose(0, 2, 1), u.transpose(0, 2, 1))
    t = c_tgt[:, 0, :] - np.einsum("hij,hj->hi", rot, c_src[:, 0, :])
    return rot, t, ok


def ransac_register(
    correspondences: CorrespondenceSet,
    source_positions,
    target_positions,
    params: RansacParams = RansacParams(),
) -> RegistrationResult:
    """Consensus maximization over 3-correspondence hypotheses.

    Every hypothesis is scored by the number of correspondences whose
    post-transform residual stays within the inlier threshold; the earliest
    best-scoring hypothesis wins, so a fixed seed fixes the result. The final
    transform is re-estimated over the winning inlier set.
    """
    src, tgt = _corr_pairs(correspondences, source_positions, target_positions)
    n = len(src)
    if n < 3:
        raise InsufficientData(f"RANSAC needs >= 3 correspondences, got {n}")

    rng = np.random.default_rng(params.seed)
    triples = _distinct_triples(rng, n, params.max_iterations)
    rot, t, ok = _batched_kabsch(src[triples], tgt[triples])

    best_count = -1
    best_h = -1
    block = 256
    for start in range(0, params.max_iterations, block):
        stop = min(start + block, params.max_iterations)
        x = np.einsum("hij,nj->hni", rot[start:stop], src) + t[start:stop, None, :]
        res = np.linalg.norm(x - tgt[None, :, :], axis=2)
        counts = np.count_nonzero(res <= params.inlier_threshold, axis=1)
        counts[~ok[start:stop]] = -1
        h_best = int(np.argmax(counts))
        if counts[h_best] > best_count:
            best_count = int(counts[h_best])
            best_h = start + h_best

    if best_h < 0:
        raise DegenerateSample("every sampled hypothesis was degenerate")

    transform = RigidTransform(rot[best_h], t[best_h])
    residuals = np.linalg.norm(transform.apply(src) - tgt, axis=1)
    inliers = np.flatnonzero(residuals <= params.inlier_threshold)
    if len(inliers) >= 3:
        try:
            transform = kabsch_umeyama(src[inliers], tgt[inliers])
        except DegenerateSample:
            pass
    final_res = np.linalg.norm(transform.apply(src[inliers]) - tgt[inliers], axis=1)
    rms = float(np.sqrt(np.mean(final_res**2))) if len(inliers) else 0.0
    fraction = len(inliers) / n
    return RegistrationResult(
        transform=transform,
        inlier_indices=inliers.astype(np.intp),
        rms_residual=rms,
        iterations=params.max_iterations,
        converged=fraction >= params.min_inlier_fraction,
        diagnostics={"inlier_fraction": fraction, "best_count": best_count},
    )


def geometric_consistency_filter(
    correspondences: CorrespondenceSet,
    source_positions,
    target_positions,
    eps: float,
) -> CorrespondenceSet:
    """Keep the greedily grown cluster of pairwise length-consistent matches.

    Two correspondences are consistent when their source and target spans
    agree within eps. Growth starts from the highest-degree node of the
    consistency graph and only admits candidates consistent with every member
    already in the cluster; ties fall to the lower index.
    """
    if eps <= 0:
        raise InvalidParameter("eps must be > 0")
    n = len(correspondences)
    if n <= 1:
        return correspondences
    src, tgt = _corr_pairs(correspondences, source_positions, target_positions)
    d_src = np.linalg.norm(src[:, None, :] - src[None, :, :], axis=2)
    d_tgt = np.linalg.norm(tgt[:, None, :] - tgt[None, :, :], axis=2)
    consistent = np.abs(d_src - d_tgt) <= eps
    np.fill_diagonal(consistent, False)

    degree = consistent.sum(axis=1)
    start = int(np.argmax(degree))
    members = [start]
    candidates = consistent[start].copy()
    while candidates.any():
        cand_idx = np.flatnonzero(candidates)
        nxt = int(cand_idx[np.argmax(degree[cand_idx])])
        members.append(nxt)
        candidates &= consistent[nxt]
        candidates[nxt] = False
    return correspondences.select(np.sort(np.asarray(members)))


def _gm_weights(res_sq: Array, mu: float) -> Array:
    w = mu / (mu + res_sq)
    return w * w


def _fgr_objective(res_sq: Array, weights: Array, mu: float) -> float:
    return float(np.sum(weights * res_sq) + mu * np.sum((np.sqrt(weights) - 1.0) ** 2))


def tuple_test(
    src: Array, tgt: Array, rng: np.random.Generator, scale: float = 0.9
) -> NDArray[np.intp]:
    """Correspondence indices appearing in some length-ratio-consistent triple."""
    n = len(src)
    attempts = min(30 * n, 50000)
    triples = rng.integers(0, n, size=(attempts, 3))
    distinct = (
        (triples[:, 0] != triples[:, 1])
        & (triples[:, 1] != triples[:, 2])
        & (triples[:, 0] != triples[:, 2])
    )
    triples = triples[distinct]
    lo, hi = scale, 1.0 / scale
    good = np.ones(len(triples), dtype=bool)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        ls = np.linalg.norm(src[triples[:, a]] - src[triples[:, b]], axis=1)
        lt = np.linalg.norm(tgt[triples[:, a]] - tgt[triples[:, b]], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(lt > 0, ls / lt, np.inf)
        good &= (ratio >= lo) & (ratio <= hi)
    keep = np.zeros(n, dtype=bool)
    keep[triples[good].reshape(-1)] = True
    return np.flatnonzero(keep).astype(np.intp)


def fgr_register(
    correspondences: CorrespondenceSet,
    source_positions,
    target_positions,
    params: FgrParams = FgrParams(),
) -> RegistrationResult:
    """Robust registration with the scaled Geman-McClure cost.

    Alternates closed-form line-process weights l = (mu / (mu + r^2))^2 with
    damped Gauss-Newton steps on a local SE(3) parametrization; the step is
    halved until the weighted objective does not increase, which keeps the
    alternation monotone at fixed mu. mu anneals from its initial value by
    the division factor every 4 iterations down to mu_min.
    """
    src_all, tgt_all = _corr_pairs(correspondences, source_positions, target_positions)
    if len(src_all) < 4:
        raise InsufficientData(f"FGR needs >= 4 correspondences, got {len(src_all)}")

    rng = np.random.default_rng(params.seed)
    active = np.arange(len(src_all), dtype=np.intp)
    if params.tuple_test_enabled:
        passed = tuple_test(src_all, tgt_all, rng, params.tuple_scale)
        if len(passed) >= 4:
            active = passed
    src = src_all[active]
    tgt = tgt_all[active]

    if params.mu_init is None:
        span = tgt.max(axis=0) - tgt.min(axis=0)
        mu = float(max(span @ span, params.mu_min * 10.0))
    else:
        mu = params.mu_init

    transform = RigidTransform.identity()
    trace: list[tuple[float, float, float]] = []
    last_step = np.inf
    iterations = 0
    for it in range(params.max_outer_iterations):
        iterations = it + 1
        if it > 0 and it % 4 == 0:
            mu = max(mu / params.division_factor, params.mu_min)

        x = transform.apply(src)
        res_vec = x - tgt
        res_sq = np.einsum("ij,ij->i", res_vec, res_vec)
        if not np.isfinite(res_sq).all():
            raise NumericalFailure("non-finite residual in FGR")
        weights = _gm_weights(res_sq, mu)
        obj_before = _fgr_objective(res_sq, weights, mu)

        # Damped Gauss-Newton step on xi = (omega, tau)
        jac = np.zeros((len(src), 3, 6))
        jac[:, 0, 1] = x[:, 2]
        jac[:, 0, 2] = -x[:, 1]
        jac[:, 1, 0] = -x[:, 2]
        jac[:, 1, 2] = x[:, 0]
        jac[:, 2, 0] = x[:, 1]
        jac[:, 2, 1] = -x[:, 0]
        jac[:, :, 3:] = np.eye(3)
        a_mat = np.einsum("nij,nik,n->jk", jac, jac, weights)
        b_vec = -np.einsum("nij,ni,n->j", jac, res_vec, weights)
        try:
            xi = np.linalg.solve(a_mat + 1e-12 * np.eye(6), b_vec)
        except np.linalg.LinAlgError:
            xi = np.zeros(6)

        step = 1.0
        new_transform = transform
        obj_after = obj_before
        for _ in range(30):
            delta = RigidTransform(so3_exp(step * xi[:3]), step * xi[3:])
            candidate = delta.compose(transform)
            cand_res = candidate.apply(src) - tgt
            cand_sq = np.einsum("ij,ij->i", cand_res, cand_res)
            cand_obj = _fgr_objective(cand_sq, weights, mu)
            if cand_obj <= obj_before and np.isfinite(cand_obj):
                new_transform = candidate
                obj_after = cand_obj
                break
            step *= 0.5
        transform = new_transform
        last_step = float(np.linalg.norm(step * xi)) if obj_after < obj_before else 0.0
        trace.append((mu, obj_before, obj_after))
        if mu <= params.mu_min and last_step < 1e-10:
            break

    x = transform.apply(src)
    res_sq = np.einsum("ij,ij->i", x - tgt, x - tgt)
    weights = _gm_weights(res_sq, mu)
    inlier_local = np.flatnonzero(weights >= 0.25)
    inliers = active[inlier_local]
    rms = float(np.sqrt(res_sq[inlier_local].mean())) if len(inlier_local) else float(np.sqrt(res_sq.mean()))
    return RegistrationResult(
        transform=transform,
        inlier_indices=inliers.astype(np.intp),
        rms_residual=rms,
        iterations=iterations,
        converged=bool(mu <= params.mu_min),
        diagnostics={"objective_trace": trace, "final_mu": mu, "tuple_kept": len(src)},
    )


def _positions_of(cloud) -> Array:
    pos = getattr(cloud, "positions", cloud)
    return np.asarray(pos, dtype=np.float64).reshape(-1, 3)


def icp_refine(
    source_cloud,
    target_cloud,
    initial: RigidTransform,
    max_iterations: int = 50,
    max_corr_dist: float = 2.0,
    convergence_eps: float = 1e-6,
) -> RegistrationResult:
    """Point-to-point ICP from an initial guess.

    Each iteration pairs every transformed source point with its nearest
    target point within max_corr_dist and applies the closed-form update,
    which cannot increase the squared error under the pairings fixed at the
    start of the iteration. Stops when the incremental motion drops below
    convergence_eps (radians and meters) or the iteration cap is reached.
    """
    if max_corr_dist <= 0:
        raise InvalidParameter("max_corr_dist must be > 0")
    if max_iterations < 1:
        raise InvalidParameter("max_iterations must be >= 1")
    src = _positions_of(source_cloud)
    tgt = _positions_of(target_cloud)
    if len(src) == 0 or len(tgt) == 0:
        raise NoOverlap("both clouds must be non-empty")

    tree = cKDTree(tgt)
    transform = initial
    converged = False
    trace: list[tuple[float, float]] = []
    rms = 0.0
    paired = np.zeros(0, dtype=np.intp)
    for it in range(1, max_iterations + 1):
        x = transform.apply(src)
        dist, idx = tree.query(x, distance_upper_bound=max_corr_dist)
        mask = np.isfinite(dist)
        if not mask.any():
            if it == 1:
                raise NoOverlap("no point pairings within max_corr_dist at the initial guess")
            break
        paired = np.flatnonzero(mask).astype(np.intp)
        pairs_src = x[mask]
        pairs_tgt = tgt[idx[mask]]
        mse_before = float(np.mean(dist[mask] ** 2))
        try:
            delta = kabsch_umeyama(pairs_src, pairs_tgt)
        except DegenerateSample:
            rms = float(np.sqrt(mse_before))
            break
        after = delta.apply(pairs_src) - pairs_tgt
        mse_after = float(np.mean(np.einsum("ij,ij->i", after, after)))
        trace.append((mse_before, mse_after))
        transform = delta.compose(transform)
        rms = float(np.sqrt(mse_after))
        delta_mag = max(rotation_angle(delta.rotation), float(np.linalg.norm(delta.translation)))
        if delta_mag < convergence_eps:
            converged = True
            break

    return RegistrationResult(
        transform=transform,
        inlier_indices=paired,
        rms_residual=rms,
        iterations=it,
        converged=converged,
        diagnostics={"fixed_pairing_mse": trace},
    )
