"""Local feature extraction: ISS keypoints, Euclidean segments, ground removal."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import DegenerateInput, InvalidParameter

Array = NDArray[np.float64]

# Neighborhoods whose smallest eigenvalue is this far below the largest are
# numerically rank-deficient (planes, lines) and never count as salient.
ISS_DEGENERACY_FLOOR = 1e-9


@dataclass(frozen=True)
class KeypointSet:
    """Indices of salient points in a parent cloud, with cached positions."""

    cloud: PointCloud
    indices: NDArray[np.intp]
    saliences: Array

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= len(self.cloud)):
            raise ValueError("keypoint index out of range")
        if not np.all(np.diff(idx) > 0):
            raise ValueError("keypoint indices must be unique and sorted")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "saliences", np.asarray(self.saliences, dtype=np.float64).reshape(-1))

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def positions(self) -> Array:
        return self.cloud.positions[self.indices]


@dataclass(frozen=True)
class Segment:
    indices: NDArray[np.intp]
    centroid: Array


@dataclass(frozen=True)
class SegmentSet:
    """Disjoint clusters of a parent cloud."""

    cloud: PointCloud
    segments: tuple[Segment, ...]

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def centroids(self) -> Array:
        if not self.segments:
            return np.zeros((0, 3))
        return np.vstack([s.centroid for s in self.segments])


@dataclass(frozen=True)
class PlaneModel:
    """Plane {p : normal . p + offset = 0} with its supporting inlier count."""

    normal: Array
    offset: float
    inlier_count: int

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        length = np.linalg.norm(n)
        if abs(length - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        object.__setattr__(self, "normal", n)

    def distances(self, points) -> Array:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.abs(pts @ self.normal + self.offset)


def _neighborhood_covariances(
    positions: Array,
    tree: cKDTree,
    radius: float,
    weighted: bool,
) -> tuple[Array, NDArray[np.int64]]:
    """Covariance of each point's radius neighborhood, centered on the point.

    With weighting enabled, each neighbor contributes with weight 1/distance;
    the point itself is excluded. Built from unique within-radius pairs: the
    outer product of the pair difference is identical from both ends, so each
    pair is accumulated twice through bincount, once per endpoint.
    """
    n = len(positions)
    sums6 = np.zeros((n, 6))
    wsum = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)

    pairs = tree.query_pairs(radius, output_type="ndarray")
    chunk = 4_000_000
    for start in range(0, len(pairs), chunk):
        block = pairs[start : start + chunk]
        i, j = block[:, 0], block[:, 1]
        diff = positions[j] - positions[i]
        dist = np.linalg.norm(diff, axis=1)
        keep = dist > 0.0
        i, j, diff, dist = i[keep], j[keep], diff[keep], dist[keep]
        weights = 1.0 / dist if weighted else np.ones_like(dist)
        prods = diff[:, (0, 0, 0, 1, 1, 2)] * diff[:, (0, 1, 2, 1, 2, 2)] * weights[:, None]
        for c in range(6):
            sums6[:, c] += np.bincount(i, weights=prods[:, c], minlength=n)
            sums6[:, c] += np.bincount(j, weights=prods[:, c], minlength=n)
        wsum += np.bincount(i, weights=weights, minlength=n)
        wsum += np.bincount(j, weights=weights, minlength=n)
        counts += np.bincount(i, minlength=n)
        counts += np.bincount(j, minlength=n)

    safe = np.where(wsum > 0, wsum, 1.0)
    norm6 = sums6 / safe[:, None]
    cov = np.empty((n, 3, 3))
    cov[:, 0, 0] = norm6[:, 0]
    cov[:, 0, 1] = cov[:, 1, 0] = norm6[:, 1]
    cov[:, 0, 2] = cov[:, 2, 0] = norm6[:, 2]
    cov[:, 1, 1] = norm6[:, 3]
    cov[:, 1, 2] = cov[:, 2, 1] = norm6[:, 4]
    cov[:, 2, 2] = norm6[:, 5]
    return cov, counts


def detect_iss_keypoints(
    cloud: PointCloud,
    salient_radius: float = 3.0,
    nonmax_radius: float = 2.0,
    gamma21: float = 0.975,
    gamma32: float = 0.975,
    min_neighbors: int = 5,
    weighted: bool = True,
) -> KeypointSet:
    """Intrinsic-shape-signature keypoints.

    A point qualifies when the eigenvalues l1 >= l2 >= l3 of its
    salient-radius neighborhood covariance satisfy l2/l1 < gamma21 and
    l3/l2 < gamma32, and its salience l3 strictly exceeds that of every other
    qualifying point within nonmax_radius. Ties suppress both contenders, so
    no two keypoints ever lie within nonmax_radius of each other.
    """
    if salient_radius <= 0 or nonmax_radius <= 0:
        raise InvalidParameter("radii must be > 0")
    if not (0 < gamma21 < 1 and 0 < gamma32 < 1):
        raise InvalidParameter("gamma ratios must lie in (0, 1)")
    n = len(cloud)
    if n == 0:
        return KeypointSet(cloud, np.zeros(0, dtype=np.intp), np.zeros(0))

    positions = cloud.positions
    tree = cKDTree(positions)
    cov, neighbor_counts = _neighborhood_covariances(positions, tree, salient_radius, weighted)

    eigvals = np.linalg.eigvalsh(cov)  # ascending: l3, l2, l1
    l3, l2, l1 = eigvals[:, 0], eigvals[:, 1], eigvals[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio21 = np.where(l1 > 0, l2 / l1, np.inf)
        ratio32 = np.where(l2 > 0, l3 / l2, np.inf)
    candidate = (
        (neighbor_counts >= min_neighbors)
        & (ratio21 < gamma21)
        & (ratio32 < gamma32)
        & (l3 > ISS_DEGENERACY_FLOOR * np.maximum(l1, 0.0))
        & (l3 > 0.0)
    )

    cand_idx = np.flatnonzero(candidate)
    if cand_idx.size == 0:
        return KeypointSet(cloud, np.zeros(0, dtype=np.intp), np.zeros(0))
    salience = l3[cand_idx]
    cand_tree = cKDTree(positions[cand_idx])
    keep = np.ones(cand_idx.size, dtype=bool)
    for a, b in cand_tree.query_pairs(nonmax_radius):
        if salience[a] < salience[b]:
            keep[a] = False
        elif salience[b] < salience[a]:
            keep[b] = False
        else:
            keep[a] = False
            keep[b] = False
    kept = cand_idx[keep]
    return KeypointSet(cloud, kept, l3[kept])


def segment_euclidean(
    cloud: PointCloud,
    tolerance: float = 0.2,
    min_size: int = 100,
    max_size: int = 50000,
) -> SegmentSet:
    """Connected components of the within-tolerance adjacency graph.

    Components outside [min_size, max_size] are discarded. Segments are
    reported in order of their smallest member index, with sorted indices,
    which makes the output invariant to point order up to relabeling.
    """
    if tolerance <= 0:
        raise InvalidParameter("tolerance must be > 0")
    if not (0 < min_size <= max_size):
        raise InvalidParameter("need 0 < min_size <= max_size")
    n = len(cloud)
    if n == 0:
        return SegmentSet(cloud, ())

    tree = cKDTree(cloud.positions)
    pairs = tree.query_pairs(tolerance, output_type="ndarray")
    if len(pairs):
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        graph = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
    else:
        graph = csr_matrix((n, n), dtype=np.int8)
    _, labels = connected_components(graph, directed=False)

    segments = []
    order = np.argsort(labels, kind="stable")
    boundaries = np.flatnonzero(np.diff(labels[order])) + 1
    for chunk in np.split(order, boundaries):
        if min_size <= len(chunk) <= max_size:
            idx = np.sort(chunk).astype(np.intp)
            centroid = cloud.positions[idx].mean(axis=0)
            segments.append(Segment(indices=idx, centroid=centroid))
    segments.sort(key=lambda s: int(s.indices[0]))
    return SegmentSet(cloud, tuple(segments))


def remove_ground_plane(
    cloud: PointCloud,
    dist_threshold: float,
    max_iterations: int = 1000,
    seed: int = 0,
) -> tuple[PointCloud, PlaneModel]:
    """RANSAC plane fit; returns the cloud minus plane inliers and the model.

    The plane with the most inliers at |n.p + d| <= dist_threshold over the
    sampled 3-point hypotheses wins; earlier hypotheses win ties, so a fixed
    seed fixes the result.
    """
    if len(cloud) < 3:
        raise DegenerateInput("plane fitting needs at least 3 points")
    if dist_threshold < 0:
        raise InvalidParameter("dist_threshold must be >= 0")
    positions = cloud.positions
    n = len(positions)
    rng = np.random.default_rng(seed)

    best_count = -1
    best_normal = None
    best_offset = 0.0
    for _ in range(max_iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        normal = np.cross(positions[j] - positions[i], positions[k] - positions[i])
        length = np.linalg.norm(normal)
        if length < 1e-12:
            continue
        normal = normal / length
        offset = -float(normal @ positions[i])
        count = int(np.count_nonzero(np.abs(positions @ normal + offset) <= dist_threshold))
        if count > best_count:
            best_count = count
            best_normal = normal
            best_offset = offset
    if best_normal is None:
        raise DegenerateInput("all sampled triples were collinear")

    model = PlaneModel(best_normal, best_offset, best_count)
    outliers = np.flatnonzero(model.distances(positions) > dist_threshold)
    return cloud.select(outliers), model
