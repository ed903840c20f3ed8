"""Point-cloud container, spatial index, and per-cloud geometry operations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .errors import InvalidParameter
from .geometry import RigidTransform

Array = NDArray[np.float64]

NORMAL_UNIT_TOL = 1e-6

# Placeholder stored where a normal could not be estimated; such entries are
# marked False in normals_valid and must never enter descriptor support sets.
INVALID_NORMAL = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True, slots=True)
class Point:
    """Single point view: position in meters, optional unit normal and RGB color."""

    position: Array
    normal: Array | None = None
    color: NDArray[np.uint8] | None = None


@dataclass(frozen=True)
class PointCloud:
    """Immutable cloud of 3D points with optional per-point normals and colors.

    normals_valid marks which normals are usable; invalid entries hold a
    placeholder unit vector so the array stays well-formed.
    """

    positions: Array
    normals: Array | None = None
    normals_valid: NDArray[np.bool_] | None = None
    colors: NDArray[np.uint8] | None = None
    frame_id: str = ""

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        pos = pos.reshape(-1, 3) if pos.size else pos.reshape(0, 3)
        if not np.isfinite(pos).all():
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", pos)

        n = len(pos)
        if self.normals is not None:
            nrm = np.ascontiguousarray(np.asarray(self.normals, dtype=np.float64)).reshape(n, 3)
            valid = self.normals_valid
            if valid is None:
                valid = np.ones(n, dtype=bool)
            else:
                valid = np.asarray(valid, dtype=bool).reshape(n)
            lengths = np.linalg.norm(nrm[valid], axis=1)
            if lengths.size and np.abs(lengths - 1.0).max() > NORMAL_UNIT_TOL:
                raise ValueError("valid normals must be unit length")
            object.__setattr__(self, "normals", nrm)
            object.__setattr__(self, "normals_valid", valid)
        elif self.normals_valid is not None:
            raise ValueError("normals_valid given without normals")

        if self.colors is not None:
            col = np.asarray(self.colors)
            if col.dtype != np.uint8:
                if col.min(initial=0) < 0 or col.max(initial=0) > 255:
                    raise ValueError("colors must lie in [0, 255]")
                col = col.astype(np.uint8)
            object.__setattr__(self, "colors", np.ascontiguousarray(col.reshape(n, 3)))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def point(self, i: int) -> Point:
        return Point(
            position=self.positions[i],
            normal=self.normals[i] if self.normals is not None else None,
            color=self.colors[i] if self.colors is not None else None,
        )

    def select(self, indices) -> "PointCloud":
        """Subset cloud keeping per-point attributes aligned."""
        idx = np.asarray(indices)
        return PointCloud(
            positions=self.positions[idx],
            normals=self.normals[idx] if self.normals is not None else None,
            normals_valid=self.normals_valid[idx] if self.normals_valid is not None else None,
            colors=self.colors[idx] if self.colors is not None else None,
            frame_id=self.frame_id,
        )


def concatenate_clouds(clouds: list[PointCloud], frame_id: str = "") -> PointCloud:
    """Stack clouds; normals/colors are kept only if present on every input."""
    if not clouds:
        return PointCloud(np.zeros((0, 3)), frame_id=frame_id)
    positions = np.vstack([c.positions for c in clouds])
    normals = None
    valid = None
    if all(c.has_normals for c in clouds):
        normals = np.vstack([c.normals for c in clouds])
        valid = np.concatenate([c.normals_valid for c in clouds])
    colors = None
    if all(c.colors is not None for c in clouds):
        colors = np.vstack([c.colors for c in clouds])
    return PointCloud(positions, normals, valid, colors, frame_id=frame_id)


class SpatialIndex:
    """Exact nearest-neighbor index over a cloud's positions.

    Results match a linear scan: distances are recomputed with numpy norms and
    ties are broken by the lower point index, so downstream behavior does not
    depend on kd-tree internals.
    """

    # Relative slack when re-querying candidates, covering last-ulp differences
    # between the tree's internal metric and the norms computed here.
    _SLACK = 1e-12

    def __init__(self, cloud: PointCloud):
        self._positions = cloud.positions
        self._tree = cKDTree(self._positions) if len(cloud) else None

    def __len__(self) -> int:
        return len(self._positions)

    def knn(self, query, k: int) -> tuple[NDArray[np.intp], Array]:
        """Indices and distances of the k nearest points, ascending.

        k larger than the cloud returns every point.
        """
        if k < 1:
            raise InvalidParameter("k must be >= 1")
        n = len(self._positions)
        if n == 0:
            return np.zeros(0, dtype=np.intp), np.zeros(0)
        q = np.asarray(query, dtype=np.float64).reshape(3)
        k_eff = min(k, n)
        dist, _ = self._tree.query(q, k=k_eff)
        d_max = float(np.atleast_1d(dist)[-1])
        candidates = self._tree.query_ball_point(q, d_max * (1.0 + self._SLACK) + 1e-300)
        idx = np.asarray(sorted(candidates), dtype=np.intp)
        d = np.linalg.norm(self._positions[idx] - q, axis=1)
        order = np.lexsort((idx, d))[:k_eff]
        return idx[order], d[order]

    def radius_search(self, query, radius: float) -> tuple[NDArray[np.intp], Array]:
        """All points with distance <= radius, sorted by (distance, index)."""
        if radius <= 0:
            raise InvalidParameter("radius must be > 0")
        if len(self._positions) == 0:
            return np.zeros(0, dtype=np.intp), np.zeros(0)
        q = np.asarray(query, dtype=np.float64).reshape(3)
        candidates = self._tree.query_ball_point(q, radius * (1.0 + self._SLACK))
        idx = np.asarray(sorted(candidates), dtype=np.intp)
        d = np.linalg.norm(self._positions[idx] - q, axis=1)
        keep = d <= radius
        idx, d = idx[keep], d[keep]
        order = np.lexsort((idx, d))
        return idx[order], d[order]

    def neighbor_lists(self, queries, radius: float, workers: int = -1) -> list[NDArray[np.intp]]:
        """Batch radius query; each entry is a sorted index array (unordered by distance)."""
        if radius <= 0:
            raise InvalidParameter("radius must be > 0")
        if len(self._positions) == 0:
            return [np.zeros(0, dtype=np.intp) for _ in range(len(np.atleast_2d(queries)))]
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        lists = self._tree.query_ball_point(q, radius * (1.0 + self._SLACK), workers=workers)
        out = []
        for i, lst in enumerate(lists):
            idx = np.asarray(lst, dtype=np.intp)
            d = np.linalg.norm(self._positions[idx] - q[i], axis=1)
            out.append(np.sort(idx[d <= radius]))
        return out


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def voxel_downsample(cloud: PointCloud, leaf_size: float) -> PointCloud:
    """Replace the points of each occupied voxel by their centroid.

    Output points are ordered by lexicographic voxel key, so the result does
    not depend on input order beyond centroid summation.
    """
    if leaf_size <= 0:
        raise InvalidParameter("leaf_size must be > 0")
    if len(cloud) == 0:
        return PointCloud(np.zeros((0, 3)), frame_id=cloud.frame_id)
    keys = np.floor(cloud.positions / leaf_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, cloud.positions)
    centroids = sums / counts[:, None]
    return PointCloud(centroids, frame_id=cloud.frame_id)


def estimate_normals(cloud: PointCloud, radius: float, viewpoint=(0.0, 0.0, 0.0)) -> PointCloud:
    """Per-point normals from the covariance of radius neighborhoods.

    The normal is the eigenvector of the smallest covariance eigenvalue,
    sign-flipped to face the viewpoint. Neighborhoods with fewer than three
    points, or with rank below two, yield a flagged invalid normal.
    """
    if radius <= 0:
        raise InvalidParameter("radius must be > 0")
    n = len(cloud)
    if n == 0:
        return PointCloud(
            cloud.positions,
            normals=np.zeros((0, 3)),
            normals_valid=np.zeros(0, dtype=bool),
            colors=cloud.colors,
            frame_id=cloud.frame_id,
        )
    positions = cloud.positions
    vp = np.asarray(viewpoint, dtype=np.float64).reshape(3)

    tree = cKDTree(positions)
    neighbor_lists = tree.query_ball_point(positions, radius, workers=-1)
    counts = np.fromiter((len(lst) for lst in neighbor_lists), dtype=np.int64, count=n)
    flat = np.concatenate([np.asarray(lst, dtype=np.intp) for lst in neighbor_lists]) \
        if counts.sum() else np.zeros(0, dtype=np.intp)

    # Neighbor lists are concatenated per point, so per-point reduction is a
    # contiguous segment sum.
    offsets = np.zeros(n, dtype=np.intp)
    np.cumsum(counts[:-1], out=offsets[1:])
    nbr_pos = positions[flat]
    sums = np.add.reduceat(nbr_pos, offsets, axis=0) if len(flat) else np.zeros((n, 3))
    sums[counts == 0] = 0.0
    prods = nbr_pos[:, (0, 0, 0, 1, 1, 2)] * nbr_pos[:, (0, 1, 2, 1, 2, 2)]
    sq6 = np.add.reduceat(prods, offsets, axis=0) if len(flat) else np.zeros((n, 6))
    sq6[counts == 0] = 0.0
    safe = np.maximum(counts, 1)
    means = sums / safe[:, None]
    mom = sq6 / safe[:, None]
    cov = np.empty((n, 3, 3))
    cov[:, 0, 0] = mom[:, 0] - means[:, 0] * means[:, 0]
    cov[:, 0, 1] = cov[:, 1, 0] = mom[:, 1] - means[:, 0] * means[:, 1]
    cov[:, 0, 2] = cov[:, 2, 0] = mom[:, 2] - means[:, 0] * means[:, 2]
    cov[:, 1, 1] = mom[:, 3] - means[:, 1] * means[:, 1]
    cov[:, 1, 2] = cov[:, 2, 1] = mom[:, 4] - means[:, 1] * means[:, 2]
    cov[:, 2, 2] = mom[:, 5] - means[:, 2] * means[:, 2]

    eigvals, eigvecs = np.linalg.eigh(cov)
    normals = eigvecs[:, :, 0]
    # Rank test: the plane is defined only when the second-smallest eigenvalue
    # clearly exceeds numerical noise relative to the largest.
    spread = np.maximum(eigvals[:, 2], 1e-300)
    valid = (counts >= 3) & (eigvals[:, 1] > 1e-12 * spread)

    toward = vp[None, :] - positions
    flip = np.einsum("ij,ij->i", normals, toward) < 0.0
    normals = np.where(flip[:, None], -normals, normals)
    lengths = np.linalg.norm(normals, axis=1)
    ok = lengths > 0
    valid &= ok
    normals[ok] = normals[ok] / lengths[ok, None]
    normals[~valid] = INVALID_NORMAL

    return PointCloud(
        positions,
        normals=normals,
        normals_valid=valid,
        colors=cloud.colors,
        frame_id=cloud.frame_id,
    )


def apply_transform(cloud: PointCloud, transform: RigidTransform) -> PointCloud:
    """Rigidly move a cloud: positions p -> Rp + t, normals n -> Rn."""
    normals = None
    if cloud.normals is not None:
        normals = transform.apply_to_normals(cloud.normals)
    return PointCloud(
        transform.apply(cloud.positions) if len(cloud) else cloud.positions,
        normals=normals,
        normals_valid=cloud.normals_valid,
        colors=cloud.colors,
        frame_id=cloud.frame_id,
    )


def crop_to_box(cloud: PointCloud, lower, upper) -> PointCloud:
    """Keep points with lower <= p <= upper componentwise."""
    lo = np.asarray(lower, dtype=np.float64).reshape(3)
    hi = np.asarray(upper, dtype=np.float64).reshape(3)
    if len(cloud) == 0:
        return cloud
    inside = np.all((cloud.positions >= lo) & (cloud.positions <= hi), axis=1)
    return cloud.select(np.flatnonzero(inside))
