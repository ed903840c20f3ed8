"""Local shape descriptors: FPFH (33), SHOT (352), and ESF (640).

FPFH and SHOT are computed at cloud points (keypoints) over radius supports
and need valid normals; ESF is a global descriptor of a segment's point set.
Entries flagged invalid are zero vectors and must be dropped before matching.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .errors import InvalidParameter, InvalidSegment
from .features import KeypointSet, SegmentSet

Array = NDArray[np.float64]

DESCRIPTOR_DIMS = {"FPFH": 33, "SHOT": 352, "ESF": 640}

FPFH_BINS = 11
SHOT_SHAPE_BINS = 11
SHOT_AZIMUTH_BINS = 8
SHOT_ELEVATION_BINS = 2
SHOT_RADIAL_BINS = 2
SHOT_DIM = SHOT_SHAPE_BINS * SHOT_AZIMUTH_BINS * SHOT_ELEVATION_BINS * SHOT_RADIAL_BINS

ESF_BINS = 64
ESF_GRID = 64
ESF_SAMPLES = 20000
# Fixed absolute histogram ranges; the descriptor is deliberately sensitive to
# absolute segment size.
ESF_D2_MAX = 16.0
ESF_D3_MAX = 8.0

# Relative eigenvalue spacing below which a SHOT reference frame is ambiguous.
SHOT_LRF_EIG_TOL = 1e-9


@dataclass(frozen=True)
class Descriptor:
    """One fixed-length descriptor vector."""

    kind: str
    values: Array
    valid: bool = True

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        expected = DESCRIPTOR_DIMS[self.kind]
        if len(v) != expected:
            raise ValueError(f"{self.kind} descriptor must have length {expected}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class FeatureSet:
    """Parallel arrays of feature positions and descriptors of one kind."""

    kind: str
    positions: Array
    descriptors: Array
    valid: NDArray[np.bool_]

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        desc = np.asarray(self.descriptors, dtype=np.float64)
        desc = desc.reshape(len(pos), DESCRIPTOR_DIMS[self.kind])
        valid = np.asarray(self.valid, dtype=bool).reshape(len(pos))
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "descriptors", desc)
        object.__setattr__(self, "valid", valid)

    def __len__(self) -> int:
        return len(self.positions)

    def valid_only(self) -> "FeatureSet":
        keep = np.flatnonzero(self.valid)
        return FeatureSet(self.kind, self.positions[keep], self.descriptors[keep], self.valid[keep])

    def to_csv_bytes(self) -> bytes:
        rows = []
        for i in range(len(self)):
            vals = [format(v, ".9g") for v in self.positions[i]]
            vals += [format(v, ".9g") for v in self.descriptors[i]]
            rows.append(",".join(vals))
        return ("\n".join(rows) + ("\n" if rows else "")).encode()


def _anchor_indices(keypoints) -> NDArray[np.intp]:
    if isinstance(keypoints, KeypointSet):
        return keypoints.indices
    return np.asarray(keypoints, dtype=np.intp).reshape(-1)


def _require_normals(cloud: PointCloud) -> None:
    if not cloud.has_normals:
        raise InvalidParameter("descriptor computation needs a cloud with normals")


# FPFH -----------------------------------------------------------------------

def pair_features(p: Array, n_p: Array, q: Array, n_q: Array) -> tuple[float, float, float] | None:
    """Angular features (alpha, phi, theta) of an oriented point pair.

    Frame at p: u = n_p, v = unit(d x u), w = u x v with d the unit vector
    from p to q. Returns None for coincident points or d parallel to u.
    """
    d = q - p
    dist = float(np.linalg.norm(d))
    if dist < 1e-12:
        return None
    d = d / dist
    v = np.cross(d, n_p)
    v_norm = float(np.linalg.norm(v))
    if v_norm < 1e-12:
        return None
    v = v / v_norm
    w = np.cross(n_p, v)
    alpha = float(v @ n_q)
    phi = float(n_p @ d)
    theta = float(np.arctan2(w @ n_q, n_p @ n_q))
    return alpha, phi, theta


def _feature_bins(alpha: Array, phi: Array, theta: Array) -> tuple[Array, Array, Array]:
    def to_bin(x, lo, hi):
        b = np.floor((x - lo) / (hi - lo) * FPFH_BINS).astype(np.int64)
        return np.clip(b, 0, FPFH_BINS - 1)

    return (
        to_bin(alpha, -1.0, 1.0),
        to_bin(phi, -1.0, 1.0),
        to_bin(theta, -np.pi, np.pi),
    )


def _spfh_bulk(
    positions: Array,
    normals: Array,
    normals_valid: NDArray[np.bool_],
    tree: cKDTree,
    indices: NDArray[np.intp],
    radius: float,
) -> Array:
    """Raw-count SPFH histograms (len(indices), 33) for the given center points."""
    n_out = len(indices)
    hist = np.zeros((n_out, 3 * FPFH_BINS))
    if n_out == 0:
        return hist
    lists = tree.query_ball_point(positions[indices], radius, workers=-1)
    counts = np.array([len(lst) for lst in lists])
    if counts.sum() == 0:
        return hist
    nbr = np.concatenate([np.asarray(lst, dtype=np.intp) for lst in lists])
    own_local = np.repeat(np.arange(n_out), counts)
    own_global = indices[own_local]

    keep = (nbr != own_global) & normals_valid[nbr] & normals_valid[own_global]
    nbr, own_local, own_global = nbr[keep], own_local[keep], own_global[keep]
    if len(nbr) == 0:
        return hist

    p = positions[own_global]
    q = positions[nbr]
    u = normals[own_global]
    nq = normals[nbr]
    d = q - p
    dist = np.linalg.norm(d, axis=1)
    ok = dist > 1e-12
    d = d[ok] / dist[ok, None]
    u, nq, own_local = u[ok], nq[ok], own_local[ok]

    v = np.cross(d, u)
    v_norm = np.linalg.norm(v, axis=1)
    ok2 = v_norm > 1e-12
    d, u, nq, v, own_local = d[ok2], u[ok2], nq[ok2], v[ok2], own_local[ok2]
    v = v / v_norm[ok2, None]
    w = np.cross(u, v)

    alpha = np.einsum("ij,ij->i", v, nq)
    phi = np.einsum("ij,ij->i", u, d)
    theta = np.arctan2(np.einsum("ij,ij->i", w, nq), np.einsum("ij,ij->i", u, nq))

    ba, bp, bt = _feature_bins(alpha, phi, theta)
    ones = np.ones(len(own_local))
    np.add.at(hist, (own_local, ba), ones)
    np.add.at(hist, (own_local, bp + FPFH_BINS), ones)
    np.add.at(hist, (own_local, bt + 2 * FPFH_BINS), ones)
    return hist


def _normalize_blocks(hist: Array, block: int, target: float) -> Array:
    out = hist.copy()
    for b in range(0, out.shape[-1], block):
        s = out[..., b : b + block].sum(axis=-1, keepdims=True)
        nz = s[..., 0] > 0
        out[nz, b : b + block] *= target / s[nz]
    return out


def compute_fpfh(
    cloud: PointCloud,
    keypoints,
    radius: float = 2.0,
    spfh_radius: float | None = None,
) -> FeatureSet:
    """Fast point feature histograms at the given keypoint indices.

    Each keypoint's histogram is its own SPFH plus the distance-weighted mean
    of its neighbors' SPFHs; every 11-bin block is scaled to sum to 100.
    Keypoints with fewer than two valid-normal neighbors are flagged invalid.
    """
    _require_normals(cloud)
    if radius <= 0:
        raise InvalidParameter("radius must be > 0")
    spfh_radius = radius if spfh_radius is None else spfh_radius
    anchors = _anchor_indices(keypoints)
    n_out = len(anchors)
    out = np.zeros((n_out, 3 * FPFH_BINS))
    valid = np.zeros(n_out, dtype=bool)
    if n_out == 0:
        return FeatureSet("FPFH", np.zeros((0, 3)), out, valid)

    positions = cloud.positions
    normals = cloud.normals
    nvalid = cloud.normals_valid
    tree = cKDTree(positions)

    anchor_lists = tree.query_ball_point(positions[anchors], radius, workers=-1)
    weight_nbrs: list[NDArray[np.intp]] = []
    for a, lst in zip(anchors, anchor_lists):
        arr = np.asarray(lst, dtype=np.intp)
        arr = arr[(arr != a) & nvalid[arr]]
        weight_nbrs.append(arr)

    needed = np.unique(np.concatenate([anchors] + weight_nbrs))
    spfh = _spfh_bulk(positions, normals, nvalid, tree, needed, spfh_radius)

    for i, (a, nbrs) in enumerate(zip(anchors, weight_nbrs)):
        if not nvalid[a] or len(nbrs) < 2:
            continue
        dists = np.linalg.norm(positions[nbrs] - positions[a], axis=1)
        ok = dists > 1e-12
        nbrs, dists = nbrs[ok], dists[ok]
        if len(nbrs) < 2:
            continue
        rows = np.searchsorted(needed, nbrs)
        own_row = int(np.searchsorted(needed, a))
        combined = spfh[own_row] + (spfh[rows] / dists[:, None]).sum(axis=0) / len(nbrs)
        out[i] = combined
        valid[i] = True

    out[valid] = _normalize_blocks(out[valid], FPFH_BINS, 100.0)
    return FeatureSet("FPFH", positions[anchors], out, valid)


# SHOT -----------------------------------------------------------------------

def _shot_lrf(rel: Array, dist: Array, radius: float) -> Array | None:
    """Repeatable local frame from the distance-weighted scatter of rel vectors.

    Returns a 3x3 matrix with rows (x, y, z), or None when the eigenvalue
    spectrum is too degenerate to disambiguate.
    """
    w = radius - dist
    w_sum = w.sum()
    if w_sum <= 0 or len(rel) < 3:
        return None
    cov = (rel * w[:, None]).T @ rel / w_sum
    eigvals, eigvecs = np.linalg.eigh(cov)
    scale = max(eigvals[2], 1e-300)
    if (eigvals[2] - eigvals[1]) <= SHOT_LRF_EIG_TOL * scale:
        return None
    if (eigvals[1] - eigvals[0]) <= SHOT_LRF_EIG_TOL * scale:
        return None
    x_axis = eigvecs[:, 2]
    z_axis = eigvecs[:, 0]
    x_pos = int(np.count_nonzero(rel @ x_axis >= 0))
    if x_pos < len(rel) - x_pos:
        x_axis = -x_axis
    z_pos = int(np.count_nonzero(rel @ z_axis >= 0))
    if z_pos < len(rel) - z_pos:
        z_axis = -z_axis
    y_axis = np.cross(z_axis, x_axis)
    return np.vstack([x_axis, y_axis, z_axis])


def _soft_pairs(t: Array, n_bins: int, wrap: bool) -> tuple[Array, Array, Array, Array]:
    """Linear interpolation weights between the two nearest bin centers.

    t is a continuous bin coordinate where bin centers sit at integers.
    """
    i0 = np.floor(t).astype(np.int64)
    frac = t - i0
    i1 = i0 + 1
    if wrap:
        i0 %= n_bins
        i1 %= n_bins
    else:
        i0 = np.clip(i0, 0, n_bins - 1)
        i1 = np.clip(i1, 0, n_bins - 1)
    return i0, 1.0 - frac, i1, frac


def compute_shot(
    cloud: PointCloud,
    keypoints,
    radius: float = 2.0,
    hard_binning: bool = False,
) -> FeatureSet:
    """SHOT descriptors at the given keypoint indices.

    The support sphere is split into 8 azimuth x 2 elevation x 2 radial
    sectors in a local reference frame; each sector holds an 11-bin histogram
    of the cosine between neighbor normals and the keypoint normal. The
    canonical variant distributes each vote quadrilinearly across adjacent
    bins; hard_binning is a debugging aid that assigns whole votes. The final
    vector is L2-normalized.
    """
    _require_normals(cloud)
    if radius <= 0:
        raise InvalidParameter("radius must be > 0")
    anchors = _anchor_indices(keypoints)
    n_out = len(anchors)
    out = np.zeros((n_out, SHOT_DIM))
    valid = np.zeros(n_out, dtype=bool)
    if n_out == 0:
        return FeatureSet("SHOT", np.zeros((0, 3)), out, valid)

    positions = cloud.positions
    normals = cloud.normals
    nvalid = cloud.normals_valid
    tree = cKDTree(positions)
    lists = tree.query_ball_point(positions[anchors], radius, workers=-1)

    for i, (a, lst) in enumerate(zip(anchors, lists)):
        if not nvalid[a]:
            continue
        nbrs = np.asarray(lst, dtype=np.intp)
        nbrs = nbrs[nbrs != a]
        if len(nbrs) == 0:
            continue
        rel = positions[nbrs] - positions[a]
        dist = np.linalg.norm(rel, axis=1)
        ok = dist > 1e-12
        nbrs, rel, dist = nbrs[ok], rel[ok], dist[ok]
        frame = _shot_lrf(rel, dist, radius)
        if frame is None:
            continue
        use = nvalid[nbrs]
        if not use.any():
            continue
        rel, dist, nbrs = rel[use], dist[use], nbrs[use]

        local = rel @ frame.T
        cos_theta = np.clip(normals[nbrs] @ normals[a], -1.0, 1.0)
        t_shape = (cos_theta + 1.0) / 2.0 * SHOT_SHAPE_BINS - 0.5
        t_azim = (np.arctan2(local[:, 1], local[:, 0]) + np.pi) / (2 * np.pi) * SHOT_AZIMUTH_BINS - 0.5
        sin_elev = np.clip(local[:, 2] / dist, -1.0, 1.0)
        t_elev = (sin_elev + 1.0) / 2.0 * SHOT_ELEVATION_BINS - 0.5
        t_rad = np.clip(dist / radius, 0.0, 1.0) * SHOT_RADIAL_BINS - 0.5

        hist = np.zeros(SHOT_DIM)
        if hard_binning:
            bs = np.clip(np.rint(t_shape).astype(np.int64), 0, SHOT_SHAPE_BINS - 1)
            ba = np.rint(t_azim).astype(np.int64) % SHOT_AZIMUTH_BINS
            be = np.clip(np.rint(t_elev).astype(np.int64), 0, SHOT_ELEVATION_BINS - 1)
            br = np.clip(np.rint(t_rad).astype(np.int64), 0, SHOT_RADIAL_BINS - 1)
            flat = ((br * SHOT_ELEVATION_BINS + be) * SHOT_AZIMUTH_BINS + ba) * SHOT_SHAPE_BINS + bs
            np.add.at(hist, flat, 1.0)
        else:
            s0, sw0, s1, sw1 = _soft_pairs(t_shape, SHOT_SHAPE_BINS, wrap=False)
            a0, aw0, a1, aw1 = _soft_pairs(t_azim, SHOT_AZIMUTH_BINS, wrap=True)
            e0, ew0, e1, ew1 = _soft_pairs(t_elev, SHOT_ELEVATION_BINS, wrap=False)
            r0, rw0, r1, rw1 = _soft_pairs(t_rad, SHOT_RADIAL_BINS, wrap=False)
            s_idx = np.stack([s0, s1], axis=1)
            s_w = np.stack([sw0, sw1], axis=1)
            a_idx = np.stack([a0, a1], axis=1)
            a_w = np.stack([aw0, aw1], axis=1)
            e_idx = np.stack([e0, e1], axis=1)
            e_w = np.stack([ew0, ew1], axis=1)
            r_idx = np.stack([r0, r1], axis=1)
            r_w = np.stack([rw0, rw1], axis=1)
            flat = (
                ((r_idx[:, :, None, None, None] * SHOT_ELEVATION_BINS
                  + e_idx[:, None, :, None, None]) * SHOT_AZIMUTH_BINS
                 + a_idx[:, None, None, :, None]) * SHOT_SHAPE_BINS
                + s_idx[:, None, None, None, :]
            )
            weight = (
                r_w[:, :, None, None, None]
                * e_w[:, None, :, None, None]
                * a_w[:, None, None, :, None]
                * s_w[:, None, None, None, :]
            )
            np.add.at(hist, flat.reshape(-1), weight.reshape(-1))

        norm = np.linalg.norm(hist)
        if norm > 0:
            out[i] = hist / norm
            valid[i] = True

    return FeatureSet("SHOT", positions[anchors], out, valid)


# ESF ------------------------------------------------------------------------

def _trace_edges(starts: Array, ends: Array, occupancy: NDArray[np.bool_], origin: Array, voxel: float):
    """Walk voxel lines between point pairs and classify interior occupancy.

    Returns (occupied_interior, total_interior) per edge. The first and last
    voxels are the sample points' own cells and are excluded.
    """
    n = len(starts)
    cur = np.clip(np.floor((starts - origin) / voxel).astype(np.int64), 0, ESF_GRID - 1)
    end = np.clip(np.floor((ends - origin) / voxel).astype(np.int64), 0, ESF_GRID - 1)
    direction = ends - starts
    step = np.sign(direction).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_delta = np.where(direction != 0.0, voxel / np.abs(direction), np.inf)
        next_bound = origin + (cur + (step > 0)) * voxel
        t_max = np.where(direction != 0.0, (next_bound - starts) / direction, np.inf)

    occ_interior = np.zeros(n, dtype=np.int64)
    tot_interior = np.zeros(n, dtype=np.int64)
    active = np.any(cur != end, axis=1)
    for _ in range(3 * ESF_GRID + 3):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        axis = np.argmin(t_max[idx], axis=1)
        rows = idx
        cur[rows, axis] += step[rows, axis]
        t_max[rows, axis] += t_delta[rows, axis]
        cur[rows] = np.clip(cur[rows], 0, ESF_GRID - 1)
        arrived = np.all(cur[rows] == end[rows], axis=1)
        out_of_range = t_max[rows].min(axis=1) > 1.0 + 1e-9
        interior = ~arrived
        sel = rows[interior]
        tot_interior[sel] += 1
        occ_interior[sel] += occupancy[cur[sel, 0], cur[sel, 1], cur[sel, 2]]
        active[rows[arrived]] = False
        active[rows[out_of_range & ~arrived]] = False
    return occ_interior, tot_interior


def _edge_classes(occ: NDArray[np.int64], tot: NDArray[np.int64]) -> NDArray[np.int64]:
    """0 = in (all interior occupied or none to check), 1 = out, 2 = mixed."""
    cls = np.full(len(occ), 2, dtype=np.int64)
    cls[(tot == 0) | (occ == tot)] = 0
    cls[(occ == 0) & (tot > 0)] = 1
    return cls


def compute_esf(
    points,
    samples: int = ESF_SAMPLES,
    seed: int = 0,
    d2_max: float = ESF_D2_MAX,
    d3_max: float = ESF_D3_MAX,
) -> Descriptor:
    """Ensemble-of-shape-functions descriptor of a point set.

    Ten 64-bin histograms over randomly sampled point triples: pair distances
    (D2) split by in/out/mixed line tracing through a 64^3 occupancy grid plus
    an in-out ratio histogram, triangle areas (D3, square-rooted) and triangle
    angles (A3) with the same three-way split. Each histogram is normalized to
    unit sum. Distance and area bins use fixed absolute ranges, so the
    descriptor distinguishes differently sized shapes.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    m = len(pts)
    if m < 10:
        raise InvalidSegment(f"ESF needs at least 10 points, got {m}")

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    side = float(max(hi - lo)) + 1e-9
    center = (lo + hi) / 2.0
    origin = center - side / 2.0
    voxel = side / ESF_GRID
    coords = np.clip(np.floor((pts - origin) / voxel).astype(np.int64), 0, ESF_GRID - 1)
    occupancy = np.zeros((ESF_GRID, ESF_GRID, ESF_GRID), dtype=bool)
    occupancy[coords[:, 0], coords[:, 1], coords[:, 2]] = True

    rng = np.random.default_rng(seed)
    triples = rng.integers(0, m, size=(samples, 3))
    distinct = (
        (triples[:, 0] != triples[:, 1])
        & (triples[:, 1] != triples[:, 2])
        & (triples[:, 0] != triples[:, 2])
    )
    triples = triples[distinct]
    pa, pb, pc = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]

    edge_occ = []
    edge_tot = []
    for s, e in ((pa, pb), (pb, pc), (pc, pa)):
        occ, tot = _trace_edges(s, e, occupancy, origin, voxel)
        edge_occ.append(occ)
        edge_tot.append(tot)
    classes = [_edge_classes(o, t) for o, t in zip(edge_occ, edge_tot)]

    hists = np.zeros((10, ESF_BINS))

    def to_bin(x, max_value):
        b = np.floor(x / max_value * ESF_BINS).astype(np.int64)
        return np.clip(b, 0, ESF_BINS - 1)

    # D2 over edge (a, b), rows 0..2; ratio over the same edge, row 3
    d2 = np.linalg.norm(pb - pa, axis=1)
    d2_bins = to_bin(d2, d2_max)
    for c in range(3):
        sel = classes[0] == c
        np.add.at(hists[c], d2_bins[sel], 1.0)
    ratio = np.where(edge_tot[0] > 0, edge_occ[0] / np.maximum(edge_tot[0], 1), 1.0)
    np.add.at(hists[3], np.clip((ratio * ESF_BINS).astype(np.int64), 0, ESF_BINS - 1), 1.0)

    # D3 (sqrt of triangle area), rows 4..6; class = in/out only when all three
    # edges agree, mixed otherwise
    area = 0.5 * np.linalg.norm(np.cross(pb - pa, pc - pa), axis=1)
    d3_bins = to_bin(np.sqrt(area), d3_max)
    tri_class = np.full(len(area), 2, dtype=np.int64)
    all_in = (classes[0] == 0) & (classes[1] == 0) & (classes[2] == 0)
    all_out = (classes[0] == 1) & (classes[1] == 1) & (classes[2] == 1)
    tri_class[all_in] = 0
    tri_class[all_out] = 1
    for c in range(3):
        sel = tri_class == c
        np.add.at(hists[4 + c], d3_bins[sel], 1.0)

    # A3 angles at each triangle vertex, rows 7..9, classified by the class of
    # the opposite edge
    def angles_at(v, w):
        lv = np.linalg.norm(v, axis=1)
        lw = np.linalg.norm(w, axis=1)
        denom = np.maximum(lv * lw, 1e-300)
        return np.arccos(np.clip(np.einsum("ij,ij->i", v, w) / denom, -1.0, 1.0))

    corner_angles = [
        angles_at(pb - pa, pc - pa),  # at a, opposite edge (b, c) -> classes[1]
        angles_at(pa - pb, pc - pb),  # at b, opposite edge (c, a) -> classes[2]
        angles_at(pa - pc, pb - pc),  # at c, opposite edge (a, b) -> classes[0]
    ]
    opposite = [classes[1], classes[2], classes[0]]
    for angle, cls in zip(corner_angles, opposite):
        bins = to_bin(angle, np.pi)
        for c in range(3):
            sel = cls == c
            np.add.at(hists[7 + c], bins[sel], 1.0)

    sums = hists.sum(axis=1, keepdims=True)
    nz = sums[:, 0] > 0
    hists[nz] /= sums[nz]
    return Descriptor("ESF", hists.reshape(-1))


# Segment-level feature sets ---------------------------------------------------

def segment_seed(base_seed: int, segment_index: int) -> int:
    """Stable per-segment seed so parallel segment order cannot change output."""
    return int(np.random.SeedSequence([base_seed, segment_index]).generate_state(1)[0])


def compute_segment_features(
    cloud: PointCloud,
    segments: SegmentSet,
    kind: str,
    seed: int = 0,
    esf_samples: int = ESF_SAMPLES,
) -> FeatureSet:
    """Descriptors of whole segments, positioned at segment centroids.

    FPFH and SHOT anchor at the segment point nearest the centroid with the
    support radius set to the segment's bounding-sphere radius; ESF consumes
    the raw segment points.
    """
    if kind not in DESCRIPTOR_DIMS:
        raise InvalidParameter(f"unknown descriptor kind '{kind}'")
    dim = DESCRIPTOR_DIMS[kind]
    n = len(segments)
    out = np.zeros((n, dim))
    valid = np.zeros(n, dtype=bool)
    centroids = segments.centroids

    for i, seg in enumerate(segments.segments):
        sub = cloud.select(seg.indices)
        if kind == "ESF":
            if len(sub) < 10:
                continue
            desc = compute_esf(sub.positions, samples=esf_samples, seed=segment_seed(seed, i))
            out[i] = desc.values
            valid[i] = desc.valid
            continue
        offsets = np.linalg.norm(sub.positions - seg.centroid, axis=1)
        anchor = int(np.argmin(offsets))
        anchor_rad = float(np.linalg.norm(sub.positions - sub.positions[anchor], axis=1).max())
        radius = max(anchor_rad * 1.001, 1e-6)
        if kind == "FPFH":
            fs = compute_fpfh(sub, np.array([anchor]), radius=radius)
        else:
            fs = compute_shot(sub, np.array([anchor]), radius=radius)
        out[i] = fs.descriptors[0]
        valid[i] = fs.valid[0]

    return FeatureSet(kind, centroids, out, valid)
