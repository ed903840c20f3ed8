import numpy as np
import pytest

from cloudreg.cloud import PointCloud
from cloudreg.descriptors import (
    DESCRIPTOR_DIMS,
    compute_esf,
    compute_fpfh,
    compute_segment_features,
    compute_shot,
)
from cloudreg.errors import InvalidSegment
from cloudreg.features import segment_euclidean
from cloudreg.geometry import random_rigid_transform


def random_patch(n, seed):
    """Blob with random (but valid) unit normals; descriptors are purely
    definitional, so normals need not be geometrically meaningful."""
    rng = np.random.default_rng(seed)
    positions = rng.uniform(-1.5, 1.5, size=(n, 3))
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return PointCloud(positions, normals=normals)


# Independent definition-level oracle -----------------------------------------

def _oracle_pair(p, np_, q, nq):
    d = q - p
    dist = np.linalg.norm(d)
    if dist < 1e-12:
        return None
    dhat = d / dist
    v = np.cross(dhat, np_)
    nv = np.linalg.norm(v)
    if nv < 1e-12:
        return None
    v = v / nv
    w = np.cross(np_, v)
    return v @ nq, np_ @ dhat, np.arctan2(w @ nq, np_ @ nq)


def _oracle_spfh(positions, normals, i, radius):
    hist = np.zeros(33)
    for j in range(len(positions)):
        if j == i:
            continue
        if np.linalg.norm(positions[j] - positions[i]) > radius:
            continue
        feats = _oracle_pair(positions[i], normals[i], positions[j], normals[j])
        if feats is None:
            continue
        for value, lo, hi, offset in (
            (feats[0], -1.0, 1.0, 0),
            (feats[1], -1.0, 1.0, 11),
            (feats[2], -np.pi, np.pi, 22),
        ):
            b = int(np.floor((value - lo) / (hi - lo) * 11))
            hist[offset + min(max(b, 0), 10)] += 1.0
    return hist


def fpfh_oracle(positions, normals, anchors, radius):
    out = []
    for a in anchors:
        dist = np.linalg.norm(positions - positions[a], axis=1)
        nbrs = [j for j in range(len(positions)) if j != a and dist[j] <= radius]
        h = _oracle_spfh(positions, normals, a, radius).copy()
        acc = np.zeros(33)
        for j in nbrs:
            acc += _oracle_spfh(positions, normals, j, radius) / dist[j]
        h = h + acc / len(nbrs)
        for offset in (0, 11, 22):
            s = h[offset : offset + 11].sum()
            if s > 0:
                h[offset : offset + 11] *= 100.0 / s
        out.append(h)
    return np.asarray(out)


class TestFpfh:
    def test_dimension_contract(self):
        cloud = random_patch(60, 40)
        fs = compute_fpfh(cloud, np.arange(5), radius=2.0)
        assert fs.descriptors.shape == (5, 33)
        assert fs.kind == "FPFH"

    def test_matches_definition_oracle(self):
        cloud = random_patch(200, 41)
        anchors = np.array([0, 7, 42, 130])
        fs = compute_fpfh(cloud, anchors, radius=1.0)
        expected = fpfh_oracle(cloud.positions, cloud.normals, anchors, 1.0)
        assert fs.valid.all()
        assert np.abs(fs.descriptors - expected).max() < 1e-9

    def test_coplanar_identical_normals_single_bin_per_block(self):
        xs = np.linspace(0, 1, 8)
        pts = np.array([[x, y, 0.0] for x in xs for y in xs])
        normals = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
        cloud = PointCloud(pts, normals=normals)
        fs = compute_fpfh(cloud, np.array([30]), radius=2.0)
        desc = fs.descriptors[0]
        for offset in (0, 11, 22):
            block = desc[offset : offset + 11]
            assert np.count_nonzero(block) == 1
            assert block.sum() == pytest.approx(100.0)

    def test_rigid_motion_invariance(self):
        cloud = random_patch(150, 42)
        anchors = np.array([3, 50, 99])
        base = compute_fpfh(cloud, anchors, radius=1.2)
        rng = np.random.default_rng(43)
        for _ in range(3):
            t = random_rigid_transform(rng, max_translation=8.0)
            moved = PointCloud(
                t.apply(cloud.positions), normals=t.apply_to_normals(cloud.normals)
            )
            fs = compute_fpfh(moved, anchors, radius=1.2)
            assert np.abs(fs.descriptors - base.descriptors).max() < 1e-6

    def test_too_few_neighbors_flagged_invalid(self):
        positions = np.array([[0.0, 0, 0], [0.1, 0, 0], [50.0, 0, 0]])
        normals = np.tile([0.0, 0.0, 1.0], (3, 1))
        cloud = PointCloud(positions, normals=normals)
        fs = compute_fpfh(cloud, np.array([0, 2]), radius=1.0)
        assert not fs.valid.any()
        assert np.array_equal(fs.descriptors, np.zeros((2, 33)))

    def test_entries_non_negative_and_finite(self):
        cloud = random_patch(120, 44)
        fs = compute_fpfh(cloud, np.arange(20), radius=1.5)
        assert np.isfinite(fs.descriptors).all()
        assert (fs.descriptors >= 0).all()


class TestShot:
    def test_dimension_and_unit_norm(self):
        cloud = random_patch(200, 45)
        fs = compute_shot(cloud, np.arange(10), radius=1.5)
        assert fs.descriptors.shape == (10, 352)
        norms = np.linalg.norm(fs.descriptors[fs.valid], axis=1)
        assert np.abs(norms - 1.0).max() < 1e-9

    def test_rigid_motion_invariance(self):
        cloud = random_patch(180, 46)
        anchors = np.array([5, 60, 120])
        base = compute_shot(cloud, anchors, radius=1.4)
        rng = np.random.default_rng(47)
        for _ in range(3):
            t = random_rigid_transform(rng, max_translation=6.0)
            moved = PointCloud(
                t.apply(cloud.positions), normals=t.apply_to_normals(cloud.normals)
            )
            fs = compute_shot(moved, anchors, radius=1.4)
            assert fs.valid.tolist() == base.valid.tolist()
            assert np.abs(fs.descriptors - base.descriptors).max() < 1e-4

    def test_single_contributing_neighbor_hard_binning(self):
        rng = np.random.default_rng(48)
        geom = rng.uniform(-1, 1, size=(25, 3)) * np.array([1.0, 0.6, 0.3])
        anchor = np.zeros((1, 3))
        contributor = np.array([[0.4, 0.2, 0.1]])
        positions = np.vstack([anchor, contributor, geom])
        normals = np.tile([0.0, 0.0, 1.0], (len(positions), 1))
        valid = np.zeros(len(positions), dtype=bool)
        valid[0] = True
        valid[1] = True
        cloud = PointCloud(positions, normals=normals, normals_valid=valid)
        fs = compute_shot(cloud, np.array([0]), radius=3.0, hard_binning=True)
        assert fs.valid[0]
        # L2-normalized single vote: exactly one bin equal to 1
        assert np.count_nonzero(fs.descriptors[0]) == 1
        assert fs.descriptors[0].max() == pytest.approx(1.0)

    def test_degenerate_lrf_flagged_invalid(self):
        # Points evenly on a circle: two equal covariance eigenvalues
        ang = np.linspace(0, 2 * np.pi, 13)[:-1]
        ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros_like(ang)])
        positions = np.vstack([np.zeros((1, 3)), ring])
        normals = np.tile([0.0, 0.0, 1.0], (len(positions), 1))
        cloud = PointCloud(positions, normals=normals)
        fs = compute_shot(cloud, np.array([0]), radius=2.0)
        assert not fs.valid[0]

    def test_non_negative_entries(self):
        cloud = random_patch(150, 49)
        fs = compute_shot(cloud, np.arange(15), radius=1.5)
        assert (fs.descriptors >= 0).all()
        assert np.isfinite(fs.descriptors).all()


class TestEsf:
    @staticmethod
    def segment_points(seed, n=300, scale=1.0):
        rng = np.random.default_rng(seed)
        base = rng.uniform(-1, 1, size=(n, 3)) * np.array([2.0, 1.0, 0.8]) * scale
        return base

    def test_dimension_and_normalization(self):
        desc = compute_esf(self.segment_points(50), seed=1)
        assert len(desc.values) == DESCRIPTOR_DIMS["ESF"]
        hists = desc.values.reshape(10, 64)
        sums = hists.sum(axis=1)
        for s in sums:
            assert s == pytest.approx(1.0, abs=1e-6) or s == 0.0
        assert (desc.values >= 0).all()

    def test_seeded_determinism(self):
        pts = self.segment_points(51)
        a = compute_esf(pts, seed=9)
        b = compute_esf(pts, seed=9)
        assert np.array_equal(a.values, b.values)
        c = compute_esf(pts, seed=10)
        assert not np.array_equal(a.values, c.values)

    def test_translation_invariance(self):
        pts = self.segment_points(52)
        a = compute_esf(pts, seed=3)
        b = compute_esf(pts + np.array([3.75, -2.25, 5.5]), seed=3)
        assert np.abs(a.values - b.values).max() < 1e-9

    def test_scale_variance_shifts_d2(self):
        pts = self.segment_points(53)
        a = compute_esf(pts, seed=4)
        b = compute_esf(pts * 2.0, seed=4)
        d2_a = a.values[: 4 * 64]
        d2_b = b.values[: 4 * 64]
        assert np.abs(d2_a - d2_b).max() > 1e-3

    def test_too_small_segment_rejected(self):
        with pytest.raises(InvalidSegment):
            compute_esf(np.zeros((9, 3)))


class TestSegmentFeatures:
    @staticmethod
    def segmented_cloud():
        rng = np.random.default_rng(54)
        blob_a = rng.normal(scale=0.5, size=(150, 3))
        blob_b = rng.normal(scale=0.5, size=(150, 3)) + np.array([12.0, 0, 0])
        pts = np.vstack([blob_a, blob_b])
        normals = rng.normal(size=pts.shape)
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        cloud = PointCloud(pts, normals=normals)
        segments = segment_euclidean(cloud, tolerance=1.0, min_size=50)
        return cloud, segments

    def test_esf_per_segment(self):
        cloud, segments = self.segmented_cloud()
        fs = compute_segment_features(cloud, segments, "ESF", seed=5)
        assert len(fs) == 2
        assert fs.valid.all()
        assert fs.descriptors.shape == (2, 640)
        assert np.allclose(fs.positions, segments.centroids)

    def test_esf_order_independent_seeding(self):
        cloud, segments = self.segmented_cloud()
        a = compute_segment_features(cloud, segments, "ESF", seed=5)
        b = compute_segment_features(cloud, segments, "ESF", seed=5)
        assert np.array_equal(a.descriptors, b.descriptors)

    def test_shot_and_fpfh_segment_descriptors(self):
        cloud, segments = self.segmented_cloud()
        for kind in ("FPFH", "SHOT"):
            fs = compute_segment_features(cloud, segments, kind)
            assert fs.descriptors.shape == (2, DESCRIPTOR_DIMS[kind])
            assert fs.valid.all()
