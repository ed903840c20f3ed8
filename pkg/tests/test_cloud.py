import numpy as np
import pytest

from cloudreg.cloud import (
    PointCloud,
    apply_transform,
    build_index,
    concatenate_clouds,
    crop_to_box,
    estimate_normals,
    voxel_downsample,
)
from cloudreg.errors import InvalidParameter
from cloudreg.geometry import RigidTransform, random_rigid_transform, rotation_about_axis


def brute_force_knn(positions, query, k):
    d = np.linalg.norm(positions - query, axis=1)
    order = np.lexsort((np.arange(len(positions)), d))[:k]
    return order, d[order]


def brute_force_radius(positions, query, r):
    d = np.linalg.norm(positions - query, axis=1)
    idx = np.flatnonzero(d <= r)
    order = np.lexsort((idx, d[idx]))
    return idx[order], d[idx][order]


class TestSpatialIndex:
    def test_single_point_knn(self):
        cloud = PointCloud(np.array([[1.0, 2.0, 3.0]]))
        idx, dist = build_index(cloud).knn([0.0, 0.0, 0.0], k=1)
        assert idx.tolist() == [0]
        assert dist[0] == pytest.approx(np.sqrt(14.0))

    def test_knn_matches_linear_scan(self):
        rng = np.random.default_rng(10)
        positions = rng.uniform(-5, 5, size=(2000, 3))
        index = build_index(PointCloud(positions))
        for _ in range(50):
            query = rng.uniform(-5, 5, size=3)
            idx, dist = index.knn(query, k=5)
            oracle_idx, oracle_dist = brute_force_knn(positions, query, 5)
            assert idx.tolist() == oracle_idx.tolist()
            assert np.array_equal(dist, oracle_dist)

    def test_radius_matches_linear_scan(self):
        rng = np.random.default_rng(11)
        positions = rng.uniform(-5, 5, size=(5000, 3))
        index = build_index(PointCloud(positions))
        for _ in range(100):
            query = rng.uniform(-5, 5, size=3)
            idx, dist = index.radius_search(query, 1.5)
            oracle_idx, oracle_dist = brute_force_radius(positions, query, 1.5)
            assert idx.tolist() == oracle_idx.tolist()
            assert np.array_equal(dist, oracle_dist)

    def test_k_larger_than_cloud_returns_all(self):
        positions = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        idx, _ = build_index(PointCloud(positions)).knn([0.1, 0, 0], k=10)
        assert sorted(idx.tolist()) == [0, 1, 2]

    def test_radius_on_unit_grid(self):
        xs = np.arange(5.0)
        grid = np.array([[x, y, 0.0] for x in xs for y in xs])
        index = build_index(PointCloud(grid))
        idx, dist = index.radius_search([2.0, 2.0, 0.0], 0.5)
        assert len(idx) == 1
        assert dist[0] == 0.0
        assert np.allclose(grid[idx[0]], [2.0, 2.0, 0.0])

    def test_exact_tie_broken_by_lower_index(self):
        positions = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0.0, 3.0, 0]])
        idx, dist = build_index(PointCloud(positions)).knn([0.0, 0.0, 0.0], k=1)
        assert idx.tolist() == [0]
        idx2, _ = build_index(PointCloud(positions[::-1])).knn([0.0, 0.0, 0.0], k=2)
        assert idx2.tolist() == [1, 2]


class TestVoxelDownsample:
    def test_duplicate_points_collapse(self):
        cloud = PointCloud(np.array([[0.5, 0.5, 0.5], [0.5, 0.5, 0.5]]))
        out = voxel_downsample(cloud, 0.1)
        assert len(out) == 1
        assert np.allclose(out.positions[0], [0.5, 0.5, 0.5])

    def test_distinct_voxels_survive(self):
        cloud = PointCloud(np.array([[0.0, 0, 0], [10.0, 0, 0]]))
        out = voxel_downsample(cloud, 1.0)
        assert len(out) == 2

    def test_octants_against_hash_grid_oracle(self):
        rng = np.random.default_rng(12)
        pts = rng.random((10_000, 3))
        out = voxel_downsample(PointCloud(pts), 0.5)
        assert len(out) == 8
        oracle = {}
        for p in pts:
            key = tuple(np.floor(p / 0.5).astype(int))
            oracle.setdefault(key, []).append(p)
        expected = {k: np.mean(v, axis=0) for k, v in oracle.items()}
        for pos in out.positions:
            key = tuple(np.floor(pos / 0.5).astype(int))
            assert key in expected
            assert np.allclose(pos, expected[key], atol=1e-12)

    def test_idempotent_when_voxels_singletons(self):
        rng = np.random.default_rng(13)
        pts = rng.uniform(0, 100, size=(200, 3))
        once = voxel_downsample(PointCloud(pts), 0.01)
        twice = voxel_downsample(once, 0.01)
        assert np.allclose(np.sort(once.positions, axis=0), np.sort(twice.positions, axis=0))

    def test_rejects_bad_leaf(self):
        with pytest.raises(InvalidParameter):
            voxel_downsample(PointCloud(np.zeros((1, 3))), 0.0)


class TestEstimateNormals:
    def test_planar_grid_normals_point_up(self):
        xs = np.linspace(0, 2, 15)
        grid = np.array([[x, y, 0.0] for x in xs for y in xs])
        cloud = estimate_normals(PointCloud(grid), radius=0.5, viewpoint=(0, 0, 10.0))
        assert cloud.normals_valid.all()
        assert np.abs(cloud.normals - np.array([0.0, 0.0, 1.0])).max() < 1e-6

    def test_sphere_normals_near_radial(self):
        rng = np.random.default_rng(14)
        dirs = rng.normal(size=(4000, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        cloud = estimate_normals(PointCloud(dirs), radius=0.25, viewpoint=(0, 0, 100.0))
        top = dirs[:, 2] > 0.9
        dots = np.einsum("ij,ij->i", cloud.normals[top], dirs[top])
        angles = np.degrees(np.arccos(np.clip(np.abs(dots), -1, 1)))
        assert angles.max() < 2.0

    def test_isolated_point_flagged_invalid(self):
        pts = np.vstack([np.zeros((1, 3)), np.ones((1, 3)) * 100.0])
        xs = np.linspace(99, 101, 8)
        plane = np.array([[x, y, 100.0] for x in xs for y in xs])
        cloud = estimate_normals(PointCloud(np.vstack([np.zeros((1, 3)), plane])), radius=1.0)
        assert not cloud.normals_valid[0]
        assert cloud.normals_valid[1:].all()

    def test_valid_normals_unit(self):
        rng = np.random.default_rng(15)
        pts = rng.uniform(0, 3, size=(500, 3))
        cloud = estimate_normals(PointCloud(pts), radius=1.0)
        lengths = np.linalg.norm(cloud.normals[cloud.normals_valid], axis=1)
        assert np.abs(lengths - 1).max() < 1e-9


class TestApplyTransform:
    def test_identity_keeps_cloud(self):
        rng = np.random.default_rng(16)
        cloud = PointCloud(rng.normal(size=(20, 3)))
        out = apply_transform(cloud, RigidTransform.identity())
        assert np.array_equal(out.positions, cloud.positions)

    def test_round_trip_inverse(self):
        rng = np.random.default_rng(17)
        cloud = PointCloud(rng.normal(size=(30, 3)))
        t = random_rigid_transform(rng, max_translation=4.0)
        back = apply_transform(apply_transform(cloud, t), t.inverse())
        assert np.abs(back.positions - cloud.positions).max() < 1e-9

    def test_rotates_normals_and_keeps_colors(self):
        normals = np.tile([0.0, 0.0, 1.0], (4, 1))
        colors = np.full((4, 3), 7, dtype=np.uint8)
        cloud = PointCloud(np.zeros((4, 3)), normals=normals, colors=colors)
        rot = rotation_about_axis([1.0, 0.0, 0.0], np.pi / 2)
        out = apply_transform(cloud, RigidTransform(rot, np.zeros(3)))
        assert np.allclose(out.normals, np.tile([0.0, -1.0, 0.0], (4, 1)), atol=1e-12)
        assert np.array_equal(out.colors, colors)


def test_concatenate_and_crop():
    a = PointCloud(np.zeros((3, 3)))
    b = PointCloud(np.ones((2, 3)) * 5.0)
    merged = concatenate_clouds([a, b])
    assert len(merged) == 5
    boxed = crop_to_box(merged, [-1, -1, -1], [1, 1, 1])
    assert len(boxed) == 3


def test_cloud_invariants():
    with pytest.raises(ValueError):
        PointCloud(np.array([[np.nan, 0, 0]]))
    with pytest.raises(ValueError):
        PointCloud(np.zeros((1, 3)), normals=np.array([[2.0, 0, 0]]))
    cloud = PointCloud(np.zeros((2, 3)), normals=np.tile([0, 0, 1.0], (2, 1)))
    assert cloud.has_normals
    point = cloud.point(0)
    assert np.allclose(point.normal, [0, 0, 1])
