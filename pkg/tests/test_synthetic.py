import numpy as np
import pytest

from cloudreg.errors import EmptyCrop, InvalidParameter
from cloudreg.io import write_cloud
from cloudreg.synthetic import (
    SceneParams,
    build_local_map,
    crop_global_map,
    generate_synthetic_scene,
    load_scene,
    save_scene,
    true_local_bounds,
)

SMALL = SceneParams(
    extent=18.0, structure_count=5, scan_count=4, global_density=40.0, local_density=5.0
)


def test_single_scan_scene():
    scene = generate_synthetic_scene(0, SceneParams(scan_count=1, extent=15.0, structure_count=3,
                                                    global_density=30.0, local_density=4.0))
    assert len(scene.scans) == 1
    assert len(scene.gt_poses) == 1


def test_same_seed_bitwise_identical():
    a = generate_synthetic_scene(7, SMALL)
    b = generate_synthetic_scene(7, SMALL)
    assert np.array_equal(a.global_cloud.positions, b.global_cloud.positions)
    for sa, sb in zip(a.scans, b.scans):
        assert np.array_equal(sa.positions, sb.positions)
    for pa, pb in zip(a.gt_poses, b.gt_poses):
        assert np.array_equal(pa.rotation, pb.rotation)
        assert np.array_equal(pa.translation, pb.translation)
    c = generate_synthetic_scene(8, SMALL)
    assert not np.array_equal(a.global_cloud.positions, c.global_cloud.positions)


def test_posed_scans_inside_global_bounds():
    scene = generate_synthetic_scene(3, SMALL)
    lo = scene.global_cloud.positions.min(axis=0) - 1.0
    hi = scene.global_cloud.positions.max(axis=0) + 1.0
    for scan, pose in zip(scene.scans, scene.gt_poses):
        world = pose.apply(scan.positions)
        assert (world >= lo).all() and (world <= hi).all()


def test_scan_density_gap():
    scene = generate_synthetic_scene(4, SMALL)
    assert len(scene.global_cloud) > 4 * max(len(s) for s in scene.scans)


def test_build_local_map_accumulates():
    scene = generate_synthetic_scene(5, SMALL)
    m1, t_gt1 = build_local_map(scene, 1, seed=0)
    m3, t_gt3 = build_local_map(scene, 3, seed=0)
    assert len(m3) == sum(len(scene.scans[i]) for i in range(3))
    assert len(m1) == len(scene.scans[0])
    assert np.array_equal(t_gt1.as_matrix(), scene.gt_poses[0].as_matrix())
    assert np.array_equal(t_gt3.as_matrix(), scene.gt_poses[0].as_matrix())
    with pytest.raises(InvalidParameter):
        build_local_map(scene, 99)


def test_first_scan_has_no_odometry_drift():
    scene = generate_synthetic_scene(6, SMALL)
    local, t_gt = build_local_map(scene, 1, seed=3)
    world = t_gt.apply(local.positions)
    direct = scene.gt_poses[0].apply(scene.scans[0].positions)
    assert np.abs(world - direct).max() < 1e-9


class TestCrop:
    def test_complex_regime_is_identity(self):
        scene = generate_synthetic_scene(9, SMALL)
        box = true_local_bounds(scene, 2)
        out = crop_global_map(scene.global_cloud, box, "complex")
        assert out is scene.global_cloud

    def test_basic_crop_respects_box_plus_margin(self):
        scene = generate_synthetic_scene(10, SMALL)
        lo, hi = true_local_bounds(scene, 2)
        out = crop_global_map(scene.global_cloud, (lo, hi), "basic", margin=2.0)
        assert (out.positions >= lo - 2.0).all()
        assert (out.positions <= hi + 2.0).all()
        assert len(out) > 0

    def test_nesting_basic_intermediate_complex(self):
        scene = generate_synthetic_scene(11, SMALL)
        k = 2
        basic = crop_global_map(
            scene.global_cloud, true_local_bounds(scene, k), "basic"
        )
        intermediate = crop_global_map(
            scene.global_cloud, true_local_bounds(scene, len(scene.scans)), "intermediate"
        )
        complex_map = crop_global_map(scene.global_cloud, (None, None), "complex")
        assert len(basic) <= len(intermediate) <= len(complex_map)
        basic_set = {tuple(p) for p in basic.positions}
        inter_set = {tuple(p) for p in intermediate.positions}
        full_set = {tuple(p) for p in complex_map.positions}
        assert basic_set <= inter_set <= full_set

    def test_empty_crop_rejected(self):
        scene = generate_synthetic_scene(12, SMALL)
        far = (np.array([1e6] * 3), np.array([1e6 + 1] * 3))
        with pytest.raises(EmptyCrop):
            crop_global_map(scene.global_cloud, far, "basic", margin=0.1)

    def test_unknown_regime_rejected(self):
        scene = generate_synthetic_scene(13, SMALL)
        with pytest.raises(InvalidParameter):
            crop_global_map(scene.global_cloud, (None, None), "extreme")


class TestSceneSerialization:
    def test_directory_layout(self, tmp_path):
        scene = generate_synthetic_scene(14, SMALL)
        out = tmp_path / "scene"
        save_scene(scene, out)
        assert (out / "global.ply").exists()
        assert (out / "poses.csv").exists()
        for i in range(len(scene.scans)):
            assert (out / f"scan_{i:04d}.ply").exists()
        lines = (out / "poses.csv").read_text().strip().splitlines()
        assert len(lines) == 1 + len(scene.scans)

    def test_round_trip(self, tmp_path):
        scene = generate_synthetic_scene(15, SMALL)
        save_scene(scene, tmp_path / "scene")
        again = load_scene(tmp_path / "scene", seed=15)
        assert np.array_equal(again.global_cloud.positions, scene.global_cloud.positions)
        assert len(again.scans) == len(scene.scans)
        for pa, pb in zip(again.gt_poses, scene.gt_poses):
            assert np.array_equal(pa.rotation, pb.rotation)
            assert np.array_equal(pa.translation, pb.translation)

    def test_same_seed_identical_directory(self, tmp_path):
        for name in ("a", "b"):
            save_scene(generate_synthetic_scene(16, SMALL), tmp_path / name)
        for f in sorted((tmp_path / "a").iterdir()):
            other = tmp_path / "b" / f.name
            assert f.read_bytes() == other.read_bytes()

    def test_loaded_rotations_orthonormal(self, tmp_path):
        scene = generate_synthetic_scene(17, SMALL)
        save_scene(scene, tmp_path / "scene")
        again = load_scene(tmp_path / "scene")
        for pose in again.gt_poses:
            assert np.abs(pose.rotation.T @ pose.rotation - np.eye(3)).max() < 1e-9
            assert np.linalg.det(pose.rotation) > 0
