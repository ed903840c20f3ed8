import numpy as np
import pytest

from cloudreg.geometry import (
    RigidTransform,
    random_rigid_transform,
    rotation_about_axis,
    rotation_angle,
    rotation_from_quaternion,
    so3_exp,
)


def test_identity_roundtrip():
    t = RigidTransform.identity()
    pts = np.random.default_rng(0).normal(size=(10, 3))
    assert np.allclose(t.apply(pts), pts)


def test_compose_and_inverse_close_over_type():
    rng = np.random.default_rng(1)
    a = random_rigid_transform(rng, max_translation=5.0)
    b = random_rigid_transform(rng, max_translation=5.0)
    ab = a @ b
    pts = rng.normal(size=(50, 3))
    assert np.allclose(ab.apply(pts), a.apply(b.apply(pts)), atol=1e-12)
    back = ab.inverse().apply(ab.apply(pts))
    assert np.abs(back - pts).max() < 1e-9


def test_apply_preserves_pairwise_distances():
    rng = np.random.default_rng(2)
    t = random_rigid_transform(rng, max_translation=10.0)
    pts = rng.normal(size=(40, 3)) * 3.0
    moved = t.apply(pts)
    d0 = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
    d1 = np.linalg.norm(moved[:, None] - moved[None, :], axis=2)
    nonzero = d0 > 0
    assert np.abs((d1[nonzero] - d0[nonzero]) / d0[nonzero]).max() < 1e-9


def test_ninety_degree_z_rotation():
    t = RigidTransform(rotation_about_axis([0, 0, 1], np.pi / 2), np.zeros(3))
    assert np.allclose(t.apply(np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-12)


def test_rotation_angle_matches_quaternion_construction():
    rng = np.random.default_rng(3)
    for _ in range(100):
        axis = rng.normal(size=3)
        angle = rng.uniform(0, np.pi)
        rot = rotation_about_axis(axis, angle)
        assert rotation_angle(rot) == pytest.approx(angle, abs=1e-9)


def test_rejects_non_orthonormal_rotation():
    bad = np.eye(3)
    bad[0, 1] = 1e-3
    with pytest.raises(ValueError):
        RigidTransform(bad, np.zeros(3))


def test_rejects_reflection():
    refl = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        RigidTransform(refl, np.zeros(3))


def test_matrix_roundtrip():
    rng = np.random.default_rng(4)
    t = random_rigid_transform(rng, max_translation=2.0)
    again = RigidTransform.from_matrix(t.as_matrix())
    assert np.allclose(again.rotation, t.rotation)
    assert np.allclose(again.translation, t.translation)
    assert t.flat_3x4().shape == (12,)


def test_so3_exp_matches_axis_angle():
    rng = np.random.default_rng(5)
    for _ in range(20):
        w = rng.normal(size=3)
        theta = np.linalg.norm(w)
        expected = rotation_about_axis(w / theta, theta)
        assert np.allclose(so3_exp(w), expected, atol=1e-12)


def test_quaternion_rotation_is_orthonormal():
    rng = np.random.default_rng(6)
    for _ in range(50):
        rot = rotation_from_quaternion(rng.normal(size=4))
        assert np.abs(rot.T @ rot - np.eye(3)).max() < 1e-12
        assert np.linalg.det(rot) == pytest.approx(1.0, abs=1e-12)
