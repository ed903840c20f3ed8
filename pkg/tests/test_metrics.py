import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from cloudreg.geometry import RigidTransform, random_rigid_transform, rotation_about_axis
from cloudreg.metrics import (
    AlignmentError,
    SuccessCriteria,
    alignment_error,
    classify_success,
    min_scans_from_flags,
    min_scans_to_reliable,
    zero_baseline,
)


def quaternion_oracle(t_est, t_gt):
    """Independent error computation through homogeneous matrices and quaternions."""
    delta = np.linalg.inv(t_gt.as_matrix()) @ t_est.as_matrix()
    e_t = float(np.sqrt(delta[0, 3] ** 2 + delta[1, 3] ** 2 + delta[2, 3] ** 2))
    quat = Rotation.from_matrix(delta[:3, :3]).as_quat()
    e_r = 2.0 * np.arctan2(np.linalg.norm(quat[:3]), abs(quat[3]))
    return e_t, e_r


class TestAlignmentError:
    def test_identical_transforms_zero_error(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            t = random_rigid_transform(rng, max_translation=10.0)
            err = alignment_error(t, t)
            assert err.e_t == pytest.approx(0.0, abs=1e-12)
            # the trace-formula arccos cannot resolve below ~sqrt(eps)
            assert err.e_r < 1e-7

    def test_pythagorean_translation(self):
        t_gt = RigidTransform.identity()
        t_est = RigidTransform(np.eye(3), np.array([3.0, 4.0, 0.0]))
        err = alignment_error(t_est, t_gt)
        assert err.e_t == pytest.approx(5.0)
        assert err.e_r == pytest.approx(0.0, abs=1e-12)

    def test_ninety_degree_rotation(self):
        t_gt = RigidTransform.identity()
        t_est = RigidTransform(rotation_about_axis([0, 0, 1], np.pi / 2), np.zeros(3))
        err = alignment_error(t_est, t_gt)
        assert err.e_r == pytest.approx(np.pi / 2)

    def test_matches_quaternion_oracle(self):
        rng = np.random.default_rng(101)
        for _ in range(500):
            t_est = random_rigid_transform(rng, max_translation=20.0)
            t_gt = random_rigid_transform(rng, max_translation=20.0)
            err = alignment_error(t_est, t_gt)
            e_t, e_r = quaternion_oracle(t_est, t_gt)
            assert abs(err.e_t - e_t) < 1e-9
            assert abs(err.e_r - e_r) < 1e-9

    def test_rotation_error_symmetric(self):
        rng = np.random.default_rng(102)
        for _ in range(50):
            a = random_rigid_transform(rng)
            b = random_rigid_transform(rng)
            assert alignment_error(a, b).e_r == pytest.approx(
                alignment_error(b, a).e_r, abs=1e-9
            )

    def test_invariant_under_common_left_composition(self):
        rng = np.random.default_rng(103)
        for _ in range(50):
            t_est = random_rigid_transform(rng, max_translation=5.0)
            t_gt = random_rigid_transform(rng, max_translation=5.0)
            g = random_rigid_transform(rng, max_translation=5.0)
            base = alignment_error(t_est, t_gt)
            moved = alignment_error(g @ t_est, g @ t_gt)
            assert moved.e_t == pytest.approx(base.e_t, abs=1e-9)
            assert moved.e_r == pytest.approx(base.e_r, abs=1e-9)


class TestClassifySuccess:
    baseline = AlignmentError(0.2, np.deg2rad(2.0), RigidTransform.identity())

    def criteria(self):
        return SuccessCriteria(baseline=self.baseline)

    def test_within_margins_succeeds(self):
        err = AlignmentError(3.1, np.deg2rad(6.0), RigidTransform.identity())
        assert classify_success(err, self.criteria())

    def test_translation_over_margin_fails(self):
        err = AlignmentError(3.3, np.deg2rad(1.0), RigidTransform.identity())
        assert not classify_success(err, self.criteria())

    def test_error_equal_to_baseline_succeeds(self):
        assert classify_success(self.baseline, self.criteria())

    def test_monotone_in_both_components(self):
        rng = np.random.default_rng(104)
        crit = self.criteria()
        for _ in range(100):
            e_t = rng.uniform(0, 6)
            e_r = rng.uniform(0, 0.3)
            err = AlignmentError(e_t, e_r, RigidTransform.identity())
            if classify_success(err, crit):
                smaller = AlignmentError(e_t * 0.5, e_r * 0.5, RigidTransform.identity())
                assert classify_success(smaller, crit)


class TestMinScans:
    @staticmethod
    def errors(e_t):
        return AlignmentError(e_t, 0.0, RigidTransform.identity())

    def test_all_successful_gives_one(self):
        trials = {k: [self.errors(0.1)] * 10 for k in (1, 2, 3)}
        crit = SuccessCriteria(baseline=zero_baseline())
        assert min_scans_to_reliable(trials, crit) == 1

    def test_unreached_reliability_gives_none(self):
        trials = {k: [self.errors(99.0)] * 10 for k in (1, 2, 3)}
        crit = SuccessCriteria(baseline=zero_baseline())
        assert min_scans_to_reliable(trials, crit) is None

    def test_ninety_percent_cutoff(self):
        good, bad = self.errors(0.1), self.errors(99.0)
        trials = {4: [good] * 8 + [bad] * 2, 5: [good] * 9 + [bad]}
        crit = SuccessCriteria(baseline=zero_baseline())
        assert min_scans_to_reliable(trials, crit) == 5

    def test_flag_variant_matches(self):
        flags = {4: [True] * 8 + [False] * 2, 5: [True] * 9 + [False]}
        assert min_scans_from_flags(flags, 0.9) == 5
        assert min_scans_from_flags({1: [False]}, 0.9) is None
