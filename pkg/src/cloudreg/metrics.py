"""Alignment error metrics and success classification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, rotation_angle

DEFAULT_T_THRESHOLD = 3.0
DEFAULT_R_THRESHOLD = np.deg2rad(5.0)
DEFAULT_RELIABILITY = 0.9


@dataclass(frozen=True)
class AlignmentError:
    """Translational and rotational error of an estimated map alignment."""

    e_t: float
    e_r: float
    delta: RigidTransform

    def __post_init__(self):
        if self.e_t < 0:
            raise ValueError("e_t must be >= 0")
        if not 0.0 <= self.e_r <= np.pi + 1e-12:
            raise ValueError("e_r must lie in [0, pi]")


@dataclass(frozen=True)
class SuccessCriteria:
    """Success thresholds applied on top of a reference (baseline) error.

    A registration counts as successful when both error components stay
    within the baseline plus the fixed margins; reliability is the fraction
    of trials that must succeed for a scan count to count as reliable.
    """

    baseline: AlignmentError
    t_threshold: float = DEFAULT_T_THRESHOLD
    r_threshold: float = DEFAULT_R_THRESHOLD
    reliability: float = DEFAULT_RELIABILITY

    def __post_init__(self):
        if self.t_threshold <= 0 or self.r_threshold <= 0:
            raise ValueError("thresholds must be > 0")
        if not 0.0 < self.reliability <= 1.0:
            raise ValueError("reliability must lie in (0, 1]")


def zero_baseline() -> AlignmentError:
    return AlignmentError(0.0, 0.0, RigidTransform.identity())


def alignment_error(t_est: RigidTransform, t_gt: RigidTransform) -> AlignmentError:
    """Residual motion between an estimate and the ground truth.

    The residual is delta = inverse(t_gt) composed with t_est; e_t is the
    Euclidean norm of its translation and e_r the rotation angle from the
    trace formula with the arccos argument clamped to [-1, 1].
    """
    delta = t_gt.inverse().compose(t_est)
    e_t = float(np.linalg.norm(delta.translation))
    e_r = rotation_angle(delta.rotation)
    return AlignmentError(e_t, e_r, delta)


def classify_success(err: AlignmentError, criteria: SuccessCriteria) -> bool:
    """True when both error components stay within baseline plus margin."""
    return (
        err.e_t <= criteria.baseline.e_t + criteria.t_threshold
        and err.e_r <= criteria.baseline.e_r + criteria.r_threshold
    )


def min_scans_to_reliable(
    per_scan_trial_errors: dict[int, list[AlignmentError]],
    criteria: SuccessCriteria,
) -> int | None:
    """Smallest scan count whose success fraction reaches the reliability bar.

    Returns None when no tested count qualifies, the "N/A" reporting case.
    """
    flags = {
        count: [classify_success(e, criteria) for e in errors]
        for count, errors in per_scan_trial_errors.items()
    }
    return min_scans_from_flags(flags, criteria.reliability)


def min_scans_from_flags(
    per_scan_success: dict[int, list[bool]], reliability: float = DEFAULT_RELIABILITY
) -> int | None:
    """As min_scans_to_reliable, over precomputed per-trial success flags.

    Used when each trial carries its own baseline, so flags cannot be derived
    from a single shared criteria object.
    """
    for count in sorted(per_scan_success):
        flags = per_scan_success[count]
        if not flags:
            raise ValueError(f"no trials recorded for scan count {count}")
        if sum(flags) / len(flags) >= reliability:
            return count
    return None
