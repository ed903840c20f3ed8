"""End-to-end registration pipeline and its named realizations.

A realization fixes the choices of local feature (keypoints or segments),
descriptor (FPFH, SHOT, ESF), transform estimator (RANSAC or FGR), and
whether the dominant ground plane is removed before feature extraction.
run_registration executes one realization on a local/global map pair and
reports per-stage wall times alongside the refined transform.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import PointCloud, estimate_normals, voxel_downsample
from .descriptors import compute_fpfh, compute_segment_features, compute_shot
from .errors import CloudRegError, EmptyInput, InvalidParameter, NoFeatures, StageError
from .estimation import (
    FgrParams,
    RansacParams,
    RegistrationResult,
    fgr_register,
    geometric_consistency_filter,
    icp_refine,
    ransac_register,
)
from .features import detect_iss_keypoints, remove_ground_plane, segment_euclidean
from .matching import match_nn

STAGES = ("feature", "description", "matching", "estimation", "icp")

FEATURE_KINDS = ("keypoint", "segment")
DESCRIPTOR_KINDS = ("FPFH", "SHOT", "ESF")
ESTIMATORS = ("ransac", "fgr")


@dataclass(frozen=True)
class PreprocessParams:
    voxel_leaf: float = 0.3
    normal_radius: float = 1.0
    icp_voxel_leaf: float = 0.1
    viewpoint_elevation: float = 50.0


@dataclass(frozen=True)
class IssParams:
    salient_radius: float = 3.0
    nonmax_radius: float = 2.0
    gamma21: float = 0.975
    gamma32: float = 0.975
    min_neighbors: int = 5


@dataclass(frozen=True)
class SegmentationParams:
    tolerance: float = 0.2
    min_size: int = 100
    max_size: int = 50000


@dataclass(frozen=True)
class DescriptorParams:
    radius: float = 2.0
    fpfh_spfh_radius: float | None = None
    esf_samples: int = 20000


@dataclass(frozen=True)
class MatchParams:
    policy: str = "forward"


@dataclass(frozen=True)
class ConsistencyParams:
    # epsilon must absorb twice the keypoint localization wander, which for
    # meter-scale supports on decimeter voxels is roughly 0.3-0.5 m per side
    enabled: bool = True
    epsilon: float = 1.0


@dataclass(frozen=True)
class GroundRemovalParams:
    distance_threshold: float = 0.25
    max_iterations: int = 1000
    min_inlier_fraction: float = 0.25


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    max_corr_dist: float = 2.0
    convergence_eps: float = 1e-6


@dataclass(frozen=True)
class RealizationConfig:
    """Complete parameterization of one registration realization."""

    name: str
    feature: str = "keypoint"
    descriptor: str = "SHOT"
    estimator: str = "ransac"
    ground_removal: bool = False
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)
    iss: IssParams = field(default_factory=IssParams)
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    descriptor_params: DescriptorParams = field(default_factory=DescriptorParams)
    matching: MatchParams = field(default_factory=MatchParams)
    consistency: ConsistencyParams = field(default_factory=ConsistencyParams)
    ground: GroundRemovalParams = field(default_factory=GroundRemovalParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    fgr: FgrParams = field(default_factory=FgrParams)
    icp: IcpParams = field(default_factory=IcpParams)

    def __post_init__(self):
        if self.feature not in FEATURE_KINDS:
            raise InvalidParameter(f"feature must be one of {FEATURE_KINDS}")
        if self.descriptor not in DESCRIPTOR_KINDS:
            raise InvalidParameter(f"descriptor must be one of {DESCRIPTOR_KINDS}")
        if self.estimator not in ESTIMATORS:
            raise InvalidParameter(f"estimator must be one of {ESTIMATORS}")
        if self.descriptor == "ESF" and self.feature != "segment":
            raise InvalidParameter("ESF is defined only for segment features")


def enumerate_realizations() -> list[RealizationConfig]:
    """The 11 canonical realizations, keypoint and segment based.

    FGR realizations skip the pairwise consistency filter (the robust cost
    plays that role); segment realizations never remove the ground, since a
    flat ground would otherwise merge every structure into one component.
    """
    configs: list[RealizationConfig] = []
    for desc in ("FPFH", "SHOT"):
        for estimator in ("ransac", "fgr"):
            for gr in (False, True):
                name = desc + (" FGR" if estimator == "fgr" else "") + (" gr" if gr else "")
                configs.append(
                    RealizationConfig(
                        name=name,
                        feature="keypoint",
                        descriptor=desc,
                        estimator=estimator,
                        ground_removal=gr,
                        consistency=ConsistencyParams(enabled=estimator == "ransac"),
                    )
                )
    for desc in ("FPFH", "SHOT", "ESF"):
        configs.append(
            RealizationConfig(
                name=f"{desc} seg",
                feature="segment",
                descriptor=desc,
                estimator="ransac",
                ground_removal=False,
            )
        )
    order = [
        "FPFH", "FPFH gr", "FPFH FGR", "FPFH FGR gr",
        "SHOT", "SHOT gr", "SHOT FGR", "SHOT FGR gr",
        "FPFH seg", "SHOT seg", "ESF seg",
    ]
    by_name = {c.name: c for c in configs}
    return [by_name[n] for n in order]


def realization_by_name(name: str) -> RealizationConfig:
    for config in enumerate_realizations():
        if config.name == name:
            return config
    raise InvalidParameter(f"unknown realization '{name}'")


def _derive_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def _preprocess(cloud: PointCloud, params: PreprocessParams) -> PointCloud:
    down = voxel_downsample(cloud, params.voxel_leaf)
    if len(down) == 0:
        return down
    center = down.positions.mean(axis=0)
    viewpoint = (center[0], center[1], down.positions[:, 2].max() + params.viewpoint_elevation)
    return estimate_normals(down, params.normal_radius, viewpoint)


class _StageClock:
    def __init__(self):
        self.timings_ms: dict[str, float] = {}
        self._stage = None
        self._start = 0.0

    def start(self, stage: str):
        self._stage = stage
        self._start = time.perf_counter()

    def stop(self):
        elapsed = (time.perf_counter() - self._start) * 1000.0
        self.timings_ms[self._stage] = self.timings_ms.get(self._stage, 0.0) + elapsed


def run_registration(
    local: PointCloud,
    global_map: PointCloud,
    config: RealizationConfig,
    seed: int = 0,
) -> RegistrationResult:
    """Register a local map against a global map under one realization.

    Stages: optional ground removal and feature extraction, description,
    matching, consistency filtering plus robust estimation, and a final ICP
    refinement on voxel-downsampled copies of the raw inputs. Deterministic
    for a fixed (inputs, config, seed) triple up to wall-clock timings.
    """
    if len(local) == 0 or len(global_map) == 0:
        raise EmptyInput("both clouds must be non-empty")
    clock = _StageClock()
    diag: dict = {}

    # Feature stage: preprocessing, optional ground removal, extraction
    clock.start("feature")
    try:
        local_work = _preprocess(local, config.preprocess)
        global_work = _preprocess(global_map, config.preprocess)
        if config.ground_removal:
            local_work, removed_l = _maybe_remove_ground(
                local_work, config.ground, _derive_seed(seed, 1)
            )
            global_work, removed_g = _maybe_remove_ground(
                global_work, config.ground, _derive_seed(seed, 2)
            )
            diag["ground_removed"] = (removed_l, removed_g)
        if config.feature == "keypoint":
            kp_local = _detect_keypoints(local_work, config.iss)
            kp_global = _detect_keypoints(global_work, config.iss)
            if len(kp_local) == 0 or len(kp_global) == 0:
                raise NoFeatures("no keypoints detected")
            diag["feature_counts"] = (len(kp_local), len(kp_global))
        else:
            seg_local = segment_euclidean(
                local_work,
                config.segmentation.tolerance,
                config.segmentation.min_size,
                config.segmentation.max_size,
            )
            seg_global = segment_euclidean(
                global_work,
                config.segmentation.tolerance,
                config.segmentation.min_size,
                config.segmentation.max_size,
            )
            if len(seg_local) == 0 or len(seg_global) == 0:
                raise NoFeatures("no segments extracted")
            diag["feature_counts"] = (len(seg_local), len(seg_global))
    except CloudRegError as exc:
        raise StageError("feature", exc) from exc
    finally:
        clock.stop()

    # Description stage
    clock.start("description")
    try:
        if config.feature == "keypoint":
            fs_local = _describe_keypoints(local_work, kp_local, config)
            fs_global = _describe_keypoints(global_work, kp_global, config)
        else:
            fs_local = compute_segment_features(
                local_work, seg_local, config.descriptor,
                seed=_derive_seed(seed, 3), esf_samples=config.descriptor_params.esf_samples,
            )
            fs_global = compute_segment_features(
                global_work, seg_global, config.descriptor,
                seed=_derive_seed(seed, 4), esf_samples=config.descriptor_params.esf_samples,
            )
        fs_local = fs_local.valid_only()
        fs_global = fs_global.valid_only()
        if len(fs_local) == 0 or len(fs_global) == 0:
            raise NoFeatures("all descriptors invalid")
        diag["descriptor_counts"] = (len(fs_local), len(fs_global))
    except CloudRegError as exc:
        raise StageError("description", exc) from exc
    finally:
        clock.stop()

    # Matching stage
    clock.start("matching")
    try:
        correspondences = match_nn(fs_local, fs_global, config.matching.policy)
        diag["match_count"] = len(correspondences)
    except CloudRegError as exc:
        raise StageError("matching", exc) from exc
    finally:
        clock.stop()

    # Estimation stage: consistency filter plus robust estimation
    clock.start("estimation")
    try:
        corr = correspondences
        min_needed = 3 if config.estimator == "ransac" else 4
        if config.consistency.enabled:
            filtered = geometric_consistency_filter(
                correspondences, fs_local.positions, fs_global.positions,
                config.consistency.epsilon,
            )
            # A tiny surviving cluster is filter failure, not signal; fall
            # back to the raw matches and let the robust estimator decide.
            if len(filtered) >= max(min_needed + 1, len(correspondences) // 5):
                corr = filtered
            diag["consistency_kept"] = len(filtered)
        if config.estimator == "ransac":
            params = replace(config.ransac, seed=_derive_seed(seed, 5))
            est = ransac_register(corr, fs_local.positions, fs_global.positions, params)
        else:
            params = replace(config.fgr, seed=_derive_seed(seed, 6))
            est = fgr_register(corr, fs_local.positions, fs_global.positions, params)
        diag["estimator"] = est
    except CloudRegError as exc:
        raise StageError("estimation", exc) from exc
    finally:
        clock.stop()

    # ICP refinement on downsampled copies of the raw inputs
    clock.start("icp")
    try:
        local_icp = voxel_downsample(local, config.preprocess.icp_voxel_leaf)
        global_icp = voxel_downsample(global_map, config.preprocess.icp_voxel_leaf)
        refined = icp_refine(
            local_icp,
            global_icp,
            est.transform,
            max_iterations=config.icp.max_iterations,
            max_corr_dist=config.icp.max_corr_dist,
            convergence_eps=config.icp.convergence_eps,
        )
    except CloudRegError as exc:
        raise StageError("icp", exc) from exc
    finally:
        clock.stop()

    return RegistrationResult(
        transform=refined.transform,
        inlier_indices=est.inlier_indices,
        rms_residual=refined.rms_residual,
        iterations=refined.iterations,
        converged=bool(est.converged and refined.converged),
        stage_timings=dict(clock.timings_ms),
        diagnostics=diag,
    )


def _maybe_remove_ground(cloud, params: GroundRemovalParams, seed: int):
    """Remove the dominant plane unless its support is too weak to trust."""
    filtered, model = remove_ground_plane(
        cloud, params.distance_threshold, params.max_iterations, seed
    )
    fraction = model.inlier_count / max(len(cloud), 1)
    if fraction < params.min_inlier_fraction or len(filtered) == 0:
        return cloud, False
    return filtered, True


def _detect_keypoints(cloud, params: IssParams):
    return detect_iss_keypoints(
        cloud,
        salient_radius=params.salient_radius,
        nonmax_radius=params.nonmax_radius,
        gamma21=params.gamma21,
        gamma32=params.gamma32,
        min_neighbors=params.min_neighbors,
    )


def _describe_keypoints(cloud, keypoints, config: RealizationConfig):
    if config.descriptor == "FPFH":
        return compute_fpfh(
            cloud,
            keypoints,
            radius=config.descriptor_params.radius,
            spfh_radius=config.descriptor_params.fpfh_spfh_radius,
        )
    return compute_shot(cloud, keypoints, radius=config.descriptor_params.radius)
