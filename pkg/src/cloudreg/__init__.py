"""cloudreg: global registration of ground LiDAR maps against aerial maps."""

from .cloud import (
    Point,
    PointCloud,
    SpatialIndex,
    apply_transform,
    build_index,
    concatenate_clouds,
    estimate_normals,
    voxel_downsample,
)
from .descriptors import (
    DESCRIPTOR_DIMS,
    Descriptor,
    FeatureSet,
    compute_esf,
    compute_fpfh,
    compute_segment_features,
    compute_shot,
)
from .estimation import (
    FgrParams,
    RansacParams,
    RegistrationResult,
    fgr_register,
    geometric_consistency_filter,
    icp_refine,
    kabsch_umeyama,
    ransac_register,
)
from .features import (
    KeypointSet,
    PlaneModel,
    SegmentSet,
    detect_iss_keypoints,
    remove_ground_plane,
    segment_euclidean,
)
from .geometry import RigidTransform, random_rigid_transform, rotation_angle
from .io import parse_cloud, read_cloud, save_cloud, write_cloud
from .matching import CorrespondenceSet, match_nn
from .metrics import (
    AlignmentError,
    SuccessCriteria,
    alignment_error,
    classify_success,
    min_scans_from_flags,
    min_scans_to_reliable,
)
from .pipeline import (
    RealizationConfig,
    STAGES,
    enumerate_realizations,
    realization_by_name,
    run_registration,
)
from .synthetic import (
    SceneParams,
    SyntheticScene,
    build_local_map,
    crop_global_map,
    generate_synthetic_scene,
    load_scene,
    save_scene,
)

__version__ = "0.1.0"
