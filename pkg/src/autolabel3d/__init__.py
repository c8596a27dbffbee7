"""Offboard 3D auto-labeling from calibrated 2D mask tracks and LiDAR sweeps.

The package turns multi-view instance masks and point clouds into labeled
points, oriented box tracks and semantic occupancy grids, and ships the
evaluators and a synthetic scene generator used to check them.
"""
from .association import AssociationConfig, GlobalIdMap, associate_frame, pair_similarity, unify_sequence
from .boxes import (Box3D, BoxConfig, DegenerateFitError, ObjectTrack, classify_motion, fit_dynamic, fit_static,
                    l_shape_fit, smooth_trajectory)
from .completion import CompletenessReport, CompletionPair, augment, chamfer, complete_points, completeness, \
    make_partial
from .evaluation import MatchSpec, average_precision, box_iou_3d, match_detections, range_breakdown, recall_avg, \
    segmentation_miou
from .occupancy import GridSpec, OccupancyGrid, attach_flow, occupancy_miou, voxelize
from .projection import project_points, to_camera, to_pixel
from .sampling import fps
from .scene import (CameraCalibration, EgoPose, MaskTrack2D, PointCloudFrame, SceneBundle, load_bundle,
                    validate_bundle)
from .segmentation import LabeledPointSet, ParallaxConfig, assign_by_projection, dbscan, filter_scene, \
    parallax_filter

__version__ = "0.1.0"
