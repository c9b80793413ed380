"""relotrack: track object relocations between traversals of a fixed route.

An agent walks an identical scripted route through a scene before and
after objects are rearranged. Every detection along the way is scored by
how well its frame shows the object; comparing each object's best-scoring
frame index across the two traversals flags the objects that moved.

The package bundles a deterministic geometric simulator (scenes, routes,
synthetic detections), the tracking estimator itself, and an evaluation
harness with a command line front end (``relotrack --help``).
"""

from .errors import RelotrackError
from .evaluation import (
    ConfusionMatrix,
    ExperimentConfig,
    ExperimentResult,
    Metrics,
    derive_metrics,
    load_experiment_config,
    run_experiment,
    score_report,
)
from .nav import Action, AgentPose, PoseTrace, Route, apply_action, execute_route, load_route, save_route, validate_route
from .percept import (
    CameraModel,
    Detection,
    DetectorConfig,
    FrameLog,
    capture_scene,
    check_frame_log,
    detect,
    load_frame_log,
    project_object,
    save_frame_log,
    visible_fraction,
)
from .scene import (
    ChangeSet,
    GroundTruth,
    Scene,
    SceneObject,
    Surface,
    apply_changes,
    build_scene,
    ground_truth_relocations,
    load_changeset,
    load_scene,
    randomize_placements,
    save_changeset,
    save_scene,
)
from .track import (
    BestFrame,
    Features,
    RelocationReport,
    RelocationTracker,
    ScoredDetection,
    TrackerConfig,
    best_associated_frame,
    compare_scenes,
    load_report,
    normalize_features,
    render_report_table,
    save_report,
    visibility_score,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "AgentPose",
    "BestFrame",
    "CameraModel",
    "ChangeSet",
    "ConfusionMatrix",
    "Detection",
    "DetectorConfig",
    "ExperimentConfig",
    "ExperimentResult",
    "Features",
    "FrameLog",
    "GroundTruth",
    "Metrics",
    "PoseTrace",
    "RelocationReport",
    "RelocationTracker",
    "RelotrackError",
    "Route",
    "Scene",
    "SceneObject",
    "ScoredDetection",
    "Surface",
    "TrackerConfig",
    "apply_action",
    "apply_changes",
    "best_associated_frame",
    "build_scene",
    "capture_scene",
    "check_frame_log",
    "compare_scenes",
    "derive_metrics",
    "detect",
    "execute_route",
    "ground_truth_relocations",
    "load_changeset",
    "load_experiment_config",
    "load_frame_log",
    "load_report",
    "load_route",
    "load_scene",
    "normalize_features",
    "project_object",
    "randomize_placements",
    "render_report_table",
    "run_experiment",
    "save_changeset",
    "save_frame_log",
    "save_report",
    "save_route",
    "save_scene",
    "score_report",
    "validate_route",
    "visibility_score",
    "visible_fraction",
]
