import pytest

from relotrack import CameraModel, Detection, FrameLog, build_scene
from relotrack.nav import build_route


def make_detection(frame_index=0, key="mug_01", label="mug", bbox=(0.5, 0.5, 0.2, 0.3),
                   depth=1.0, confidence=0.95):
    return Detection(frame_index=frame_index, object_key=key, class_label=label,
                     bbox=bbox, depth=depth, confidence=confidence)


def make_log(detections, scene_id="scene_a", route_hash="route_a", camera=None):
    frames: dict[int, list[Detection]] = {}
    for d in detections:
        frames.setdefault(d.frame_index, []).append(d)
    return FrameLog(scene_id=scene_id, route_hash=route_hash,
                    camera=camera or CameraModel(),
                    frames={k: tuple(v) for k, v in frames.items()})


def demo_scene_doc():
    """A 4 x 4 m room: one table with two items, one box on the floor."""
    return {
        "format_version": 1,
        "scene_id": "demo",
        "bounds": {"min": [0.0, 0.0, 0.0], "max": [4.0, 2.5, 4.0]},
        "grid_step": 0.25,
        "surfaces": [
            {"surface_id": "table_top", "height": 0.8,
             "extent": {"min": [1.3, 1.3], "max": [2.7, 2.7]}},
        ],
        "objects": [
            {"instance_id": "table_01", "class_label": "table",
             "position": [2.0, 0.4, 2.0], "half_extents": [0.7, 0.4, 0.7],
             "yaw": 0.0, "surface_id": None},
            {"instance_id": "mug_01", "class_label": "mug",
             "position": [1.6, 0.85, 2.0], "half_extents": [0.04, 0.05, 0.04],
             "yaw": 15.0, "surface_id": "table_top"},
            {"instance_id": "bottle_01", "class_label": "bottle",
             "position": [2.4, 0.94, 2.2], "half_extents": [0.035, 0.14, 0.035],
             "yaw": 0.0, "surface_id": "table_top"},
            {"instance_id": "crate_01", "class_label": "crate",
             "position": [0.5, 0.25, 3.4], "half_extents": [0.25, 0.25, 0.25],
             "yaw": 0.0, "surface_id": None},
        ],
    }


@pytest.fixture
def demo_scene():
    return build_scene(demo_scene_doc())


def demo_route_doc():
    """A sweep along the south wall with look-around stops far enough apart
    that best-frame distances past the relocation threshold are reachable."""
    stop = ["LookDown", "LookUp", "RotateLeft", "RotateRight"]
    return {
        "format_version": 1,
        "grid_step": 0.25,
        "start_pose": {"position": [2.125, 0.625], "yaw": 0,
                       "head_pitch": 0, "camera_height": 1.5},
        "actions": (stop + ["MoveLeft"] * 4 + stop + ["MoveRight"] * 8
                    + stop + ["MoveLeft"] * 4 + stop),
    }


@pytest.fixture
def demo_route():
    return build_route(demo_route_doc())
