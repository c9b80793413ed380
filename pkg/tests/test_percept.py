import math

import numpy as np
import pytest

from relotrack import (
    CameraModel,
    Detection,
    DetectorConfig,
    FrameLog,
    build_scene,
    capture_scene,
    detect,
    load_frame_log,
    project_object,
    save_frame_log,
    visible_fraction,
)
from relotrack.errors import ParseError, SchemaError, ValidationError
from relotrack.nav import AgentPose
from relotrack.percept import (
    camera_basis,
    check_detection,
    check_frame_log,
    frame_log_to_text,
    load_camera_config,
    load_detector_config,
    save_camera_config,
    save_detector_config,
    validate_camera,
    validate_detector_config,
)
from relotrack.scene import SceneObject

from conftest import make_detection, make_log


def open_scene(objects, bounds_max=(10.0, 4.0, 10.0)):
    return build_scene({
        "scene_id": "open",
        "bounds": {"min": [-5.0, 0.0, -5.0], "max": list(bounds_max)},
        "grid_step": 0.25,
        "surfaces": [],
        "objects": objects,
    })


def obj(iid, pos, half, yaw=0.0, label=None):
    return {"instance_id": iid, "class_label": label or iid.rsplit("_", 1)[0],
            "position": list(pos), "half_extents": list(half), "yaw": yaw,
            "surface_id": None}


CAM = CameraModel()  # square 90 degree frustum


def eye(x=0.0, z=0.0, yaw=0, pitch=0, height=1.0):
    return AgentPose(position=(x, z), yaw=yaw, head_pitch=pitch, camera_height=height)


# ---------------------------------------------------------------------------
# camera basis conventions

def test_camera_basis_faces_positive_z_at_yaw_zero():
    origin, right, up, fwd = camera_basis(eye())
    assert np.allclose(fwd, [0, 0, 1])
    assert np.allclose(right, [1, 0, 0])
    assert np.allclose(up, [0, 1, 0])
    assert np.allclose(origin, [0, 1.0, 0])


def test_camera_basis_yaw_90_faces_positive_x():
    _, right, up, fwd = camera_basis(eye(yaw=90))
    assert np.allclose(fwd, [1, 0, 0], atol=1e-12)
    assert np.allclose(right, [0, 0, -1], atol=1e-12)
    assert np.allclose(up, [0, 1, 0], atol=1e-12)


def test_camera_basis_look_up_tilts_forward_up():
    _, right, up, fwd = camera_basis(eye(pitch=30))
    assert fwd[1] == pytest.approx(math.sin(math.radians(30)))
    assert np.allclose(right, [1, 0, 0])
    assert up[2] < 0  # top of the image leans back


# ---------------------------------------------------------------------------
# projection

def test_project_unit_cube_two_meters_ahead():
    scene = open_scene([obj("cube_01", (0.0, 1.0, 2.0), (0.5, 0.5, 0.5))])
    out = project_object(CAM, eye(), scene.objects[0])
    assert out is not None
    (cx, cy, w, h), depth = out
    assert cx == pytest.approx(0.5, abs=1e-9)
    assert cy == pytest.approx(0.5, abs=1e-9)
    # near face spans 1m at 1.5m: 1/3 of the 90-degree image plane
    assert w == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert h == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert depth == pytest.approx(2.0, abs=1e-12)


def test_project_object_behind_camera_is_none():
    scene = open_scene([obj("cube_01", (0.0, 1.0, -2.0), (0.5, 0.5, 0.5))])
    assert project_object(CAM, eye(), scene.objects[0]) is None


def test_project_straddling_near_plane_clips_not_drops():
    scene = open_scene([obj("slab_01", (0.0, 1.0, 0.3), (0.2, 0.2, 0.4))])
    out = project_object(CAM, eye(), scene.objects[0])
    assert out is not None
    (cx, cy, w, h), depth = out
    assert w > 0 and h > 0
    assert depth == pytest.approx(0.3)


def test_project_off_axis_object_lands_off_center():
    scene = open_scene([obj("cube_01", (1.0, 1.0, 2.0), (0.1, 0.1, 0.1))])
    (cx, cy, _, _), _ = project_object(CAM, eye(), scene.objects[0])
    assert cx > 0.7  # to the right of the image centre
    assert cy == pytest.approx(0.5, abs=1e-9)


def test_project_higher_object_lands_higher_in_image():
    scene = open_scene([obj("cube_01", (0.0, 2.0, 2.0), (0.1, 0.1, 0.1))])
    (cx, cy, _, _), _ = project_object(CAM, eye(), scene.objects[0])
    assert cy < 0.5  # image y runs downward


def test_project_bbox_clamped_to_unit_square():
    scene = open_scene([obj("wall_01", (0.0, 1.0, 1.0), (4.0, 1.0, 0.2))])
    (cx, cy, w, h), _ = project_object(CAM, eye(), scene.objects[0])
    assert 0 <= cx - w / 2 and cx + w / 2 <= 1


# ---------------------------------------------------------------------------
# occlusion sampling

def _two_box_scene():
    return open_scene([
        obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1)),
        obj("occluder_01", (0.4, 1.0, 2.6), (0.4, 0.4, 0.1)),
    ])


def test_visible_fraction_clear_view():
    scene = open_scene([obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1))])
    assert visible_fraction(scene, eye(), CAM, scene.object_by_id("target_01")) == pytest.approx(1.0)


def test_visible_fraction_half_occluded():
    # occluder covers the right half of the target face; the centre sample
    # column grazes its edge, which does not block, so 3 of 5 columns stay
    # clear: one 5x5-grid quantum away from the analytic 0.5
    scene = _two_box_scene()
    vf = visible_fraction(scene, eye(), CAM, scene.object_by_id("target_01"))
    assert vf == pytest.approx(0.6, abs=1e-12)


def test_visible_fraction_fully_hidden():
    scene = open_scene([
        obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1)),
        obj("occluder_01", (0.0, 1.0, 2.0), (0.8, 0.8, 0.1)),
    ])
    assert visible_fraction(scene, eye(), CAM, scene.object_by_id("target_01")) == pytest.approx(0.0)


def test_visible_fraction_out_of_frustum_is_zero():
    scene = open_scene([obj("target_01", (0.0, 1.0, -3.0), (0.4, 0.4, 0.1))])
    assert visible_fraction(scene, eye(), CAM, scene.object_by_id("target_01")) == 0.0


# ---------------------------------------------------------------------------
# synthetic detection

def detect_one(scene, pose, camera, cfg, frame_index, key):
    found = [d for d in detect(scene, pose, camera, cfg, frame_index) if d.object_key == key]
    assert len(found) <= 1
    return found[0] if found else None


def test_detect_noise_free_confidence_is_affine_in_visibility():
    scene = open_scene([obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1))])
    cfg = DetectorConfig()
    d = detect_one(scene, eye(), CAM, cfg, 4, "target_01")
    assert d is not None
    assert d.confidence == pytest.approx(0.55 + 0.45 * 1.0)
    assert d.object_key == "target_01"
    assert d.frame_index == 4


def test_detect_below_visibility_floor_yields_nothing():
    scene = _two_box_scene()
    cfg = DetectorConfig(min_visible_fraction=0.7)  # vf is 0.6 here
    assert detect_one(scene, eye(), CAM, cfg, 0, "target_01") is None
    # the unobstructed occluder itself is still reported
    assert detect_one(scene, eye(), CAM, cfg, 0, "occluder_01") is not None


def test_detect_deterministic_per_seed_and_frame():
    scene = _two_box_scene()
    cfg = DetectorConfig(seed=9, confidence_noise_sd=0.05)
    a = detect_one(scene, eye(), CAM, cfg, 3, "target_01")
    b = detect_one(scene, eye(), CAM, cfg, 3, "target_01")
    c = detect_one(scene, eye(), CAM, cfg, 4, "target_01")
    d = detect_one(scene, eye(), CAM,
                   DetectorConfig(seed=10, confidence_noise_sd=0.05), 3, "target_01")
    assert a is not None and a == b
    assert c is None or a.confidence != c.confidence
    assert d is None or a.confidence != d.confidence


def test_detect_miss_rate_scales_with_occlusion():
    scene = _two_box_scene()
    # vf = 0.6: p_miss = 1.0 * (1 - 0.6) / (1 - 0.25) = 0.533...
    cfg = DetectorConfig(seed=0, miss_rate_at_threshold=1.0)
    hits = sum(
        detect_one(scene, eye(), CAM, cfg, i, "target_01") is not None
        for i in range(300)
    )
    assert 90 < hits < 190  # 300 * (1 - 0.533) = 140 expected


def test_detect_never_misses_fully_visible_objects():
    scene = open_scene([obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1))])
    cfg = DetectorConfig(seed=0, miss_rate_at_threshold=1.0)
    for i in range(50):
        assert detect_one(scene, eye(), CAM, cfg, i, "target_01") is not None


def test_detect_confidence_clamped_to_unit_interval():
    scene = open_scene([obj("target_01", (0.0, 1.0, 3.0), (0.4, 0.4, 0.1))])
    cfg = DetectorConfig(seed=1, confidence_noise_sd=5.0)
    seen = set()
    for i in range(40):
        d = detect_one(scene, eye(), CAM, cfg, i, "target_01")
        assert d is not None and 0.0 <= d.confidence <= 1.0
        seen.add(d.confidence)
    assert len(seen) > 1  # noise actually applied


def test_detection_floats_quantized_to_six_decimals():
    d = make_detection(bbox=(1 / 3, 0.5, 0.2, 0.3), depth=2 / 3, confidence=1 / 7)
    assert d.bbox[0] == 0.333333
    assert d.depth == 0.666667
    assert d.confidence == 0.142857


def test_capture_scene_covers_every_frame(demo_scene, demo_route):
    log = capture_scene(demo_scene, demo_route, CameraModel(), DetectorConfig())
    assert set(log.frames) == set(range(len(demo_route.actions) + 1))
    assert log.scene_id == "demo"
    assert len(log.route_hash) == 64
    # at least one frame must actually see the table items
    assert any(log.frames.values())


def test_capture_scene_is_reproducible(demo_scene, demo_route):
    cfg = DetectorConfig(seed=5, confidence_noise_sd=0.1, miss_rate_at_threshold=0.3)
    a = capture_scene(demo_scene, demo_route, CameraModel(), cfg)
    b = capture_scene(demo_scene, demo_route, CameraModel(), cfg)
    assert a == b


# ---------------------------------------------------------------------------
# validation and files

def test_validate_camera_rejects_bad_fov():
    with pytest.raises(ValidationError, match="horizontal_fov"):
        validate_camera(CameraModel(horizontal_fov=0.0))
    with pytest.raises(ValidationError, match="near_clip"):
        validate_camera(CameraModel(near_clip=-0.5))


def test_validate_detector_rejects_out_of_range():
    with pytest.raises(ValidationError):
        validate_detector_config(DetectorConfig(min_visible_fraction=1.5))
    with pytest.raises(ValidationError):
        validate_detector_config(DetectorConfig(miss_rate_at_threshold=-0.1))


def test_check_detection_flags_escaping_bbox():
    with pytest.raises(ValidationError, match="unit square"):
        check_detection(make_detection(bbox=(0.9, 0.5, 0.4, 0.2)))
    with pytest.raises(ValidationError, match="depth"):
        check_detection(make_detection(depth=0.0))
    with pytest.raises(ValidationError, match="confidence"):
        check_detection(make_detection(confidence=1.5))


def test_frame_log_round_trip_is_exact(tmp_path):
    log = make_log([
        make_detection(0, "mug_01", confidence=0.91),
        make_detection(0, "jar_02", "jar", bbox=(0.25, 0.75, 0.1, 0.2), depth=1 / 3),
        make_detection(3, "mug_01", confidence=1 / 7),
    ])
    p = tmp_path / "log.jsonl"
    save_frame_log(log, p)
    again = load_frame_log(p)
    assert again == log
    assert check_frame_log(again) is again


def test_frame_log_text_has_header_then_frames(tmp_path):
    log = make_log([make_detection(2)])
    text = frame_log_to_text(log)
    lines = text.strip().split("\n")
    assert '"format_version"' in lines[0] and '"route_hash"' in lines[0]
    assert '"frame_index": 2' in lines[1]


def test_load_frame_log_empty_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    log = load_frame_log(p)
    assert log.frames == {}


def test_load_frame_log_bad_json_names_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    good = frame_log_to_text(make_log([make_detection(0)]))
    p.write_text(good + "{nope\n")
    with pytest.raises(ParseError, match=r"bad\.jsonl:3"):
        load_frame_log(p)


def test_load_frame_log_bad_detection_names_frame_and_object(tmp_path):
    p = tmp_path / "bad.jsonl"
    text = frame_log_to_text(make_log([make_detection(7, "mug_01", confidence=0.9)]))
    p.write_text(text.replace("0.9", "7.77"))
    with pytest.raises(ValidationError, match="frame 7.*mug_01"):
        load_frame_log(p)


def test_load_frame_log_duplicate_frame_rejected(tmp_path):
    p = tmp_path / "dup.jsonl"
    text = frame_log_to_text(make_log([make_detection(1), make_detection(1, "jar_02")]))
    lines = text.strip().split("\n")
    p.write_text("\n".join([lines[0], lines[1], lines[1]]) + "\n")
    with pytest.raises(ValidationError, match="duplicate frame"):
        load_frame_log(p)


def test_camera_and_detector_config_round_trips(tmp_path):
    cam = CameraModel(horizontal_fov=75.5, vertical_fov=58.0, image_size=(1280, 960),
                      max_depth=7.5, near_clip=0.05)
    p = tmp_path / "camera.json"
    save_camera_config(cam, p)
    assert load_camera_config(p) == cam

    det = DetectorConfig(seed=12, min_visible_fraction=0.3, confidence_noise_sd=0.08,
                         base_confidence=0.5, visibility_weight=0.5,
                         miss_rate_at_threshold=0.15)
    q = tmp_path / "det.json"
    save_detector_config(det, q)
    assert load_detector_config(q) == det


def test_load_camera_config_schema_error(tmp_path):
    p = tmp_path / "camera.json"
    p.write_text('{"format_version": 1, "horizontal_fov": "wide"}')
    with pytest.raises(SchemaError, match="horizontal_fov"):
        load_camera_config(p)
