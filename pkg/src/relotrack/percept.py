"""Synthetic perception: project scene boxes into per-frame detections.

Each frame is rendered geometrically, not photographically: box corners go
through a pinhole model to produce a normalized (cx, cy, w, h) bounding box
plus center depth, a deterministic ray grid estimates how much of the
object other boxes hide, and a seeded noise model turns that visible
fraction into detection confidence and stochastic misses. The same file
format is the ingestion path for logs produced by real detectors.

Image coordinates follow the usual detector convention: origin at the top
left, x right, y down, everything normalized to [0, 1].
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, SchemaError, ValidationError
from .fileio import FORMAT_VERSION, check_format_version, dump_json, read_json_document, write_text_atomic
from .geometry import BOX_EDGES, box_corners, segments_hit_boxes, yaw_matrix
from .nav import AgentPose, PoseTrace, Route, execute_route, route_hash
from .scene import Scene, SceneObject, _as_list, _as_number, _get

_SEED_MASK = (1 << 64) - 1
OCCLUSION_SAMPLES_PER_AXIS = 5


@dataclass(frozen=True)
class CameraModel:
    horizontal_fov: float = 90.0
    vertical_fov: float = 90.0
    image_size: tuple[int, int] = (640, 640)
    max_depth: float = 5.0
    near_clip: float = 0.1


@dataclass(frozen=True)
class Detection:
    """One detector output. Float fields are stored at 6 decimal places so
    serialized logs round-trip exactly."""

    frame_index: int
    object_key: str
    class_label: str
    bbox: tuple[float, float, float, float]  # (cx, cy, w, h), normalized
    depth: float
    confidence: float

    def __post_init__(self):
        object.__setattr__(self, "bbox", tuple(round(float(v), 6) for v in self.bbox))
        object.__setattr__(self, "depth", round(float(self.depth), 6))
        object.__setattr__(self, "confidence", round(float(self.confidence), 6))


@dataclass(frozen=True)
class FrameLog:
    scene_id: str
    route_hash: str
    camera: CameraModel
    frames: dict[int, tuple[Detection, ...]]


@dataclass(frozen=True)
class DetectorConfig:
    seed: int = 0
    min_visible_fraction: float = 0.25
    confidence_noise_sd: float = 0.0
    base_confidence: float = 0.55
    visibility_weight: float = 0.45
    miss_rate_at_threshold: float = 0.0


def validate_camera(camera: CameraModel, source: str = "camera") -> None:
    if not (0.0 < camera.near_clip < camera.max_depth):
        raise ValidationError(f"{source}: need 0 < near_clip < max_depth")
    for name, fov in (("horizontal_fov", camera.horizontal_fov), ("vertical_fov", camera.vertical_fov)):
        if not (0.0 < fov < 180.0):
            raise ValidationError(f"{source}.{name}: must be in (0, 180) degrees")
    if camera.image_size[0] <= 0 or camera.image_size[1] <= 0:
        raise ValidationError(f"{source}.image_size: must be positive")


def validate_detector_config(cfg: DetectorConfig, source: str = "detector") -> None:
    for name in (
        "min_visible_fraction",
        "confidence_noise_sd",
        "base_confidence",
        "visibility_weight",
        "miss_rate_at_threshold",
    ):
        value = getattr(cfg, name)
        if not (0.0 <= value <= 1.0):
            raise ValidationError(f"{source}.{name}: must be in [0, 1]")


def check_detection(d: Detection, context: str = "") -> None:
    """Raise ValidationError when a Detection violates its invariants."""
    eps = 1e-6  # quantization of the stored floats can spill this far
    cx, cy, w, h = d.bbox
    if not isinstance(d.frame_index, int) or d.frame_index < 0:
        raise ValidationError(f"{context}frame_index must be a non-negative integer")
    if w <= 0 or h <= 0:
        raise ValidationError(f"{context}bbox must have positive width and height")
    if cx - w / 2 < -eps or cx + w / 2 > 1 + eps or cy - h / 2 < -eps or cy + h / 2 > 1 + eps:
        raise ValidationError(f"{context}bbox extends outside the unit square")
    if d.depth <= 0:
        raise ValidationError(f"{context}depth must be positive")
    if not (0.0 <= d.confidence <= 1.0):
        raise ValidationError(f"{context}confidence must be in [0, 1]")


def check_frame_log(log: FrameLog) -> FrameLog:
    """Validate a FrameLog and return it (convenient for call chaining)."""
    if not isinstance(log, FrameLog):
        raise TypeError(f"expected a FrameLog, got {type(log).__name__}")
    validate_camera(log.camera)
    for frame_index, detections in log.frames.items():
        if not isinstance(frame_index, int) or frame_index < 0:
            raise ValidationError(f"frame key {frame_index!r} is not a non-negative integer")
        for d in detections:
            context = f"frame {frame_index}, object {d.object_key!r}: "
            if d.frame_index != frame_index:
                raise ValidationError(f"{context}frame_index {d.frame_index} does not match its frame")
            check_detection(d, context)
    return log


# ---------------------------------------------------------------------------
# projection

def camera_basis(pose: AgentPose) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """World-frame (origin, right, up, forward) of the agent's camera.

    head_pitch is positive upward; the camera sits camera_height above the
    agent's ground position.
    """
    yaw = math.radians(pose.yaw)
    pitch = math.radians(pose.head_pitch)
    forward = np.array(
        [math.sin(yaw) * math.cos(pitch), math.sin(pitch), math.cos(yaw) * math.cos(pitch)]
    )
    right = np.array([math.cos(yaw), 0.0, -math.sin(yaw)])
    up = np.cross(forward, right)
    origin = np.array([pose.position[0], pose.camera_height, pose.position[1]])
    return origin, right, up, forward


def _clip_near(cam_pts: np.ndarray, near: float) -> np.ndarray:
    """Clip the 12 box edges against the z = near plane; returns surviving
    vertices (original corners in front, plus edge/plane intersections)."""
    z = cam_pts[:, 2]
    front = z >= near
    if front.all():
        return cam_pts
    kept = [cam_pts[front]]
    for a, b in BOX_EDGES:
        if front[a] == front[b]:
            continue
        t = (near - z[a]) / (z[b] - z[a])
        kept.append((cam_pts[a] + t * (cam_pts[b] - cam_pts[a]))[None, :])
    return np.concatenate(kept, axis=0)


def project_object(
    camera: CameraModel, pose: AgentPose, obj: SceneObject
) -> tuple[tuple[float, float, float, float], float] | None:
    """Project an object's box into the image.

    Returns (bbox, depth) with bbox = (cx, cy, w, h) normalized and clipped
    to the image, and depth the Euclidean distance from the camera to the
    object center. Returns None when the box is entirely behind the near
    plane or outside the field of view.
    """
    origin, right, up, forward = camera_basis(pose)
    rel = box_corners(obj.position, obj.half_extents, obj.yaw) - origin
    cam = np.stack([rel @ right, rel @ up, rel @ forward], axis=1)
    pts = _clip_near(cam, camera.near_clip)
    if len(pts) == 0:
        return None
    tan_h = math.tan(math.radians(camera.horizontal_fov) / 2)
    tan_v = math.tan(math.radians(camera.vertical_fov) / 2)
    px = pts[:, 0] / (pts[:, 2] * tan_h)
    py = pts[:, 1] / (pts[:, 2] * tan_v)
    u0 = max(0.0, 0.5 + 0.5 * float(px.min()))
    u1 = min(1.0, 0.5 + 0.5 * float(px.max()))
    v0 = max(0.0, 0.5 - 0.5 * float(py.max()))
    v1 = min(1.0, 0.5 - 0.5 * float(py.min()))
    if u1 - u0 <= 1e-9 or v1 - v0 <= 1e-9:
        return None
    bbox = ((u0 + u1) / 2, (v0 + v1) / 2, u1 - u0, v1 - v0)
    depth = float(np.linalg.norm(np.asarray(obj.position) - origin))
    return bbox, depth


# ---------------------------------------------------------------------------
# occlusion

class _SceneGeom:
    """Per-scene arrays reused across frames: box centers, half extents,
    yaws, and local-to-world rotations."""

    def __init__(self, scene: Scene):
        self.ids = [o.instance_id for o in scene.objects]
        self.centers = np.array([o.position for o in scene.objects], dtype=float)
        self.halfs = np.array([o.half_extents for o in scene.objects], dtype=float)
        self.yaws = np.array([o.yaw for o in scene.objects], dtype=float)
        self.rots = (
            np.stack([yaw_matrix(y) for y in self.yaws])
            if len(self.yaws)
            else np.zeros((0, 3, 3))
        )


_GRID_OFFSETS = (np.arange(OCCLUSION_SAMPLES_PER_AXIS) + 0.5) / OCCLUSION_SAMPLES_PER_AXIS * 2 - 1


def _face_samples(obj: SceneObject, toward: np.ndarray) -> np.ndarray:
    """Deterministic sample grid on the box face most oriented toward the
    camera. Samples stay strictly inside the face so rays cannot graze a
    coplanar neighbor."""
    rot = yaw_matrix(obj.yaw)
    axes = rot.T  # rows: local x, y, z in world coordinates
    facing = axes @ toward
    drop = int(np.argmax(np.abs(facing)))
    keep = [i for i in range(3) if i != drop]
    half = np.asarray(obj.half_extents)
    sign = 1.0 if facing[drop] >= 0 else -1.0
    base = np.asarray(obj.position) + sign * half[drop] * axes[drop]
    s, t = np.meshgrid(_GRID_OFFSETS, _GRID_OFFSETS, indexing="ij")
    return (
        base
        + s.reshape(-1, 1) * half[keep[0]] * axes[keep[0]]
        + t.reshape(-1, 1) * half[keep[1]] * axes[keep[1]]
    )


def _visible_fraction_impl(
    obj: SceneObject,
    obj_index: int,
    geom: _SceneGeom,
    camera: CameraModel,
    origin: np.ndarray,
    right: np.ndarray,
    up: np.ndarray,
    forward: np.ndarray,
) -> float:
    toward = origin - np.asarray(obj.position)
    norm = np.linalg.norm(toward)
    if norm < 1e-12:
        return 0.0
    samples = _face_samples(obj, toward / norm)

    rel = samples - origin
    x = rel @ right
    y = rel @ up
    z = rel @ forward
    tan_h = math.tan(math.radians(camera.horizontal_fov) / 2)
    tan_v = math.tan(math.radians(camera.vertical_fov) / 2)
    in_frustum = (z > camera.near_clip) & (np.abs(x) <= z * tan_h) & (np.abs(y) <= z * tan_v)
    total = int(in_frustum.sum())
    if total == 0:
        return 0.0

    mask = np.ones(len(geom.ids), dtype=bool)
    mask[obj_index] = False
    blocked = segments_hit_boxes(
        origin,
        samples[in_frustum],
        geom.centers[mask],
        geom.halfs[mask],
        geom.yaws[mask],
        rots=geom.rots[mask],
    )
    return float((~blocked).sum()) / total


def visible_fraction(scene: Scene, pose: AgentPose, camera: CameraModel, obj: SceneObject) -> float:
    """Fraction of the object's camera-facing surface with a clear line of
    sight, over the samples that fall inside the view frustum."""
    origin, right, up, forward = camera_basis(pose)
    geom = _SceneGeom(scene)
    index = geom.ids.index(obj.instance_id)
    return _visible_fraction_impl(obj, index, geom, camera, origin, right, up, forward)


# ---------------------------------------------------------------------------
# detection

def _detection_rng(seed: int, frame_index: int, instance_id: str) -> np.random.Generator:
    key = int.from_bytes(hashlib.sha256(instance_id.encode("utf-8")).digest()[:8], "big")
    return np.random.default_rng(np.random.SeedSequence((seed & _SEED_MASK, frame_index, key)))


def detect(
    scene: Scene,
    pose: AgentPose,
    camera: CameraModel,
    cfg: DetectorConfig,
    frame_index: int,
    _geom: _SceneGeom | None = None,
) -> list[Detection]:
    """Synthesize detections for one frame.

    An object is emitted when its visible fraction reaches
    cfg.min_visible_fraction, minus stochastic misses that become more
    likely the closer the fraction sits to that threshold. Confidence is
    base_confidence + visibility_weight * fraction plus Gaussian noise,
    clamped to [0, 1]. Only real objects are emitted; no false positives
    are synthesized. Deterministic per (inputs, seed).
    """
    geom = _geom if _geom is not None else _SceneGeom(scene)
    origin, right, up, forward = camera_basis(pose)
    out: list[Detection] = []
    for index, obj in enumerate(scene.objects):
        projected = project_object(camera, pose, obj)
        if projected is None:
            continue
        bbox, depth = projected
        fraction = _visible_fraction_impl(obj, index, geom, camera, origin, right, up, forward)
        if fraction < cfg.min_visible_fraction:
            continue
        rng = _detection_rng(cfg.seed, frame_index, obj.instance_id)
        miss_draw = float(rng.random())
        noise = float(rng.standard_normal())
        span = 1.0 - cfg.min_visible_fraction
        miss_p = cfg.miss_rate_at_threshold * (1.0 - fraction) / span if span > 0 else 0.0
        if miss_draw < miss_p:
            continue
        confidence = cfg.base_confidence + cfg.visibility_weight * fraction
        confidence += cfg.confidence_noise_sd * noise
        confidence = min(1.0, max(0.0, confidence))
        out.append(
            Detection(
                frame_index=frame_index,
                object_key=obj.instance_id,
                class_label=obj.class_label,
                bbox=bbox,
                depth=depth,
                confidence=confidence,
            )
        )
    return out


def capture_scene(scene: Scene, route: Route, camera: CameraModel, cfg: DetectorConfig) -> FrameLog:
    """Execute the route and run the detector at every frame.

    Raises the underlying route validation error (collision, saturation)
    when the route does not fit the scene.
    """
    validate_camera(camera)
    validate_detector_config(cfg)
    trace: PoseTrace = execute_route(scene, route)
    geom = _SceneGeom(scene)
    frames = {
        frame_index: tuple(detect(scene, pose, camera, cfg, frame_index, _geom=geom))
        for frame_index, pose in trace.entries
    }
    return FrameLog(
        scene_id=scene.scene_id,
        route_hash=route_hash(route),
        camera=camera,
        frames=frames,
    )


# ---------------------------------------------------------------------------
# camera / detector config files

def parse_camera(doc: dict, source: str = "camera") -> CameraModel:
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: expected an object")
    size = _as_list(_get(doc, "image_size", source, default=[640, 640]), f"{source}.image_size")
    if len(size) != 2:
        raise SchemaError(f"{source}.image_size: expected [width, height]")
    camera = CameraModel(
        horizontal_fov=_as_number(_get(doc, "horizontal_fov", source, default=90.0), f"{source}.horizontal_fov"),
        vertical_fov=_as_number(_get(doc, "vertical_fov", source, default=90.0), f"{source}.vertical_fov"),
        image_size=(int(_as_number(size[0], f"{source}.image_size[0]")), int(_as_number(size[1], f"{source}.image_size[1]"))),
        max_depth=_as_number(_get(doc, "max_depth", source, default=5.0), f"{source}.max_depth"),
        near_clip=_as_number(_get(doc, "near_clip", source, default=0.1), f"{source}.near_clip"),
    )
    validate_camera(camera, source)
    return camera


def camera_to_dict(camera: CameraModel) -> dict:
    return {
        "horizontal_fov": camera.horizontal_fov,
        "vertical_fov": camera.vertical_fov,
        "image_size": list(camera.image_size),
        "max_depth": camera.max_depth,
        "near_clip": camera.near_clip,
    }


def load_camera_config(path: str | Path) -> CameraModel:
    doc = read_json_document(path, "camera config")
    check_format_version(doc, "camera config")
    return parse_camera(doc)


def save_camera_config(camera: CameraModel, path: str | Path) -> None:
    write_text_atomic(path, dump_json({"format_version": FORMAT_VERSION, **camera_to_dict(camera)}))


def parse_detector_config(doc: dict, source: str = "detector") -> DetectorConfig:
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: expected an object")
    defaults = DetectorConfig()
    seed = _get(doc, "seed", source, default=defaults.seed)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError(f"{source}.seed: expected an integer")
    cfg = DetectorConfig(
        seed=seed,
        min_visible_fraction=_as_number(_get(doc, "min_visible_fraction", source, default=defaults.min_visible_fraction), f"{source}.min_visible_fraction"),
        confidence_noise_sd=_as_number(_get(doc, "confidence_noise_sd", source, default=defaults.confidence_noise_sd), f"{source}.confidence_noise_sd"),
        base_confidence=_as_number(_get(doc, "base_confidence", source, default=defaults.base_confidence), f"{source}.base_confidence"),
        visibility_weight=_as_number(_get(doc, "visibility_weight", source, default=defaults.visibility_weight), f"{source}.visibility_weight"),
        miss_rate_at_threshold=_as_number(_get(doc, "miss_rate_at_threshold", source, default=defaults.miss_rate_at_threshold), f"{source}.miss_rate_at_threshold"),
    )
    validate_detector_config(cfg, source)
    return cfg


def detector_to_dict(cfg: DetectorConfig) -> dict:
    return {
        "seed": cfg.seed,
        "min_visible_fraction": cfg.min_visible_fraction,
        "confidence_noise_sd": cfg.confidence_noise_sd,
        "base_confidence": cfg.base_confidence,
        "visibility_weight": cfg.visibility_weight,
        "miss_rate_at_threshold": cfg.miss_rate_at_threshold,
    }


def load_detector_config(path: str | Path) -> DetectorConfig:
    doc = read_json_document(path, "detector config")
    check_format_version(doc, "detector config")
    return parse_detector_config(doc)


def save_detector_config(cfg: DetectorConfig, path: str | Path) -> None:
    write_text_atomic(path, dump_json({"format_version": FORMAT_VERSION, **detector_to_dict(cfg)}))


# ---------------------------------------------------------------------------
# frame log files (JSON Lines; one header record, then one record per frame)

def _detection_line_fragment(d: Detection) -> str:
    bbox = ", ".join(f"{v:.6f}" for v in d.bbox)
    return (
        f'{{"object_key": {json.dumps(d.object_key)}, '
        f'"class_label": {json.dumps(d.class_label)}, '
        f'"bbox": [{bbox}], '
        f'"depth": {d.depth:.6f}, '
        f'"confidence": {d.confidence:.6f}}}'
    )


def frame_log_to_text(log: FrameLog) -> str:
    """Serialize with a fixed field order and 6-decimal floats so identical
    logs are byte-identical."""
    header = {
        "scene_id": log.scene_id,
        "route_hash": log.route_hash,
        "camera": camera_to_dict(log.camera),
        "format_version": FORMAT_VERSION,
    }
    lines = [json.dumps(header)]
    for frame_index in sorted(log.frames):
        detections = ", ".join(_detection_line_fragment(d) for d in log.frames[frame_index])
        lines.append(f'{{"frame_index": {frame_index}, "detections": [{detections}]}}')
    return "\n".join(lines) + "\n"


def save_frame_log(log: FrameLog, path: str | Path) -> None:
    write_text_atomic(path, frame_log_to_text(log))


def _parse_detection(doc, frame_index: int, path: str) -> Detection:
    if not isinstance(doc, dict):
        raise ValidationError(f"{path}: detection must be an object")
    bbox = _as_list(_get(doc, "bbox", path), f"{path}.bbox")
    if len(bbox) != 4:
        raise ValidationError(f"{path}.bbox: expected [cx, cy, w, h]")
    d = Detection(
        frame_index=frame_index,
        object_key=str(_get(doc, "object_key", path)),
        class_label=str(_get(doc, "class_label", path)),
        bbox=tuple(float(v) for v in bbox),
        depth=float(_as_number(_get(doc, "depth", path), f"{path}.depth")),
        confidence=float(_as_number(_get(doc, "confidence", path), f"{path}.confidence")),
    )
    check_detection(d, f"frame {frame_index}, object {d.object_key!r}: ")
    return d


def load_frame_log(path: str | Path) -> FrameLog:
    """Parse and validate a frame log.

    Malformed lines raise ParseError with their line number; well-formed
    records that break an invariant raise ValidationError naming the frame
    and object. An empty file is a valid empty log.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"frame log not found: {path}")
    text = path.read_text(encoding="utf-8")
    if text.strip() == "":
        return FrameLog(scene_id="", route_hash="", camera=CameraModel(), frames={})
    lines = text.splitlines()

    def parse_line(i: int) -> dict:
        try:
            doc = json.loads(lines[i])
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{i + 1}: invalid JSON: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ParseError(f"{path}:{i + 1}: expected a JSON object")
        return doc

    header = parse_line(0)
    check_format_version(header, f"{path}:1")
    camera = parse_camera(_get(header, "camera", "header"), "header.camera")
    scene_id = str(_get(header, "scene_id", "header"))
    log_route_hash = str(_get(header, "route_hash", "header"))

    frames: dict[int, tuple[Detection, ...]] = {}
    for i in range(1, len(lines)):
        if lines[i].strip() == "":
            continue
        record = parse_line(i)
        frame_index = _get(record, "frame_index", f"{path}:{i + 1}")
        if isinstance(frame_index, bool) or not isinstance(frame_index, int) or frame_index < 0:
            raise ValidationError(f"{path}:{i + 1}: frame_index must be a non-negative integer")
        if frame_index in frames:
            raise ValidationError(f"{path}:{i + 1}: duplicate frame {frame_index}")
        detections = _as_list(_get(record, "detections", f"{path}:{i + 1}"), f"{path}:{i + 1}.detections")
        frames[frame_index] = tuple(
            _parse_detection(doc, frame_index, f"{path}:{i + 1} detections[{k}]")
            for k, doc in enumerate(detections)
        )
    return FrameLog(scene_id=scene_id, route_hash=log_route_hash, camera=camera, frames=frames)
