"""Discrete agent kinematics: grid translation, 90 degree turns, head tilt.

A route is a start pose plus an ordered action script. Executing it yields
one pose per frame (the start pose is frame 0, then one frame per action),
so two traversals of the same route are frame-aligned by construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from .errors import CollisionError, SaturationError, SchemaError, ValidationError
from .fileio import (
    FORMAT_VERSION,
    check_format_version,
    dump_json,
    read_json_document,
    write_text_atomic,
)
from .scene import Scene, Vec2, _as_list, _as_number, _as_string, _get

YAWS = (0, 90, 180, 270)
PITCHES = (-30, 0, 30)
PITCH_STEP = 30

# Unit step in the (x, z) plane for each yaw; yaw 0 faces +z, yaw 90 faces +x.
_FORWARD = {0: (0, 1), 90: (1, 0), 180: (0, -1), 270: (-1, 0)}
_RIGHT = {0: (1, 0), 90: (0, -1), 180: (-1, 0), 270: (0, 1)}


class Action(str, Enum):
    MOVE_AHEAD = "MoveAhead"
    MOVE_BACK = "MoveBack"
    MOVE_LEFT = "MoveLeft"
    MOVE_RIGHT = "MoveRight"
    ROTATE_LEFT = "RotateLeft"
    ROTATE_RIGHT = "RotateRight"
    LOOK_UP = "LookUp"
    LOOK_DOWN = "LookDown"


_TRANSLATIONS = {Action.MOVE_AHEAD, Action.MOVE_BACK, Action.MOVE_LEFT, Action.MOVE_RIGHT}


@dataclass(frozen=True)
class AgentPose:
    position: Vec2  # (x, z), meters
    yaw: int = 0
    head_pitch: int = 0
    camera_height: float = 1.5


@dataclass(frozen=True)
class Route:
    actions: tuple[Action, ...]
    start_pose: AgentPose
    grid_step: float


@dataclass(frozen=True)
class PoseTrace:
    entries: tuple[tuple[int, AgentPose], ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Violation:
    action_index: int | None  # None: the start pose itself is invalid
    kind: str  # "collision" | "saturation" | "start" | "grid"
    message: str
    cell: tuple[int, int] | None = None


def apply_action(pose: AgentPose, action: Action, grid_step: float) -> AgentPose:
    """Pure kinematic step. Collision with scene geometry is not checked
    here; route validation owns that. Tilting past the pitch range raises
    SaturationError."""
    if action in _TRANSLATIONS:
        fx, fz = _FORWARD[pose.yaw]
        rx, rz = _RIGHT[pose.yaw]
        dx, dz = {
            Action.MOVE_AHEAD: (fx, fz),
            Action.MOVE_BACK: (-fx, -fz),
            Action.MOVE_RIGHT: (rx, rz),
            Action.MOVE_LEFT: (-rx, -rz),
        }[action]
        x, z = pose.position
        return AgentPose(
            (x + dx * grid_step, z + dz * grid_step),
            pose.yaw,
            pose.head_pitch,
            pose.camera_height,
        )
    if action is Action.ROTATE_RIGHT:
        return AgentPose(pose.position, (pose.yaw + 90) % 360, pose.head_pitch, pose.camera_height)
    if action is Action.ROTATE_LEFT:
        return AgentPose(pose.position, (pose.yaw - 90) % 360, pose.head_pitch, pose.camera_height)
    if action is Action.LOOK_UP:
        if pose.head_pitch >= PITCHES[-1]:
            raise SaturationError(f"LookUp at head_pitch {pose.head_pitch}")
        return AgentPose(pose.position, pose.yaw, pose.head_pitch + PITCH_STEP, pose.camera_height)
    if action is Action.LOOK_DOWN:
        if pose.head_pitch <= PITCHES[0]:
            raise SaturationError(f"LookDown at head_pitch {pose.head_pitch}")
        return AgentPose(pose.position, pose.yaw, pose.head_pitch - PITCH_STEP, pose.camera_height)
    raise ValueError(f"unknown action: {action!r}")


def validate_route(scene: Scene, route: Route) -> list[Violation]:
    """Dry-run the route, collecting every violation instead of stopping.

    A violating action leaves the pose unchanged so later actions are still
    checked from a well-defined state. Empty result means the route is valid.
    """
    violations: list[Violation] = []
    if abs(route.grid_step - scene.grid_step) > 1e-9:
        violations.append(
            Violation(None, "grid", f"route grid_step {route.grid_step:g} != scene grid_step {scene.grid_step:g}")
        )
    pose = route.start_pose
    if pose.yaw not in YAWS or pose.head_pitch not in PITCHES:
        violations.append(Violation(None, "start", f"start pose yaw/head_pitch not on the discrete grid: {pose.yaw}/{pose.head_pitch}"))
        # keep dry-running from the nearest legal orientation
        yaw = min(YAWS, key=lambda y: abs((pose.yaw - y + 180) % 360 - 180))
        pitch = min(PITCHES, key=lambda p: abs(pose.head_pitch - p))
        pose = replace(pose, yaw=yaw, head_pitch=pitch)
    if not scene.is_walkable(*pose.position):
        violations.append(
            Violation(None, "start", f"start position {pose.position} is not walkable", scene.cell_of(*pose.position))
        )
    for k, action in enumerate(route.actions):
        try:
            candidate = apply_action(pose, action, route.grid_step)
        except SaturationError as exc:
            violations.append(Violation(k, "saturation", f"action {k}: {exc}"))
            continue
        if action in _TRANSLATIONS and not scene.is_walkable(*candidate.position):
            cell = scene.cell_of(*candidate.position)
            violations.append(
                Violation(k, "collision", f"action {k} ({action.value}): cell {cell} is not walkable", cell)
            )
            continue
        pose = candidate
    return violations


def execute_route(scene: Scene, route: Route) -> PoseTrace:
    """Run the route and return the dense frame-indexed pose sequence.

    The first violation found aborts execution: CollisionError for blocked
    translations, SaturationError for head-tilt violations."""
    violations = validate_route(scene, route)
    if violations:
        first = violations[0]
        if first.kind == "saturation":
            raise SaturationError(first.message)
        if first.kind == "collision":
            raise CollisionError(first.message)
        raise ValidationError(first.message)
    pose = route.start_pose
    entries = [(0, pose)]
    for k, action in enumerate(route.actions):
        pose = apply_action(pose, action, route.grid_step)
        entries.append((k + 1, pose))
    return PoseTrace(entries=tuple(entries))


# ---------------------------------------------------------------------------
# route files

def _parse_pose(doc, path: str) -> AgentPose:
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected an object")
    yaw = _as_number(_get(doc, "yaw", path, default=0), f"{path}.yaw")
    pitch = _as_number(_get(doc, "head_pitch", path, default=0), f"{path}.head_pitch")
    if yaw != int(yaw) or int(yaw) not in YAWS:
        raise SchemaError(f"{path}.yaw: must be one of {YAWS}")
    if pitch != int(pitch) or int(pitch) not in PITCHES:
        raise SchemaError(f"{path}.head_pitch: must be one of {PITCHES}")
    return AgentPose(
        position=_as_vec2(_get(doc, "position", path), f"{path}.position"),
        yaw=int(yaw),
        head_pitch=int(pitch),
        camera_height=_as_number(_get(doc, "camera_height", path, default=1.5), f"{path}.camera_height"),
    )


def _as_vec2(value, path: str) -> Vec2:
    items = _as_list(value, path)
    if len(items) != 2:
        raise SchemaError(f"{path}: expected 2 components, got {len(items)}")
    return (_as_number(items[0], f"{path}[0]"), _as_number(items[1], f"{path}[1]"))


def build_route(doc: dict) -> Route:
    if not isinstance(doc, dict):
        raise SchemaError("route: top level must be an object")
    check_format_version(doc, "route")
    actions = []
    for k, name in enumerate(_as_list(_get(doc, "actions", "route"), "route.actions")):
        label = _as_string(name, f"actions[{k}]")
        try:
            actions.append(Action(label))
        except ValueError:
            raise SchemaError(f"actions[{k}]: unknown action {label!r}") from None
    if not actions:
        raise SchemaError("route.actions: must be non-empty")
    return Route(
        actions=tuple(actions),
        start_pose=_parse_pose(_get(doc, "start_pose", "route"), "start_pose"),
        grid_step=_as_number(_get(doc, "grid_step", "route"), "route.grid_step"),
    )


def route_to_dict(route: Route) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "grid_step": route.grid_step,
        "start_pose": {
            "position": list(route.start_pose.position),
            "yaw": route.start_pose.yaw,
            "head_pitch": route.start_pose.head_pitch,
            "camera_height": route.start_pose.camera_height,
        },
        "actions": [a.value for a in route.actions],
    }


def load_route(path: str | Path) -> Route:
    return build_route(read_json_document(path, "route"))


def save_route(route: Route, path: str | Path) -> None:
    write_text_atomic(path, dump_json(route_to_dict(route)))


def route_hash(route: Route) -> str:
    """Stable content hash of the route, independent of file whitespace."""
    canonical = json.dumps(route_to_dict(route), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
