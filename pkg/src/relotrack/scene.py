"""Geometric scene model: upright boxes resting on horizontal surfaces.

A :class:`Scene` is a static arrangement of oriented boxes inside an
axis-aligned boundary, together with the named surfaces (counter tops,
shelves, ...) that small objects may rest on and a derived walkable grid
for agent navigation. Scenes are immutable; seeded re-placement
(:func:`randomize_placements`) and declarative edits
(:func:`apply_changes`) return new scenes, which is how pre-change and
post-change variants of an environment are produced.

World frame: x/z span the ground plane, y points up, yaw in degrees about
+y. Lengths are meters.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    PlacementError,
    RandomizationError,
    SchemaError,
    UnknownInstanceError,
)
from .fileio import (
    FORMAT_VERSION,
    check_format_version,
    dump_json,
    read_json_document,
    write_text_atomic,
)
from .geometry import footprint_corners, footprints_overlap

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by its min and max corners."""

    min: Vec3
    max: Vec3

    def contains_point(self, p: Vec3, eps: float = 1e-9) -> bool:
        return all(self.min[i] - eps <= p[i] <= self.max[i] + eps for i in range(3))


@dataclass(frozen=True)
class Surface:
    """Horizontal rectangle objects may rest on (plan-view extent at a height)."""

    surface_id: str
    height: float
    extent_min: Vec2
    extent_max: Vec2


@dataclass(frozen=True)
class SceneObject:
    """One upright box: a piece of furniture or a small placeable item."""

    instance_id: str
    class_label: str
    position: Vec3
    half_extents: Vec3
    yaw: float = 0.0
    surface_id: str | None = None

    def footprint(self) -> np.ndarray:
        return footprint_corners(self.position, self.half_extents, self.yaw)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    bounds: Aabb
    grid_step: float
    surfaces: tuple[Surface, ...]
    objects: tuple[SceneObject, ...]
    # Derived occupancy, indexed [ix, iz]; True where the agent may stand.
    walkable: np.ndarray = field(compare=False, repr=False)

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.walkable.shape

    def object_by_id(self, instance_id: str) -> SceneObject:
        for obj in self.objects:
            if obj.instance_id == instance_id:
                return obj
        raise UnknownInstanceError(f"unknown instance_id: {instance_id!r}")

    def cell_of(self, x: float, z: float) -> tuple[int, int]:
        ix = math.floor((x - self.bounds.min[0]) / self.grid_step)
        iz = math.floor((z - self.bounds.min[2]) / self.grid_step)
        return ix, iz

    def is_walkable(self, x: float, z: float) -> bool:
        ix, iz = self.cell_of(x, z)
        nx, nz = self.walkable.shape
        if not (0 <= ix < nx and 0 <= iz < nz):
            return False
        return bool(self.walkable[ix, iz])


@dataclass(frozen=True)
class Move:
    """Relocation of one existing object. yaw/surface_id None = keep current."""

    instance_id: str
    position: Vec3
    yaw: float | None = None
    surface_id: str | None = None


@dataclass(frozen=True)
class ChangeSet:
    moves: tuple[Move, ...] = ()
    removals: tuple[str, ...] = ()
    additions: tuple[SceneObject, ...] = ()


@dataclass(frozen=True)
class GroundTruth:
    """Geometric pre/post diff: which objects actually changed, and the id
    universe the diff covers."""

    changes: dict[str, str]  # instance_id -> "moved" | "removed" | "added"
    object_ids: frozenset[str]

    def covers(self, object_key: str) -> bool:
        return object_key in self.object_ids

    def is_relocated(self, object_key: str) -> bool:
        return object_key in self.changes


# ---------------------------------------------------------------------------
# schema helpers

_MISSING = object()


def _get(doc: dict, key: str, path: str, default=_MISSING):
    if key in doc:
        return doc[key]
    if default is _MISSING:
        raise SchemaError(f"{path}.{key}: missing required field")
    return default


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(value).__name__}")
    return float(value)


def _as_string(value, path: str) -> str:
    if not isinstance(value, str):
        raise SchemaError(f"{path}: expected a string, got {type(value).__name__}")
    return value


def _as_list(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected an array, got {type(value).__name__}")
    return value


def _as_vec(value, path: str, n: int) -> tuple[float, ...]:
    items = _as_list(value, path)
    if len(items) != n:
        raise SchemaError(f"{path}: expected {n} components, got {len(items)}")
    return tuple(_as_number(v, f"{path}[{i}]") for i, v in enumerate(items))


def _parse_object(doc, path: str) -> SceneObject:
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected an object")
    surface_id = _get(doc, "surface_id", path, default=None)
    if surface_id is not None:
        surface_id = _as_string(surface_id, f"{path}.surface_id")
    obj = SceneObject(
        instance_id=_as_string(_get(doc, "instance_id", path), f"{path}.instance_id"),
        class_label=_as_string(_get(doc, "class_label", path), f"{path}.class_label"),
        position=_as_vec(_get(doc, "position", path), f"{path}.position", 3),
        half_extents=_as_vec(_get(doc, "half_extents", path), f"{path}.half_extents", 3),
        yaw=_as_number(_get(doc, "yaw", path, default=0.0), f"{path}.yaw"),
        surface_id=surface_id,
    )
    if any(h <= 0 for h in obj.half_extents):
        raise SchemaError(f"{path}.half_extents: must be strictly positive")
    return obj


def _object_to_dict(obj: SceneObject) -> dict:
    return {
        "instance_id": obj.instance_id,
        "class_label": obj.class_label,
        "position": list(obj.position),
        "half_extents": list(obj.half_extents),
        "yaw": obj.yaw,
        "surface_id": obj.surface_id,
    }


# ---------------------------------------------------------------------------
# scene assembly and validation

def _grid_count(lo: float, hi: float, step: float, path: str) -> int:
    n = (hi - lo) / step
    if n < 1 - 1e-9 or abs(n - round(n)) > 1e-6:
        raise SchemaError(
            f"{path}: extent {hi - lo:g} is not a positive multiple of grid_step {step:g}"
        )
    return round(n)


def _cell_rect(bounds: Aabb, step: float, ix: int, iz: int) -> np.ndarray:
    x0 = bounds.min[0] + ix * step
    z0 = bounds.min[2] + iz * step
    return np.array([[x0, z0], [x0, z0 + step], [x0 + step, z0 + step], [x0 + step, z0]])


def _compute_walkable(bounds: Aabb, step: float, objects: tuple[SceneObject, ...]) -> np.ndarray:
    nx = _grid_count(bounds.min[0], bounds.max[0], step, "bounds.x")
    nz = _grid_count(bounds.min[2], bounds.max[2], step, "bounds.z")
    grid = np.ones((nx, nz), dtype=bool)
    for obj in objects:
        fp = obj.footprint()
        lo_x, lo_z = fp.min(axis=0)
        hi_x, hi_z = fp.max(axis=0)
        i0 = max(0, math.floor((lo_x - bounds.min[0]) / step))
        i1 = min(nx - 1, math.floor((hi_x - bounds.min[0]) / step))
        j0 = max(0, math.floor((lo_z - bounds.min[2]) / step))
        j1 = min(nz - 1, math.floor((hi_z - bounds.min[2]) / step))
        for ix in range(i0, i1 + 1):
            for iz in range(j0, j1 + 1):
                if grid[ix, iz] and footprints_overlap(_cell_rect(bounds, step, ix, iz), fp):
                    grid[ix, iz] = False
    grid.setflags(write=False)
    return grid


def _assemble_scene(
    scene_id: str,
    bounds: Aabb,
    grid_step: float,
    surfaces: tuple[Surface, ...],
    objects: tuple[SceneObject, ...],
) -> Scene:
    """Validate all Scene invariants and derive the walkable grid."""
    if grid_step <= 0:
        raise SchemaError("grid_step: must be positive")
    for i in range(3):
        if bounds.min[i] >= bounds.max[i]:
            raise SchemaError(f"bounds: min must be below max on axis {i}")

    seen_surfaces: dict[str, Surface] = {}
    for k, s in enumerate(surfaces):
        path = f"surfaces[{k}]"
        if s.surface_id in seen_surfaces:
            raise SchemaError(f"{path}: duplicate surface_id {s.surface_id!r}")
        seen_surfaces[s.surface_id] = s
        if not (bounds.min[1] - 1e-9 <= s.height <= bounds.max[1] + 1e-9):
            raise SchemaError(f"{path}: height {s.height:g} outside scene bounds")
        for axis, (lo, hi) in enumerate(zip(s.extent_min, s.extent_max)):
            if lo >= hi:
                raise SchemaError(f"{path}: degenerate extent on axis {axis}")
        if (
            s.extent_min[0] < bounds.min[0] - 1e-9
            or s.extent_min[1] < bounds.min[2] - 1e-9
            or s.extent_max[0] > bounds.max[0] + 1e-9
            or s.extent_max[1] > bounds.max[2] + 1e-9
        ):
            raise SchemaError(f"{path}: extent outside scene bounds")

    seen_ids: set[str] = set()
    plan_min = (bounds.min[0], bounds.min[2])
    plan_max = (bounds.max[0], bounds.max[2])
    for k, obj in enumerate(objects):
        path = f"objects[{k}]"
        if obj.instance_id in seen_ids:
            raise SchemaError(f"{path}: duplicate instance_id {obj.instance_id!r}")
        seen_ids.add(obj.instance_id)
        if not bounds.contains_point(obj.position):
            raise SchemaError(f"{path}: position outside scene bounds")
        if obj.surface_id is not None and obj.surface_id not in seen_surfaces:
            raise SchemaError(f"{path}: unknown surface_id {obj.surface_id!r}")
        fp = obj.footprint()
        if (
            fp[:, 0].max() < plan_min[0]
            or fp[:, 0].min() > plan_max[0]
            or fp[:, 1].max() < plan_min[1]
            or fp[:, 1].min() > plan_max[1]
        ):
            raise SchemaError(f"{path}: footprint does not intersect scene bounds")

    # Placement validity: objects sharing a support (or both standing on the
    # floor, surface_id None) must not overlap in plan view.
    by_surface: dict[str | None, list[SceneObject]] = {}
    for obj in objects:
        by_surface.setdefault(obj.surface_id, []).append(obj)
    colliding: list[str] = []
    for group in by_surface.values():
        fps = [o.footprint() for o in group]
        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                if footprints_overlap(fps[a], fps[b]):
                    colliding.append(f"{group[a].instance_id}/{group[b].instance_id}")
    if colliding:
        raise PlacementError("overlapping placements: " + ", ".join(sorted(colliding)))

    walkable = _compute_walkable(bounds, grid_step, objects)
    return Scene(scene_id, bounds, grid_step, surfaces, objects, walkable)


def build_scene(doc: dict) -> Scene:
    """Build and validate a Scene from a parsed structured description.

    Raises SchemaError with the offending field path on malformed input and
    PlacementError when two objects on one surface overlap.
    """
    if not isinstance(doc, dict):
        raise SchemaError("scene: top level must be an object")
    check_format_version(doc, "scene")
    bounds_doc = _get(doc, "bounds", "scene")
    if not isinstance(bounds_doc, dict):
        raise SchemaError("scene.bounds: expected an object")
    bounds = Aabb(
        min=_as_vec(_get(bounds_doc, "min", "scene.bounds"), "scene.bounds.min", 3),
        max=_as_vec(_get(bounds_doc, "max", "scene.bounds"), "scene.bounds.max", 3),
    )
    surfaces = []
    for k, sdoc in enumerate(_as_list(_get(doc, "surfaces", "scene"), "scene.surfaces")):
        path = f"surfaces[{k}]"
        if not isinstance(sdoc, dict):
            raise SchemaError(f"{path}: expected an object")
        extent = _get(sdoc, "extent", path)
        if not isinstance(extent, dict):
            raise SchemaError(f"{path}.extent: expected an object")
        surfaces.append(
            Surface(
                surface_id=_as_string(_get(sdoc, "surface_id", path), f"{path}.surface_id"),
                height=_as_number(_get(sdoc, "height", path), f"{path}.height"),
                extent_min=_as_vec(_get(extent, "min", f"{path}.extent"), f"{path}.extent.min", 2),
                extent_max=_as_vec(_get(extent, "max", f"{path}.extent"), f"{path}.extent.max", 2),
            )
        )
    objects = [
        _parse_object(odoc, f"objects[{k}]")
        for k, odoc in enumerate(_as_list(_get(doc, "objects", "scene"), "scene.objects"))
    ]
    return _assemble_scene(
        scene_id=_as_string(_get(doc, "scene_id", "scene"), "scene.scene_id"),
        bounds=bounds,
        grid_step=_as_number(_get(doc, "grid_step", "scene"), "scene.grid_step"),
        surfaces=tuple(surfaces),
        objects=tuple(objects),
    )


def scene_to_dict(scene: Scene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "bounds": {"min": list(scene.bounds.min), "max": list(scene.bounds.max)},
        "grid_step": scene.grid_step,
        "surfaces": [
            {
                "surface_id": s.surface_id,
                "height": s.height,
                "extent": {"min": list(s.extent_min), "max": list(s.extent_max)},
            }
            for s in scene.surfaces
        ],
        "objects": [_object_to_dict(o) for o in scene.objects],
    }


def load_scene(path: str | Path) -> Scene:
    return build_scene(read_json_document(path, "scene"))


def save_scene(scene: Scene, path: str | Path) -> None:
    write_text_atomic(path, dump_json(scene_to_dict(scene)))


# ---------------------------------------------------------------------------
# changesets

def build_changeset(doc: dict) -> ChangeSet:
    if not isinstance(doc, dict):
        raise SchemaError("changeset: top level must be an object")
    check_format_version(doc, "changeset")
    moves = []
    for k, mdoc in enumerate(_as_list(_get(doc, "moves", "changeset", default=[]), "changeset.moves")):
        path = f"moves[{k}]"
        if not isinstance(mdoc, dict):
            raise SchemaError(f"{path}: expected an object")
        yaw = _get(mdoc, "yaw", path, default=None)
        if yaw is not None:
            yaw = _as_number(yaw, f"{path}.yaw")
        surface_id = _get(mdoc, "surface_id", path, default=None)
        if surface_id is not None:
            surface_id = _as_string(surface_id, f"{path}.surface_id")
        moves.append(
            Move(
                instance_id=_as_string(_get(mdoc, "instance_id", path), f"{path}.instance_id"),
                position=_as_vec(_get(mdoc, "position", path), f"{path}.position", 3),
                yaw=yaw,
                surface_id=surface_id,
            )
        )
    removals = [
        _as_string(r, f"removals[{k}]")
        for k, r in enumerate(_as_list(_get(doc, "removals", "changeset", default=[]), "changeset.removals"))
    ]
    additions = [
        _parse_object(odoc, f"additions[{k}]")
        for k, odoc in enumerate(_as_list(_get(doc, "additions", "changeset", default=[]), "changeset.additions"))
    ]
    return ChangeSet(moves=tuple(moves), removals=tuple(removals), additions=tuple(additions))


def changeset_to_dict(changes: ChangeSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "moves": [
            {
                "instance_id": m.instance_id,
                "position": list(m.position),
                "yaw": m.yaw,
                "surface_id": m.surface_id,
            }
            for m in changes.moves
        ],
        "removals": list(changes.removals),
        "additions": [_object_to_dict(o) for o in changes.additions],
    }


def load_changeset(path: str | Path) -> ChangeSet:
    return build_changeset(read_json_document(path, "changeset"))


def save_changeset(changes: ChangeSet, path: str | Path) -> None:
    write_text_atomic(path, dump_json(changeset_to_dict(changes)))


# ---------------------------------------------------------------------------
# scene derivation

def randomize_placements(
    scene: Scene,
    seed: int,
    movable_classes: set[str] | frozenset[str],
    min_displacement: float = 0.0,
    max_attempts: int = 100,
) -> Scene:
    """Re-place every object of a movable class on a random fitting surface.

    Placement is rejection-sampled: a draw is kept only if the object stays
    inside its chosen surface, does not overlap anything already on it, and
    (when min_displacement > 0) lands strictly farther than min_displacement
    from its original position. Deterministic for identical
    (scene, seed, movable_classes) inputs.

    Raises RandomizationError when an object finds no valid placement within
    max_attempts draws.
    """
    if not movable_classes:
        raise ValueError("movable_classes must be non-empty")
    movable = [o for o in scene.objects if o.class_label in movable_classes]
    if not movable:
        return scene

    rng = np.random.default_rng(seed & _SEED_MASK)
    occupied: dict[str, list[np.ndarray]] = {s.surface_id: [] for s in scene.surfaces}
    pending = {o.instance_id for o in movable}
    for obj in scene.objects:
        if obj.instance_id not in pending and obj.surface_id is not None:
            occupied[obj.surface_id].append(obj.footprint())

    placed: dict[str, SceneObject] = {}
    for obj in movable:
        hx, hy, hz = obj.half_extents
        t = math.radians(obj.yaw)
        # Plan-view half extents of the yawed footprint's bounding rectangle.
        wx = abs(math.cos(t)) * hx + abs(math.sin(t)) * hz
        wz = abs(math.sin(t)) * hx + abs(math.cos(t)) * hz
        candidates = [
            s
            for s in scene.surfaces
            if s.extent_max[0] - s.extent_min[0] >= 2 * wx
            and s.extent_max[1] - s.extent_min[1] >= 2 * wz
            and s.height + 2 * hy <= scene.bounds.max[1] + 1e-9
        ]
        if not candidates:
            raise RandomizationError(f"no surface fits object {obj.instance_id!r}")

        new_obj = None
        for _ in range(max_attempts):
            surface = candidates[int(rng.integers(len(candidates)))]
            x = float(rng.uniform(surface.extent_min[0] + wx, surface.extent_max[0] - wx))
            z = float(rng.uniform(surface.extent_min[1] + wz, surface.extent_max[1] - wz))
            position = (x, surface.height + hy, z)
            if min_displacement > 0.0:
                dist = math.dist(position, obj.position)
                if dist <= min_displacement:
                    continue
            fp = footprint_corners(position, obj.half_extents, obj.yaw)
            if any(footprints_overlap(fp, other) for other in occupied[surface.surface_id]):
                continue
            new_obj = dataclasses.replace(obj, position=position, surface_id=surface.surface_id)
            occupied[surface.surface_id].append(fp)
            break
        if new_obj is None:
            raise RandomizationError(
                f"no valid placement for {obj.instance_id!r} after {max_attempts} attempts"
            )
        placed[obj.instance_id] = new_obj

    new_objects = tuple(placed.get(o.instance_id, o) for o in scene.objects)
    return _assemble_scene(
        scene_id=f"{scene.scene_id}@r{seed & _SEED_MASK}",
        bounds=scene.bounds,
        grid_step=scene.grid_step,
        surfaces=scene.surfaces,
        objects=new_objects,
    )


def apply_changes(scene: Scene, changes: ChangeSet) -> Scene:
    """Apply removals, then moves, then additions, returning a new Scene.

    References to unknown instance_ids (or additions that collide with
    existing ids) raise UnknownInstanceError; the result is revalidated, so
    a move into an occupied spot raises PlacementError.
    """
    base_ids = {o.instance_id for o in scene.objects}
    for removal in changes.removals:
        if removal not in base_ids:
            raise UnknownInstanceError(f"removal of unknown instance_id {removal!r}")
    removed = set(changes.removals)

    remaining = {o.instance_id: o for o in scene.objects if o.instance_id not in removed}
    seen_moves: set[str] = set()
    for move in changes.moves:
        if move.instance_id in seen_moves:
            raise UnknownInstanceError(f"duplicate move target {move.instance_id!r}")
        seen_moves.add(move.instance_id)
        current = remaining.get(move.instance_id)
        if current is None:
            raise UnknownInstanceError(f"move of unknown instance_id {move.instance_id!r}")
        remaining[move.instance_id] = dataclasses.replace(
            current,
            position=move.position,
            yaw=current.yaw if move.yaw is None else move.yaw,
            surface_id=current.surface_id if move.surface_id is None else move.surface_id,
        )
    for addition in changes.additions:
        if addition.instance_id in base_ids:
            raise UnknownInstanceError(
                f"addition reuses existing instance_id {addition.instance_id!r}"
            )

    new_objects = tuple(remaining[o.instance_id] for o in scene.objects if o.instance_id in remaining)
    new_objects += changes.additions
    return _assemble_scene(
        scene_id=scene.scene_id,
        bounds=scene.bounds,
        grid_step=scene.grid_step,
        surfaces=scene.surfaces,
        objects=new_objects,
    )


def ground_truth_relocations(pre: Scene, post: Scene, min_displacement: float = 0.25) -> GroundTruth:
    """Diff two scenes geometrically, independent of any detector output.

    An object present in both scenes counts as moved only when its center
    displacement strictly exceeds min_displacement.
    """
    pre_ids = {o.instance_id: o for o in pre.objects}
    post_ids = {o.instance_id: o for o in post.objects}
    changes: dict[str, str] = {}
    for instance_id, obj in pre_ids.items():
        other = post_ids.get(instance_id)
        if other is None:
            changes[instance_id] = "removed"
        elif math.dist(obj.position, other.position) > min_displacement:
            changes[instance_id] = "moved"
    for instance_id in post_ids:
        if instance_id not in pre_ids:
            changes[instance_id] = "added"
    return GroundTruth(changes=changes, object_ids=frozenset(pre_ids) | frozenset(post_ids))
