"""Experiment harness: run the tracker against known scene edits and score it.

One experiment compares a base scene against n derived scenes (seeded
random re-placements, or a fixed changeset), all traversed with the same
route. Each object judgment lands in a confusion matrix cell: the tracker
"predicts relocated" when its decision is relocated, removed, or added;
ground truth comes from scene geometry, independent of anything the
tracker saw.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import CoverageError, RelotrackError, SchemaError
from .fileio import (
    FORMAT_VERSION,
    check_format_version,
    dump_json,
    read_json_document,
    write_text_atomic,
)
from .nav import load_route
from .percept import (
    CameraModel,
    DetectorConfig,
    camera_to_dict,
    capture_scene,
    detector_to_dict,
    parse_camera,
    parse_detector_config,
)
from .scene import (
    GroundTruth,
    apply_changes,
    ground_truth_relocations,
    load_changeset,
    load_scene,
    randomize_placements,
    _as_list,
    _as_number,
    _as_string,
    _get,
)
from .track import (
    RelocationReport,
    TrackerConfig,
    compare_scenes,
    parse_tracker_config,
    tracker_to_dict,
)

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fn: int = 0
    fp: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + other.tp,
            fn=self.fn + other.fn,
            fp=self.fp + other.fp,
            tn=self.tn + other.tn,
        )

    @property
    def total(self) -> int:
        return self.tp + self.fn + self.fp + self.tn


@dataclass(frozen=True)
class Metrics:
    """Exact ratios; a metric whose denominator is zero is None (undefined),
    never coerced to 0 or 1."""

    precision: float | None
    recall: float | None
    accuracy: float | None


@dataclass(frozen=True)
class ExperimentConfig:
    base_scene: Path
    route: Path
    camera: CameraModel
    detector: DetectorConfig
    tracker: TrackerConfig
    n_random_scenes: int = 9
    seed: int = 0
    min_displacement: float = 0.25  # ground-truth floor for "moved"
    movable_classes: frozenset[str] = frozenset()
    min_move_displacement: float = 0.0  # placement floor when randomizing
    changeset: Path | None = None


@dataclass(frozen=True)
class SceneOutcome:
    scene_index: int
    scene_id: str
    report: RelocationReport
    matrix: ConfusionMatrix


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    scenes: tuple[SceneOutcome, ...]
    pooled: ConfusionMatrix
    metrics: Metrics


def score_report(report: RelocationReport, truth: GroundTruth) -> ConfusionMatrix:
    """Tally one judgment per ground-truth object.

    Objects absent from the report (never confidently detected) count as
    predicted not-relocated. A report object the truth does not cover means
    the truth and report describe different scenes: CoverageError.
    """
    for entry in report.entries:
        if not truth.covers(entry.object_key):
            raise CoverageError(f"object {entry.object_key!r} in report is missing from ground truth")
    predicted_relocated = {e.object_key: e.decision != "unchanged" for e in report.entries}
    tp = fn = fp = tn = 0
    for object_id in truth.object_ids:
        actual = truth.is_relocated(object_id)
        predicted = predicted_relocated.get(object_id, False)
        if actual and predicted:
            tp += 1
        elif actual:
            fn += 1
        elif predicted:
            fp += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, fn=fn, fp=fp, tn=tn)


def derive_metrics(cm: ConfusionMatrix) -> Metrics:
    return Metrics(
        precision=cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp > 0 else None,
        recall=cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn > 0 else None,
        accuracy=(cm.tp + cm.tn) / cm.total if cm.total > 0 else None,
    )


def derived_seed(root_seed: int, role: str, index: int) -> int:
    """Stable 64-bit sub-seed for one stage of an experiment."""
    payload = f"{root_seed & _SEED_MASK}:{role}:{index}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Capture the base scene once, then derive, capture, track, and score
    each comparison scene. Deterministic given the config; per-stage seeds
    are derived from cfg.seed, so the seed fields inside cfg.detector are
    not used here.
    """
    base = load_scene(cfg.base_scene)
    route = load_route(cfg.route)
    changes = load_changeset(cfg.changeset) if cfg.changeset is not None else None
    if changes is None and not cfg.movable_classes:
        raise SchemaError("experiment: needs movable_classes or a changeset to derive scenes")

    pre_detector = dataclasses.replace(cfg.detector, seed=derived_seed(cfg.seed, "capture", 0))
    pre_log = capture_scene(base, route, cfg.camera, pre_detector)

    outcomes = []
    pooled = ConfusionMatrix()
    for i in range(1, cfg.n_random_scenes + 1):
        try:
            if changes is not None:
                post_scene = apply_changes(base, changes)
            else:
                post_scene = randomize_placements(
                    base,
                    derived_seed(cfg.seed, "scene", i),
                    cfg.movable_classes,
                    min_displacement=cfg.min_move_displacement,
                )
            post_detector = dataclasses.replace(cfg.detector, seed=derived_seed(cfg.seed, "capture", i))
            post_log = capture_scene(post_scene, route, cfg.camera, post_detector)
            report = compare_scenes(pre_log, post_log, cfg.tracker)
            truth = ground_truth_relocations(base, post_scene, cfg.min_displacement)
            matrix = score_report(report, truth)
        except RelotrackError as exc:
            raise type(exc)(f"scene {i}: {exc}") from exc
        outcomes.append(SceneOutcome(scene_index=i, scene_id=post_scene.scene_id, report=report, matrix=matrix))
        pooled = pooled + matrix
    return ExperimentResult(
        config=cfg,
        scenes=tuple(outcomes),
        pooled=pooled,
        metrics=derive_metrics(pooled),
    )


# ---------------------------------------------------------------------------
# experiment config / result files

def parse_experiment_config(doc: dict, base_dir: Path) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise SchemaError("experiment: top level must be an object")
    check_format_version(doc, "experiment")
    n = _get(doc, "n_random_scenes", "experiment", default=9)
    if isinstance(n, bool) or not isinstance(n, int):
        raise SchemaError("experiment.n_random_scenes: expected an integer")
    if n < 1:
        raise SchemaError("experiment.n_random_scenes: must be >= 1")
    seed = _get(doc, "seed", "experiment", default=0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise SchemaError("experiment.seed: expected an integer")
    movable = frozenset(
        _as_string(c, f"experiment.movable_classes[{k}]")
        for k, c in enumerate(_as_list(_get(doc, "movable_classes", "experiment", default=[]), "experiment.movable_classes"))
    )
    changeset = _get(doc, "changeset", "experiment", default=None)
    if changeset is not None:
        changeset = base_dir / _as_string(changeset, "experiment.changeset")
    min_displacement = _as_number(_get(doc, "min_displacement", "experiment", default=0.25), "experiment.min_displacement")
    min_move = _as_number(_get(doc, "min_move_displacement", "experiment", default=0.0), "experiment.min_move_displacement")
    if min_displacement < 0 or min_move < 0:
        raise SchemaError("experiment: displacement floors must be non-negative")
    return ExperimentConfig(
        base_scene=base_dir / _as_string(_get(doc, "base_scene", "experiment"), "experiment.base_scene"),
        route=base_dir / _as_string(_get(doc, "route", "experiment"), "experiment.route"),
        camera=parse_camera(_get(doc, "camera", "experiment", default={}), "experiment.camera"),
        detector=parse_detector_config(_get(doc, "detector", "experiment", default={}), "experiment.detector"),
        tracker=parse_tracker_config(_get(doc, "tracker", "experiment", default={}), "experiment.tracker"),
        n_random_scenes=n,
        seed=seed,
        min_displacement=min_displacement,
        movable_classes=movable,
        min_move_displacement=min_move,
        changeset=changeset,
    )


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_experiment_config(read_json_document(path, "experiment config"), path.parent)


def _matrix_to_dict(cm: ConfusionMatrix) -> dict:
    return {"tp": cm.tp, "fn": cm.fn, "fp": cm.fp, "tn": cm.tn}


def _round4(value: float | None) -> float | None:
    return None if value is None else round(value, 4)


def result_to_dict(result: ExperimentResult) -> dict:
    cfg = result.config
    return {
        "format_version": FORMAT_VERSION,
        "config": {
            "base_scene": str(cfg.base_scene),
            "route": str(cfg.route),
            "changeset": None if cfg.changeset is None else str(cfg.changeset),
            "n_random_scenes": cfg.n_random_scenes,
            "seed": cfg.seed,
            "min_displacement": cfg.min_displacement,
            "movable_classes": sorted(cfg.movable_classes),
            "min_move_displacement": cfg.min_move_displacement,
            "camera": camera_to_dict(cfg.camera),
            "detector": detector_to_dict(cfg.detector),
            "tracker": tracker_to_dict(cfg.tracker),
        },
        "scenes": [
            {"scene_index": s.scene_index, "scene_id": s.scene_id, "matrix": _matrix_to_dict(s.matrix)}
            for s in result.scenes
        ],
        "pooled": _matrix_to_dict(result.pooled),
        "metrics": {
            "precision": _round4(result.metrics.precision),
            "recall": _round4(result.metrics.recall),
            "accuracy": _round4(result.metrics.accuracy),
        },
    }


def save_experiment_result(result: ExperimentResult, path: str | Path) -> None:
    write_text_atomic(path, dump_json(result_to_dict(result)))


def _metric_text(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def render_experiment_table(result: ExperimentResult) -> str:
    cm = result.pooled
    m = result.metrics
    width = max(len(str(v)) for v in (cm.tp, cm.fn, cm.fp, cm.tn))
    lines = [
        f"scenes: {len(result.scenes)}   objects judged: {cm.total}",
        "",
        "                     predicted",
        "                     relocated    unchanged",
        f"actual relocated     {str(cm.tp).rjust(width)} (tp)     {str(cm.fn).rjust(width)} (fn)",
        f"actual unchanged     {str(cm.fp).rjust(width)} (fp)     {str(cm.tn).rjust(width)} (tn)",
        "",
        f"precision  {_metric_text(m.precision)}",
        f"recall     {_metric_text(m.recall)}",
        f"accuracy   {_metric_text(m.accuracy)}",
    ]
    return "\n".join(lines) + "\n"
