"""Best-frame association and relocation decisions.

Every detection of an object is scored by how well its frame shows the
object: near, large, centered, and confidently detected frames score high.
The frame with the best score is that object's anchor in a traversal.
Because both traversals follow the identical route, frame indices are
aligned, and an object whose anchor frame moves by more than the frame
distance threshold between traversals has very likely been relocated.

The scoring formula over normalized features, all in [0, 1]:

    score = 2 * (1 - depth) + 10 * width * height + (1 - center_offset) + confidence

which ranges over [0, 14]. Detections must carry confidence strictly above
``min_confidence`` (default 0.80) to participate at all.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import ProtocolError, SchemaError, ValidationError
from .fileio import (
    FORMAT_VERSION,
    check_format_version,
    dump_json,
    read_json_document,
    write_text_atomic,
)
from .percept import Detection, FrameLog, check_frame_log
from .scene import _as_list, _as_number, _get

DECISIONS = ("unchanged", "relocated", "removed", "added")

_CORNER_OFFSET = math.sqrt(2.0) / 2.0  # center-to-corner distance in the unit image


@dataclass(frozen=True)
class Features:
    """Detection features normalized to [0, 1]; inputs to the score."""

    depth: float
    width: float
    height: float
    center_offset: float  # 0 at image center, 1 at a corner
    confidence: float


@dataclass(frozen=True)
class ScoredDetection:
    detection: Detection
    features: Features
    score: float


@dataclass(frozen=True)
class TrackerConfig:
    """Decision parameters.

    max_depth is the depth normalization range in meters; None means
    "inherit from the frame log's camera", resolved when a log is available.
    """

    frame_distance_threshold: int = 9
    min_confidence: float = 0.80
    max_depth: float | None = None


@dataclass(frozen=True)
class BestFrame:
    """The frame in which an object is seen best, after confidence
    filtering. runner_up_gap is the score margin over the next-best frame
    (the score itself when no other frame shows the object)."""

    object_key: str
    frame_index: int
    score: float
    runner_up_gap: float


@dataclass(frozen=True)
class ReportEntry:
    object_key: str
    class_label: str
    pre_best: BestFrame | None
    post_best: BestFrame | None
    decision: str
    frame_distance: int | None
    ambiguous_multiplicity: bool = False


@dataclass(frozen=True)
class RelocationReport:
    entries: tuple[ReportEntry, ...]
    config: TrackerConfig

    def summary(self) -> dict[str, int]:
        counts = {decision: 0 for decision in DECISIONS}
        for entry in self.entries:
            counts[entry.decision] += 1
        return counts

    def decisions(self) -> dict[str, str]:
        return {entry.object_key: entry.decision for entry in self.entries}


def validate_tracker_config(cfg: TrackerConfig, source: str = "tracker") -> None:
    if not isinstance(cfg.frame_distance_threshold, int) or cfg.frame_distance_threshold < 0:
        raise ValidationError(f"{source}.frame_distance_threshold: must be a non-negative integer")
    if not (0.0 <= cfg.min_confidence <= 1.0):
        raise ValidationError(f"{source}.min_confidence: must be in [0, 1]")
    if cfg.max_depth is not None and cfg.max_depth <= 0:
        raise ValidationError(f"{source}.max_depth: must be positive when set")


def _resolved(cfg: TrackerConfig, log: FrameLog) -> TrackerConfig:
    validate_tracker_config(cfg)
    if cfg.max_depth is not None:
        return cfg
    return dataclasses.replace(cfg, max_depth=log.camera.max_depth)


def normalize_features(d: Detection, cfg: TrackerConfig) -> Features:
    """Map a detection to the normalized feature vector.

    Depth is scaled by cfg.max_depth and clamped; width/height come straight
    from the normalized bbox; center_offset is the distance from the image
    center scaled so a corner-centered box maps to exactly 1.
    """
    if cfg.max_depth is None:
        raise ValidationError("tracker.max_depth is unresolved; supply it or use a FrameLog camera")
    cx, cy, w, h = d.bbox
    return Features(
        depth=min(1.0, max(0.0, d.depth / cfg.max_depth)),
        width=w,
        height=h,
        center_offset=min(1.0, math.hypot(cx - 0.5, cy - 0.5) / _CORNER_OFFSET),
        confidence=d.confidence,
    )


def visibility_score(f: Features) -> float:
    """Scalar rating of how well a single detection shows its object.

    Rewards close, large, centered, confident sightings; ranges 0 to 14.

    >>> visibility_score(Features(1.0, 0.0, 0.0, 1.0, 0.0))
    0.0
    >>> visibility_score(Features(0.0, 1.0, 1.0, 0.0, 1.0))
    14.0
    >>> visibility_score(Features(0.5, 0.2, 0.3, 0.4, 0.9))
    3.1
    """
    return 2.0 * (1.0 - f.depth) + 10.0 * f.width * f.height + (1.0 - f.center_offset) + f.confidence


def score_detection(d: Detection, cfg: TrackerConfig) -> ScoredDetection:
    features = normalize_features(d, cfg)
    return ScoredDetection(detection=d, features=features, score=visibility_score(features))


def _best_from_frame_scores(object_key: str, frame_scores: dict[int, float]) -> BestFrame | None:
    if not frame_scores:
        return None
    # Ascending frame order + strict improvement = ties break to the
    # earliest frame.
    best_frame = -1
    best_score = -math.inf
    for frame_index in sorted(frame_scores):
        if frame_scores[frame_index] > best_score:
            best_frame = frame_index
            best_score = frame_scores[frame_index]
    others = [s for f, s in frame_scores.items() if f != best_frame]
    gap = best_score - max(others) if others else best_score
    return BestFrame(object_key=object_key, frame_index=best_frame, score=best_score, runner_up_gap=gap)


def _frame_scores_by_key(log: FrameLog, cfg: TrackerConfig) -> dict[str, dict[int, float]]:
    """Per object, the best score among its filtered detections in each
    frame (frames where nothing survives the confidence filter are absent)."""
    scores: dict[str, dict[int, float]] = {}
    for frame_index, detections in log.frames.items():
        for d in detections:
            if d.confidence <= cfg.min_confidence:
                continue
            score = visibility_score(normalize_features(d, cfg))
            per_frame = scores.setdefault(d.object_key, {})
            if score > per_frame.get(frame_index, -math.inf):
                per_frame[frame_index] = score
    return scores


def best_associated_frame(log: FrameLog, object_key: str, cfg: TrackerConfig) -> BestFrame | None:
    """Select the frame that shows object_key best.

    Only detections with confidence strictly above cfg.min_confidence are
    considered; score ties go to the earliest frame. Returns None when no
    detection survives the filter.
    """
    cfg = _resolved(cfg, log)
    frame_scores: dict[int, float] = {}
    for frame_index, detections in log.frames.items():
        for d in detections:
            if d.object_key != object_key or d.confidence <= cfg.min_confidence:
                continue
            score = visibility_score(normalize_features(d, cfg))
            if score > frame_scores.get(frame_index, -math.inf):
                frame_scores[frame_index] = score
    return _best_from_frame_scores(object_key, frame_scores)


def _ambiguous_keys(log: FrameLog) -> set[str]:
    """Keys detected more than once within a single frame. Happens when an
    external class-keyed log sees several instances of one class at once;
    their per-frame reduction to a single score makes the result ambiguous."""
    ambiguous: set[str] = set()
    for detections in log.frames.values():
        seen: set[str] = set()
        for d in detections:
            if d.object_key in seen:
                ambiguous.add(d.object_key)
            seen.add(d.object_key)
    return ambiguous


def compare_scenes(pre: FrameLog, post: FrameLog, cfg: TrackerConfig) -> RelocationReport:
    """Compare two traversals of the same route and decide, per object,
    whether it was relocated.

    An object with a best frame in both logs is "relocated" when its frame
    distance strictly exceeds cfg.frame_distance_threshold, else
    "unchanged". Objects surviving the confidence filter in only one log
    are "removed" (pre only) or "added" (post only); objects surviving in
    neither are omitted. Entries are sorted by object_key.

    Raises ProtocolError when the logs come from different routes or
    cameras, since frame distances are only meaningful on the shared frame
    ordering.
    """
    if pre.route_hash != post.route_hash:
        raise ProtocolError(
            f"route mismatch: pre log hash {pre.route_hash[:12]}... != post log hash {post.route_hash[:12]}..."
        )
    if pre.camera != post.camera:
        raise ProtocolError("camera mismatch between pre and post logs")
    cfg = _resolved(cfg, pre)

    pre_best = {k: _best_from_frame_scores(k, fs) for k, fs in _frame_scores_by_key(pre, cfg).items()}
    post_best = {k: _best_from_frame_scores(k, fs) for k, fs in _frame_scores_by_key(post, cfg).items()}

    labels: dict[str, str] = {}
    for log in (pre, post):
        for detections in log.frames.values():
            for d in detections:
                labels.setdefault(d.object_key, d.class_label)
    ambiguous = _ambiguous_keys(pre) | _ambiguous_keys(post)

    entries = []
    for key in sorted(set(pre_best) | set(post_best)):
        a = pre_best.get(key)
        b = post_best.get(key)
        if a is not None and b is not None:
            distance = abs(a.frame_index - b.frame_index)
            decision = "relocated" if distance > cfg.frame_distance_threshold else "unchanged"
        elif a is not None:
            distance, decision = None, "removed"
        else:
            distance, decision = None, "added"
        entries.append(
            ReportEntry(
                object_key=key,
                class_label=labels.get(key, ""),
                pre_best=a,
                post_best=b,
                decision=decision,
                frame_distance=distance,
                ambiguous_multiplicity=key in ambiguous,
            )
        )
    return RelocationReport(entries=tuple(entries), config=cfg)


class RelocationTracker(BaseEstimator):
    """Detects relocated objects between two traversals of a fixed route.

    The estimator is fitted on the frame log of a reference traversal;
    ``predict`` takes the log of a later traversal of the same route and
    returns a :class:`RelocationReport` listing, per object, the best
    frame in each log and the unchanged/relocated/removed/added decision.

    Parameters
    ----------
    frame_distance_threshold : int, default=9
        Best-frame index distance that must be strictly exceeded to flag
        a relocation.
    min_confidence : float, default=0.8
        Detections at or below this confidence are ignored.
    max_depth : float or None, default=None
        Depth normalization range in meters; None inherits the camera
        max_depth of the fitted log.
    """

    def __init__(self, frame_distance_threshold: int = 9, min_confidence: float = 0.8, max_depth: float | None = None):
        self.frame_distance_threshold = frame_distance_threshold
        self.min_confidence = min_confidence
        self.max_depth = max_depth

    def _config(self) -> TrackerConfig:
        cfg = TrackerConfig(
            frame_distance_threshold=self.frame_distance_threshold,
            min_confidence=self.min_confidence,
            max_depth=self.max_depth,
        )
        validate_tracker_config(cfg)
        return cfg

    def fit(self, X: FrameLog, y=None) -> "RelocationTracker":
        """Store the reference traversal and its per-object best frames."""
        check_frame_log(X)
        cfg = _resolved(self._config(), X)
        self.baseline_log_ = X
        self.baseline_best_frames_ = {
            key: _best_from_frame_scores(key, frame_scores)
            for key, frame_scores in _frame_scores_by_key(X, cfg).items()
        }
        return self

    def predict(self, X: FrameLog) -> RelocationReport:
        """Compare a traversal against the fitted reference."""
        check_is_fitted(self, "baseline_log_")
        check_frame_log(X)
        return compare_scenes(self.baseline_log_, X, self._config())


# ---------------------------------------------------------------------------
# report files

def tracker_to_dict(cfg: TrackerConfig) -> dict:
    return {
        "frame_distance_threshold": cfg.frame_distance_threshold,
        "min_confidence": cfg.min_confidence,
        "max_depth": cfg.max_depth,
    }


def parse_tracker_config(doc: dict, source: str = "tracker") -> TrackerConfig:
    if not isinstance(doc, dict):
        raise SchemaError(f"{source}: expected an object")
    defaults = TrackerConfig()
    threshold = _get(doc, "frame_distance_threshold", source, default=defaults.frame_distance_threshold)
    if isinstance(threshold, bool) or not isinstance(threshold, int):
        raise SchemaError(f"{source}.frame_distance_threshold: expected an integer")
    max_depth = _get(doc, "max_depth", source, default=None)
    if max_depth is not None:
        max_depth = _as_number(max_depth, f"{source}.max_depth")
    cfg = TrackerConfig(
        frame_distance_threshold=threshold,
        min_confidence=_as_number(_get(doc, "min_confidence", source, default=defaults.min_confidence), f"{source}.min_confidence"),
        max_depth=max_depth,
    )
    validate_tracker_config(cfg, source)
    return cfg


def load_tracker_config(path: str | Path) -> TrackerConfig:
    doc = read_json_document(path, "tracker config")
    check_format_version(doc, "tracker config")
    return parse_tracker_config(doc)


def save_tracker_config(cfg: TrackerConfig, path: str | Path) -> None:
    write_text_atomic(path, dump_json({"format_version": FORMAT_VERSION, **tracker_to_dict(cfg)}))


def _best_to_dict(best: BestFrame | None) -> dict | None:
    if best is None:
        return None
    return {"frame_index": best.frame_index, "score": best.score, "runner_up_gap": best.runner_up_gap}


def report_to_dict(report: RelocationReport) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": tracker_to_dict(report.config),
        "summary": report.summary(),
        "entries": [
            {
                "object_key": e.object_key,
                "class_label": e.class_label,
                "decision": e.decision,
                "frame_distance": e.frame_distance,
                "ambiguous_multiplicity": e.ambiguous_multiplicity,
                "pre_best": _best_to_dict(e.pre_best),
                "post_best": _best_to_dict(e.post_best),
            }
            for e in report.entries
        ],
    }


def _parse_best(doc, object_key: str, path: str) -> BestFrame | None:
    if doc is None:
        return None
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected an object or null")
    frame_index = _get(doc, "frame_index", path)
    if isinstance(frame_index, bool) or not isinstance(frame_index, int):
        raise SchemaError(f"{path}.frame_index: expected an integer")
    return BestFrame(
        object_key=object_key,
        frame_index=frame_index,
        score=_as_number(_get(doc, "score", path), f"{path}.score"),
        runner_up_gap=_as_number(_get(doc, "runner_up_gap", path), f"{path}.runner_up_gap"),
    )


def load_report(path: str | Path) -> RelocationReport:
    doc = read_json_document(path, "report")
    check_format_version(doc, "report")
    config = parse_tracker_config(_get(doc, "config", "report"), "report.config")
    entries = []
    for k, edoc in enumerate(_as_list(_get(doc, "entries", "report"), "report.entries")):
        path_k = f"entries[{k}]"
        if not isinstance(edoc, dict):
            raise SchemaError(f"{path_k}: expected an object")
        key = str(_get(edoc, "object_key", path_k))
        decision = _get(edoc, "decision", path_k)
        if decision not in DECISIONS:
            raise SchemaError(f"{path_k}.decision: expected one of {DECISIONS}")
        distance = _get(edoc, "frame_distance", path_k, default=None)
        if distance is not None and (isinstance(distance, bool) or not isinstance(distance, int)):
            raise SchemaError(f"{path_k}.frame_distance: expected an integer or null")
        entries.append(
            ReportEntry(
                object_key=key,
                class_label=str(_get(edoc, "class_label", path_k, default="")),
                pre_best=_parse_best(_get(edoc, "pre_best", path_k, default=None), key, f"{path_k}.pre_best"),
                post_best=_parse_best(_get(edoc, "post_best", path_k, default=None), key, f"{path_k}.post_best"),
                decision=decision,
                frame_distance=distance,
                ambiguous_multiplicity=bool(_get(edoc, "ambiguous_multiplicity", path_k, default=False)),
            )
        )
    return RelocationReport(entries=tuple(entries), config=config)


def save_report(report: RelocationReport, path: str | Path) -> None:
    write_text_atomic(path, dump_json(report_to_dict(report)))


def render_report_table(report: RelocationReport) -> str:
    """Plain-text per-object table: object, pre frame, post frame, distance,
    decision. Objects with ambiguous per-frame multiplicity are starred."""
    header = ("object", "pre", "post", "dist", "decision")
    rows = [header]
    starred = False
    for e in report.entries:
        name = e.object_key + ("*" if e.ambiguous_multiplicity else "")
        starred = starred or e.ambiguous_multiplicity
        rows.append(
            (
                name,
                str(e.pre_best.frame_index) if e.pre_best else "-",
                str(e.post_best.frame_index) if e.post_best else "-",
                str(e.frame_distance) if e.frame_distance is not None else "-",
                e.decision,
            )
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for r in rows:
        left = r[0].ljust(widths[0])
        mids = "  ".join(r[i].rjust(widths[i]) for i in range(1, 4))
        lines.append(f"{left}  {mids}  {r[4]}")
    counts = report.summary()
    lines.append("")
    lines.append("  ".join(f"{k}={counts[k]}" for k in DECISIONS))
    if starred:
        lines.append("* multiple detections of this key in one frame; decision may conflate instances")
    return "\n".join(lines) + "\n"
