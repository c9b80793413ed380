"""Low-level geometry shared by the scene and perception modules.

Conventions used everywhere in this package:

* world frame: x/z span the ground plane, y points up
* yaw is degrees about +y; yaw 0 faces +z, yaw 90 faces +x
* boxes are upright (rotated about y only) and centered on ``position``
"""

from __future__ import annotations

import itertools

import numpy as np

# Index pairs of the 12 edges of a box whose corners are ordered by
# itertools.product over the sign of each half extent.
BOX_EDGES: tuple[tuple[int, int], ...] = tuple(
    (a, b)
    for a, b in itertools.combinations(range(8), 2)
    if bin(a ^ b).count("1") == 1
)

_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


def yaw_matrix(yaw_deg: float) -> np.ndarray:
    """Rotation about +y taking box-local axes to world axes."""
    t = np.radians(yaw_deg)
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def box_corners(center, half_extents, yaw_deg: float) -> np.ndarray:
    """(8, 3) world-frame corners of an upright oriented box."""
    local = _SIGNS * np.asarray(half_extents, dtype=float)
    return np.asarray(center, dtype=float) + local @ yaw_matrix(yaw_deg).T


def footprint_corners(center, half_extents, yaw_deg: float) -> np.ndarray:
    """(4, 2) plan-view (x, z) corners of the box footprint."""
    cx, _, cz = np.asarray(center, dtype=float)
    hx, _, hz = np.asarray(half_extents, dtype=float)
    t = np.radians(yaw_deg)
    c, s = np.cos(t), np.sin(t)
    # Local x maps to (c, -s) in the (x, z) plane, local z to (s, c).
    ex = np.array([c, -s]) * hx
    ez = np.array([s, c]) * hz
    signs = np.array([(-1, -1), (-1, 1), (1, 1), (1, -1)], dtype=float)
    return np.array([cx, cz]) + signs[:, :1] * ex + signs[:, 1:] * ez


def _project_interval(corners: np.ndarray, axis: np.ndarray) -> tuple[float, float]:
    d = corners @ axis
    return float(d.min()), float(d.max())


def footprints_overlap(fp_a: np.ndarray, fp_b: np.ndarray, eps: float = 1e-9) -> bool:
    """Strict interior overlap of two convex plan-view quadrilaterals.

    Separating-axis test over the edge normals of both footprints.
    Touching edges or corners do not count as overlap.
    """
    for fp in (fp_a, fp_b):
        for i in range(len(fp)):
            edge = fp[(i + 1) % len(fp)] - fp[i]
            axis = np.array([-edge[1], edge[0]])
            n = np.linalg.norm(axis)
            if n < eps:
                continue
            axis /= n
            a_lo, a_hi = _project_interval(fp_a, axis)
            b_lo, b_hi = _project_interval(fp_b, axis)
            if a_hi <= b_lo + eps or b_hi <= a_lo + eps:
                return False
    return True


def segments_hit_boxes(
    origin: np.ndarray,
    endpoints: np.ndarray,
    centers: np.ndarray,
    half_extents: np.ndarray,
    yaws_deg: np.ndarray,
    eps: float = 1e-6,
    rots: np.ndarray | None = None,
) -> np.ndarray:
    """Test open segments from ``origin`` to each endpoint against many boxes.

    Returns a (S,) bool array: True where the segment strictly passes through
    the interior of at least one box. Grazing contact with a face does not
    block, and neither endpoint itself counts as inside. ``rots`` may carry
    precomputed (N, 3, 3) local-to-world rotations for the boxes.
    """
    endpoints = np.atleast_2d(np.asarray(endpoints, dtype=float))
    if len(centers) == 0:
        return np.zeros(len(endpoints), dtype=bool)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    half = np.atleast_2d(np.asarray(half_extents, dtype=float))
    yaws = np.atleast_1d(np.asarray(yaws_deg, dtype=float))

    if rots is None:
        rots = np.stack([yaw_matrix(y) for y in yaws])  # (N, 3, 3) local->world
    # World->local is the transpose; einsum applies it per box.
    rel_o = np.einsum("nji,nj->ni", rots, origin - centers)  # (N, 3)
    dirs = endpoints - origin  # (S, 3)
    rel_d = np.einsum("nji,sj->nsi", rots, dirs)  # (N, S, 3)

    o = rel_o[:, None, :]  # (N, 1, 3)
    h = half[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        lo = (-h - o) / rel_d
        hi = (h - o) / rel_d
    t_near = np.minimum(lo, hi)
    t_far = np.maximum(lo, hi)
    parallel = np.abs(rel_d) < 1e-12
    inside = np.abs(np.broadcast_to(o, rel_d.shape)) < h - 1e-12
    t_near = np.where(parallel, np.where(inside, -np.inf, np.inf), t_near)
    t_far = np.where(parallel, np.where(inside, np.inf, -np.inf), t_far)

    t_enter = t_near.max(axis=2)  # (N, S)
    t_exit = t_far.min(axis=2)
    hit = (t_enter < t_exit) & (t_exit > eps) & (t_enter < 1.0 - eps)
    return hit.any(axis=0)
