"""Hand-centric per-vertex features.

``closest_vertex`` rows are ``(o_hat - h, h)``: the displacement from each hand
vertex to its nearest object vertex followed by the hand vertex position,
both in world coordinates.  The other kinds are the alternatives used for
comparison: object centroid, the eight bounding-box corners, or the hand
positions alone.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .geometry import Aabb, as_points, nearest_vertices
from .sequence_io import InteractionSequence

DEFAULT_OBJECT_POINTS = 2048


class RepresentationKind(str, Enum):
    CLOSEST_VERTEX = "closest_vertex"
    OBJECT_CENTER = "object_center"
    BOUNDING_BOX = "bounding_box"
    HAND_VERTICES = "hand_vertices"


FEATURE_WIDTH = {
    RepresentationKind.CLOSEST_VERTEX: 6,
    RepresentationKind.OBJECT_CENTER: 6,
    RepresentationKind.BOUNDING_BOX: 27,
    RepresentationKind.HAND_VERTICES: 3,
}


def feature_width(kind) -> int:
    return FEATURE_WIDTH[RepresentationKind(kind)]


def downsample_cloud(points, n_points: int = DEFAULT_OBJECT_POINTS) -> np.ndarray:
    """Evenly strided subset of at most ``n_points`` points (order preserved)."""
    pts = as_points(points)
    if len(pts) <= n_points:
        return pts
    idx = (np.arange(n_points) * len(pts)) // n_points
    return pts[idx]


def compute_hand_centric(hand, obj) -> np.ndarray:
    """(N, 6) rows of displacement-to-closest-object-vertex and hand position."""
    hand = as_points(hand, "hand")
    _, disp = nearest_vertices(hand, obj)
    return np.concatenate([disp, hand], axis=1)


def compute_variant(kind, hand, obj) -> np.ndarray:
    kind = RepresentationKind(kind)
    hand = as_points(hand, "hand")
    obj = as_points(obj, "object")
    if kind is RepresentationKind.CLOSEST_VERTEX:
        return compute_hand_centric(hand, obj)
    if kind is RepresentationKind.OBJECT_CENTER:
        return np.concatenate([obj.mean(axis=0) - hand, hand], axis=1)
    if kind is RepresentationKind.BOUNDING_BOX:
        corners = Aabb.of(obj).corners()
        disp = corners[None, :, :] - hand[:, None, :]
        return np.concatenate([disp.reshape(len(hand), 24), hand], axis=1)
    return hand.copy()


def sequence_features(seq: InteractionSequence, kind=RepresentationKind.CLOSEST_VERTEX,
                      n_object_points: int = DEFAULT_OBJECT_POINTS, model=None) -> np.ndarray:
    """(T, N, C) features for every frame of a sequence."""
    hand = seq.hand_vertices(model)
    local = downsample_cloud(seq.object_mesh.vertices, n_object_points)
    out = []
    for t in range(seq.n_frames):
        obj = local @ seq.object_rotations[t].T + seq.object_translations[t]
        out.append(compute_variant(kind, hand[t], obj))
    return np.stack(out)
