"""Anchor selection and radius grouping for the spatial encoder.

Grouping depends only on vertex positions, so it is computed once per frame
in numpy and handed to the network as integer index tensors.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..geometry import farthest_point_sampling


@dataclass
class FrameGroups:
    anchors: list      # per block: (m_k,) indices into the previous level
    neighbors: list    # per block: (m_k, K) indices into the previous level, nearest first


def ball_query(points, anchor_idx, radius: float, k: int) -> np.ndarray:
    """Up to ``k`` nearest neighbours within ``radius`` of each anchor.

    Slots without a neighbour repeat the anchor's own index, so a MAX over the
    group is unaffected and an isolated anchor sees only itself (delta = 0).
    """
    k = min(k, len(points))
    tree = cKDTree(points)
    dist, idx = tree.query(points[anchor_idx], k=k, distance_upper_bound=radius * (1 + 1e-12))
    idx = np.asarray(idx).reshape(len(anchor_idx), k)
    missing = idx >= len(points)
    idx = np.where(missing, np.asarray(anchor_idx)[:, None], idx)
    return idx.astype(np.int64)


def build_groups(points, cfg) -> FrameGroups:
    pts = np.asarray(points, dtype=np.float64)
    anchors, neighbors = [], []
    for n_anchor, radius in zip(cfg.anchor_counts(len(pts)), cfg.radii):
        a = farthest_point_sampling(pts, n_anchor)
        neighbors.append(ball_query(pts, a, radius, cfg.max_neighbors))
        anchors.append(a.astype(np.int64))
        pts = pts[a]
    return FrameGroups(anchors, neighbors)


def stack_groups(groups: list) -> tuple:
    """List of FrameGroups (one per frame) -> per-block stacked arrays."""
    n_blocks = len(groups[0].anchors)
    anchors = [np.stack([g.anchors[b] for g in groups]) for b in range(n_blocks)]
    neighbors = [np.stack([g.neighbors[b] for g in groups]) for b in range(n_blocks)]
    return anchors, neighbors


def window_groups(hand_vertices, cfg) -> tuple:
    """Groups for every frame of a (T, N, 3) window, stacked per block."""
    return stack_groups([build_groups(v, cfg) for v in hand_vertices])
