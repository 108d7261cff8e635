"""MPJPE, MPVPE, intersection volume and contact IoU, plus a report type.

Positional errors are in millimeters, volumes in cm^3, C-IoU in percent.
A hand vertex is in contact when its signed distance to the object surface
is at most 2 mm; vertices inside the object therefore always count.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .geometry import MeshQuery, TriangleMesh, voxelized_intersection_volume
from .hand_model import LbsModel
from .sequence_io import InteractionSequence

SUMMARY_COLUMNS = ("mpjpe", "mpvpe", "iv", "ciou")
CONTACT_THRESHOLD = 0.002
IV_VOXEL = 0.002


class MetricsError(ValueError):
    pass


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise MetricsError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.shape[-1] != 3:
        raise MetricsError("last axis must hold xyz coordinates")
    return pred, gt


def per_frame_error(pred, gt) -> np.ndarray:
    """Mean point distance per frame (mm); accepts (T, P, 3) or (P, 3)."""
    pred, gt = _pair(pred, gt)
    if pred.ndim == 2:
        pred, gt = pred[None], gt[None]
    return np.linalg.norm(pred - gt, axis=-1).mean(axis=-1) * 1000.0


def mpjpe(pred_joints, gt_joints) -> float:
    return float(per_frame_error(pred_joints, gt_joints).mean())


def mpvpe(pred_vertices, gt_vertices) -> float:
    return float(per_frame_error(pred_vertices, gt_vertices).mean())


def contact_map(hand_vertices, object_mesh: TriangleMesh, threshold: float = CONTACT_THRESHOLD,
                mode: str = "signed", query: MeshQuery | None = None) -> np.ndarray:
    """Boolean per-vertex contact.

    ``mode="signed"``: signed distance <= threshold (penetration counts);
    ``mode="band"``: |signed distance| <= threshold.
    """
    query = query or MeshQuery(object_mesh)
    d = query.signed(hand_vertices, cap=max(threshold * 4, 1e-6))
    if mode == "signed":
        return d <= threshold
    if mode == "band":
        return np.abs(d) <= threshold
    raise MetricsError(f"unknown contact mode {mode!r}")


def iou_percent(a, b, pooled: bool = True) -> float:
    """IoU of boolean maps (x100); 100 when both are empty.

    With ``pooled=False`` maps are (T, N) and the per-frame IoUs are averaged.
    """
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise MetricsError(f"contact map shapes differ: {a.shape} vs {b.shape}")
    if not pooled:
        return float(np.mean([iou_percent(x, y) for x, y in zip(a, b)]))
    union = np.count_nonzero(a | b)
    if union == 0:
        return 100.0
    return 100.0 * np.count_nonzero(a & b) / union


def contact_maps(hand_seq, object_meshes, threshold=CONTACT_THRESHOLD, mode="signed") -> np.ndarray:
    return np.stack([contact_map(v, o, threshold, mode) for v, o in zip(hand_seq, object_meshes)])


def contact_iou(pred_vertices, gt_vertices, object_meshes, threshold=CONTACT_THRESHOLD,
                pooled: bool = True, mode: str = "signed") -> float:
    pred, gt = _pair(pred_vertices, gt_vertices)
    meshes = list(object_meshes)
    if len(meshes) != len(pred):
        raise MetricsError(f"{len(meshes)} object meshes for {len(pred)} frames")
    a, b = [], []
    for p, g, o in zip(pred, gt, meshes):
        q = MeshQuery(o)
        a.append(contact_map(p, o, threshold, mode, q))
        b.append(contact_map(g, o, threshold, mode, q))
    return iou_percent(np.stack(a), np.stack(b), pooled)


def intersection_volumes(hand_meshes, object_meshes, voxel_size=IV_VOXEL) -> np.ndarray:
    return np.array([voxelized_intersection_volume(h, o, voxel_size) for h, o in zip(hand_meshes, object_meshes)])


def intersection_volume(hand_meshes, object_meshes, voxel_size=IV_VOXEL) -> float:
    return float(intersection_volumes(hand_meshes, object_meshes, voxel_size).mean())


@dataclass
class MetricsReport:
    mpjpe: float
    mpvpe: float
    iv: float
    ciou: float
    per_frame: dict = field(default_factory=dict)   # name -> (T,) array
    meta: dict = field(default_factory=dict)

    SUMMARY_KEYS = SUMMARY_COLUMNS

    def to_text(self) -> str:
        lines = [f"meta.{k}: {json.dumps(v, sort_keys=True)}" for k, v in sorted(self.meta.items())]
        lines += [f"{k}: {getattr(self, k)!r}" for k in self.SUMMARY_KEYS]
        return "\n".join(lines) + "\n"

    def per_frame_csv(self) -> str:
        names = sorted(self.per_frame)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame"] + names)
        n = len(next(iter(self.per_frame.values()))) if names else 0
        for t in range(n):
            w.writerow([t] + [repr(float(self.per_frame[k][t])) for k in names])
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str, per_frame_csv: str | None = None) -> "MetricsReport":
        values, meta = {}, {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, raw = line.partition(": ")
            if key.startswith("meta."):
                meta[key[5:]] = json.loads(raw)
            elif key in cls.SUMMARY_KEYS:
                values[key] = float(raw)
            else:
                raise MetricsError(f"unknown report field {key!r}")
        missing = [k for k in cls.SUMMARY_KEYS if k not in values]
        if missing:
            raise MetricsError(f"report is missing {', '.join(missing)}")
        per_frame = {}
        if per_frame_csv:
            rows = list(csv.reader(io.StringIO(per_frame_csv)))
            names = rows[0][1:]
            data = np.array([[float(x) for x in r[1:]] for r in rows[1:]]).reshape(-1, len(names))
            per_frame = {n: data[:, i] for i, n in enumerate(names)}
        return cls(**values, per_frame=per_frame, meta=meta)


def _joints_pair(pred: InteractionSequence, gt: InteractionSequence, model: LbsModel):
    # forward kinematics when both sides carry parameters, otherwise the
    # regressor applied to vertices on both sides so the two are comparable
    if pred.has_params and gt.has_params:
        return pred.hand_joints(model), gt.hand_joints(model)
    reg = model.regressor
    return (np.einsum("jn,tnk->tjk", reg, pred.hand_vertices(model)),
            np.einsum("jn,tnk->tjk", reg, gt.hand_vertices(model)))


def _sequence_terms(pred, gt, model, threshold, voxel_size, contact_mode):
    if pred.n_frames != gt.n_frames:
        raise MetricsError(f"frame counts differ: {pred.n_frames} vs {gt.n_frames}")
    pv, gv = pred.hand_vertices(model), gt.hand_vertices(model)
    if pv.shape != gv.shape:
        raise MetricsError(f"hand vertex shapes differ: {pv.shape} vs {gv.shape}")
    pj, gj = _joints_pair(pred, gt, model)
    objects = [gt.object_mesh_at(t) for t in range(gt.n_frames)]
    ivs = intersection_volumes([model.mesh(v) for v in pv], objects, voxel_size)
    a, b = [], []
    for p, g, o in zip(pv, gv, objects):
        q = MeshQuery(o)
        a.append(contact_map(p, o, threshold, contact_mode, q))
        b.append(contact_map(g, o, threshold, contact_mode, q))
    a, b = np.stack(a), np.stack(b)
    per_frame = {
        "mpjpe": per_frame_error(pj, gj),
        "mpvpe": per_frame_error(pv, gv),
        "iv": ivs,
        "ciou": np.array([iou_percent(x, y) for x, y in zip(a, b)]),
    }
    return per_frame, a, b


def evaluate_many(preds, gts, model: LbsModel | None = None, threshold: float = CONTACT_THRESHOLD,
                  voxel_size: float = IV_VOXEL, pooled: bool = True, contact_mode: str = "signed",
                  meta: dict | None = None) -> MetricsReport:
    """Metrics over several (pred, gt) sequence pairs, all frames pooled.

    The object track of each ground-truth sequence is used for both sides.
    """
    preds, gts = list(preds), list(gts)
    if len(preds) != len(gts) or not preds:
        raise MetricsError(f"need matching non-empty sequence lists, got {len(preds)} and {len(gts)}")
    model = model or gts[0].model()
    parts, maps_a, maps_b = [], [], []
    for k, (p, g) in enumerate(zip(preds, gts)):
        per_frame, a, b = _sequence_terms(p, g, model, threshold, voxel_size, contact_mode)
        per_frame["sequence"] = np.full(g.n_frames, float(k))
        parts.append(per_frame)
        maps_a.append(a)
        maps_b.append(b)
    per_frame = {key: np.concatenate([q[key] for q in parts]) for key in parts[0]}
    a, b = np.concatenate(maps_a), np.concatenate(maps_b)
    info = {"contact_threshold_m": threshold, "voxel_size_m": voxel_size,
            "ciou_pooling": "pooled" if pooled else "per_frame", "contact_mode": contact_mode}
    info.update(meta or {})
    return MetricsReport(mpjpe=float(per_frame["mpjpe"].mean()), mpvpe=float(per_frame["mpvpe"].mean()),
                         iv=float(per_frame["iv"].mean()), ciou=iou_percent(a, b, pooled), per_frame=per_frame,
                         meta=info)


def evaluate(pred: InteractionSequence, gt: InteractionSequence, model: LbsModel | None = None,
             threshold: float = CONTACT_THRESHOLD, voxel_size: float = IV_VOXEL, pooled: bool = True,
             contact_mode: str = "signed") -> MetricsReport:
    return evaluate_many([pred], [gt], model, threshold, voxel_size, pooled, contact_mode)
