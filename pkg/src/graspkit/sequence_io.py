"""Interaction sequences: data model, synthetic grasp generator, wrist-distance
filtering and the binary sequence file format.

A sequence stores the hand either as per-frame pose vectors (with one shared
``beta``) or as raw per-frame vertices, plus a rigid object track over a
single object mesh.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from . import container
from .geometry import (MeshQuery, TriangleMesh, box_mesh, cylinder_mesh, icosphere, point_mesh_distances,
                       points_inside_mesh)
from .hand_model import (LbsModel, default_hand_model, lbs_forward, resolve_model, wrap_axis_angle)

log = logging.getLogger(__name__)

SEQUENCE_KIND = "interaction_sequence"
SEQUENCE_VERSION = 1
OBJECT_KINDS = ("sphere", "box", "cylinder")
DEFAULT_MODEL_REF = "default:778:16:7"
DEFAULT_WINDOW = 30

CONTACT_GAP = 0.001          # target fingertip clearance at the end of the grasp
MAX_FRAME_STEP = 0.0035      # per-frame vertex displacement budget of the generator (m)


class SequenceError(ValueError):
    pass


@dataclass(eq=False)
class InteractionSequence:
    object_mesh: TriangleMesh
    object_rotations: np.ndarray       # (T, 3, 3)
    object_translations: np.ndarray    # (T, 3)
    theta: np.ndarray | None = None    # (T, 3 + 3J)
    beta: np.ndarray | None = None     # (S,)
    vertices: np.ndarray | None = None  # (T, N, 3), used when no parameters exist
    hand_model_ref: str = DEFAULT_MODEL_REF
    object_mesh_ref: str = "custom"
    fps: float = 30.0
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.object_rotations = np.asarray(self.object_rotations, dtype=np.float64)
        self.object_translations = np.asarray(self.object_translations, dtype=np.float64)
        if self.theta is not None:
            self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.beta is not None:
            self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.vertices is not None:
            self.vertices = np.asarray(self.vertices, dtype=np.float64)
        validate_sequence(self)

    @property
    def n_frames(self) -> int:
        return self.object_rotations.shape[0]

    @property
    def has_params(self) -> bool:
        return self.theta is not None

    def model(self) -> LbsModel:
        return resolve_model(self.hand_model_ref)

    def hand_vertices(self, model: LbsModel | None = None) -> np.ndarray:
        if self.vertices is not None:
            return self.vertices
        model = model or self.model()
        return lbs_forward(model, self.beta, self.theta).vertices

    def hand_joints(self, model: LbsModel | None = None) -> np.ndarray:
        """Posed joints from forward kinematics, or regressed from vertices."""
        model = model or self.model()
        if self.theta is not None:
            return lbs_forward(model, self.beta, self.theta).joints
        return np.einsum("jn,tnk->tjk", model.regressor, self.vertices)

    def object_vertices(self, t: int) -> np.ndarray:
        return self.object_mesh.vertices @ self.object_rotations[t].T + self.object_translations[t]

    def object_mesh_at(self, t: int) -> TriangleMesh:
        return self.object_mesh.transformed(self.object_rotations[t], self.object_translations[t])

    def slice(self, start: int, stop: int) -> "InteractionSequence":
        s = slice(start, stop)
        return replace(
            self,
            object_rotations=self.object_rotations[s].copy(),
            object_translations=self.object_translations[s].copy(),
            theta=None if self.theta is None else self.theta[s].copy(),
            vertices=None if self.vertices is None else self.vertices[s].copy(),
            meta={**self.meta, "slice": [int(start), int(stop)]},
        )

    def with_vertices(self, vertices, **meta) -> "InteractionSequence":
        """Vertex-only copy (e.g. network output) sharing the object track."""
        return replace(self, theta=None, beta=None, vertices=np.asarray(vertices, dtype=np.float64),
                       meta={**self.meta, **meta})

    def with_params(self, beta, theta, **meta) -> "InteractionSequence":
        return replace(self, theta=np.asarray(theta, dtype=np.float64), beta=np.asarray(beta, dtype=np.float64),
                       vertices=None, meta={**self.meta, **meta})


def validate_sequence(seq: InteractionSequence) -> None:
    T = seq.object_rotations.shape[0]
    if T < 1:
        raise SequenceError("sequence must contain at least one frame")
    if seq.object_rotations.shape != (T, 3, 3) or seq.object_translations.shape != (T, 3):
        raise SequenceError("object track must be (T, 3, 3) rotations and (T, 3) translations")
    if (seq.theta is None) == (seq.vertices is None):
        raise SequenceError("a sequence stores either hand parameters or hand vertices (exactly one)")
    if seq.theta is not None:
        if seq.theta.ndim != 2 or seq.theta.shape[0] != T:
            raise SequenceError(f"theta must be (T={T}, D), got {seq.theta.shape}")
        if seq.beta is None or seq.beta.ndim != 1:
            raise SequenceError("parameter sequences need a 1-D beta")
    if seq.vertices is not None and (seq.vertices.ndim != 3 or seq.vertices.shape[0] != T
                                     or seq.vertices.shape[2] != 3):
        raise SequenceError(f"vertices must be (T={T}, N, 3), got {seq.vertices.shape}")
    for name in ("object_rotations", "object_translations", "theta", "beta", "vertices"):
        arr = getattr(seq, name)
        if arr is not None and not np.all(np.isfinite(arr)):
            raise SequenceError(f"{name} contains non-finite values")
    R = seq.object_rotations
    if not np.allclose(R @ np.swapaxes(R, 1, 2), np.eye(3), atol=1e-9):
        raise SequenceError("object rotation is not orthonormal")
    if np.any(np.linalg.det(R) < 0):
        raise SequenceError("improper rotation (det = -1) in object track")


# ---------------------------------------------------------------------------
# synthetic generator


def _ease(s):
    s = np.clip(s, 0.0, 1.0)
    return 0.5 - 0.5 * np.cos(np.pi * s)


def make_object(kind: str, rng: np.random.Generator):
    """Object mesh centered at the origin, its reference string and the
    rotation that orients it in the hand frame (palm normal = -z)."""
    if kind == "sphere":
        r = rng.uniform(0.035, 0.045)
        return icosphere(r, level=3), f"sphere:r={r:.6f}", np.eye(3)
    if kind == "box":
        half = rng.uniform(0.028, 0.038, size=3)
        return box_mesh(-half, half, subdivisions=8), "box:half={:.6f},{:.6f},{:.6f}".format(*half), np.eye(3)
    if kind == "cylinder":
        r = rng.uniform(0.028, 0.036)
        h = rng.uniform(0.11, 0.14)
        # cylinder axis along the hand's x axis so the fingers wrap around it
        rot = Rotation.from_euler("y", 90, degrees=True).as_matrix()
        return cylinder_mesh(r, h, segments=40, rings=12), f"cylinder:r={r:.6f},h={h:.6f}", rot
    raise SequenceError(f"unknown object kind {kind!r} (expected one of {', '.join(OBJECT_KINDS)})")


def _surface_samples(tri):
    # vertices, edge midpoints and centroids: coarse meshes can cut into each
    # other between vertices
    return np.concatenate([tri.reshape(-1, 3), 0.5 * (tri + np.roll(tri, 1, axis=1)).reshape(-1, 3),
                           tri.mean(axis=1)])


def _place_under_palm(model, beta, obj_mesh, obj_rot, y_center, gap):
    """Hand-frame object offset so the open hand clears the object by ``gap``."""
    rest = _surface_samples(lbs_forward(model, beta, np.zeros(model.pose_dim)).vertices[model.faces])
    query = MeshQuery(obj_mesh.transformed(obj_rot, np.zeros(3)))
    lo, hi = 0.0, 0.3
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if query.signed(rest - [0.0, y_center, -mid], cap=4 * gap).min() < gap:
            lo = mid
        else:
            hi = mid
    return np.array([0.0, y_center, -hi])


def _close_fingers(model, beta, placed_obj, n_scan=10, n_bisect=18, max_angle=1.7):
    """Per-joint closing, proximal to distal, stopping each joint at first contact."""
    J = model.n_joints
    angles = np.zeros(J)
    dominant = np.argmax(model.weights, axis=1)
    chains = []
    for c in model.children[0]:
        chain = [c]
        while model.children[chain[-1]]:
            chain.append(model.children[chain[-1]][0])
        chains.append(chain)

    def pose_for(a):
        theta = np.zeros(model.pose_dim)
        theta[6:] = (model.flex_axes[1:] * a[1:, None]).reshape(-1)
        return theta

    query = MeshQuery(placed_obj)
    obj_samples = placed_obj.vertices
    faces = model.faces

    def clearance(a, sample_faces):
        v = lbs_forward(model, beta, pose_for(a)).vertices
        clear = query.signed(_surface_samples(v[sample_faces]), cap=0.02).min()
        if clear > CONTACT_GAP and points_inside_mesh(obj_samples, model.mesh(v)).any():
            return -1.0
        return clear

    for chain in chains:
        for q, joint in enumerate(chain):
            members = np.isin(dominant, chain[q:])
            if not members.any():
                continue
            members = faces[np.any(members[faces], axis=1)]
            trial = angles.copy()
            if clearance(trial, members) <= CONTACT_GAP:
                continue
            prev = 0.0
            hit = None
            for a in np.linspace(0.0, max_angle, n_scan + 1)[1:]:
                trial[joint] = a
                if clearance(trial, members) <= CONTACT_GAP:
                    hit = a
                    break
                prev = a
            if hit is None:
                angles[joint] = max_angle
                continue
            lo, hi = prev, hit
            for _ in range(n_bisect):
                mid = 0.5 * (lo + hi)
                trial[joint] = mid
                if clearance(trial, members) <= CONTACT_GAP:
                    hi = mid
                else:
                    lo = mid
            angles[joint] = lo
    return pose_for(angles)


def generate_synthetic_sequence(object_kind: str, n_frames: int = 90, seed: int = 0,
                                model: LbsModel | None = None, fps: float = 30.0) -> InteractionSequence:
    """Deterministic approach / grasp / hold sequence around a rigid object.

    The hand translates toward the object with pre-shaped fingers, closes
    until the fingers touch the object, then hand and object move together.
    Ground truth is produced through the skinning model, so it is exactly
    representable by (beta, theta).
    """
    if object_kind not in OBJECT_KINDS:
        raise SequenceError(f"unknown object kind {object_kind!r} (expected one of {', '.join(OBJECT_KINDS)})")
    if n_frames < 30:
        raise SequenceError(f"n_frames must be >= 30, got {n_frames}")
    model = model or default_hand_model(778, 16, 7)
    if model.flex_axes is None:
        raise SequenceError("the generator needs a model with flex_axes (procedural default models)")
    rng = np.random.default_rng(seed)
    beta = rng.normal(size=model.n_shape) * 0.5
    obj_mesh, obj_ref, obj_rot = make_object(object_kind, rng)

    rest_joints = lbs_forward(model, beta, np.zeros(model.pose_dim)).joints
    root = rest_joints[0]
    palm_tip_y = rest_joints[model.children[0][0], 1]
    y_center = rng.uniform(0.72, 0.82) * palm_tip_y
    obj_offset = _place_under_palm(model, beta, obj_mesh, obj_rot, y_center, gap=0.004)
    placed = obj_mesh.transformed(obj_rot, obj_offset)
    grasp_pose = _close_fingers(model, beta, placed)

    n_app = int(round(0.35 * n_frames))
    n_grasp = int(round(0.30 * n_frames))
    n_hold = n_frames - n_app - n_grasp

    hand_rot = Rotation.random(random_state=rng).as_matrix()
    # world frame: object starts at the origin
    obj_rot_world = hand_rot @ obj_rot
    trans_grasp = -hand_rot @ (obj_offset - root) - root
    approach_dir = hand_rot @ np.array([0.0, -0.5, 1.0]) / np.sqrt(1.25)
    approach_dist = min(0.15, MAX_FRAME_STEP * n_app * 2 / np.pi)
    lift_axis = np.array([0.0, 0.0, 1.0])
    tilt_axis = rng.normal(size=3)
    tilt_axis[2] = 0.0
    tilt_axis /= np.linalg.norm(tilt_axis)
    budget = MAX_FRAME_STEP * n_hold * 2 / np.pi
    lift = min(0.08, 0.6 * budget)
    tilt = min(0.5, 0.4 * budget / 0.2)

    def frames_for(pre_frac):
        thetas, rots, trans = [], [], []
        pre = grasp_pose.copy()
        pre[6:] *= pre_frac
        for i in range(n_frames):
            theta = np.zeros(model.pose_dim)
            R_h = hand_rot
            t_h = trans_grasp.copy()
            R_o = obj_rot_world
            t_o = np.zeros(3)
            if i < n_app:
                t_h = t_h + (1 - _ease(i / n_app)) * approach_dist * approach_dir
                theta[6:] = pre[6:]
            elif i < n_app + n_grasp:
                e = _ease((i - n_app + 1) / n_grasp)
                theta[6:] = pre[6:] + e * (grasp_pose[6:] - pre[6:])
            else:
                e = _ease((i - n_app - n_grasp + 1) / n_hold)
                R_m = Rotation.from_rotvec(tilt * e * tilt_axis).as_matrix()
                shift = lift * e * lift_axis
                theta[6:] = grasp_pose[6:]
                R_h = R_m @ hand_rot
                t_h = R_m @ (root + trans_grasp) + shift - root
                R_o = R_m @ obj_rot_world
                t_o = shift
            theta[:3] = t_h
            theta[3:6] = Rotation.from_matrix(R_h).as_rotvec()
            thetas.append(theta)
            rots.append(R_o)
            trans.append(t_o)
        return np.array(thetas), np.array(rots), np.array(trans)

    # widen the pre-shape until finger closing respects the per-frame budget
    for pre_frac in (0.3, 0.45, 0.6, 0.7, 0.8, 0.9):
        thetas, rots, trans = frames_for(pre_frac)
        verts = lbs_forward(model, beta, thetas).vertices
        step = np.linalg.norm(np.diff(verts, axis=0), axis=-1).max()
        if step < 0.9 * 0.005:
            break
    thetas[:, 3:] = wrap_axis_angle(thetas[:, 3:].reshape(n_frames, -1, 3)).reshape(n_frames, -1)
    meta = {"generator": "synthetic_grasp", "object_kind": object_kind, "phases": [n_app, n_grasp, n_hold],
            "pre_shape": pre_frac}
    return InteractionSequence(object_mesh=obj_mesh, object_rotations=rots, object_translations=trans,
                               theta=thetas, beta=beta, hand_model_ref=model.name, object_mesh_ref=obj_ref,
                               fps=fps, seed=seed, meta=meta)


# ---------------------------------------------------------------------------
# filtering and windowing


@dataclass
class SequenceWindow:
    source: InteractionSequence
    start: int
    stop: int

    @property
    def frames(self) -> InteractionSequence:
        return self.source.slice(self.start, self.stop)

    def __len__(self):
        return self.stop - self.start


def wrist_distances(seq: InteractionSequence, model: LbsModel | None = None) -> np.ndarray:
    """Per-frame distance from the wrist (root joint) to the object surface."""
    joints = seq.hand_joints(model)
    return np.array([point_mesh_distances(joints[t, :1], seq.object_mesh_at(t))[0]
                     for t in range(seq.n_frames)])


def chunk_runs(mask, window: int, stride: int | None = None):
    """Split the True runs of ``mask`` into ``(start, stop)`` windows of exactly
    ``window`` frames; leftovers shorter than a window are dropped."""
    stride = stride or window
    mask = np.asarray(mask, dtype=bool)
    out = []
    t = 0
    n = len(mask)
    while t < n:
        if not mask[t]:
            t += 1
            continue
        end = t
        while end < n and mask[end]:
            end += 1
        for s in range(t, end - window + 1, stride):
            out.append((s, s + window))
        t = end
    return out


def filter_by_wrist_distance(seq: InteractionSequence, max_distance: float = 0.15,
                             window: int = DEFAULT_WINDOW, stride: int | None = None,
                             model: LbsModel | None = None) -> list:
    if max_distance <= 0:
        raise SequenceError("max_distance must be positive")
    keep = wrist_distances(seq, model) <= max_distance
    return [SequenceWindow(seq, a, b) for a, b in chunk_runs(keep, window, stride)]


# ---------------------------------------------------------------------------
# persistence


def to_bytes(seq: InteractionSequence, provenance: dict | None = None) -> bytes:
    """Serialize a sequence.

    Header meta: ``version``, ``T``, ``N^h``, ``fps``, ``hand_model_ref``,
    ``object_mesh_ref``, ``storage`` ("theta" or "vertices"), ``seed``,
    ``units``.  Array ``frames`` holds one row per frame: the pose vector (or
    flattened vertices), then the object rotation (3x3 row-major) and the
    object translation (3); all little-endian float64.
    """
    T = seq.n_frames
    if seq.has_params:
        hand = seq.theta
        storage = "theta"
        n_vertices = int(resolve_model(seq.hand_model_ref).n_vertices) if seq.hand_model_ref else None
    else:
        hand = seq.vertices.reshape(T, -1)
        storage = "vertices"
        n_vertices = int(seq.vertices.shape[1])
    frames = np.concatenate([hand, seq.object_rotations.reshape(T, 9), seq.object_translations], axis=1)
    arrays = {"frames": frames, "object_vertices": seq.object_mesh.vertices,
              "object_faces": seq.object_mesh.faces}
    if seq.beta is not None:
        arrays["beta"] = seq.beta
    meta = {"version": SEQUENCE_VERSION, "T": T, "N^h": n_vertices, "fps": seq.fps,
            "hand_model_ref": seq.hand_model_ref, "object_mesh_ref": seq.object_mesh_ref,
            "storage": storage, "hand_dim": int(hand.shape[1]), "seed": seq.seed, "units": "m",
            "extra": seq.meta}
    if provenance:
        meta["provenance"] = provenance
    return container.to_bytes(SEQUENCE_KIND, SEQUENCE_VERSION, arrays, meta)


def save_sequence(seq: InteractionSequence, path, provenance: dict | None = None) -> str:
    data = to_bytes(seq, provenance)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_sequence(path) -> InteractionSequence:
    try:
        arrays, meta = container.read(path, SEQUENCE_KIND, SEQUENCE_VERSION)
    except container.ContainerError as exc:
        raise SequenceError(str(exc)) from None
    try:
        frames = arrays["frames"]
        T, hd = meta["T"], meta["hand_dim"]
        if frames.shape != (T, hd + 12):
            raise SequenceError(f"{path}: frame block shape {frames.shape} disagrees with header (T={T})")
        hand = frames[:, :hd]
        rots = frames[:, hd:hd + 9].reshape(T, 3, 3)
        trans = frames[:, hd + 9:]
        kwargs = {}
        if meta["storage"] == "theta":
            kwargs["theta"] = hand.copy()
            kwargs["beta"] = arrays["beta"]
        else:
            kwargs["vertices"] = hand.reshape(T, -1, 3).copy()
            kwargs["beta"] = arrays.get("beta")
        return InteractionSequence(
            object_mesh=TriangleMesh(arrays["object_vertices"], arrays["object_faces"]),
            object_rotations=rots.copy(), object_translations=trans.copy(),
            hand_model_ref=meta["hand_model_ref"], object_mesh_ref=meta["object_mesh_ref"],
            fps=meta["fps"], seed=meta["seed"], meta=meta.get("extra", {}), **kwargs)
    except KeyError as exc:
        raise SequenceError(f"{path}: missing field {exc}") from None
    except SequenceError as exc:
        raise SequenceError(f"{path}: {exc}") from None


def read_provenance(path) -> dict:
    _, meta = container.read(path, SEQUENCE_KIND, SEQUENCE_VERSION)
    return meta.get("provenance", {})
