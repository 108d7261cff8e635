"""Linear blend skinning hand model.

The pose vector of one frame is laid out as
``[translation (3), global orientation (3), joint rotations (3 * (J - 1))]``
with all rotations in axis-angle form.  Shape coefficients ``beta`` are shared
across a sequence.

``default_hand_model`` builds a procedural MANO-sized stand-in (778 vertices,
16 joints): a palm and five finger tubes, each a closed surface, so the mesh
is watertight.  Real MANO-format data can be loaded with
:func:`load_external_model` after conversion to the container described in
:func:`save_model`.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import torch

from . import container
from .geometry import TriangleMesh

MODEL_KIND = "lbs_model"
MODEL_VERSION = 1
N_SHAPE = 10
MODEL_FIELDS = ("template", "parents", "regressor", "weights", "blendshapes", "faces")


class HandModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LbsModel:
    template: np.ndarray      # (N, 3)
    parents: np.ndarray       # (J,), parents[root] == -1
    regressor: np.ndarray     # (J, N)
    weights: np.ndarray       # (N, J)
    blendshapes: np.ndarray   # (S, N, 3)
    faces: np.ndarray         # (F, 3)
    flex_axes: np.ndarray | None = None  # (J, 3) preferred bending axis per joint, optional
    name: str = "custom"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        validate_model(self)
        for name in MODEL_FIELDS + ("flex_axes",):
            arr = getattr(self, name)
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_shape(self) -> int:
        return self.blendshapes.shape[0]

    @property
    def pose_dim(self) -> int:
        return 3 + 3 * self.n_joints

    @property
    def order(self) -> np.ndarray:
        """Joints in parent-before-child order."""
        if "order" not in self._cache:
            self._cache["order"] = _topological_order(self.parents)
        return self._cache["order"]

    @property
    def children(self) -> list:
        kids = [[] for _ in range(self.n_joints)]
        for j, p in enumerate(self.parents):
            if p >= 0:
                kids[p].append(j)
        return kids

    def leaf_joints(self) -> list:
        return [j for j, k in enumerate(self.children) if not k]

    def fingertip_vertices(self) -> np.ndarray:
        """Vertices whose dominant skinning joint is a leaf of the kinematic tree."""
        dominant = np.argmax(self.weights, axis=1)
        return np.flatnonzero(np.isin(dominant, self.leaf_joints()))

    def mesh(self, vertices) -> TriangleMesh:
        return TriangleMesh(vertices, self.faces)

    def tensors(self, dtype=torch.float64) -> dict:
        key = ("tensors", dtype)
        if key not in self._cache:
            self._cache[key] = {
                "template": torch.tensor(np.array(self.template), dtype=dtype),
                "regressor": torch.tensor(np.array(self.regressor), dtype=dtype),
                "weights": torch.tensor(np.array(self.weights), dtype=dtype),
                "blendshapes": torch.tensor(np.array(self.blendshapes), dtype=dtype),
            }
        return self._cache[key]


@dataclass
class HandMesh:
    vertices: np.ndarray  # (..., N, 3)
    joints: np.ndarray    # (..., J, 3)
    faces: np.ndarray


def _topological_order(parents) -> np.ndarray:
    parents = np.asarray(parents)
    n = len(parents)
    roots = np.flatnonzero(parents == -1)
    if len(roots) != 1:
        raise HandModelError(f"kinematic tree must have exactly one root, found {len(roots)}")
    if np.any((parents < -1) | (parents >= n)):
        raise HandModelError("parent index out of range")
    depth = np.full(n, -1)
    for j in range(n):
        seen = set()
        k = j
        while parents[k] != -1:
            if k in seen:
                raise HandModelError("kinematic tree has a cycle")
            seen.add(k)
            k = parents[k]
        depth[j] = len(seen)
    return np.argsort(depth, kind="stable")


def validate_model(m: LbsModel) -> None:
    if m.template.ndim != 2 or m.template.shape[1] != 3:
        raise HandModelError(f"template must be (N, 3), got {m.template.shape}")
    n = m.template.shape[0]
    if m.parents.ndim != 1:
        raise HandModelError("parents must be a 1-D array")
    j = m.parents.shape[0]
    _topological_order(m.parents)
    if m.weights.shape != (n, j):
        raise HandModelError(f"weights must be ({n}, {j}), got {m.weights.shape}")
    if m.regressor.shape != (j, n):
        raise HandModelError(f"regressor must be ({j}, {n}), got {m.regressor.shape}")
    if m.blendshapes.ndim != 3 or m.blendshapes.shape[1:] != (n, 3):
        raise HandModelError(f"blendshapes must be (S, {n}, 3), got {m.blendshapes.shape}")
    if m.flex_axes is not None and m.flex_axes.shape != (j, 3):
        raise HandModelError(f"flex_axes must be ({j}, 3), got {m.flex_axes.shape}")
    for name in ("template", "weights", "regressor", "blendshapes"):
        if not np.all(np.isfinite(getattr(m, name))):
            raise HandModelError(f"{name} contains non-finite values")
    if np.any(m.weights < 0) or not np.allclose(m.weights.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise HandModelError("skinning weights not normalized")
    if not np.allclose(m.regressor.sum(axis=1), 1.0, rtol=0, atol=1e-9):
        raise HandModelError("joint regressor rows not normalized")
    # Also checks index range / degeneracy.
    TriangleMesh(m.template, m.faces)


# ---------------------------------------------------------------------------
# rotations


def wrap_axis_angle(r):
    """Map axis-angle vectors to an equivalent rotation with angle < pi."""
    r = np.asarray(r, dtype=np.float64)
    flat = r.reshape(-1, 3)
    angle = np.linalg.norm(flat, axis=1)
    wrapped = np.mod(angle + np.pi, 2 * np.pi) - np.pi
    scale = np.divide(wrapped, angle, out=np.ones_like(angle), where=angle > 0)
    return (flat * scale[:, None]).reshape(r.shape)


def axis_angle_to_matrix(r: torch.Tensor) -> torch.Tensor:
    """Rodrigues' formula, smooth through the zero rotation."""
    a2 = (r * r).sum(-1, keepdim=True)
    small = a2 < 1e-8
    a2s = torch.where(small, torch.ones_like(a2), a2)
    a = torch.sqrt(a2s)
    s_a = torch.where(small, 1 - a2 / 6 + a2 * a2 / 120, torch.sin(a) / a)
    c_a = torch.where(small, 0.5 - a2 / 24 + a2 * a2 / 720, (1 - torch.cos(a)) / a2s)
    zero = torch.zeros_like(r[..., 0])
    K = torch.stack([
        torch.stack([zero, -r[..., 2], r[..., 1]], -1),
        torch.stack([r[..., 2], zero, -r[..., 0]], -1),
        torch.stack([-r[..., 1], r[..., 0], zero], -1),
    ], -2)
    eye = torch.eye(3, dtype=r.dtype).expand(K.shape)
    return eye + s_a[..., None] * K + c_a[..., None] * (K @ K)


# ---------------------------------------------------------------------------
# forward skinning


def lbs_torch(model: LbsModel, beta: torch.Tensor, theta: torch.Tensor):
    """Differentiable skinning.

    ``beta``: (S,) or (..., S); ``theta``: (..., 3 + 3J).  Returns
    ``(vertices (..., N, 3), joints (..., J, 3))``.
    """
    if theta.shape[-1] != model.pose_dim:
        raise HandModelError(f"theta has {theta.shape[-1]} entries, model expects {model.pose_dim}")
    if beta.shape[-1] != model.n_shape:
        raise HandModelError(f"beta has {beta.shape[-1]} entries, model expects {model.n_shape}")
    t = model.tensors(theta.dtype)
    shaped = t["template"] + torch.einsum("...s,snk->...nk", beta, t["blendshapes"])
    rest_joints = torch.einsum("jn,...nk->...jk", t["regressor"], shaped)
    batch = theta.shape[:-1]
    rest_joints = rest_joints.expand(*batch, *rest_joints.shape[-2:])
    shaped = shaped.expand(*batch, *shaped.shape[-2:])

    trans = theta[..., :3]
    rots = axis_angle_to_matrix(theta[..., 3:].reshape(*batch, model.n_joints, 3))
    parents = model.parents
    g_rot = [None] * model.n_joints
    g_pos = [None] * model.n_joints
    for j in model.order:
        p = parents[j]
        if p < 0:
            g_rot[j] = rots[..., j, :, :]
            g_pos[j] = rest_joints[..., j, :]
        else:
            g_rot[j] = g_rot[p] @ rots[..., j, :, :]
            offset = rest_joints[..., j, :] - rest_joints[..., p, :]
            g_pos[j] = g_pos[p] + (g_rot[p] @ offset[..., None])[..., 0]
    G_rot = torch.stack(g_rot, dim=-3)        # (..., J, 3, 3)
    G_pos = torch.stack(g_pos, dim=-2)        # (..., J, 3)
    # A_j(x) = R_j (x - J_j) + p_j  ==  R_j x + (p_j - R_j J_j)
    A_trans = G_pos - (G_rot @ rest_joints[..., None])[..., 0]
    blended_rot = torch.einsum("nj,...jab->...nab", t["weights"], G_rot)
    blended_trans = torch.einsum("nj,...ja->...na", t["weights"], A_trans)
    verts = (blended_rot @ shaped[..., None])[..., 0] + blended_trans + trans[..., None, :]
    joints = G_pos + trans[..., None, :]
    return verts, joints


def lbs_forward(model: LbsModel, beta, theta) -> HandMesh:
    """Numpy convenience wrapper around :func:`lbs_torch` (float64)."""
    beta_t = torch.as_tensor(np.asarray(beta, dtype=np.float64))
    theta_t = torch.as_tensor(np.asarray(theta, dtype=np.float64))
    with torch.no_grad():
        v, j = lbs_torch(model, beta_t, theta_t)
    return HandMesh(v.numpy(), j.numpy(), model.faces)


# ---------------------------------------------------------------------------
# procedural default model


def _tube(base, axis, side_a, side_b, length, radii_a, radii_b, n_rings, k, caps):
    """Closed tube: ``n_rings`` rings of ``k`` vertices plus two pole vertices.

    Returns vertices, faces (local indices), axial coordinate per vertex, and
    the axial positions of the axis samples (base pole, ring centers, tip pole).
    """
    ring_s = length * (np.arange(n_rings) + 0.5) / n_rings
    frac = ring_s / length
    ra = radii_a[0] + (radii_a[1] - radii_a[0]) * frac
    rb = radii_b[0] + (radii_b[1] - radii_b[0]) * frac
    phi = 2 * np.pi * np.arange(k) / k
    verts = (base + ring_s[:, None, None] * axis
             + (ra[:, None, None] * np.cos(phi)[None, :, None]) * side_a
             + (rb[:, None, None] * np.sin(phi)[None, :, None]) * side_b).reshape(-1, 3)
    s_ring = np.repeat(ring_s, k)
    base_pole = base - caps[0] * axis
    tip_pole = base + (length + caps[1]) * axis
    verts = np.vstack([verts, base_pole, tip_pole])
    s_all = np.concatenate([s_ring, [-caps[0], length + caps[1]]])
    nb, nt = n_rings * k, n_rings * k + 1
    faces = []
    for r in range(n_rings - 1):
        for i in range(k):
            a = r * k + i
            b = r * k + (i + 1) % k
            faces += [[a, b, b + k], [a, b + k, a + k]]
    for i in range(k):
        faces.append([nb, (i + 1) % k, i])
        last = (n_rings - 1) * k
        faces.append([nt, last + i, last + (i + 1) % k])
    # orientation: side_a x side_b along axis gives outward faces with this winding
    if np.dot(np.cross(side_a, side_b), axis) < 0:
        faces = [f[::-1] for f in faces]
    samples = np.concatenate([[-caps[0]], ring_s, [length + caps[1]]])
    return verts, np.array(faces), s_all, samples


def _axis_regressor_row(sample_s, sample_members, s, n_vertices):
    """Convex row reproducing the axis point at coordinate ``s``."""
    row = np.zeros(n_vertices)
    s = float(np.clip(s, sample_s[0], sample_s[-1]))
    i = int(np.clip(np.searchsorted(sample_s, s) - 1, 0, len(sample_s) - 2))
    lam = (s - sample_s[i]) / (sample_s[i + 1] - sample_s[i])
    for w, members in ((1 - lam, sample_members[i]), (lam, sample_members[i + 1])):
        row[members] += w / len(members)
    return row


def _tube_budget(budget, min_rings):
    k = max(3, int(round(np.sqrt(max(budget - 2, 3) / 1.5))))
    rings = max(min_rings, (budget - 2) // k)
    while rings * k + 2 > budget and k > 3:
        k -= 1
        rings = max(min_rings, (budget - 2) // k)
    return rings, k


@lru_cache(maxsize=8)
def default_hand_model(n_vertices: int = 778, n_joints: int = 16, seed: int = 7) -> LbsModel:
    """Deterministic procedural right hand with MANO-compatible array shapes.

    The wrist (root joint, index 0) sits at the origin, fingers extend along
    +y and the palm faces -z.  Finger chains are numbered consecutively after
    the root, thumb last.
    """
    if n_joints < 4:
        raise HandModelError(f"n_joints must be >= 4, got {n_joints}")
    if n_vertices < 3 * n_joints:
        raise HandModelError(f"n_vertices must be >= 3 * n_joints = {3 * n_joints}, got {n_vertices}")
    rng = np.random.default_rng(seed)
    n_chains = min(5, n_joints - 1)
    per_chain = [(n_joints - 1) // n_chains + (1 if c < (n_joints - 1) % n_chains else 0)
                 for c in range(n_chains)]
    jitter = lambda: 1.0 + 0.04 * rng.uniform(-1, 1)  # noqa: E731

    palm_len = 0.085 * jitter()
    palm_half_w = 0.040 * jitter()
    palm_half_t = 0.012 * jitter()

    # fingers: index, middle, ring, little, thumb (thumb is the last chain)
    xs = np.array([0.027, 0.009, -0.009, -0.027]) * palm_half_w / 0.040
    lengths = np.array([0.080, 0.088, 0.082, 0.065, 0.070])
    radii = np.array([0.0085, 0.0088, 0.0082, 0.0072, 0.0095])
    finger_specs = []
    for f in range(4):
        finger_specs.append(dict(base=np.array([xs[f], palm_len + 0.010, 0.0]),
                                 axis=np.array([0.0, 1.0, 0.0]),
                                 length=lengths[f] * jitter(), radius=radii[f]))
    thumb_axis = np.array([0.78, 0.55, -0.30])
    thumb_axis /= np.linalg.norm(thumb_axis)
    finger_specs.append(dict(base=np.array([palm_half_w + 0.012, 0.022, -0.004]),
                             axis=thumb_axis, length=lengths[4] * jitter(), radius=radii[4]))
    if n_chains < 5:
        finger_specs = finger_specs[:n_chains]

    # vertex budget: base tubes first, remainder absorbed by splitting palm faces
    palm_budget = int(0.18 * n_vertices)
    finger_budget = (n_vertices - palm_budget) // n_chains
    palm_rings, palm_k = _tube_budget(palm_budget, 1)
    tubes = []
    verts, faces, weights_rows = [], [], []
    reg_rows = []
    flex = np.zeros((n_joints, 3))

    pv, pf, ps, p_samples = _tube(np.zeros(3), np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]),
                                  np.array([0.0, 0.0, 1.0]), palm_len, (palm_half_w * 0.85, palm_half_w),
                                  (palm_half_t, palm_half_t), palm_rings, palm_k, (0.006, 0.005))
    tubes.append((pv, pf))
    palm_members = [[palm_rings * palm_k]] + [list(range(r * palm_k, (r + 1) * palm_k)) for r in range(palm_rings)] \
        + [[palm_rings * palm_k + 1]]
    offset = len(pv)
    w = np.zeros((len(pv), n_joints))
    w[:, 0] = 1.0
    weights_rows.append(w)
    verts.append(pv)
    faces.append(pf)
    pending_rows = [(0, p_samples, palm_members, 0, 0.0)]

    joint = 1
    for c, spec in enumerate(finger_specs):
        m = per_chain[c]
        rings, k = _tube_budget(finger_budget, 1)
        axis = spec["axis"]
        side_a = np.cross(axis, [0.0, 0.0, 1.0])
        side_a /= np.linalg.norm(side_a)
        side_b = np.cross(side_a, axis)
        bend = np.cross(axis, [0.0, 0.0, -1.0])
        bend /= np.linalg.norm(bend)
        # segment proportions proximal -> distal
        props = np.array([0.45, 0.30, 0.25])[:m] if m <= 3 else np.full(m, 1.0 / m)
        seg = spec["length"] * props / props.sum()
        starts = np.concatenate([[0.0], np.cumsum(seg)[:-1]])
        r = spec["radius"]
        fv, ff, fs, f_samples = _tube(spec["base"], axis, side_a, side_b, spec["length"],
                                      (r, 0.8 * r), (0.9 * r, 0.72 * r), rings, k, (0.3 * r, 0.6 * r))
        members = [[rings * k + offset]] + [list(range(offset + q * k, offset + (q + 1) * k)) for q in range(rings)] \
            + [[rings * k + 1 + offset]]
        chain = list(range(joint, joint + m))
        # smooth weights over [root, chain...] by distance to segment centers
        centers = np.concatenate([[-0.5 * seg[0]], starts + 0.5 * seg])
        widths = np.concatenate([[0.5 * seg[0]], 0.5 * seg])
        z = (fs[:, None] - centers[None, :]) / widths[None, :]
        raw = np.exp(-0.5 * z ** 2)
        raw /= raw.sum(axis=1, keepdims=True)
        w = np.zeros((len(fv), n_joints))
        w[:, 0] = raw[:, 0]
        w[:, chain] = raw[:, 1:]
        weights_rows.append(w)
        verts.append(fv)
        faces.append(ff + offset)
        for q, jj in enumerate(chain):
            pending_rows.append((jj, f_samples, members, 1, starts[q]))
            flex[jj] = bend
        offset += len(fv)
        joint += m

    V = np.vstack(verts)
    F = np.vstack(faces)
    W = np.vstack(weights_rows)
    if len(V) > n_vertices:
        raise HandModelError(f"cannot build a closed hand with only {n_vertices} vertices")

    # absorb the remaining budget by centroid-splitting the largest palm faces
    n_palm_faces = len(pf)
    extra = n_vertices - len(V)
    V = list(V)
    F = [list(f) for f in F]
    W = list(W)
    for _ in range(extra):
        palm_faces = np.array(F[:n_palm_faces])
        tri = np.array(V)[palm_faces]
        area = np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        fi = int(np.argmax(area))
        a, b, cc = F[fi]
        new = len(V)
        V.append(tri[fi].mean(axis=0))
        W.append((W[a] + W[b] + W[cc]) / 3.0)
        F[fi] = [a, b, new]
        F.insert(n_palm_faces, [b, cc, new])
        F.insert(n_palm_faces, [cc, a, new])
        n_palm_faces += 2
    V = np.array(V)
    F = np.array(F, dtype=np.int64)
    W = np.array(W)

    regressor = np.zeros((n_joints, n_vertices))
    for jj, samples, members, _kind, s in pending_rows:
        regressor[jj] = _axis_regressor_row(samples, members, s, n_vertices)

    # shape space: random mixtures of structured deformation fields
    fields = [V.copy()]                                  # global scale
    palm_mask = np.zeros(n_vertices)
    palm_mask[:palm_rings * palm_k + 2] = 1.0
    fields.append(np.column_stack([V[:, 0], np.zeros(n_vertices), np.zeros(n_vertices)]))  # width
    fields.append(np.column_stack([np.zeros(n_vertices), V[:, 1], np.zeros(n_vertices)]))  # length
    fields.append(np.column_stack([np.zeros(n_vertices), np.zeros(n_vertices), V[:, 2]]))  # thickness
    fields.append(palm_mask[:, None] * V)                # palm size
    blend = np.array(fields)
    mix = rng.normal(size=(N_SHAPE, len(fields))) * 0.03
    blendshapes = np.einsum("sm,mnk->snk", mix, blend)

    W = W / W.sum(axis=1, keepdims=True)
    return LbsModel(template=V, parents=_chain_parents(per_chain), regressor=regressor, weights=W,
                    blendshapes=blendshapes, faces=F, flex_axes=flex,
                    name=f"default:{n_vertices}:{n_joints}:{seed}")


def _chain_parents(per_chain):
    parents = [-1]
    j = 1
    for m in per_chain:
        for q in range(m):
            parents.append(0 if q == 0 else j - 1)
            j += 1
    return np.array(parents, dtype=np.int64)


# ---------------------------------------------------------------------------
# persistence


def save_model(model: LbsModel, path) -> str:
    """Write a model container.

    Arrays: ``template`` (N,3) f8, ``parents`` (J,) i8, ``regressor`` (J,N) f8,
    ``weights`` (N,J) f8, ``blendshapes`` (S,N,3) f8, ``faces`` (F,3) i8 and
    optionally ``flex_axes`` (J,3) f8.  Meta: ``n_vertices``, ``n_joints``,
    ``n_shape``, ``name``.
    """
    arrays = {name: getattr(model, name) for name in MODEL_FIELDS}
    if model.flex_axes is not None:
        arrays["flex_axes"] = model.flex_axes
    meta = {"n_vertices": model.n_vertices, "n_joints": model.n_joints,
            "n_shape": model.n_shape, "name": model.name}
    return container.write(path, MODEL_KIND, MODEL_VERSION, arrays, meta)


def load_external_model(path) -> LbsModel:
    try:
        arrays, meta = container.read(path, MODEL_KIND, MODEL_VERSION)
    except container.ContainerError as exc:
        raise HandModelError(str(exc)) from None
    missing = [f for f in MODEL_FIELDS if f not in arrays]
    if missing:
        raise HandModelError(f"{path}: missing fields {missing}")
    for key, expected in (("n_vertices", arrays["template"].shape[0]),
                          ("n_joints", arrays["parents"].shape[0]),
                          ("n_shape", arrays["blendshapes"].shape[0])):
        if key in meta and meta[key] != expected:
            raise HandModelError(f"{path}: declared {key}={meta[key]} but arrays imply {expected}")
    return LbsModel(template=arrays["template"], parents=arrays["parents"].astype(np.int64),
                    regressor=arrays["regressor"], weights=arrays["weights"],
                    blendshapes=arrays["blendshapes"], faces=arrays["faces"].astype(np.int64),
                    flex_axes=arrays.get("flex_axes"), name=meta.get("name", str(path)))


def resolve_model(ref: str) -> LbsModel:
    """Model from a reference string: ``default:N:J:seed`` or a file path."""
    if ref.startswith("default:"):
        try:
            _, n, j, s = ref.split(":")
            return default_hand_model(int(n), int(j), int(s))
        except ValueError:
            raise HandModelError(f"malformed default model reference {ref!r}") from None
    return load_external_model(ref)
