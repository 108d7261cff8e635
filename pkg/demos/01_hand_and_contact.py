"""
Hand model, one synthetic grasp, and the contact / penetration geometry
behind the evaluation metrics.

Run:  python demos/01_hand_and_contact.py   (writes demos/out/contact.png)
"""
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from graspkit.geometry import MeshQuery, voxelized_intersection_volume
from graspkit.hand_model import default_hand_model, lbs_forward
from graspkit.metrics import contact_map
from graspkit.sequence_io import generate_synthetic_sequence

out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

hand = default_hand_model()          # 778 vertices, 16 joints
print(f"hand: {hand.n_vertices} vertices, {hand.n_joints} joints, {hand.n_shape} shape coefficients")

# rest pose vs. a curled pose
rest = lbs_forward(hand, np.zeros(hand.n_shape), np.zeros((1, hand.pose_dim)))
curl = np.zeros((1, hand.pose_dim))
curl[0, 3::3] = 0.4                  # bend every joint about its local x axis
bent = lbs_forward(hand, np.zeros(hand.n_shape), curl)
travel = 1000 * np.linalg.norm(bent.vertices[0] - rest.vertices[0], axis=1)
tips = hand.fingertip_vertices()
print(f"curling moves the {len(tips)} fingertip-region vertices by {travel[tips].mean():.1f} mm on average "
      f"(whole hand {travel.mean():.1f} mm)")

# a grasp: approach, close fingers, hold
seq = generate_synthetic_sequence("cylinder", 30, seed=0, model=hand)
verts = seq.hand_vertices(hand)
n_app, n_grasp, n_hold = seq.meta["phases"]
t = seq.n_frames - 1
obj = seq.object_mesh_at(t)

d = MeshQuery(obj).signed(verts[t])
touch = contact_map(verts[t], obj)
print(f"phases {seq.meta['phases']}; at the last frame {touch.sum()} vertices within 2 mm of the object")
print(f"closest signed distance {1000 * d.min():.2f} mm, "
      f"IV {voxelized_intersection_volume(hand.mesh(verts[t]), obj):.3f} cm^3")

# push the hand 5 mm into the object: contact grows, IV becomes positive
normal = obj.vertices.mean(axis=0) - verts[t].mean(axis=0)
normal /= np.linalg.norm(normal)
pushed = verts[t] + 0.005 * normal
print(f"pushed 5 mm: {contact_map(pushed, obj).sum()} contact vertices, "
      f"IV {voxelized_intersection_volume(hand.mesh(pushed), obj):.3f} cm^3")

fig = plt.figure(figsize=(6, 5))
ax = fig.add_subplot(projection="3d")
ov = obj.vertices
ax.scatter(ov[:, 0], ov[:, 1], ov[:, 2], s=1, c="0.7")
ax.scatter(*verts[t][~touch].T, s=2, c="tab:blue", label="hand")
ax.scatter(*verts[t][touch].T, s=6, c="tab:red", label="contact (<= 2 mm)")
ax.legend()
ax.set_title("last frame of the synthetic grasp")
fig.savefig(out / "contact.png", dpi=120)
print("wrote", out / "contact.png")
