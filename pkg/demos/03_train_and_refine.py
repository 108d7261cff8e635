"""
Train the miniature network on a handful of windows and refine them:
network output first, then the parameter fit with temporal smoothing.

This is the overfit regime (evaluated on the training windows); it shows
the plumbing works and the loss drops, not generalization.

Run:  python demos/03_train_and_refine.py [steps]   (default 2000, a few minutes; writes demos/out/loss.png)
"""
import sys
import time
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from graspkit.hand_model import default_hand_model
from graspkit.hstnet import HSTNet, TrainHyper, make_sample, miniature_config, train
from graspkit.hstnet.train import predict
from graspkit.metrics import evaluate_many
from graspkit.perturbation import PerturbSpec, perturb_sequence
from graspkit.postopt import optimize
from graspkit.sequence_io import generate_synthetic_sequence

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 2000
out = Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

cfg = miniature_config()                 # T=10, d=32, paired with a 64-vertex hand
hand = default_hand_model(64, 16, 7)
print("parameters:", sum(p.numel() for p in HSTNet(cfg).parameters()))

gts, noisy, samples = [], [], []
for k, kind in enumerate(["sphere", "box", "cylinder", "sphere"]):
    gt = generate_synthetic_sequence(kind, 30, seed=k, model=hand)
    p = perturb_sequence(gt, PerturbSpec("B", seed=k))
    for s in (10, 20):
        gts.append(gt.slice(s, s + 10))
        noisy.append(p.slice(s, s + 10))
        samples.append(make_sample(noisy[-1], cfg, gts[-1], hand))

t0 = time.time()
res = train(samples, cfg, TrainHyper(batch=8, steps=steps, seed=0))
print(f"{steps} steps in {time.time() - t0:.0f} s, loss {res.step_losses[0]:.3e} -> {res.step_losses[-1]:.3e}")

pred = predict(res.net, samples)
coarse = [n.with_vertices(v) for n, v in zip(noisy, pred)]
fitted = []
for n, v in zip(noisy, pred):
    r = optimize(hand, n.beta, n.theta, v)
    fitted.append(n.with_params(r.beta, r.theta))

for name, seqs in (("perturbed", noisy), ("network", coarse), ("network + fit", fitted)):
    rep = evaluate_many(seqs, gts, hand)
    print(f"{name:>14}: MPJPE {rep.mpjpe:6.2f} mm  MPVPE {rep.mpvpe:6.2f} mm  IV {rep.iv:.3f} cm^3  "
          f"C-IoU {rep.ciou:5.1f} %")

plt.semilogy(res.step_losses)
plt.xlabel("step")
plt.ylabel("mean squared error (m^2)")
plt.title("miniature network, 8 windows")
plt.savefig(out / "loss.png", dpi=120)
print("wrote", out / "loss.png")
