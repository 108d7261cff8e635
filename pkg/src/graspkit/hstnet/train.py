"""Window samples, the training loop, inference and weight checkpoints."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .. import container
from ..representation import sequence_features
from ..sequence_io import InteractionSequence
from .config import NetworkConfig
from .grouping import window_groups
from .model import HSTNet, loss_recons

log = logging.getLogger(__name__)

CHECKPOINT_KIND = "hstnet_weights"
CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class WindowSample:
    feats: np.ndarray        # (T, N, C)
    pos: np.ndarray          # (T, N, 3) perturbed hand vertices
    anchors: list            # per block (T, m_k)
    neighbors: list          # per block (T, m_k, K)
    gt: np.ndarray | None = None


def make_sample(window: InteractionSequence, cfg: NetworkConfig, gt: InteractionSequence | None = None,
                model=None) -> WindowSample:
    if window.n_frames != cfg.T:
        raise ValueError(f"window has {window.n_frames} frames, network expects T={cfg.T}")
    pos = window.hand_vertices(model)
    feats = sequence_features(window, cfg.representation, cfg.n_object_points, model=model)
    anchors, neighbors = window_groups(pos, cfg)
    target = None if gt is None else gt.hand_vertices(model)
    return WindowSample(feats, pos, anchors, neighbors, target)


def collate(samples: list, dtype=torch.float64):
    feats = torch.tensor(np.stack([s.feats for s in samples]), dtype=dtype)
    pos = torch.tensor(np.stack([s.pos for s in samples]), dtype=dtype)
    n_blocks = len(samples[0].anchors)
    anchors = [torch.from_numpy(np.concatenate([s.anchors[b] for s in samples])) for b in range(n_blocks)]
    neighbors = [torch.from_numpy(np.concatenate([s.neighbors[b] for s in samples])) for b in range(n_blocks)]
    gt = None
    if samples[0].gt is not None:
        gt = torch.tensor(np.stack([s.gt for s in samples]), dtype=dtype)
    return feats, pos, anchors, neighbors, gt


def first_nonfinite_layer(net: nn.Module, inputs) -> str | None:
    """Re-run the forward pass and name the first module whose output is not finite."""
    bad = []

    def hook(name):
        def fn(_module, _inp, out):
            if not bad and isinstance(out, torch.Tensor) and not torch.isfinite(out).all():
                bad.append(name)
        return fn

    handles = [m.register_forward_hook(hook(name)) for name, m in net.named_modules()
               if name and not list(m.children())]
    try:
        with torch.no_grad():
            net(*inputs)
    finally:
        for h in handles:
            h.remove()
    if bad:
        return bad[0]
    for name, p in net.named_parameters():
        if not torch.isfinite(p).all():
            return f"{name} (parameter)"
    return None


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 3e-4
    weight_decay: float = 1e-6
    batch: int = 32
    steps: int = 1000
    seed: int = 0


@dataclass
class TrainResult:
    net: HSTNet
    step_losses: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)


def train(samples: list, cfg: NetworkConfig, hyper: TrainHyper = TrainHyper(), net: HSTNet | None = None,
          callback=None) -> TrainResult:
    if not samples:
        raise TrainingError("training set is empty")
    if any(s.gt is None for s in samples):
        raise TrainingError("every training sample needs a ground-truth window")
    torch.manual_seed(hyper.seed)
    net = net or HSTNet(cfg, seed=hyper.seed)
    opt = torch.optim.AdamW(net.parameters(), lr=hyper.lr, betas=(0.9, 0.999), eps=1e-8,
                            weight_decay=hyper.weight_decay)
    shuffle = torch.Generator().manual_seed(hyper.seed + 1)
    batch = min(hyper.batch, len(samples))
    result = TrainResult(net)
    step = 0
    net.train()
    while step < hyper.steps:
        order = torch.randperm(len(samples), generator=shuffle).tolist()
        epoch = []
        for lo in range(0, len(order), batch):
            if step >= hyper.steps:
                break
            feats, pos, anchors, neighbors, gt = collate([samples[i] for i in order[lo:lo + batch]])
            pred = net(feats, pos, anchors, neighbors)
            loss = loss_recons(pred, gt)
            if not torch.isfinite(loss):
                layer = first_nonfinite_layer(net, (feats, pos, anchors, neighbors))
                raise TrainingError(f"loss became NaN at step {step}; first non-finite layer: {layer or 'loss'}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            value = float(loss.detach())
            result.step_losses.append(value)
            epoch.append(value)
            step += 1
            if callback is not None:
                callback(step, value)
        result.epoch_losses.append(float(np.mean(epoch)))
        log.debug("epoch %d loss %.6g", len(result.epoch_losses), result.epoch_losses[-1])
    net.eval()
    return result


def predict(net: HSTNet, samples: list) -> np.ndarray:
    feats, pos, anchors, neighbors, _ = collate(samples, dtype=next(net.parameters()).dtype)
    with torch.no_grad():
        return net(feats, pos, anchors, neighbors).numpy()


def refine_window(window: InteractionSequence, cfg: NetworkConfig, net: HSTNet, model=None) -> np.ndarray:
    """Coarse refined vertices (T, N, 3) for one perturbed window."""
    return predict(net, [make_sample(window, cfg, model=model)])[0]


def refine_sequence(seq: InteractionSequence, cfg: NetworkConfig, net: HSTNet, model=None) -> np.ndarray:
    """Refine a whole sequence window by window; a short tail reuses the last full window."""
    T = cfg.T
    if seq.n_frames < T:
        raise ValueError(f"sequence has {seq.n_frames} frames, fewer than the window length {T}")
    starts = list(range(0, seq.n_frames - T + 1, T))
    if starts[-1] + T < seq.n_frames:
        starts.append(seq.n_frames - T)
    out = np.zeros((seq.n_frames,) + seq.hand_vertices(model).shape[1:])
    for s in starts:
        out[s:s + T] = refine_window(seq.slice(s, s + T), cfg, net, model)
    return out


def save_checkpoint(net: HSTNet, path, meta: dict | None = None) -> str:
    arrays = {k: v.detach().cpu().numpy() for k, v in net.state_dict().items()}
    return container.write(path, CHECKPOINT_KIND, CHECKPOINT_VERSION, arrays,
                           {"config": net.cfg.to_dict(), **(meta or {})})


def load_checkpoint(path):
    """Returns ``(net, meta)``; every stored tensor must match the configured shapes."""
    arrays, meta = container.read(path, CHECKPOINT_KIND, CHECKPOINT_VERSION)
    cfg = NetworkConfig.from_dict(meta["config"])
    net = HSTNet(cfg)
    state = net.state_dict()
    missing = sorted(set(state) - set(arrays))
    unexpected = sorted(set(arrays) - set(state))
    if missing or unexpected:
        raise container.ContainerError(f"{path}: checkpoint layers do not match the config "
                                       f"(missing {missing[:3]}, unexpected {unexpected[:3]})")
    for k, v in state.items():
        if tuple(arrays[k].shape) != tuple(v.shape):
            raise container.ContainerError(
                f"{path}: {k} has shape {tuple(arrays[k].shape)}, config implies {tuple(v.shape)}")
    net.load_state_dict({k: torch.from_numpy(arrays[k]).to(v.dtype) for k, v in state.items()})
    net.eval()
    return net, meta
