"""Spatial encoder, long/short-term temporal encoder, per-point decoder."""
from __future__ import annotations

import math

import torch
from torch import nn

from .config import NetworkConfig


def sinusoidal_encoding(length: int, dim: int, dtype=torch.float64) -> torch.Tensor:
    pos = torch.arange(length, dtype=dtype)[:, None]
    i = torch.arange(0, dim, 2, dtype=dtype)
    angle = pos / torch.pow(torch.tensor(10000.0, dtype=dtype), i / dim)
    pe = torch.zeros(length, dim, dtype=dtype)
    pe[:, 0::2] = torch.sin(angle)
    pe[:, 1::2] = torch.cos(angle[:, : dim // 2])
    return pe


def mlp(widths, final_act=True) -> nn.Sequential:
    layers = []
    for k, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        layers.append(nn.Linear(a, b))
        if final_act or k < len(widths) - 2:
            layers.append(nn.ReLU())
    return nn.Sequential(*layers)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)

    def forward(self, x):
        n, L, D = x.shape
        h, dh = self.heads, D // self.heads

        def split(t):
            return t.view(n, L, h, dh).transpose(1, 2)

        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        att = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(dh), dim=-1)
        y = (att @ v).transpose(1, 2).reshape(n, L, D)
        return self.out(y)


class TransformerLayer(nn.Module):
    """Post-norm encoder layer.

    The feed-forward block uses GELU: tokens of one window are close to each
    other after normalization, and a ReLU unit that is off for one of them is
    usually off for all, which leaves whole rows of weights without gradient.
    """

    def __init__(self, dim, heads, ff_dim):
        super().__init__()
        self.attn = MultiHeadAttention(dim, heads)
        self.norm1 = nn.LayerNorm(dim)
        self.ff = nn.Sequential(nn.Linear(dim, ff_dim), nn.GELU(), nn.Linear(ff_dim, dim))
        self.norm2 = nn.LayerNorm(dim)

    def forward(self, x):
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ff(x))


class TemporalStage(nn.Module):
    """Transformer over tokens of a window, either all at once or per bin.

    With ``bin_len`` set, the window is cut into contiguous bins and the same
    layers run on each bin independently; positions restart at 0 in each bin.
    """

    def __init__(self, d_in, dim, heads, layers, ff_dim, bin_len=None):
        super().__init__()
        self.proj = nn.Linear(d_in, dim) if d_in != dim else nn.Identity()
        self.layers = nn.ModuleList([TransformerLayer(dim, heads, ff_dim) for _ in range(layers)])
        self.bin_len = bin_len

    def forward(self, x):
        n, T, _ = x.shape
        x = self.proj(x)
        L = self.bin_len or T
        x = x.reshape(n * (T // L), L, -1)
        x = x + sinusoidal_encoding(L, x.shape[-1], x.dtype)
        for layer in self.layers:
            x = layer(x)
        return x.reshape(n, T, -1)


class TemporalEncoder(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        if cfg.swap_temporal_order:
            first, second = cfg.T_short, None
        elif cfg.long_only_temporal:
            first, second = None, None
        else:
            first, second = None, cfg.T_short
        self.long = TemporalStage(cfg.d, cfg.d_long, cfg.heads, cfg.layers, cfg.ff_dim, first)
        self.short = TemporalStage(cfg.d_long, cfg.d_short, cfg.heads, cfg.layers, cfg.ff_dim, second)

    def forward(self, S, return_long=False):
        L = self.long(S)
        out = self.short(L)
        return (out, L) if return_long else out


class SpatialEncoder(nn.Module):
    """Stacked radius-group blocks with a shared MLP on (feature, delta)."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        blocks, c = [], cfg.in_features
        for w in cfg.block_widths:
            blocks.append(mlp([c + 3, w, w]))
            c = w
        self.blocks = nn.ModuleList(blocks)

    def forward(self, feats, pos, anchors, neighbors, pool=True):
        """feats (M, N, C), pos (M, N, 3); anchors[k] (M, m_k), neighbors[k] (M, m_k, K)."""
        f, p = feats, pos
        rows = torch.arange(f.shape[0])[:, None]
        for blk, a, nb in zip(self.blocks, anchors, neighbors):
            M, m, K = nb.shape
            pa = p[rows, a]
            flat = nb.reshape(M, m * K)
            fn = f[rows, flat].reshape(M, m, K, -1)
            delta = p[rows, flat].reshape(M, m, K, 3) - pa[:, :, None, :]
            f = blk(torch.cat([fn, delta], dim=-1)).amax(dim=2)
            p = pa
        return f.amax(dim=1) if pool else f


class FlatSpatialEncoder(nn.Module):
    """Ablation: per-point MLP over all vertices followed by one global MAX."""

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        d = cfg.d
        self.mlp = mlp([cfg.in_features, max(1, d // 4), max(1, d // 2), d, d])

    def forward(self, feats, pos, anchors=None, neighbors=None, pool=True):
        f = self.mlp(feats)
        return f.amax(dim=1) if pool else f


class Decoder(nn.Module):
    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        c = cfg.d_short + cfg.in_features
        self.body = mlp([c] + cfg.decoder_widths())
        self.head = nn.Linear(cfg.decoder_width, 3)

    def forward(self, S_tilde, feats):
        """S_tilde (n, T, d''), feats (n, T, N, C) -> (n, T, N, 3)."""
        N = feats.shape[2]
        z = torch.cat([S_tilde[:, :, None, :].expand(-1, -1, N, -1), feats], dim=-1)
        return self.head(self.body(z))


class HSTNet(nn.Module):
    def __init__(self, cfg: NetworkConfig, seed: int = 0, dtype=torch.float64):
        super().__init__()
        self.cfg = cfg
        self.spatial = FlatSpatialEncoder(cfg) if cfg.flat_spatial else SpatialEncoder(cfg)
        self.temporal = TemporalEncoder(cfg)
        self.decoder = Decoder(cfg)
        self.to(dtype)
        reset_parameters(self, seed)

    def encode_frames(self, feats, pos, anchors, neighbors):
        n, T, N, C = feats.shape
        S = self.spatial(feats.reshape(n * T, N, C), pos.reshape(n * T, N, 3), anchors, neighbors)
        return S.reshape(n, T, -1)

    def forward(self, feats, pos, anchors, neighbors):
        """feats (n, T, N, C), pos (n, T, N, 3) in meters; group indices flattened over (n*T).

        Returns absolute vertex positions in meters.
        """
        scale = self.cfg.coord_scale
        feats, pos = feats * scale, pos * scale
        S = self.encode_frames(feats, pos, anchors, neighbors)
        return self.decoder(self.temporal(S), feats) / scale


def reset_parameters(net: nn.Module, seed: int) -> None:
    """Fan-in uniform init of every linear map, drawn in module order from one generator."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, nn.Linear):
                bound = 1.0 / math.sqrt(module.in_features)
                for p in (module.weight, module.bias):
                    p.copy_(torch.rand(p.shape, generator=gen, dtype=p.dtype) * 2 * bound - bound)
            elif isinstance(module, nn.LayerNorm):
                module.weight.fill_(1.0)
                module.bias.fill_(0.0)


def loss_recons(pred: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Mean squared coordinate error."""
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {tuple(pred.shape)} != ground truth {tuple(gt.shape)}")
    return ((pred - gt) ** 2).mean()
