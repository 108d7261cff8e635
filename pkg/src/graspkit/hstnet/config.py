"""Network hyper-parameters and the shipped presets."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ..representation import RepresentationKind, feature_width


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    T: int = 30
    T_short: int = 5
    d: int = 256
    d_long: int = 256
    d_short: int = 256
    spatial_blocks: int = 4
    downsample_rate: int = 2
    radii: tuple = (0.02, 0.04, 0.08, 0.16)
    max_neighbors: int = 32
    heads: int = 8
    layers: int = 4
    ff_dim: int = 1024
    decoder_width: int = 16
    representation: str = "closest_vertex"
    n_object_points: int = 2048
    # lengths are multiplied by this on the way in and divided on the way out,
    # so the layers see centimeters rather than meters
    coord_scale: float = 100.0
    # ablations
    swap_temporal_order: bool = False
    long_only_temporal: bool = False
    flat_spatial: bool = False

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        for name in ("T", "T_short", "d", "d_long", "d_short", "spatial_blocks", "downsample_rate",
                     "max_neighbors", "heads", "layers", "ff_dim", "decoder_width", "n_object_points"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.coord_scale > 0:
            raise ConfigError("coord_scale must be positive")
        if self.T % self.T_short:
            raise ConfigError(f"T={self.T} is not divisible by T_short={self.T_short}")
        if len(self.radii) != self.spatial_blocks:
            raise ConfigError(f"need one radius per spatial block ({self.spatial_blocks}), got {len(self.radii)}")
        if any(r <= 0 for r in self.radii) or any(b < a for a, b in zip(self.radii, self.radii[1:])):
            raise ConfigError("radii must be positive and non-decreasing across blocks")
        for width in ("d_long", "d_short"):
            if getattr(self, width) % self.heads:
                raise ConfigError(f"{width}={getattr(self, width)} must be divisible by heads={self.heads}")
        if self.spatial_blocks > 1 and self.d < 4:
            raise ConfigError("d must be >= 4 for a multi-block spatial encoder")
        if self.swap_temporal_order and self.long_only_temporal:
            raise ConfigError("swap_temporal_order and long_only_temporal are mutually exclusive")
        try:
            RepresentationKind(self.representation)
        except ValueError:
            raise ConfigError(f"unknown representation {self.representation!r}") from None

    @property
    def B(self) -> int:
        return self.T // self.T_short

    @property
    def in_features(self) -> int:
        return feature_width(self.representation)

    @property
    def block_widths(self) -> list:
        # d/4, d/2, d, d, ... for the default four blocks
        n = self.spatial_blocks
        return [max(1, self.d >> max(0, n - 2 - k)) if k < n - 1 else self.d for k in range(n)]

    def anchor_counts(self, n_points: int) -> list:
        out, n = [], n_points
        for _ in range(self.spatial_blocks):
            n = math.ceil(n / self.downsample_rate)
            out.append(n)
        return out

    def decoder_widths(self) -> list:
        c = self.d_short + self.in_features
        ratio = self.decoder_width / c
        widths = [max(self.decoder_width, int(round(c * ratio ** (k / 4)))) for k in range(1, 4)]
        return widths + [self.decoder_width]

    @property
    def ablation(self) -> str:
        flags = [n for n in ("swap_temporal_order", "long_only_temporal", "flat_spatial") if getattr(self, n)]
        return "+".join(flags) or "none"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["radii"] = list(self.radii)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(f"unknown network config keys: {', '.join(extra)}")
        return cls(**data)

    def replace(self, **kw) -> "NetworkConfig":
        return NetworkConfig.from_dict({**self.to_dict(), **kw})


def full_config(**kw) -> NetworkConfig:
    return NetworkConfig(**kw)


def miniature_config(**kw) -> NetworkConfig:
    """Small preset for tests: 64-vertex hand, T=10, d=32."""
    base = dict(T=10, T_short=5, d=32, d_long=32, d_short=32, radii=(0.04, 0.08, 0.16, 0.32),
                heads=4, layers=2, ff_dim=64, n_object_points=512)
    base.update(kw)
    return NetworkConfig(**base)


PRESETS = {"full": full_config, "miniature": miniature_config}
MINIATURE_HAND = (64, 16)    # (vertices, joints) of the hand model paired with the miniature preset
