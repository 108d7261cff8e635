"""Gaussian perturbation of hand parameters (translation / pose / both).

Noise is drawn i.i.d. per frame in parameter space.  For a given seed the
translation draw and the pose draw are always generated in the same order, so
mode "B" applies exactly the noise that modes "T" and "R" would apply
separately.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d

from .hand_model import wrap_axis_angle
from .sequence_io import InteractionSequence

DEFAULT_SIGMAS = {"T": (0.01, 0.0), "R": (0.0, 0.3), "B": (0.01, 0.3)}


class PerturbationError(ValueError):
    pass


@dataclass(frozen=True)
class PerturbSpec:
    mode: str = "B"
    sigma_translation: float | None = None   # meters
    sigma_pose: float | None = None          # radians
    seed: int = 0
    lowpass: int = 0    # moving-average window (frames) for drift-like noise; 0 = i.i.d.

    def __post_init__(self):
        if self.mode not in DEFAULT_SIGMAS:
            raise PerturbationError(f"mode must be one of T, R, B; got {self.mode!r}")
        for name in ("sigma_translation", "sigma_pose"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise PerturbationError(f"{name} must be >= 0")
        if self.lowpass < 0:
            raise PerturbationError("lowpass window must be >= 0")

    @property
    def sigmas(self) -> tuple:
        """Effective (translation, pose) standard deviations for this mode."""
        dt, dr = DEFAULT_SIGMAS[self.mode]
        st = dt if self.sigma_translation is None else self.sigma_translation
        sr = dr if self.sigma_pose is None else self.sigma_pose
        return (st if self.mode in "TB" else 0.0, sr if self.mode in "RB" else 0.0)


def _smooth(noise, window):
    if window <= 1:
        return noise
    smoothed = uniform_filter1d(noise, size=window, axis=0, mode="nearest")
    # renormalize so the marginal std matches the i.i.d. case
    scale = noise.std() / max(smoothed.std(), 1e-300)
    return smoothed * scale


def sample_noise(spec: PerturbSpec, n_frames: int, pose_dim: int):
    """Raw additive noise ``(translation (T, 3), rotations (T, pose_dim - 3))``."""
    rng = np.random.default_rng(spec.seed)
    st, sr = spec.sigmas
    unit_t = rng.standard_normal((n_frames, 3))
    unit_r = rng.standard_normal((n_frames, pose_dim - 3))
    return _smooth(unit_t, spec.lowpass) * st, _smooth(unit_r, spec.lowpass) * sr


def perturb_sequence(seq: InteractionSequence, spec: PerturbSpec) -> InteractionSequence:
    if not seq.has_params:
        raise PerturbationError("parameter-space perturbation requires HandParams")
    T, D = seq.theta.shape
    dt, dr = sample_noise(spec, T, D)
    theta = seq.theta.copy()
    theta[:, :3] += dt
    theta[:, 3:] += dr
    if np.any(dr != 0):
        theta[:, 3:] = wrap_axis_angle(theta[:, 3:].reshape(T, -1, 3)).reshape(T, -1)
    st, sr = spec.sigmas
    return seq.with_params(seq.beta.copy(), theta,
                           perturbation={"mode": spec.mode, "sigma_translation": st, "sigma_pose": sr,
                                         "seed": spec.seed, "lowpass": spec.lowpass})
