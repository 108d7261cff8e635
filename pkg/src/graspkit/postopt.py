"""Fit one shared shape and per-frame pose to coarse vertex predictions.

The objective is ``consistent + lambda_smooth * smooth`` where

* ``consistent`` is the per-coordinate mean squared difference between the
  skinned vertices and the target vertices,
* ``smooth`` is the per-coordinate mean squared frame-to-frame vertex
  velocity plus ``theta_weight`` times the mean squared frame-to-frame change
  of the pose vector.

Minimization uses limited-memory BFGS directions with an Armijo backtracking
line search, so every accepted iterate lowers the objective.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .hand_model import LbsModel, lbs_torch

log = logging.getLogger(__name__)


class PostOptError(ValueError):
    pass


@dataclass(frozen=True)
class PostOptConfig:
    lambda_smooth: float = 0.1
    theta_weight: float = 1e-4      # 1 rad/frame of pose change costs like 1 cm/frame of vertex motion
    max_iters: int = 500
    tol: float = 1e-10              # relative decrease of the objective
    grad_tol: float = 1e-14
    history: int = 10               # L-BFGS memory
    armijo: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if self.lambda_smooth < 0:
            raise PostOptError("lambda_smooth must be >= 0")
        if self.theta_weight < 0:
            raise PostOptError("theta_weight must be >= 0")
        if not self.tol > 0:
            raise PostOptError("tol must be > 0")
        if self.max_iters < 0:
            raise PostOptError("max_iters must be >= 0")


@dataclass
class PostOptResult:
    beta: np.ndarray
    theta: np.ndarray
    vertices: np.ndarray
    trace: list = field(default_factory=list)   # dicts with iter, total, consistent, smooth, step
    iterations: int = 0
    converged: bool = True
    message: str = ""


def _as_tensor(x):
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def loss_consistent(model: LbsModel, beta, theta, target) -> torch.Tensor:
    beta, theta, target = (x if torch.is_tensor(x) else _as_tensor(x) for x in (beta, theta, target))
    verts, _ = lbs_torch(model, beta, theta)
    if verts.shape != target.shape:
        raise PostOptError(f"target shape {tuple(target.shape)} != skinned shape {tuple(verts.shape)}")
    return ((verts - target) ** 2).mean()


def _smooth_terms(verts, theta, theta_weight):
    if verts.shape[0] < 2:
        return verts.sum() * 0.0
    vel = ((verts[1:] - verts[:-1]) ** 2).mean()
    dtheta = ((theta[1:] - theta[:-1]) ** 2).mean()
    return vel + theta_weight * dtheta


def loss_smooth(model: LbsModel, beta, theta, theta_weight: float = PostOptConfig.theta_weight) -> torch.Tensor:
    beta, theta = (x if torch.is_tensor(x) else _as_tensor(x) for x in (beta, theta))
    verts, _ = lbs_torch(model, beta, theta)
    return _smooth_terms(verts, theta, theta_weight)


class _Objective:
    def __init__(self, model, target, cfg: PostOptConfig, n_shape, pose_shape):
        self.model = model
        self.target = target
        self.cfg = cfg
        self.n_shape = n_shape
        self.pose_shape = pose_shape

    def split(self, x):
        return x[:self.n_shape], x[self.n_shape:].reshape(self.pose_shape)

    def terms(self, x):
        beta, theta = self.split(x)
        verts, _ = lbs_torch(self.model, beta, theta)
        cons = ((verts - self.target) ** 2).mean()
        smooth = _smooth_terms(verts, theta, self.cfg.theta_weight)
        return cons + self.cfg.lambda_smooth * smooth, cons, smooth, verts

    def value(self, x):
        with torch.no_grad():
            return float(self.terms(x)[0])

    def value_and_grad(self, x):
        x = x.detach().requires_grad_(True)
        total, cons, smooth, _ = self.terms(x)
        (g,) = torch.autograd.grad(total, x)
        return float(total.detach()), float(cons.detach()), float(smooth.detach()), g.detach()


def _two_loop(g, s_hist, y_hist):
    q = g.clone()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        q -= a * y
        alphas.append((rho, a))
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q *= float(s @ y) / float(y @ y)
    for (s, y), (rho, a) in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


def optimize(model: LbsModel, beta0, theta0, target, cfg: PostOptConfig = PostOptConfig(),
             callback=None) -> PostOptResult:
    """Minimize the post-optimization objective from ``(beta0, theta0)``.

    ``theta0`` is (T, pose_dim), ``target`` (T, N, 3).  A single beta is shared
    by every frame.
    """
    beta0 = np.asarray(beta0, dtype=np.float64).reshape(-1)
    theta0 = np.asarray(theta0, dtype=np.float64)
    target_t = _as_tensor(target)
    if theta0.ndim != 2 or theta0.shape[1] != model.pose_dim:
        raise PostOptError(f"theta must be (T, {model.pose_dim}), got {theta0.shape}")
    if beta0.shape[0] != model.n_shape:
        raise PostOptError(f"beta must have {model.n_shape} entries, got {beta0.shape[0]}")
    if target_t.shape != (theta0.shape[0], model.n_vertices, 3):
        raise PostOptError(f"target must be ({theta0.shape[0]}, {model.n_vertices}, 3), got {tuple(target_t.shape)}")
    if not torch.isfinite(target_t).all():
        raise PostOptError("target contains non-finite values")

    obj = _Objective(model, target_t, cfg, model.n_shape, theta0.shape)
    x = torch.cat([_as_tensor(beta0), _as_tensor(theta0).reshape(-1)])
    f, cons, smooth, g = obj.value_and_grad(x)
    if not np.isfinite(f):
        raise PostOptError("post-optimization loss is not finite at the initial parameters")
    trace = [{"iter": 0, "total": f, "consistent": cons, "smooth": smooth, "step": 0.0}]
    s_hist, y_hist = [], []
    converged, message = False, "max_iters reached"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if float(g.abs().max()) <= cfg.grad_tol:
            converged, message, it = True, "gradient below tolerance", it - 1
            break
        accepted = None
        for direction in ("lbfgs", "steepest"):
            if direction == "lbfgs":
                d = _two_loop(g, s_hist, y_hist)
                alpha = 1.0 if s_hist else 1.0 / max(float(g.norm()), 1e-300)
            else:
                s_hist.clear()
                y_hist.clear()
                d = -g
                alpha = 1.0 / max(float(g.norm()), 1e-300)
            slope = float(g @ d)
            if slope >= 0:
                continue
            for _ in range(cfg.max_backtracks):
                f_new = obj.value(x + alpha * d)
                if np.isfinite(f_new) and f_new <= f + cfg.armijo * alpha * slope:
                    accepted = (alpha, d)
                    break
                alpha *= 0.5
            if accepted is not None:
                break
        if accepted is None:
            converged, message, it = True, "line search cannot decrease the objective further", it - 1
            break
        alpha, d = accepted
        x_new = x + alpha * d
        f_new, cons, smooth, g_new = obj.value_and_grad(x_new)
        s, y = x_new - x, g_new - g
        if float(s @ y) > 1e-12 * float(s @ s) ** 0.5 * float(y @ y) ** 0.5:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > cfg.history:
                s_hist.pop(0)
                y_hist.pop(0)
        rel = (f - f_new) / max(abs(f), 1e-300)
        x, f, g = x_new, f_new, g_new
        trace.append({"iter": it, "total": f, "consistent": cons, "smooth": smooth, "step": alpha})
        if callback is not None:
            callback(trace[-1])
        if rel < cfg.tol:
            converged, message = True, "relative decrease below tolerance"
            break
    if not converged:
        log.info("post-optimization stopped after %d iterations without converging", it)
    beta, theta = obj.split(x)
    with torch.no_grad():
        verts, _ = lbs_torch(model, beta, theta)
    return PostOptResult(beta.numpy().copy(), theta.numpy().copy(), verts.numpy(), trace, it, converged, message)


def initial_fit(model: LbsModel, target, cfg: PostOptConfig = PostOptConfig(max_iters=200)) -> PostOptResult:
    """Coarse parameters from vertices alone: rest pose moved onto each frame's centroid."""
    target = np.asarray(target, dtype=np.float64)
    theta0 = np.zeros((target.shape[0], model.pose_dim))
    theta0[:, :3] = target.mean(axis=1) - model.template.mean(axis=0)
    coarse = PostOptConfig(**{**cfg.__dict__, "lambda_smooth": 0.0})
    return optimize(model, np.zeros(model.n_shape), theta0, target, coarse)


def refine_parameters(model: LbsModel, target, init_beta=None, init_theta=None,
                      cfg: PostOptConfig = PostOptConfig()) -> PostOptResult:
    """Post-optimize from given parameters, bootstrapping them from vertices when absent."""
    if init_theta is None:
        boot = initial_fit(model, target)
        init_beta, init_theta = boot.beta, boot.theta
    if init_beta is None:
        init_beta = np.zeros(model.n_shape)
    return optimize(model, init_beta, init_theta, target, cfg)


def trace_csv(trace: list) -> str:
    lines = ["iter,total,consistent,smooth,step"]
    lines += [f"{r['iter']},{r['total']!r},{r['consistent']!r},{r['smooth']!r},{r['step']!r}" for r in trace]
    return "\n".join(lines) + "\n"
