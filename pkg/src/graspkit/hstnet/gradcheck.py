"""Central finite differences against autograd.

ReLU and MAX make the network piecewise smooth.  When a perturbation of
+-h crosses a switch point, the central difference averages two different
slopes and is wrong, not the gradient.  Such coordinates are detected from
disagreeing one-sided differences; there the analytic value must match a
one-sided difference on a side without a switch.  Several switch points can
fall inside [-h, h] when the inputs are large, so kinked coordinates are also
probed with one-sided steps of h/10 and h/100.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch


@dataclass
class GradCheckResult:
    max_rel_err: float
    n_checked: int
    n_kinks: int        # coordinates with a switch point inside [-h, h]
    worst: tuple = ()   # (analytic, central, forward, backward) of the worst coordinate

    def passed(self, tol: float = 1e-3) -> bool:
        return self.max_rel_err < tol


def _rel(a, n, floor):
    return abs(a - n) / max(abs(a), abs(n), floor)


def check_gradients(fn, params, h: float = 1e-5, per_tensor: int | None = None, seed: int = 0,
                    kink_tol: float = 1e-4, floor_rel: float = 1e-6, refine=(10, 100)) -> GradCheckResult:
    """Compare d fn / d params with finite differences.

    ``fn`` takes no arguments, returns a scalar tensor and reads ``params``
    in place.  With ``per_tensor`` set, that many seeded random coordinates of
    every tensor are checked instead of all of them.  Relative errors use a
    floor of ``max(floor_rel * max|numeric|, 100 eps |f| / h)`` so round-off
    on near-zero entries does not count.
    """
    params = list(params)
    grads = torch.autograd.grad(fn(), params, allow_unused=True)
    gen = torch.Generator().manual_seed(seed)
    rows = []
    with torch.no_grad():
        f0 = fn().item()
        for p, g in zip(params, grads):
            n = p.numel()
            if per_tensor is not None and per_tensor < n:
                picks = torch.randperm(n, generator=gen)[:per_tensor].sort().values.tolist()
            else:
                picks = range(n)
            view = p.view(-1)
            for j in picks:
                orig = view[j].item()
                view[j] = orig + h
                up = fn().item()
                view[j] = orig - h
                down = fn().item()
                view[j] = orig
                a = 0.0 if g is None else g.reshape(-1)[j].item()
                fwd, bwd = (up - f0) / h, (f0 - down) / h
                extra = []
                if abs(fwd - bwd) > kink_tol * max(abs(fwd), abs(bwd), 1e-300):
                    for k in refine:
                        hs = h / k
                        view[j] = orig + hs
                        extra.append((fn().item() - f0) / hs)
                        view[j] = orig - hs
                        extra.append((f0 - fn().item()) / hs)
                        view[j] = orig
                rows.append((a, (up - down) / (2 * h), fwd, bwd, extra))
    # below this a numeric derivative is round-off: eps * |f| / h, with headroom
    noise = 1e2 * torch.finfo(torch.float64).eps * abs(f0) / h
    floor = max(floor_rel * max(abs(r[1]) for r in rows), noise, 1e-300)
    worst, kinks, worst_row = 0.0, 0, ()
    for row in rows:
        a, central, fwd, bwd, extra = row
        if _rel(fwd, bwd, floor) > kink_tol:
            kinks += 1
            err = min(_rel(a, x, floor) for x in (central, fwd, bwd, *extra))
        else:
            err = _rel(a, central, floor)
        if err > worst:
            worst, worst_row = err, row[:4]
    return GradCheckResult(worst, len(rows), kinks, worst_row)
