"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import random
from typing import Callable, Sequence

import torch


def grad_check(
    loss_fn: Callable[[], torch.Tensor],
    params: Sequence[torch.Tensor],
    eps: float = 1e-5,
    max_coords_per_param: int = 24,
    seed: int = 0,
) -> float:
    """Max relative error between autograd and central differences.

    ``loss_fn`` must be deterministic and scalar-valued; sampled coordinates
    of each parameter are perturbed by +/- ``eps``. The error is relative to
    the larger of the two values at that coordinate or the overall gradient
    scale, so coordinates with negligible gradient cannot drown the check in
    finite-difference noise. Run in float64 for meaningful tolerances.
    """
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    rng = random.Random(seed)

    pairs: list[tuple[float, float]] = []
    for p, g in zip(params, grads):
        flat_g = torch.zeros_like(p).view(-1) if g is None else g.reshape(-1)
        n = p.numel()
        coords = list(range(n)) if n <= max_coords_per_param else rng.sample(range(n), max_coords_per_param)
        flat_p = p.data.view(-1)
        for c in coords:
            orig = flat_p[c].item()
            with torch.no_grad():
                flat_p[c] = orig + eps
                f_plus = float(loss_fn())
                flat_p[c] = orig - eps
                f_minus = float(loss_fn())
                flat_p[c] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            analytic = float(flat_g[c])
            pairs.append((analytic, numeric))

    scale = max((abs(a) for a, _ in pairs), default=0.0)
    worst = 0.0
    for analytic, numeric in pairs:
        denom = max(abs(numeric), abs(analytic), scale, 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
