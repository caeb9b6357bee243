"""Central finite-difference gradient checking for TaggerParams losses."""

import numpy as np

from scdl.tagger import TaggerParams, zeros_like

EPSILON = 1e-5
# Floor on the relative-error denominator: entries whose analytic and
# numeric gradients are both tiny sit inside finite-difference noise.
DENOM_FLOOR = 1e-6


def finite_difference_grad(params: TaggerParams, loss_fn, eps: float = EPSILON) -> TaggerParams:
    """Central differences of loss_fn(params) over every parameter entry."""
    grad = zeros_like(params)
    for p_block, g_block in zip(params.blocks(), grad.blocks()):
        flat_p = p_block.ravel()
        flat_g = g_block.ravel()
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + eps
            up = loss_fn(params)
            flat_p[i] = orig - eps
            down = loss_fn(params)
            flat_p[i] = orig
            flat_g[i] = (up - down) / (2.0 * eps)
    return grad


def max_relative_error(analytic: TaggerParams, numeric: TaggerParams) -> float:
    worst = 0.0
    for a, n in zip(analytic.blocks(), numeric.blocks()):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), DENOM_FLOOR)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst
