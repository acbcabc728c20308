"""Position/motion and appearance affinities fused into assignment costs.

The two affinity matrices live on very different scales (densities around
1e-3 versus appearance scores around 0.5), so each is min-max normalised
over all of its entries jointly before the product is turned into a cost
of -alpha * ln(pm * appearance), capped at 10000 for vanishing products.
"""

from __future__ import annotations

import math

import numpy as np

from .assignment import FORBIDDEN_COST
from .gmphd import GaussianComponent, ModelParams, likelihood

DEFAULT_ALPHA = 100.0
# products at or below this are treated as vanished and get the cap
UNDERFLOW_PRODUCT = 1e-39


def pm_affinity(track_pred: GaussianComponent, z, params: ModelParams) -> float:
    """Weighted observation likelihood of a predicted component."""
    return track_pred.weight * likelihood(track_pred, z, params)


def minmax_normalize(a: np.ndarray) -> np.ndarray:
    """Scale a matrix into [0, 1] by its global minimum and maximum.

    A constant matrix maps to all ones so that a lone candidate pair stays
    assignable.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.size == 0:
        raise ValueError("cannot normalize an empty matrix")
    lo = a.min()
    hi = a.max()
    if hi == lo:
        return np.ones_like(a)
    return (a - lo) / (hi - lo)


def fuse(pm_norm: np.ndarray, appr_norm: np.ndarray, alpha: float = DEFAULT_ALPHA) -> np.ndarray:
    """Cost matrix -alpha * ln(pm * appearance), entries in [0, 10000].

    Vanishing products (including exact zeros after normalisation) are
    capped at 10000, which marks the pair as forbidden for the solver.
    """
    pm_norm = np.asarray(pm_norm, dtype=np.float64)
    appr_norm = np.asarray(appr_norm, dtype=np.float64)
    if pm_norm.shape != appr_norm.shape:
        raise ValueError(f"affinity shapes differ: {pm_norm.shape} vs {appr_norm.shape}")
    costs = np.empty_like(pm_norm)
    flat_costs = costs.ravel()
    for idx, (p, q) in enumerate(zip(pm_norm.ravel(), appr_norm.ravel())):
        product = p * q
        if product <= UNDERFLOW_PRODUCT:
            flat_costs[idx] = FORBIDDEN_COST
            continue
        cost = -alpha * math.log(product)
        flat_costs[idx] = min(cost, FORBIDDEN_COST)
    return costs
