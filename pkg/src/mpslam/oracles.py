"""Independent reference solvers for small fixture problems: an exact 1-D
grid Bayes filter for the single-BS corridor reduction. The exact
data-association oracle lives in assoc.da_exact; both are wired to the
`oracle` CLI command.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assoc import ratio_matrix
from .model import EngineConfig
from .synth import NoiseConfig


@dataclass
class GridPosterior:
    steps: np.ndarray
    means: np.ndarray
    stds: np.ndarray


def grid_filter_1d(
    z_per_step: list[np.ndarray],
    bs_position: np.ndarray,
    prior_mean_x: float,
    prior_sigma_x: float,
    noise: NoiseConfig,
    cfg: EngineConfig,
    y_fixed: float = 0.0,
    o_fixed: float = 0.0,
    lo: float = 0.1,
    hi: float = 20.0,
    n_cells: int = 4000,
) -> GridPosterior:
    """Exact Bayes filter on a 1-D position grid for a static MT observing a
    single synchronized BS (no map features, possible clutter).

    The per-step update is the exact single-feature association sum
    (1 - p_d) + sum_m p_d f(z_m | x) / (mu_fp f_fp), which the engine's DA
    reproduces exactly for one feature row. Static state, so the posterior is
    the running product of likelihoods against the Gaussian prior.
    """
    xs = np.linspace(lo, hi, n_cells)
    delta = np.asarray(bs_position)[None, :] - np.column_stack([xs, np.full(n_cells, y_fixed)])
    d = np.linalg.norm(delta, axis=1)
    bearing = np.arctan2(delta[:, 1], delta[:, 0])
    aoa = bearing - o_fixed
    aod = bearing + np.pi
    log_post = -0.5 * ((xs - prior_mean_x) / prior_sigma_x) ** 2
    steps, means, stds = [], [], []
    for n, z in enumerate(z_per_step):
        if len(z):
            ratios = ratio_matrix(z, d, aoa, aod, noise, cfg)
            term = (1.0 - cfg.p_d) + ratios.sum(axis=1)
            log_post = log_post + np.log(np.maximum(term, 1e-300))
        log_post = log_post - log_post.max()
        w = np.exp(log_post)
        w = w / w.sum()
        mean = float(np.dot(w, xs))
        std = float(np.sqrt(np.dot(w, (xs - mean) ** 2)))
        steps.append(n)
        means.append(mean)
        stds.append(std)
    return GridPosterior(np.array(steps), np.array(means), np.array(stds))
