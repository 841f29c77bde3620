import numpy as np
import pytest

from mpslam.engine import Engine
from mpslam.metrics import bias_difference_rmse, ospa, position_rmse, separation_accuracy
from mpslam.scenario import DOMAIN_SYNTH, generate_trajectories, rng_stream
from mpslam.synth import synthesize


def synth_step(cfg, truth, n):
    """Measurement sets for all MTs at step n, same stream the CLI uses."""
    z_per_mt = []
    for i in range(cfg.n_mt):
        rng = rng_stream(cfg.seed, DOMAIN_SYNTH, n, i)
        st = truth.mt_states[n, i]
        b_bs = {j + 1: truth.bs_biases[n, j] for j in range(cfg.n_bs)}
        z, _ = synthesize(
            st[:2], st[2], st[5], cfg.base_stations, truth.vas, b_bs,
            cfg.noise, rng, walls=cfg.walls, visibility=cfg.visibility,
        )
        z_per_mt.append(z)
    return z_per_mt


def run_scenario_metrics(cfg, prune=True):
    """Full engine run returning per-step (pos_rmse, bias_rmse, ospa, sep)."""
    truth = generate_trajectories(cfg)
    engine = Engine(cfg, truth, prune=prune)
    tv = np.array([v.position for v in truth.vas]).reshape(-1, 2)
    tl = np.array([v.bs_id for v in truth.vas])
    rows = []
    for n in range(cfg.n_steps):
        est = engine.step(synth_step(cfg, truth, n))
        pe = position_rmse(np.array([m.position for m in est.mts]), truth.mt_states[n, :, :2])
        bd = bias_difference_rmse(
            est.bs_biases, np.array([m.bias for m in est.mts]),
            truth.bs_biases[n], truth.mt_states[n, :, 5],
        )
        exy = np.array([p.position for p in est.pvas]).reshape(-1, 2)
        elab = np.array([p.bs_index for p in est.pvas])
        o = ospa(exy, tv, 2.0, 1.0)
        sep, _ = separation_accuracy(o.assignment, elab, tl, 2.0)
        rows.append((pe, bd, o.total, sep))
    return np.array(rows), engine, truth


@pytest.fixture
def small_engine_cfg():
    """Desk scenario with small particle counts for fast engine tests."""
    from mpslam.model import EngineConfig
    from mpslam.scenario import desk_scenario

    cfg = desk_scenario(seed=21, n_steps=6)
    cfg.engine = EngineConfig(
        particles_mt=600, particles_pva=300, particles_bias=400, prior_sigma_pos=0.3
    )
    return cfg
