"""Probabilistic domain types (particle beliefs) and state-transition
operations.

MT particles are rows of a (P, 6) array with columns position x/y,
orientation, velocity x/y, and MT clock bias (meters). PVA position
particles are (P, 2); BS bias particles are (P,) scalars.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import wrap_angle

# column indices of an MT state particle
MT_PX, MT_PY, MT_O, MT_VX, MT_VY, MT_B = range(6)

WEIGHT_TOL = 1e-9


@dataclass
class ParticleBelief:
    """Weighted particle representation of one marginal posterior."""

    particles: np.ndarray  # (P,) or (P, D)
    weights: np.ndarray  # (P,), nonnegative, sums to 1

    def __post_init__(self):
        self.particles = np.asarray(self.particles, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.weights) != len(self.particles):
            raise ValueError("particles and weights length mismatch")
        if np.any(self.weights < 0):
            raise ValueError("negative particle weight")
        if abs(self.weights.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must sum to 1")

    @classmethod
    def from_samples(cls, particles: np.ndarray) -> "ParticleBelief":
        particles = np.asarray(particles, dtype=float)
        n = len(particles)
        return cls(particles, np.full(n, 1.0 / n))

    @property
    def count(self) -> int:
        return len(self.weights)

    def mean(self) -> np.ndarray:
        return np.average(self.particles, axis=0, weights=self.weights)

    def cov(self) -> np.ndarray:
        mu = self.mean()
        dev = self.particles - mu
        if dev.ndim == 1:
            return np.array(np.sum(self.weights * dev**2))
        return (dev * self.weights[:, None]).T @ dev

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights**2))

    def copy(self) -> "ParticleBelief":
        return ParticleBelief(self.particles.copy(), self.weights.copy())


def systematic_indices(weights: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: n indices with a single uniform offset."""
    positions = (rng.random() + np.arange(n)) / n
    cume = np.cumsum(weights)
    cume[-1] = 1.0  # guard against cumulative rounding
    return np.searchsorted(cume, positions)


def resample(belief: ParticleBelief, rng: np.random.Generator, n: int | None = None) -> ParticleBelief:
    n = belief.count if n is None else n
    idx = systematic_indices(belief.weights, n, rng)
    return ParticleBelief.from_samples(belief.particles[idx])


@dataclass
class PvaHypothesis:
    """One potential virtual anchor: position belief, existence probability,
    and the BS it was created for (saved at creation; pruning keeps it valid)."""

    key: int  # creation-ordered stable id
    bs_index: int  # 1-based BS index, immutable after creation
    belief: ParticleBelief
    existence: float
    created_step: int = 0

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ValueError("existence must be in [0, 1]")


@dataclass
class EngineConfig:
    # model constants shared with the synthesizer
    p_d: float = 0.95
    p_s: float = 0.999
    mu_n: float = 0.05
    mu_fp: float = 1.0
    p_cf: float = 0.5
    p_pr: float = 1.0e-4
    # particle counts
    particles_mt: int = 5000
    particles_pva: int = 2000
    particles_bias: int = 2000
    # data association iteration
    da_max_iters: int = 200
    da_tol: float = 1.0e-6
    outer_iters: int = 1
    # MT motion / bias process noise
    sigma_accel: float = 0.15  # m/s^2 white acceleration
    sigma_orient: float = 0.15  # rad per step orientation random walk
    sigma_bias_mt: float = 0.01  # m per step
    sigma_bias_bs: float = 0.01  # m per step
    # prior perturbations around the true initial MT state
    prior_sigma_pos: float = 1.0
    prior_sigma_orient: float = 0.1
    prior_sigma_vel: float = 0.1
    # resampling hygiene
    ess_fraction: float = 0.5
    jitter_scale: float = 0.1
    # partner-belief collapse in belief updates: "moment" folds the partner
    # variance into the Gaussian LHF, "mean" evaluates at the mean only
    coupling: str = "moment"
    birth_mode: str = "closed_form"  # or "mc"
    gate: float = 1.0e-12

    def __post_init__(self):
        if not 0.0 < self.p_d <= 1.0:
            raise ValueError("p_d must be in (0, 1]")
        if not 0.0 < self.p_s <= 1.0:
            raise ValueError("p_s must be in (0, 1]")
        if not 0.0 < self.p_cf < 1.0:
            raise ValueError("p_cf must be in (0, 1)")
        if not 0.0 < self.p_pr < self.p_cf:
            raise ValueError("need 0 < p_pr < p_cf")
        if self.mu_n < 0 or self.mu_fp <= 0:
            raise ValueError("need mu_n >= 0 and mu_fp > 0")
        if self.coupling not in ("moment", "mean"):
            raise ValueError("coupling must be 'moment' or 'mean'")
        if self.birth_mode not in ("closed_form", "mc"):
            raise ValueError("birth_mode must be 'closed_form' or 'mc'")


def predict_mt(belief: ParticleBelief, dt: float, cfg: EngineConfig, rng: np.random.Generator) -> ParticleBelief:
    """Nearly-constant-velocity transition with white acceleration, wrapped
    orientation random walk, and MT bias random walk. Weights are unchanged."""
    p = belief.particles.copy()
    n = len(p)
    acc = cfg.sigma_accel * rng.standard_normal((n, 2))
    p[:, MT_PX:MT_PY + 1] += p[:, MT_VX:MT_VY + 1] * dt + 0.5 * acc * dt**2
    p[:, MT_VX:MT_VY + 1] += acc * dt
    p[:, MT_O] = wrap_angle(p[:, MT_O] + cfg.sigma_orient * rng.standard_normal(n))
    p[:, MT_B] += cfg.sigma_bias_mt * rng.standard_normal(n)
    return ParticleBelief(p, belief.weights.copy())


def predict_bias_bs(belief: ParticleBelief, cfg: EngineConfig, rng: np.random.Generator) -> ParticleBelief:
    """BS bias random walk; sigma 0 recovers a static bias."""
    p = belief.particles + cfg.sigma_bias_bs * rng.standard_normal(belief.count)
    return ParticleBelief(p, belief.weights.copy())


def predict_pva(h: PvaHypothesis, cfg: EngineConfig) -> PvaHypothesis:
    """Survival-thinned existence; positions are static (Dirac transition)."""
    return replace(h, existence=cfg.p_s * h.existence)


def inter_mt_transition(h: PvaHypothesis) -> PvaHypothesis:
    """Dirac transition between consecutive MT updates within one time step.

    Exact identity; present so the engine's per-MT loop mirrors the
    sequential factorization one node at a time.
    """
    return h
