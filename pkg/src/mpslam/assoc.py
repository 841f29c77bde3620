"""Probabilistic data association: pseudo-likelihood ratios for BS anchors
and legacy PVAs, birth messages for new PVAs, loopy belief propagation over
the paired feature-oriented / measurement-oriented association variables,
and an exact enumeration oracle for small problems.

Likelihood ratios are always relative to the false-positive reference
p_d * f(z | state) / (mu_fp * f_fp(z)), so a value of 1 means "as plausible
as clutter".
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angle
from .model import EngineConfig, ParticleBelief, PvaHypothesis, MT_PX, MT_PY, MT_O, MT_B
from .synth import NoiseConfig

LIKELIHOOD_FLOOR = 1e-300


@dataclass
class AssociationProblem:
    """Inputs of one DA round.

    beta has one row per feature (J BS anchors first, then K_eff legacy
    PVAs) and M+1 columns; column 0 is the no-detection weight, column m the
    likelihood ratio for measurement m. xi holds the per-measurement weight
    of "not from any existing feature".
    """

    beta: np.ndarray  # (J + K_eff, M + 1)
    xi: np.ndarray  # (M,)
    n_bs: int

    def __post_init__(self):
        self.beta = np.atleast_2d(np.asarray(self.beta, dtype=float))
        self.xi = np.asarray(self.xi, dtype=float)
        if np.any(self.beta < 0) or np.any(self.xi < 0):
            raise ValueError("association weights must be nonnegative")
        if self.beta.shape[1] != len(self.xi) + 1:
            raise ValueError("beta/xi shape mismatch")

    @property
    def n_rows(self) -> int:
        return self.beta.shape[0]

    @property
    def n_meas(self) -> int:
        return len(self.xi)


@dataclass
class AssociationMarginals:
    """Converged marginals: feature-oriented rows over {0, 1..M},
    measurement-oriented rows over {features..., none}, and the BS-source
    posterior for the "none" (potentially new) case.

    nu holds the converged extrinsic measurement-to-feature messages; belief
    updates weight per-measurement likelihoods with these (not with the
    normalized marginals) so the single-feature case reduces to the exact
    Bayes rule and duplicated features attrit instead of locking up."""

    p_underline: np.ndarray  # (R, M+1)
    p_overline: np.ndarray  # (M, R+1), last column = no existing feature
    p_source: np.ndarray  # (M, J)
    converged: bool = True
    n_iters: int = 0
    nu: np.ndarray | None = None  # (R, M) extrinsic messages


def gaussian_pdf(x, var):
    var = np.maximum(var, LIKELIHOOD_FLOOR)
    return np.exp(-0.5 * x * x / var) / np.sqrt(2.0 * np.pi * var)


def _wrap_residual(x: np.ndarray) -> np.ndarray:
    """Wrap angle residuals in (-2pi, 2pi) into [-pi, pi); cheaper than the
    general modulo wrap on large matrices."""
    x = np.where(x >= np.pi, x - TWO_PI, x)
    return np.where(x < -np.pi, x + TWO_PI, x)


TWO_PI = 2.0 * np.pi


def ratio_matrix(
    z: np.ndarray,
    d_pred: np.ndarray,
    aoa_pred: np.ndarray,
    aod_pred: np.ndarray,
    noise: NoiseConfig,
    cfg: EngineConfig,
    extra_d=0.0,
    extra_phi=0.0,
    extra_theta=0.0,
):
    """(P, M) likelihood ratios of M measurements against P predictions.

    The extra_* terms inflate the Gaussian variances (scalar or per
    prediction); belief updates use them to fold in the spread of partner
    beliefs that were collapsed to point values. The three Gaussian factors
    are fused into a single exponential.
    """
    z = np.atleast_2d(z)
    d_pred = np.asarray(d_pred, dtype=float)[:, None]
    aoa_pred = np.asarray(aoa_pred, dtype=float)[:, None]
    aod_pred = np.asarray(aod_pred, dtype=float)[:, None]
    zu2 = z[None, :, 3] ** 2
    eight_pi2 = 8.0 * np.pi**2
    from .geometry import SPEED_OF_LIGHT

    var_d = SPEED_OF_LIGHT**2 / (eight_pi2 * noise.beta_bw_hz**2 * zu2) + _col(extra_d)
    var_phi = 1.0 / (eight_pi2 * zu2 * noise.aperture_mt.d2(aoa_pred)) + _col(extra_phi)
    var_theta = 1.0 / (eight_pi2 * zu2 * noise.aperture_bs.d2(aod_pred)) + _col(extra_theta)
    rd = z[None, :, 0] - d_pred
    rphi = _wrap_residual(z[None, :, 1] - aoa_pred)
    rtheta = _wrap_residual(z[None, :, 2] - aod_pred)
    expo = rd * rd / var_d + rphi * rphi / var_phi + rtheta * rtheta / var_theta
    norm = (TWO_PI) ** 1.5 * np.sqrt(var_d * var_phi * var_theta)
    like = np.exp(-0.5 * expo) / norm
    ratio = cfg.p_d * np.maximum(like, LIKELIHOOD_FLOOR) / (cfg.mu_fp * noise.fp_density())
    return np.where(ratio < cfg.gate, 0.0, ratio)


def _col(x):
    x = np.asarray(x, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def angle_factor_matrix(
    z: np.ndarray,
    aoa_pred: np.ndarray,
    aod_pred: np.ndarray,
    noise: NoiseConfig,
) -> np.ndarray:
    """(P, M) product of the AoA and AoD Gaussian pdfs, no distance factor.

    Used where the distance part is handled separately because it carries the
    bias dependence.
    """
    z = np.atleast_2d(z)
    aoa_pred = np.asarray(aoa_pred, dtype=float)[:, None]
    aod_pred = np.asarray(aod_pred, dtype=float)[:, None]
    zu2 = z[None, :, 3] ** 2
    eight_pi2 = 8.0 * np.pi**2
    var_phi = 1.0 / (eight_pi2 * zu2 * noise.aperture_mt.d2(aoa_pred))
    var_theta = 1.0 / (eight_pi2 * zu2 * noise.aperture_bs.d2(aod_pred))
    rphi = _wrap_residual(z[None, :, 1] - aoa_pred)
    rtheta = _wrap_residual(z[None, :, 2] - aod_pred)
    expo = rphi * rphi / var_phi + rtheta * rtheta / var_theta
    return np.exp(-0.5 * expo) / (TWO_PI * np.sqrt(var_phi * var_theta))


def ratio_likelihood(
    z_row: np.ndarray,
    d_pred,
    aoa_pred,
    aod_pred,
    noise: NoiseConfig,
    cfg: EngineConfig,
    extra_var=(0.0, 0.0, 0.0),
):
    """Single-measurement likelihood ratio, vectorized over predictions."""
    return ratio_matrix(
        np.asarray(z_row)[None, :],
        d_pred,
        aoa_pred,
        aod_pred,
        noise,
        cfg,
        extra_d=extra_var[0],
        extra_phi=extra_var[1],
        extra_theta=extra_var[2],
    )[:, 0]


def _feature_geometry(feat_xy: np.ndarray, mt_particles: np.ndarray):
    """Predicted (distance, aoa, aod) of feature positions against MT
    particles; both arguments broadcast row-wise."""
    delta = feat_xy - mt_particles[:, MT_PX:MT_PY + 1]
    d = np.linalg.norm(delta, axis=1)
    bearing = np.arctan2(delta[:, 1], delta[:, 0])
    aoa = wrap_angle(bearing - mt_particles[:, MT_O])
    aod = wrap_angle(bearing + np.pi)
    return d, aoa, aod


def pair_indices(belief: ParticleBelief, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices pairing an independent belief with n joint samples.

    Draws by weight (systematic) and permutes, so repeated pairings do not
    always couple the same particles.
    """
    from .model import systematic_indices

    idx = systematic_indices(belief.weights, n, rng)
    return rng.permutation(idx)


def beta_bs(
    bs_position: np.ndarray,
    mt_belief: ParticleBelief,
    bias_belief: ParticleBelief,
    z: np.ndarray,
    noise: NoiseConfig,
    cfg: EngineConfig,
    bias_idx: np.ndarray | None = None,
) -> np.ndarray:
    """Pseudo-likelihood row for one BS anchor: Monte-Carlo expectation of
    the ratio over MT particles paired with BS bias particles."""
    mt = mt_belief.particles
    n = len(mt)
    if bias_idx is None:
        bias_idx = np.arange(n) % bias_belief.count
    b_bs = bias_belief.particles[bias_idx]
    d, aoa, aod = _feature_geometry(np.asarray(bs_position), mt)
    d_pred = d - (mt[:, MT_B] - b_bs)
    m = z.shape[0]
    row = np.empty(m + 1)
    row[0] = 1.0 - cfg.p_d
    if m:
        row[1:] = mt_belief.weights @ ratio_matrix(z, d_pred, aoa, aod, noise, cfg)
    return np.where(row < cfg.gate, 0.0, row)


def beta_legacy(
    pva: PvaHypothesis,
    mt_belief: ParticleBelief,
    bias_belief: ParticleBelief,
    z: np.ndarray,
    noise: NoiseConfig,
    cfg: EngineConfig,
    bias_idx: np.ndarray | None = None,
    pva_idx: np.ndarray | None = None,
) -> np.ndarray:
    """Pseudo-likelihood row for one legacy PVA; existence-weighted, with the
    nonexistent case forcing association 0."""
    mt = mt_belief.particles
    n = len(mt)
    if bias_idx is None:
        bias_idx = np.arange(n) % bias_belief.count
    if pva_idx is None:
        pva_idx = np.arange(n) % pva.belief.count
    b_bs = bias_belief.particles[bias_idx]
    feat = pva.belief.particles[pva_idx]
    d, aoa, aod = _feature_geometry(feat, mt)
    d_pred = d - (mt[:, MT_B] - b_bs)
    r = pva.existence
    m = z.shape[0]
    row = np.empty(m + 1)
    row[0] = r * (1.0 - cfg.p_d) + (1.0 - r)
    if m:
        row[1:] = r * (mt_belief.weights @ ratio_matrix(z, d_pred, aoa, aod, noise, cfg))
    return np.where(row < cfg.gate, 0.0, row)


def xi_new(cfg: EngineConfig) -> float:
    """Weight of "no existing feature" for one measurement.

    With the birth density chosen so its measurement-space pushforward equals
    the false-positive density, the new-feature integral collapses and the
    value is the constant 1 + mu_n / mu_fp.
    """
    return 1.0 + cfg.mu_n / cfg.mu_fp


def xi_new_mc(
    z_row: np.ndarray,
    noise: NoiseConfig,
    cfg: EngineConfig,
    rng: np.random.Generator,
    n_samples: int = 8192,
) -> float:
    """Monte-Carlo validation of the closed form: importance-sample the
    birth-pushforward integral with a Gaussian kernel at the measurement.

    Under the matched-pushforward choice each per-BS integral equals
    f_fp(z) times the in-support mass, so the estimate converges to
    1 + mu_n/mu_fp for interior measurements.
    """
    z_d, z_phi, z_theta, z_u = z_row
    s = np.array([noise.sigma_d(z_u), noise.sigma_phi(z_u, z_phi), noise.sigma_theta(z_u, z_theta)])
    draws = np.array([z_d, z_phi, z_theta]) + s * rng.standard_normal((n_samples, 3))
    in_support = (
        (draws[:, 0] >= 0.0)
        & (draws[:, 0] <= noise.d_max)
        & (np.abs(draws[:, 1]) <= np.pi)
        & (np.abs(draws[:, 2]) <= np.pi)
    )
    integral = noise.fp_density() * float(np.mean(in_support))
    return 1.0 + cfg.mu_n * integral / (cfg.mu_fp * noise.fp_density())


def source_posterior(per_j_weights: np.ndarray) -> np.ndarray:
    """Posterior over the originating BS given a new-feature origin."""
    w = np.asarray(per_j_weights, dtype=float)
    if np.any(w < 0):
        raise ValueError("source weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        return np.full(len(w), 1.0 / len(w))
    return w / total


def da_bp(problem: AssociationProblem, max_iters: int = 200, tol: float = 1e-6) -> AssociationMarginals:
    """Loopy BP over the bipartite consistency graph.

    Feature-to-measurement messages mu and measurement-to-feature messages nu
    iterate to a fixed point; a 0.5 damping factor kicks in if the update
    residual ever grows. Marginals are assembled from beta, xi and the
    converged messages.
    """
    beta, xi = problem.beta, problem.xi
    n_rows, n_meas = problem.n_rows, problem.n_meas
    if n_rows == 0 or n_meas == 0:
        return _trivial_marginals(problem)
    nu = np.ones((n_rows, n_meas))
    mu = np.zeros((n_rows, n_meas))
    converged = False
    damping = 0.0
    prev_delta = np.inf
    iters = 0
    for iters in range(1, max_iters + 1):
        mu_old = mu
        prd = beta[:, 1:] * nu
        denom = np.maximum(beta[:, :1] + prd.sum(axis=1, keepdims=True) - prd, LIKELIHOOD_FLOOR)
        mu = beta[:, 1:] / denom
        if damping > 0.0 and iters > 1:
            mu = (1.0 - damping) * mu + damping * mu_old
        denom_meas = np.maximum(xi[None, :] + mu.sum(axis=0, keepdims=True) - mu, LIKELIHOOD_FLOOR)
        nu = 1.0 / denom_meas
        delta = float(np.max(np.abs(mu - mu_old))) if iters > 1 else np.inf
        if delta < tol:
            converged = True
            break
        if delta > prev_delta and damping == 0.0:
            damping = 0.5
        prev_delta = delta
    p_under = np.column_stack([beta[:, 0], beta[:, 1:] * nu])
    p_under = _normalize_rows(p_under)
    p_over = np.column_stack([mu.T, xi])
    p_over = _normalize_rows(p_over)
    p_source = np.full((n_meas, problem.n_bs), 1.0 / problem.n_bs)
    return AssociationMarginals(
        p_under, p_over, p_source, converged=converged, n_iters=iters, nu=nu
    )


def da_exact(problem: AssociationProblem) -> AssociationMarginals:
    """Brute-force marginals over all consistent association pairs.

    Enumerates every one-to-one partial matching between feature rows and
    measurements; guarded to small problems.
    """
    n_rows, n_meas = problem.n_rows, problem.n_meas
    if n_rows > 6 or n_meas > 6:
        raise ValueError("da_exact limited to at most 6 rows and 6 measurements")
    if n_rows == 0 or n_meas == 0:
        return _trivial_marginals(problem)
    beta, xi = problem.beta, problem.xi
    under_acc = np.zeros((n_rows, n_meas + 1))
    over_acc = np.zeros((n_meas, n_rows + 1))

    assignment = np.zeros(n_rows, dtype=int)

    def recurse(row: int, used: int, weight: float):
        if weight == 0.0:
            return
        if row == n_rows:
            total = weight
            for m in range(n_meas):
                if not used & (1 << m):
                    total *= xi[m]
            if total == 0.0:
                return
            matched = {assignment[k] - 1: k for k in range(n_rows) if assignment[k] > 0}
            for k in range(n_rows):
                under_acc[k, assignment[k]] += total
            for m in range(n_meas):
                over_acc[m, matched.get(m, n_rows)] += total
            return
        recurse(row + 1, used, weight * beta[row, 0])
        for m in range(n_meas):
            if used & (1 << m):
                continue
            assignment[row] = m + 1
            recurse(row + 1, used | (1 << m), weight * beta[row, m + 1])
            assignment[row] = 0

    recurse(0, 0, 1.0)
    p_source = np.full((n_meas, problem.n_bs), 1.0 / problem.n_bs)
    return AssociationMarginals(
        _normalize_rows(under_acc), _normalize_rows(over_acc), p_source, converged=True
    )


def _normalize_rows(mat: np.ndarray) -> np.ndarray:
    out = np.array(mat, dtype=float)
    saf = out.sum(axis=1)
    degenerate = saf <= 0
    if np.any(degenerate):
        # all-zero row: no detection hypothesis survives, pin mass on column 0
        out[degenerate, 0] = 1.0
        saf = out.sum(axis=1)
    return out / saf[:, None]


def _trivial_marginals(problem: AssociationProblem) -> AssociationMarginals:
    n_rows, n_meas = problem.n_rows, problem.n_meas
    p_under = np.zeros((n_rows, n_meas + 1))
    if n_rows:
        p_under = _normalize_rows(
            np.column_stack([problem.beta[:, 0], problem.beta[:, 1:]])
        ) if n_meas else np.ones((n_rows, 1))
    p_over = np.zeros((n_meas, n_rows + 1))
    if n_meas:
        p_over[:, -1] = 1.0
    p_source = np.full((n_meas, problem.n_bs), 1.0 / problem.n_bs)
    nu = np.ones((n_rows, n_meas)) / np.maximum(problem.xi, LIKELIHOOD_FLOOR) if n_meas else np.zeros((n_rows, 0))
    return AssociationMarginals(p_under, p_over, p_source, converged=True, nu=nu)
