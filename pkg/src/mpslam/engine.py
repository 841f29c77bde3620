"""Per-time-step sum-product engine: prediction, sequential per-MT updates
(pseudo-likelihoods, data association, belief updates for the MT, the BS
biases and the legacy PVAs), new-PVA births with source separation,
confirmation, pruning and MMSE extraction.

Belief updates collapse partner beliefs to their moments (mean plus a
variance term folded into the Gaussian likelihoods, config `coupling`);
the data-association weights themselves are full Monte-Carlo expectations
over paired particles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assoc import (
    AssociationProblem,
    LIKELIHOOD_FLOOR,
    angle_factor_matrix,
    beta_bs,
    beta_legacy,
    da_bp,
    gaussian_pdf,
    pair_indices,
    ratio_matrix,
    source_posterior,
    xi_new,
)
from .geometry import wrap_angle
from .model import (
    MT_B,
    MT_O,
    MT_PX,
    MT_PY,
    MT_VX,
    MT_VY,
    EngineConfig,
    ParticleBelief,
    PvaHypothesis,
    predict_bias_bs,
    predict_mt,
    predict_pva,
    inter_mt_transition,
    systematic_indices,
)
from .scenario import DOMAIN_ENGINE, GroundTruth, ScenarioConfig, rng_stream

# rng purpose keys
_R_INIT, _R_PREDICT, _R_UPDATE = 0, 1, 2


@dataclass(frozen=True)
class MtEstimate:
    position: np.ndarray
    orientation: float
    velocity: np.ndarray
    bias: float


@dataclass(frozen=True)
class PvaEstimate:
    key: int
    bs_index: int
    existence: float
    position: np.ndarray


@dataclass
class Estimates:
    step: int
    mts: list[MtEstimate]
    bs_biases: np.ndarray
    pvas: list[PvaEstimate]  # confirmed hypotheses only


class Engine:
    """Filter state and the per-step update pipeline.

    Attributes mirror the engine state: `n` (next time index), `mt_beliefs`,
    `bias_beliefs`, `pvas` (ordered by creation), and the bookkeeping count
    `k_count` which also counts births that were discarded at creation.
    """

    def __init__(self, scenario: ScenarioConfig, truth: GroundTruth, prune: bool = True):
        self.cfg = scenario.engine
        self.noise = scenario.noise
        self.base_stations = scenario.base_stations
        self.dt = scenario.dt
        self.seed = scenario.seed
        self.prune_enabled = prune
        self.n = 0
        self.k_count = 0
        self.next_key = 1
        self.pvas: list[PvaHypothesis] = []
        self.mt_beliefs = [
            self._initial_mt_belief(truth.mt_states[0, i], i, scenario)
            for i in range(scenario.n_mt)
        ]
        self.bias_beliefs = [
            self._initial_bias_belief(j, scenario) for j in range(scenario.n_bs)
        ]

    # ------------------------------------------------------------------ setup

    def _rng(self, *key: int) -> np.random.Generator:
        return rng_stream(self.seed, DOMAIN_ENGINE, *key)

    def _initial_mt_belief(self, state0: np.ndarray, i: int, scenario: ScenarioConfig) -> ParticleBelief:
        cfg = self.cfg
        rng = self._rng(_R_INIT, 0, i)
        n = cfg.particles_mt
        p = np.empty((n, 6))
        # back the prior center out by one motion step: step() predicts
        # before the first update
        center_pos = state0[MT_PX:MT_PY + 1] - state0[MT_VX:MT_VY + 1] * self.dt
        p[:, MT_PX:MT_PY + 1] = center_pos + cfg.prior_sigma_pos * rng.standard_normal((n, 2))
        p[:, MT_O] = wrap_angle(state0[MT_O] + cfg.prior_sigma_orient * rng.standard_normal(n))
        p[:, MT_VX:MT_VY + 1] = state0[MT_VX:MT_VY + 1] + cfg.prior_sigma_vel * rng.standard_normal((n, 2))
        b = scenario.bias
        p[:, MT_B] = b.mt_center + b.mt_halfwidth * (2.0 * rng.random(n) - 1.0)
        return ParticleBelief.from_samples(p)

    def _initial_bias_belief(self, j: int, scenario: ScenarioConfig) -> ParticleBelief:
        rng = self._rng(_R_INIT, 1, j)
        b = scenario.bias
        samples = b.bs_center + b.bs_halfwidth * (2.0 * rng.random(self.cfg.particles_bias) - 1.0)
        return ParticleBelief.from_samples(samples)

    # ------------------------------------------------------------------- step

    def step(self, z_per_mt: list[np.ndarray]) -> Estimates:
        """One full time step: predict, sequentially incorporate each MT's
        measurement set, then confirm/prune and extract MMSE estimates."""
        cfg = self.cfg
        n = self.n
        for i in range(len(self.mt_beliefs)):
            self.mt_beliefs[i] = predict_mt(self.mt_beliefs[i], self.dt, cfg, self._rng(_R_PREDICT, n, 0, i))
        for j in range(len(self.bias_beliefs)):
            self.bias_beliefs[j] = predict_bias_bs(self.bias_beliefs[j], cfg, self._rng(_R_PREDICT, n, 1, j))
        self.pvas = [predict_pva(h, cfg) for h in self.pvas]
        for i, z in enumerate(z_per_mt):
            if i > 0:
                self.pvas = [inter_mt_transition(h) for h in self.pvas]
            self.update_mt(i, np.asarray(z, dtype=float).reshape(-1, 4))
        self.confirm_and_prune()
        est = self.extract_estimates()
        self.n += 1
        return est

    # -------------------------------------------------------------- MT update

    def update_mt(self, i: int, z: np.ndarray) -> None:
        """Sequential incorporation of MT i's measurement set."""
        cfg = self.cfg
        n_meas = z.shape[0]
        mt0 = self.mt_beliefs[i]
        bias0 = list(self.bias_beliefs)
        pvas0 = list(self.pvas)
        marg = None
        for outer in range(max(1, cfg.outer_iters)):
            problem = self._build_problem(i, z, outer)
            marg = da_bp(problem, cfg.da_max_iters, cfg.da_tol)
            self.mt_beliefs[i] = self._update_mt_belief(i, mt0, marg, z)
            for j in range(len(self.bias_beliefs)):
                self.bias_beliefs[j] = self._update_bias_belief(i, j, bias0[j], marg, z)
            self.pvas = [
                self._update_pva(i, k, pvas0[k], marg, z) for k in range(len(pvas0))
            ]
        self._spawn_births(i, z, marg)
        self.k_count += len(self.base_stations) * n_meas

    def _build_problem(self, i: int, z: np.ndarray, outer: int) -> AssociationProblem:
        cfg = self.cfg
        mt = self.mt_beliefs[i]
        rng = self._rng(_R_UPDATE, self.n, i, 10 + outer)
        n = mt.count
        rows = []
        for j, bs in enumerate(self.base_stations):
            idx = pair_indices(self.bias_beliefs[j], n, rng)
            rows.append(beta_bs(bs.position, mt, self.bias_beliefs[j], z, self.noise, cfg, bias_idx=idx))
        for h in self.pvas:
            bias_belief = self.bias_beliefs[h.bs_index - 1]
            idx_b = pair_indices(bias_belief, n, rng)
            idx_p = pair_indices(h.belief, n, rng)
            rows.append(
                beta_legacy(h, mt, bias_belief, z, self.noise, cfg, bias_idx=idx_b, pva_idx=idx_p)
            )
        xi = np.full(z.shape[0], xi_new(cfg))
        return AssociationProblem(np.vstack(rows), xi, n_bs=len(self.base_stations))

    # --------------------------------------------------------- belief updates

    def _row_prediction(self, row: int, mt_particles: np.ndarray):
        """Predicted (d, aoa, aod) of feature `row` against MT particles plus
        the partner-belief variance terms for the moment coupling."""
        cfg = self.cfg
        n_bs = len(self.base_stations)
        if row < n_bs:
            feat = self.base_stations[row].position
            bias_belief = self.bias_beliefs[row]
            feat_cov = None
        else:
            h = self.pvas[row - n_bs]
            feat = h.belief.mean()
            feat_cov = h.belief.cov()
            bias_belief = self.bias_beliefs[h.bs_index - 1]
        delta = feat[None, :] - mt_particles[:, MT_PX:MT_PY + 1]
        d = np.linalg.norm(delta, axis=1)
        d = np.maximum(d, 1e-6)
        bearing = np.arctan2(delta[:, 1], delta[:, 0])
        aoa = wrap_angle(bearing - mt_particles[:, MT_O])
        aod = wrap_angle(bearing + np.pi)
        b_mean = float(bias_belief.mean())
        d_pred = d - (mt_particles[:, MT_B] - b_mean)
        if cfg.coupling == "moment":
            extra_d = float(bias_belief.cov())
            extra_phi = 0.0
            extra_theta = 0.0
            if feat_cov is not None:
                u = delta / d[:, None]
                v = np.column_stack([-u[:, 1], u[:, 0]])
                radial = np.einsum("pi,ij,pj->p", u, feat_cov, u)
                transverse = np.einsum("pi,ij,pj->p", v, feat_cov, v)
                extra_d = extra_d + radial
                extra_phi = transverse / d**2
                extra_theta = transverse / d**2
            return d_pred, aoa, aod, (extra_d, extra_phi, extra_theta)
        return d_pred, aoa, aod, (0.0, 0.0, 0.0)

    def _update_mt_belief(self, i: int, mt0: ParticleBelief, marg, z: np.ndarray) -> ParticleBelief:
        cfg = self.cfg
        if z.shape[0] == 0:
            return mt0
        n_bs = len(self.base_stations)
        logw = np.zeros(mt0.count)
        for row in range(marg.nu.shape[0]):
            d_pred, aoa, aod, extra = self._row_prediction(row, mt0.particles)
            lmat = ratio_matrix(z, d_pred, aoa, aod, self.noise, cfg,
                                extra_d=extra[0], extra_phi=extra[1], extra_theta=extra[2])
            if row < n_bs:
                zero_term = 1.0 - cfg.p_d
                r = 1.0
            else:
                r = self.pvas[row - n_bs].existence
                zero_term = r * (1.0 - cfg.p_d) + (1.0 - r)
            term = zero_term + r * (lmat @ marg.nu[row])
            logw += np.log(np.maximum(term, LIKELIHOOD_FLOOR))
        w = mt0.weights * np.exp(logw - logw.max())
        total = w.sum()
        if total <= 0:
            return mt0
        belief = ParticleBelief(mt0.particles, w / total)
        return self._maybe_resample_mt(i, belief, z)

    def _maybe_resample_mt(self, i: int, belief: ParticleBelief, z: np.ndarray) -> ParticleBelief:
        cfg = self.cfg
        if belief.ess() >= cfg.ess_fraction * belief.count:
            return belief
        rng = self._rng(_R_UPDATE, self.n, i, 20)
        idx = systematic_indices(belief.weights, belief.count, rng)
        p = belief.particles[idx].copy()
        # regularization bandwidth scales with the posterior spread, so it
        # shrinks as information accumulates instead of pinning the belief
        scales = cfg.jitter_scale * _weighted_std(belief.particles, belief.weights)
        n = len(p)
        noise = rng.standard_normal((n, 6)) * scales[None, :]
        p += noise
        p[:, MT_O] = wrap_angle(p[:, MT_O])
        return ParticleBelief.from_samples(p)

    def _update_bias_belief(self, i: int, j: int, b0: ParticleBelief, marg, z: np.ndarray) -> ParticleBelief:
        cfg = self.cfg
        if z.shape[0] == 0:
            return b0
        n_bs = len(self.base_stations)
        rows = [j] + [n_bs + k for k, h in enumerate(self.pvas) if h.bs_index == j + 1]
        mt = self.mt_beliefs[i]
        mt_p = mt.particles
        logw = np.zeros(b0.count)
        q = b0.particles
        for row in rows:
            if row < n_bs:
                feat = self.base_stations[row].position[None, :].repeat(mt.count, axis=0)
            else:
                h = self.pvas[row - n_bs]
                idx = np.arange(mt.count) % h.belief.count
                feat = h.belief.particles[idx]
            delta = feat - mt_p[:, MT_PX:MT_PY + 1]
            d = np.maximum(np.linalg.norm(delta, axis=1), 1e-6)
            bearing = np.arctan2(delta[:, 1], delta[:, 0])
            aoa = wrap_angle(bearing - mt_p[:, MT_O])
            aod = wrap_angle(bearing + np.pi)
            # bias-free predicted distance moments over the MT (and feature)
            # particles; the spread widens the distance LHF for every bias
            t = d - mt_p[:, MT_B]
            t_mean = float(np.dot(mt.weights, t))
            t_var = float(np.dot(mt.weights, (t - t_mean) ** 2))
            # angle factors do not depend on the bias: full MC constants
            a_const = mt.weights @ angle_factor_matrix(z, aoa, aod, self.noise)  # (M,)
            var_d = self.noise.sigma_d(z[:, 3]) ** 2 + t_var
            lmat = gaussian_pdf(z[None, :, 0] - (t_mean + q[:, None]), var_d[None, :])
            lmat = cfg.p_d * lmat * a_const[None, :] / (cfg.mu_fp * self.noise.fp_density())
            if row < n_bs:
                zero_term = 1.0 - cfg.p_d
                r = 1.0
            else:
                r = self.pvas[row - n_bs].existence
                zero_term = r * (1.0 - cfg.p_d) + (1.0 - r)
            term = zero_term + r * (lmat @ marg.nu[row])
            logw += np.log(np.maximum(term, LIKELIHOOD_FLOOR))
        w = b0.weights * np.exp(logw - logw.max())
        total = w.sum()
        if total <= 0:
            return b0
        belief = ParticleBelief(b0.particles, w / total)
        if belief.ess() >= cfg.ess_fraction * belief.count:
            return belief
        rng = self._rng(_R_UPDATE, self.n, i, 30 + j)
        idx = systematic_indices(belief.weights, belief.count, rng)
        scale = cfg.jitter_scale * float(np.sqrt(belief.cov()))
        p = belief.particles[idx] + scale * rng.standard_normal(belief.count)
        return ParticleBelief.from_samples(p)

    def _update_pva(self, i: int, k: int, h0: PvaHypothesis, marg, z: np.ndarray) -> PvaHypothesis:
        cfg = self.cfg
        n_bs = len(self.base_stations)
        row = n_bs + k
        r = h0.existence
        if z.shape[0] == 0:
            num = 1.0 - cfg.p_d
            r_new = r * num / (r * num + (1.0 - r))
            return PvaHypothesis(h0.key, h0.bs_index, h0.belief, r_new, h0.created_step)
        mt = self.mt_beliefs[i]
        mt_mean = mt.mean()
        o_mean = _circular_mean(mt.particles[:, MT_O], mt.weights)
        bias_belief = self.bias_beliefs[h0.bs_index - 1]
        b_mean = float(bias_belief.mean())
        y = h0.belief.particles
        delta = y - mt_mean[None, MT_PX:MT_PY + 1]
        d = np.maximum(np.linalg.norm(delta, axis=1), 1e-6)
        bearing = np.arctan2(delta[:, 1], delta[:, 0])
        aoa = wrap_angle(bearing - o_mean)
        aod = wrap_angle(bearing + np.pi)
        d_pred = d - (float(mt_mean[MT_B]) - b_mean)
        if cfg.coupling == "moment":
            mt_cov = mt.cov()
            pos_cov = mt_cov[MT_PX:MT_PY + 1, MT_PX:MT_PY + 1]
            u = -delta / d[:, None]
            v = np.column_stack([-u[:, 1], u[:, 0]])
            radial = np.einsum("pi,ij,pj->p", u, pos_cov, u)
            transverse = np.einsum("pi,ij,pj->p", v, pos_cov, v)
            var_b = float(mt_cov[MT_B, MT_B]) + float(bias_belief.cov())
            var_o = float(mt_cov[MT_O, MT_O])
            extra = (radial + var_b, transverse / d**2 + var_o, transverse / d**2)
        else:
            extra = (0.0, 0.0, 0.0)
        lmat = ratio_matrix(z, d_pred, aoa, aod, self.noise, cfg,
                            extra_d=extra[0], extra_phi=extra[1], extra_theta=extra[2])
        nu_row = marg.nu[row]
        expected_ratio = h0.belief.weights @ lmat  # (M,)
        num = (1.0 - cfg.p_d) + float(nu_row @ expected_ratio)
        # cap away from the absorbing point r=1 so stale features can decay
        r_new = float(np.clip(r * num / (r * num + (1.0 - r)), 0.0, 1.0 - 1e-9))
        w = h0.belief.weights * ((1.0 - cfg.p_d) + lmat @ nu_row)
        total = w.sum()
        if total <= 0:
            belief = h0.belief
        else:
            belief = ParticleBelief(h0.belief.particles, w / total)
            if belief.ess() < cfg.ess_fraction * belief.count:
                rng = self._rng(_R_UPDATE, self.n, i, 100 + h0.key % 50021)
                idx = systematic_indices(belief.weights, belief.count, rng)
                scales = cfg.jitter_scale * _weighted_std(belief.particles, belief.weights)
                p = belief.particles[idx] + scales[None, :] * rng.standard_normal((belief.count, 2))
                belief = ParticleBelief.from_samples(p)
        return PvaHypothesis(h0.key, h0.bs_index, belief, r_new, h0.created_step)

    # ----------------------------------------------------------------- births

    def _spawn_births(self, i: int, z: np.ndarray, marg) -> None:
        """J new hypotheses per measurement in (measurement-major, BS-minor)
        order; existence splits the new-feature mass across BS candidates by
        bias-conditioned feasibility."""
        cfg = self.cfg
        n_bs = len(self.base_stations)
        mt = self.mt_beliefs[i]
        rng = self._rng(_R_UPDATE, self.n, i, 40)
        xi0 = xi_new(cfg)
        n_part = cfg.particles_pva
        for m in range(z.shape[0]):
            z_d, z_phi, _, z_u = z[m]
            p_none = float(marg.p_overline[m, -1])
            draws = []
            feas = np.empty(n_bs)
            for j in range(n_bs):
                idx_mt = systematic_indices(mt.weights, n_part, rng)
                bias_belief = self.bias_beliefs[j]
                idx_b = rng.permutation(systematic_indices(bias_belief.weights, n_part, rng))
                b_mt = mt.particles[idx_mt, MT_B]
                b_bs = bias_belief.particles[idx_b]
                radius = z_d + (b_mt - b_bs) + float(self.noise.sigma_d(z_u)) * rng.standard_normal(n_part)
                feas[j] = float(np.mean((radius > 0.0) & (radius <= self.noise.d_max)))
                ang = z_phi + mt.particles[idx_mt, MT_O] + float(
                    self.noise.sigma_phi(z_u, z_phi)
                ) * rng.standard_normal(n_part)
                pos = mt.particles[idx_mt, MT_PX:MT_PY + 1] + np.maximum(radius, 1e-2)[:, None] * np.column_stack(
                    [np.cos(ang), np.sin(ang)]
                )
                draws.append(pos)
            g = (cfg.mu_n / cfg.mu_fp) * feas
            denom = (p_none / xi0) * (1.0 + float(g.mean())) + (1.0 - p_none)
            marg.p_source[m] = source_posterior(g)
            for j in range(n_bs):
                r_birth = (p_none / xi0) * (g[j] / n_bs) / max(denom, LIKELIHOOD_FLOOR)
                r_birth = float(np.clip(r_birth, 0.0, 1.0))
                key = self.next_key
                self.next_key += 1
                if self.prune_enabled and r_birth <= cfg.p_pr:
                    continue  # discarded at creation, still counted in k_count
                self.pvas.append(
                    PvaHypothesis(
                        key=key,
                        bs_index=j + 1,
                        belief=ParticleBelief.from_samples(draws[j]),
                        existence=r_birth,
                        created_step=self.n,
                    )
                )

    # ------------------------------------------------------- confirm / prune

    def confirm_and_prune(self) -> None:
        """Drop hypotheses below the pruning threshold, except the earliest
        created hypothesis of each BS, which is always retained."""
        if not self.prune_enabled or not self.pvas:
            return
        cfg = self.cfg
        protected = {}
        for h in self.pvas:
            if h.bs_index not in protected or h.key < protected[h.bs_index]:
                protected[h.bs_index] = h.key
        keep = [
            h for h in self.pvas
            if h.existence >= cfg.p_pr or protected[h.bs_index] == h.key
        ]
        self.pvas = keep

    def confirmed(self) -> list[PvaHypothesis]:
        return [h for h in self.pvas if h.existence > self.cfg.p_cf]

    # ------------------------------------------------------------- extraction

    def extract_estimates(self) -> Estimates:
        mts = []
        for belief in self.mt_beliefs:
            mean = belief.mean()
            mts.append(
                MtEstimate(
                    position=mean[MT_PX:MT_PY + 1].copy(),
                    orientation=float(_circular_mean(belief.particles[:, MT_O], belief.weights)),
                    velocity=mean[MT_VX:MT_VY + 1].copy(),
                    bias=float(mean[MT_B]),
                )
            )
        bs_biases = np.array([float(b.mean()) for b in self.bias_beliefs])
        pvas = [
            PvaEstimate(
                key=h.key,
                bs_index=h.bs_index,
                existence=h.existence,
                position=h.belief.mean(),
            )
            for h in self.confirmed()
        ]
        return Estimates(step=self.n, mts=mts, bs_biases=bs_biases, pvas=pvas)


def _circular_mean(angles: np.ndarray, weights: np.ndarray) -> float:
    s = float(np.dot(weights, np.sin(angles)))
    c = float(np.dot(weights, np.cos(angles)))
    return float(np.arctan2(s, c))


def _weighted_std(particles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    mu = np.average(particles, axis=0, weights=weights)
    var = np.average((particles - mu) ** 2, axis=0, weights=weights)
    return np.sqrt(var)
