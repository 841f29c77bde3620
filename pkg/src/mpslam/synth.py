"""Measurement synthesis: per time step and MT, the unlabeled superposition
of detections from all base stations (LOS + single-bounce paths) plus
Poisson false positives.

A measurement is the 4-vector [z_d, z_phi, z_theta, z_u]: apparent distance
(true distance plus apparent clock bias, meters), AoA in the MT body frame,
AoD in the global frame, and normalized amplitude. Amplitudes carry no noise;
they only set the Fisher-information standard deviations of the other three
entries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import SPEED_OF_LIGHT, BaseStation, VirtualAnchor, Wall, biased_distance, geo_observation, specular_point, wall_parameter, wrap_angle


@dataclass(frozen=True)
class ApertureConfig:
    """Uniform linear array along the device x-axis.

    d2() is the normalized squared array aperture; it vanishes at endfire,
    so it is clamped below at d2_floor to keep the angle variances finite.
    """

    n_elements: int = 8
    spacing_wavelengths: float = 0.5
    d2_floor: float = 1e-4

    def d2(self, angle):
        raw = (
            self.spacing_wavelengths**2
            * np.sin(np.asarray(angle)) ** 2
            * (self.n_elements**2 - 1)
            / 12.0
        )
        return np.maximum(raw, self.d2_floor)


@dataclass(frozen=True)
class NoiseConfig:
    beta_bw_hz: float = 1.0e8  # root mean square bandwidth
    snr_ref_db: float = 30.0  # SNR at reference distance d_ref
    d_ref: float = 1.0
    gamma: float = 1.5  # detection threshold on amplitude
    p_d: float = 0.95
    mu_fp: float = 1.0  # mean false-positive count per (step, MT)
    d_max: float = 90.0  # support of the false-positive distance density
    fp_amp_factor: float = 2.0  # FP amplitudes drawn U[gamma, factor*gamma]
    aperture_mt: ApertureConfig = field(default_factory=ApertureConfig)
    aperture_bs: ApertureConfig = field(default_factory=ApertureConfig)

    def amplitude_from_distance(self, d):
        """Deterministic normalized amplitude at distance d (free-space slope).

        z_u = sqrt(SNR) with SNR_dB = snr_ref_db - 20 log10(d / d_ref),
        floored at the detection threshold so reported measurements stay
        above gamma.
        """
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0):
            raise ValueError("distance must be positive")
        snr_db = self.snr_ref_db - 20.0 * np.log10(d / self.d_ref)
        return np.maximum(np.sqrt(10.0 ** (snr_db / 10.0)), self.gamma)

    def sigma_d(self, z_u):
        """Distance stddev from the Fisher information: c/(sqrt(8)*pi*beta*z_u)."""
        return SPEED_OF_LIGHT / (np.sqrt(8.0) * np.pi * self.beta_bw_hz * np.asarray(z_u))

    def sigma_phi(self, z_u, aoa):
        """AoA stddev: 1/(sqrt(8)*pi*z_u*D(aoa)) with the MT aperture."""
        return 1.0 / (np.sqrt(8.0) * np.pi * np.asarray(z_u) * np.sqrt(self.aperture_mt.d2(aoa)))

    def sigma_theta(self, z_u, aod):
        """AoD stddev: same form with the BS aperture."""
        return 1.0 / (np.sqrt(8.0) * np.pi * np.asarray(z_u) * np.sqrt(self.aperture_bs.d2(aod)))

    def noise_stddevs(self, z_u, aoa, aod):
        if np.any(np.asarray(z_u) <= 0):
            raise ValueError("amplitude must be positive")
        return self.sigma_d(z_u), self.sigma_phi(z_u, aoa), self.sigma_theta(z_u, aod)

    def fp_density(self) -> float:
        """Uniform false-positive density over [0,d_max] x [-pi,pi) x [-pi,pi)."""
        return 1.0 / (self.d_max * (2.0 * np.pi) ** 2)


@dataclass(frozen=True)
class Measurement:
    z_d: float
    z_phi: float
    z_theta: float
    z_u: float

    def as_array(self) -> np.ndarray:
        return np.array([self.z_d, self.z_phi, self.z_theta, self.z_u])


@dataclass(frozen=True)
class OriginLabel:
    """Ground-truth origin of one measurement.

    kind is "bs" (LOS path), "va" (single-bounce path) or "fp"; bs_id and
    wall_id are 1-based and 0 when not applicable.
    """

    kind: str
    bs_id: int = 0
    wall_id: int = 0


def bs_features(bs: BaseStation, vas: list[VirtualAnchor]):
    """Features of one BS in canonical order: LOS first, then its VAs."""
    feats = [(OriginLabel("bs", bs.id), bs.position)]
    for va in vas:
        if va.bs_id == bs.id:
            feats.append((OriginLabel("va", va.bs_id, va.wall_id), va.position))
    return feats


def _va_visible(p_bs, p_mt, wall: Wall) -> bool:
    q = specular_point(p_bs, p_mt, wall)
    t = wall_parameter(q, wall)
    return 0.0 <= t <= 1.0


def synthesize(
    p_mt: np.ndarray,
    o_mt: float,
    b_mt: float,
    base_stations: list[BaseStation],
    vas: list[VirtualAnchor],
    b_bs: dict[int, float],
    cfg: NoiseConfig,
    rng: np.random.Generator,
    walls: list[Wall] | None = None,
    visibility: str = "none",
):
    """Generate one unlabeled measurement set.

    Every feature of every BS is detected with probability p_d; detections
    get the biased-distance / AoA / AoD means plus Gaussian noise with the
    Fisher stddevs at the deterministic amplitude. Poisson(mu_fp) false
    positives are appended, and the whole set is uniformly permuted.

    Returns (z, labels): z is an (M, 4) array, labels the aligned true
    origins.
    """
    if visibility not in ("none", "segment"):
        raise ValueError(f"unknown visibility mode: {visibility}")
    rows = []
    labels = []
    bs_by_id = {bs.id: bs for bs in base_stations}
    wall_by_id = {i + 1: w for i, w in enumerate(walls)} if walls else {}
    for bs in base_stations:
        for label, p_feat in bs_features(bs, vas):
            if visibility == "segment" and label.kind == "va":
                if not _va_visible(bs_by_id[label.bs_id].position, p_mt, wall_by_id[label.wall_id]):
                    continue
            detected = rng.random() < cfg.p_d
            eps = rng.standard_normal(3)
            if not detected:
                continue
            obs = geo_observation(p_feat, p_mt, o_mt)
            z_u = float(cfg.amplitude_from_distance(obs.distance))
            s_d, s_phi, s_theta = cfg.noise_stddevs(z_u, obs.aoa, obs.aod)
            z_d = biased_distance(obs.distance, b_bs[bs.id], b_mt) + s_d * eps[0]
            rows.append(
                [
                    float(np.clip(z_d, 0.0, cfg.d_max)),
                    float(wrap_angle(obs.aoa + s_phi * eps[1])),
                    float(wrap_angle(obs.aod + s_theta * eps[2])),
                    z_u,
                ]
            )
            labels.append(label)
    n_fp = rng.poisson(cfg.mu_fp)
    for _ in range(n_fp):
        u = rng.random(4)
        rows.append(
            [
                u[0] * cfg.d_max,
                -np.pi + u[1] * 2.0 * np.pi,
                -np.pi + u[2] * 2.0 * np.pi,
                cfg.gamma * (1.0 + (cfg.fp_amp_factor - 1.0) * u[3]),
            ]
        )
        labels.append(OriginLabel("fp"))
    z = np.array(rows, dtype=float).reshape(len(rows), 4)
    perm = rng.permutation(len(rows))
    return z[perm], [labels[k] for k in perm]
