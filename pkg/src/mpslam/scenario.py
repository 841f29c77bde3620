"""Scenario definition, trajectory generation and ground-truth bookkeeping.

The canonical config is a YAML file; load -> save -> load is the identity.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .geometry import BaseStation, VirtualAnchor, Wall, mirror_point, wrap_angle
from .model import EngineConfig
from .synth import ApertureConfig, NoiseConfig, OriginLabel

# seed-stream domains, used as spawn keys so every consumer gets an
# independent, order-insensitive substream
DOMAIN_TRAJECTORY = 1
DOMAIN_SYNTH = 2
DOMAIN_ENGINE = 3


def rng_stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


@dataclass(frozen=True)
class MtInit:
    """Initial MT pose plus a piecewise-constant turn-rate schedule
    [[start_step, rad_per_s], ...] applied in step order."""

    position: tuple[float, float]
    heading: float = 0.0
    speed: float = 0.0
    turn_schedule: list[list[float]] = field(default_factory=list)

    def turn_rate(self, step: int) -> float:
        rate = 0.0
        for start, omega in self.turn_schedule:
            if step >= start:
                rate = omega
        return rate


@dataclass(frozen=True)
class BiasConfig:
    """Initial true biases are drawn uniformly in center +/- halfwidth and
    then drift as Gaussian random walks. All values in meters."""

    bs_center: float = 40.0
    bs_halfwidth: float = 30.0
    mt_center: float = 0.0
    mt_halfwidth: float = 5.0
    drift_sigma_bs: float = 0.01
    drift_sigma_mt: float = 0.01


@dataclass
class ScenarioConfig:
    walls: list[Wall]
    base_stations: list[BaseStation]
    mts: list[MtInit]
    n_steps: int = 50
    dt: float = 1.0
    seed: int = 1
    visibility: str = "none"  # or "segment"
    bias: BiasConfig = field(default_factory=BiasConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not self.base_stations or not self.mts:
            raise ValueError("need at least one BS and one MT")
        if self.visibility not in ("none", "segment"):
            raise ValueError("visibility must be 'none' or 'segment'")

    @property
    def n_bs(self) -> int:
        return len(self.base_stations)

    @property
    def n_mt(self) -> int:
        return len(self.mts)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_steps": self.n_steps,
            "dt": self.dt,
            "visibility": self.visibility,
            "walls": [
                [list(map(float, w.endpoint_a)), list(map(float, w.endpoint_b))]
                for w in self.walls
            ],
            "base_stations": [{"position": list(map(float, bs.position))} for bs in self.base_stations],
            "mts": [
                {
                    "position": list(map(float, mt.position)),
                    "heading": mt.heading,
                    "speed": mt.speed,
                    "turn_schedule": [list(map(float, s)) for s in mt.turn_schedule],
                }
                for mt in self.mts
            ],
            "bias": asdict(self.bias),
            "noise": asdict(self.noise),
            "engine": asdict(self.engine),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        noise_d = dict(d.get("noise", {}))
        for key in ("aperture_mt", "aperture_bs"):
            if key in noise_d:
                noise_d[key] = ApertureConfig(**noise_d[key])
        return cls(
            walls=[Wall(np.array(a), np.array(b)) for a, b in d["walls"]],
            base_stations=[
                BaseStation(id=j + 1, position=np.array(bs["position"]))
                for j, bs in enumerate(d["base_stations"])
            ],
            mts=[
                MtInit(
                    position=tuple(mt["position"]),
                    heading=mt.get("heading", 0.0),
                    speed=mt.get("speed", 0.0),
                    turn_schedule=[list(s) for s in mt.get("turn_schedule", [])],
                )
                for mt in d["mts"]
            ],
            n_steps=d.get("n_steps", 50),
            dt=d.get("dt", 1.0),
            seed=d.get("seed", 1),
            visibility=d.get("visibility", "none"),
            bias=BiasConfig(**d.get("bias", {})),
            noise=NoiseConfig(**noise_d),
            engine=EngineConfig(**d.get("engine", {})),
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh))


@dataclass
class GroundTruth:
    """True MT state and bias trajectories plus the static VA map.

    mt_states: (n_steps, I, 6) with MT particle column layout
    bs_biases:  (n_steps, J)
    origins: measurement origin labels keyed by (step, mt), filled in by the
    run driver after synthesis.
    """

    mt_states: np.ndarray
    bs_biases: np.ndarray
    vas: list[VirtualAnchor]
    origins: dict[tuple[int, int], list[OriginLabel]] = field(default_factory=dict)


def build_environment(cfg: ScenarioConfig) -> tuple[list[VirtualAnchor], GroundTruth]:
    """One VA per (BS, wall) pair, ordered BS-major then wall-minor.

    Also returns an empty GroundTruth skeleton sized for the scenario.
    """
    vas = []
    for bs in cfg.base_stations:
        for w_idx, wall in enumerate(cfg.walls, start=1):
            vas.append(VirtualAnchor(bs_id=bs.id, wall_id=w_idx, position=mirror_point(bs.position, wall)))
    skeleton = GroundTruth(
        mt_states=np.zeros((cfg.n_steps, cfg.n_mt, 6)),
        bs_biases=np.zeros((cfg.n_steps, cfg.n_bs)),
        vas=vas,
    )
    return vas, skeleton


def generate_trajectories(cfg: ScenarioConfig, rng: np.random.Generator | None = None) -> GroundTruth:
    """Deterministic turn-schedule motion with orientation following the
    velocity heading; true biases evolve as Gaussian random walks.

    Reproducible: the same seed yields bit-identical output regardless of
    call order (per-entity substreams).
    """
    vas, truth = build_environment(cfg)
    for i, mt in enumerate(cfg.mts):
        stream = rng_stream(cfg.seed, DOMAIN_TRAJECTORY, 0, i)
        b0 = cfg.bias.mt_center + cfg.bias.mt_halfwidth * (2.0 * stream.random() - 1.0)
        drift = cfg.bias.drift_sigma_mt * stream.standard_normal(cfg.n_steps)
        pos = np.array(mt.position, dtype=float)
        heading = mt.heading
        bias = b0
        for n in range(cfg.n_steps):
            if n > 0:
                heading = float(wrap_angle(heading + mt.turn_rate(n) * cfg.dt))
            vel = mt.speed * np.array([np.cos(heading), np.sin(heading)])
            if n > 0:
                pos = pos + vel * cfg.dt
                bias = bias + drift[n]
            truth.mt_states[n, i] = [pos[0], pos[1], heading, vel[0], vel[1], bias]
    for j in range(cfg.n_bs):
        stream = rng_stream(cfg.seed, DOMAIN_TRAJECTORY, 1, j)
        b0 = cfg.bias.bs_center + cfg.bias.bs_halfwidth * (2.0 * stream.random() - 1.0)
        drift = cfg.bias.drift_sigma_bs * stream.standard_normal(cfg.n_steps)
        bias = b0
        for n in range(cfg.n_steps):
            if n > 0:
                bias = bias + drift[n]
            truth.bs_biases[n, j] = bias
    truth.vas = vas
    return truth


def desk_scenario(seed: int = 1, n_steps: int = 50) -> ScenarioConfig:
    """Default desk-scale room: three walls, two interfering BSs, two MTs.

    The MT position prior is 0.3 m: initialization must be angularly
    unambiguous relative to the smallest feature bearing separation at the
    start poses, otherwise the unknown biases admit confidently wrong
    LOS/reflection swaps at the very first update.
    """
    walls = [
        Wall(np.array([-6.0, -5.0]), np.array([-6.0, 5.0])),
        Wall(np.array([-6.0, 5.0]), np.array([6.0, 5.0])),
        Wall(np.array([6.0, 5.0]), np.array([6.0, -5.0])),
    ]
    base_stations = [
        BaseStation(id=1, position=np.array([-4.0, -3.5])),
        BaseStation(id=2, position=np.array([4.0, -3.5])),
    ]
    mts = [
        MtInit(position=(-2.0, -1.0), heading=0.3, speed=0.4, turn_schedule=[[1, 0.13]]),
        MtInit(position=(2.0, 1.5), heading=2.5, speed=0.35, turn_schedule=[[1, -0.11]]),
    ]
    return ScenarioConfig(
        walls=walls,
        base_stations=base_stations,
        mts=mts,
        n_steps=n_steps,
        seed=seed,
        engine=EngineConfig(prior_sigma_pos=0.3),
    )


def corridor_scenario(seed: int = 1, n_steps: int = 20) -> ScenarioConfig:
    """Single-BS, wall-free LOS corridor used for the grid-filter reduction:
    static MT, known synchronization (zero biases, zero drift)."""
    return ScenarioConfig(
        walls=[],
        base_stations=[BaseStation(id=1, position=np.array([0.0, 0.0]))],
        mts=[MtInit(position=(5.0, 0.0), heading=0.0, speed=0.0)],
        n_steps=n_steps,
        seed=seed,
        bias=BiasConfig(bs_center=0.0, bs_halfwidth=0.0, mt_center=0.0, mt_halfwidth=0.0,
                        drift_sigma_bs=0.0, drift_sigma_mt=0.0),
        noise=NoiseConfig(snr_ref_db=15.0, p_d=1.0, mu_fp=0.1, d_max=20.0),
        engine=EngineConfig(
            p_d=1.0,
            mu_fp=0.1,
            particles_mt=3000,
            particles_pva=500,
            particles_bias=500,
            sigma_accel=0.0,
            sigma_orient=0.0,
            sigma_bias_mt=0.0,
            sigma_bias_bs=0.0,
            prior_sigma_pos=0.5,
            prior_sigma_orient=0.0,
            prior_sigma_vel=0.0,
        ),
    )
