"""Environment geometry: walls, base stations, virtual anchors and the
deterministic measurement functions (distance / AoA / AoD with clock-bias
offsets).

All positions are 2-D in meters, all angles in radians wrapped to [-pi, pi),
and all clock biases are carried in meters (bias_seconds * c).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s

TWO_PI = 2.0 * np.pi


def wrap_angle(x):
    """Wrap an angle (scalar or array) to [-pi, pi); wrap(pi) == -pi."""
    return np.mod(np.asarray(x) + np.pi, TWO_PI) - np.pi


@dataclass(frozen=True)
class Wall:
    """Flat reflecting surface, stored by its two endpoints."""

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.endpoint_a, dtype=float)
        b = np.asarray(self.endpoint_b, dtype=float)
        object.__setattr__(self, "endpoint_a", a)
        object.__setattr__(self, "endpoint_b", b)
        if np.linalg.norm(b - a) <= 0.0:
            raise ValueError("degenerate wall: endpoints coincide")

    @property
    def direction(self) -> np.ndarray:
        d = self.endpoint_b - self.endpoint_a
        return d / np.linalg.norm(d)


@dataclass(frozen=True)
class BaseStation:
    """Fixed transmitter with known position; orientation pinned to 0."""

    id: int  # 1-based index j
    position: np.ndarray
    orientation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class VirtualAnchor:
    """Mirror image of a base station across one wall's supporting line."""

    bs_id: int
    wall_id: int
    position: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))


@dataclass(frozen=True)
class GeoObservation:
    """Noise-free (distance, AoA, AoD) tuple for one feature seen by one MT."""

    distance: float
    aoa: float
    aod: float


def mirror_point(p: np.ndarray, wall: Wall) -> np.ndarray:
    """Reflect point p across the infinite supporting line of a wall.

    Applying it twice is the identity (involution).
    """
    p = np.asarray(p, dtype=float)
    a = wall.endpoint_a
    u = wall.direction
    v = p - a
    return a + 2.0 * np.dot(v, u) * u - v


def geo_observation(p_feature: np.ndarray, p_mt: np.ndarray, o_mt: float) -> GeoObservation:
    """Deterministic measurement means for a feature (BS or VA) seen by an MT.

    distance: Euclidean norm of (p_feature - p_mt).
    aoa: bearing of the feature in the MT body frame (global bearing minus
         MT orientation).
    aod: bearing of the MT as seen from the feature position, in the global
         frame (BS orientations are fixed to 0; for a VA the feature position
         is the mirrored BS).
    """
    p_feature = np.asarray(p_feature, dtype=float)
    p_mt = np.asarray(p_mt, dtype=float)
    delta = p_feature - p_mt
    d = float(np.linalg.norm(delta))
    if d <= 0.0:
        raise ValueError("feature and MT positions coincide")
    aoa = float(wrap_angle(np.arctan2(delta[1], delta[0]) - o_mt))
    aod = float(wrap_angle(np.arctan2(-delta[1], -delta[0])))
    return GeoObservation(distance=d, aoa=aoa, aod=aod)


def biased_distance(d, b_bs, b_mt):
    """Apparent distance under unsynchronized clocks: d - (b_mt - b_bs).

    Invariant under a common shift of both biases (gauge ambiguity); biases
    are expressed in meters.
    """
    return d - (b_mt - b_bs)


def specular_point(p_bs: np.ndarray, p_mt: np.ndarray, wall: Wall) -> np.ndarray:
    """Specular reflection point on the wall's supporting line.

    Intersection of the segment from the mirrored BS to the MT with the
    supporting line; the single-bounce path BS -> q -> MT has the same length
    as the direct line from the mirror image to the MT.
    """
    p_va = mirror_point(p_bs, wall)
    a = wall.endpoint_a
    u = wall.direction
    n = np.array([-u[1], u[0]])
    ray = p_mt - p_va
    denom = np.dot(ray, n)
    if abs(denom) < 1e-300:
        raise ValueError("MT lies on the wall plane; reflection point undefined")
    t = np.dot(a - p_va, n) / denom
    return p_va + t * ray


def wall_parameter(q: np.ndarray, wall: Wall) -> float:
    """Position of q along the wall, 0 at endpoint_a and 1 at endpoint_b."""
    u = wall.endpoint_b - wall.endpoint_a
    return float(np.dot(np.asarray(q) - wall.endpoint_a, u) / np.dot(u, u))
