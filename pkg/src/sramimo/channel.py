"""Single-cell uplink scenario: steering vectors, Rayleigh gains, snapshots."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .constellation import get_constellation
from .errors import DimensionError, InvalidAngleError, InvalidParameterError, PlacementError
from .geometry import SensorLayout, parse_geometry

_HALF_PI = np.pi / 2
_ANGLE_TOL = 1e-12


def check_angles(theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if np.any(~np.isfinite(theta)) or np.any(np.abs(theta) > _HALF_PI + _ANGLE_TOL):
        raise InvalidAngleError(f"angles must lie in [-pi/2, pi/2], got {theta}")
    return theta


def steering_vector(layout: SensorLayout, theta: float, d_over_lambda: float = 0.5) -> np.ndarray:
    """Unit-modulus response ``exp(-j 2 pi (d/lambda) n sin(theta))`` per sensor."""
    if d_over_lambda <= 0:
        raise InvalidParameterError("d_over_lambda must be positive")
    theta = float(check_angles(theta))
    n = layout.as_array()
    return np.exp(-2j * np.pi * d_over_lambda * n * np.sin(theta))


def steering_matrix(layout: SensorLayout, thetas, d_over_lambda: float = 0.5) -> np.ndarray:
    thetas = check_angles(np.atleast_1d(thetas))
    n = layout.as_array()[:, None]
    return np.exp(-2j * np.pi * d_over_lambda * n * np.sin(thetas)[None, :])


@dataclass(frozen=True)
class AnglePolicy:
    """How user angles are placed for each channel draw.

    ``random`` draws uniformly over the angle sets in [-pi/2, pi/2] whose
    closest pair is at least ``min_separation_deg`` apart. ``grid`` uses
    ``angles_deg`` verbatim or, when that is empty, ``K`` evenly spaced angles
    on [-60, 60] degrees.
    """

    kind: str = "random"
    min_separation_deg: float = 5.0
    angles_deg: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("random", "grid"):
            raise InvalidParameterError(f"unknown angle policy {self.kind!r}")
        object.__setattr__(self, "angles_deg", tuple(float(a) for a in self.angles_deg))

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "random":
            d["min_separation_deg"] = self.min_separation_deg
        else:
            d["angles_deg"] = list(self.angles_deg)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AnglePolicy":
        d = dict(d)
        kind = d.pop("kind", d.pop("policy", "random"))
        if "angles_deg" in d:
            d["angles_deg"] = tuple(d["angles_deg"])
        return cls(kind=kind, **d)

    def draw(self, rng: np.random.Generator, K: int) -> np.ndarray:
        if self.kind == "grid":
            if self.angles_deg:
                if len(self.angles_deg) != K:
                    raise InvalidParameterError(
                        f"grid policy lists {len(self.angles_deg)} angles for K={K} users"
                    )
                return check_angles(np.deg2rad(self.angles_deg))
            return np.deg2rad(np.linspace(-60.0, 60.0, K)) if K > 1 else np.zeros(1)
        sep = np.deg2rad(self.min_separation_deg)
        slack = np.pi - (K - 1) * sep
        if slack < 0:
            raise PlacementError(
                f"cannot place {K} users {self.min_separation_deg} deg apart in 180 deg"
            )
        # sorted uniforms on the shrunk interval, then re-insert the gaps;
        # this is exactly uniform on the separated configurations
        u = np.sort(rng.uniform(0.0, slack, size=K))
        theta = -_HALF_PI + u + sep * np.arange(K)
        return rng.permutation(theta)


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    angles: np.ndarray
    gains: np.ndarray
    H: np.ndarray
    layout: SensorLayout
    wavelength_ratio: float = 0.5

    @property
    def K(self) -> int:
        return len(self.angles)

    @classmethod
    def from_parts(cls, layout: SensorLayout, angles, gains, d_over_lambda: float = 0.5):
        angles = check_angles(np.atleast_1d(angles))
        gains = np.asarray(gains, dtype=complex).reshape(-1)
        if gains.shape != angles.shape:
            raise DimensionError("need one gain per angle")
        H = steering_matrix(layout, angles, d_over_lambda) * gains[None, :]
        return cls(angles, gains, H, layout, d_over_lambda)

    def to_dict(self) -> dict:
        return {
            "layout": self.layout.label,
            "d_over_lambda": self.wavelength_ratio,
            "angles_deg": np.rad2deg(self.angles).tolist(),
            "gains": [[g.real, g.imag] for g in self.gains.tolist()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelRealization":
        gains = [complex(re, im) for re, im in d["gains"]]
        return cls.from_parts(
            parse_geometry(d["layout"]), np.deg2rad(d["angles_deg"]), gains, d["d_over_lambda"]
        )


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with the given total variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channel(
    rng: np.random.Generator,
    layout: SensorLayout,
    K: int,
    angle_policy: AnglePolicy | None = None,
    d_over_lambda: float = 0.5,
    gains: Sequence[complex] | None = None,
) -> ChannelRealization:
    """Angles first, then ``CN(0, 1)`` gains, so paired runs over different
    layouts see identical draws from the same generator state."""
    if K < 1:
        raise InvalidParameterError("need at least one user")
    policy = angle_policy or AnglePolicy()
    theta = policy.draw(rng, K)
    g = complex_normal(rng, K) if gains is None else np.asarray(gains, dtype=complex)
    return ChannelRealization.from_parts(layout, theta, g, d_over_lambda)


def generate_symbols(
    rng: np.random.Generator,
    K: int,
    T: int,
    constellation="qpsk",
    powers: Sequence[float] | None = None,
) -> np.ndarray:
    """``K x T`` i.i.d. symbols; row ``k`` has average power ``powers[k]``."""
    const = get_constellation(constellation)
    if const.order == 0:
        raise InvalidParameterError("empty constellation")
    powers = np.ones(K) if powers is None else np.asarray(powers, dtype=float)
    if powers.shape != (K,):
        raise DimensionError(f"expected {K} powers, got shape {powers.shape}")
    if np.any(powers <= 0):
        raise InvalidParameterError("symbol powers must be positive")
    idx = rng.integers(0, const.order, size=(K, T))
    return const.points[idx] * np.sqrt(powers)[:, None]


@dataclass(frozen=True, eq=False)
class SnapshotBlock:
    X: np.ndarray
    S: np.ndarray
    noise_power: float = field(default=0.0)

    @property
    def T(self) -> int:
        return self.X.shape[1]


def received_block(
    channel: ChannelRealization, S: np.ndarray, noise_power: float, rng: np.random.Generator
) -> SnapshotBlock:
    S = np.atleast_2d(S)
    if S.shape[0] != channel.H.shape[1]:
        raise DimensionError(f"S has {S.shape[0]} rows, channel has {channel.H.shape[1]} users")
    if noise_power < 0:
        raise InvalidParameterError("noise power must be non-negative")
    X = channel.H @ S
    if noise_power > 0:
        X = X + complex_normal(rng, X.shape, noise_power)
    return SnapshotBlock(X, S, float(noise_power))
