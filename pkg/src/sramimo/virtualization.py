"""Difference co-array virtualization of a physical covariance.

Pipeline: covariance -> column-major vectorization -> one value per lag on
the contiguous segment ``[-(J-1), J-1]`` -> spatial smoothing into a ``J x J``
matrix and its PSD square root. The matching snapshot model on the virtual
array is ``x_a = J**-0.25 * (B1 s_a + z_a)``.

The virtual sources behind the smoothed covariance have powers
``sigma_k**2 / |g_k|**2``: the physical covariance carries ``|g_k|**2`` once,
and the augmented manifold already carries it in every column.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .channel import ChannelRealization, SnapshotBlock, check_angles, complex_normal
from .errors import DimensionError, GeometryInconsistencyError, InvalidParameterError
from .geometry import SensorLayout, segment_half_extent

log = logging.getLogger(__name__)

EIG_CLAMP_RTOL = 1e-12


def exact_covariance(channel: ChannelRealization, powers, noise_power: float) -> np.ndarray:
    H = channel.H
    powers = np.asarray(powers, dtype=float).reshape(-1)
    if powers.shape != (H.shape[1],):
        raise DimensionError(f"expected {H.shape[1]} powers, got {powers.shape}")
    return (H * powers) @ H.conj().T + noise_power * np.eye(H.shape[0])


def sample_covariance(block: SnapshotBlock | np.ndarray) -> np.ndarray:
    X = block.X if isinstance(block, SnapshotBlock) else np.atleast_2d(block)
    if X.size == 0 or X.shape[1] < 1:
        raise DimensionError("empty snapshot block")
    return (X @ X.conj().T) / X.shape[1]


def vectorize_covariance(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {R.shape}")
    return R.reshape(-1, order="F")


@dataclass(frozen=True, eq=False)
class LagSelectionMap:
    """Index pairs of the physical covariance feeding each virtual lag.

    ``pairs[l]`` lists ``(i, j)`` with ``positions[i] - positions[j] == l`` in
    column-major scan order, for every lag of the contiguous segment.
    """

    J: int
    M: int
    pairs: dict[int, tuple[tuple[int, int], ...]]
    slot: np.ndarray  # flat column-major index -> 0-based lag slot, -1 outside segment
    first: np.ndarray  # flat index of the first pair per slot
    counts: np.ndarray

    @property
    def lags(self) -> np.ndarray:
        return np.arange(-(self.J - 1), self.J)


@lru_cache(maxsize=64)
def lag_selection_map(layout: SensorLayout, J: int | None = None) -> LagSelectionMap:
    J = segment_half_extent(layout) if J is None else int(J)
    if J < 1:
        raise InvalidParameterError("J must be >= 1")
    pos = layout.as_array()
    M = len(pos)
    pairs: dict[int, list[tuple[int, int]]] = {lag: [] for lag in range(-(J - 1), J)}
    slot = np.full(M * M, -1, dtype=np.int64)
    for j in range(M):  # column-major: flat index i + j*M
        for i in range(M):
            lag = int(pos[i] - pos[j])
            if lag in pairs:
                pairs[lag].append((i, j))
                slot[i + j * M] = lag + J - 1
    missing = [lag for lag, pl in pairs.items() if not pl]
    if missing:
        raise GeometryInconsistencyError(
            f"lags {missing} of the segment [-{J - 1}, {J - 1}] have no sensor pair"
        )
    first = np.array([pl[0][0] + pl[0][1] * M for pl in pairs.values()], dtype=np.int64)
    counts = np.array([len(pl) for pl in pairs.values()], dtype=np.int64)
    frozen = {lag: tuple(pl) for lag, pl in pairs.items()}
    return LagSelectionMap(J, M, frozen, slot, first, counts)


@dataclass(frozen=True, eq=False)
class VirtualSnapshot:
    v: np.ndarray  # index 0 is lag -(J-1)
    J: int

    def at(self, lag: int) -> complex:
        return self.v[lag + self.J - 1]


def deduplicate_and_sort(
    v: np.ndarray,
    layout: SensorLayout,
    mode: str = "average",
    J: int | None = None,
) -> VirtualSnapshot:
    """Collapse the vectorized covariance to one entry per lag.

    ``first-occurrence`` keeps the first entry met in column-major order;
    ``average`` takes the mean over all pairs sharing the lag.
    """
    sel = lag_selection_map(layout, J)
    v = np.asarray(v).reshape(-1)
    if v.size != sel.M * sel.M:
        raise DimensionError(f"expected length {sel.M ** 2}, got {v.size}")
    if mode == "first-occurrence":
        out = v[sel.first]
    elif mode == "average":
        keep = sel.slot >= 0
        n = 2 * sel.J - 1
        s = sel.slot[keep]
        out = (
            np.bincount(s, weights=v[keep].real, minlength=n)
            + 1j * np.bincount(s, weights=v[keep].imag, minlength=n)
        ) / sel.counts
    else:
        raise InvalidParameterError(f"unknown de-duplication mode {mode!r}")
    return VirtualSnapshot(np.asarray(out, dtype=complex), sel.J)


def augmented_steering(theta: float, g: complex, J: int, d_over_lambda: float = 0.5) -> np.ndarray:
    """``|g|^2 exp(-j 2 pi (d/lambda) l sin(theta))`` for lags ``l = -(J-1)..J-1``."""
    theta = float(check_angles(theta))
    if J < 1:
        raise InvalidParameterError("J must be >= 1")
    lags = np.arange(-(J - 1), J)
    return abs(g) ** 2 * np.exp(-2j * np.pi * d_over_lambda * lags * np.sin(theta))


def psd_sqrt(R: np.ndarray) -> np.ndarray:
    """Hermitian PSD square root by eigendecomposition, negatives clamped to 0."""
    R = 0.5 * (R + R.conj().T)
    w, V = np.linalg.eigh(R)
    top = max(abs(w[-1]), 0.0)
    if w[0] < -EIG_CLAMP_RTOL * top:
        log.warning("clamping eigenvalue %.3e (largest %.3e)", w[0], top)
    w = np.where(w > EIG_CLAMP_RTOL * top, w, 0.0)
    return (V * np.sqrt(w)) @ V.conj().T


@dataclass(frozen=True, eq=False)
class SmoothedCovariance:
    R_ss: np.ndarray
    R_bar: np.ndarray
    J: int

    def to_dict(self) -> dict:
        return {"J": self.J, "R_ss": _cmat_to_json(self.R_ss), "R_bar": _cmat_to_json(self.R_bar)}

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothedCovariance":
        return cls(_cmat_from_json(d["R_ss"]), _cmat_from_json(d["R_bar"]), int(d["J"]))


def spatial_smoothing(vs: VirtualSnapshot) -> SmoothedCovariance:
    J = vs.J
    v = np.asarray(vs.v)
    if v.shape != (2 * J - 1,):
        raise DimensionError(f"virtual snapshot must have length {2 * J - 1}, got {v.shape}")
    R = np.zeros((J, J), dtype=complex)
    # window i (1-based) covers rows J+1-i .. 2J-i, i.e. lags 1-i .. J-i
    for i in range(1, J + 1):
        w = v[J - i:2 * J - i]
        assert w.shape == (J,)
        R += np.outer(w, w.conj())
    R /= J
    R = 0.5 * (R + R.conj().T)
    return SmoothedCovariance(R, psd_sqrt(R), J)


@dataclass(frozen=True, eq=False)
class AugmentedManifold:
    """Effective channel seen by the receivers.

    ``B1`` is ``J x K``; ``scale`` multiplies signal and noise in the snapshot
    model (``J**-0.25`` on the virtual array, 1 for a physical array).
    ``gain_normalized`` marks manifolds whose columns carry ``|g_k|**2``, so
    the matching source powers are ``powers / |g_k|**2``.
    """

    B1: np.ndarray
    angles: np.ndarray
    gains: np.ndarray
    scale: float
    d_over_lambda: float = 0.5
    gain_normalized: bool = True

    @property
    def J(self) -> int:
        return self.B1.shape[0]

    @property
    def K(self) -> int:
        return self.B1.shape[1]

    def source_powers(self, powers) -> np.ndarray:
        powers = np.asarray(powers, dtype=float)
        if self.gain_normalized:
            return powers / np.abs(self.gains) ** 2
        return powers

    def covariance(self, powers, noise_power: float) -> np.ndarray:
        """``B1 diag(powers) B1^H + noise_power I``."""
        B = self.B1
        return (B * np.asarray(powers, dtype=float)) @ B.conj().T + noise_power * np.eye(self.J)

    @classmethod
    def physical(cls, channel: ChannelRealization) -> "AugmentedManifold":
        """The physical array itself, used for the ULA baseline."""
        return cls(channel.H, channel.angles, channel.gains, 1.0, channel.wavelength_ratio, False)

    def to_dict(self) -> dict:
        return {
            "J": self.J,
            "K": self.K,
            "scale": self.scale,
            "d_over_lambda": self.d_over_lambda,
            "gain_normalized": self.gain_normalized,
            "angles_deg": np.rad2deg(self.angles).tolist(),
            "gains": [[g.real, g.imag] for g in np.asarray(self.gains).tolist()],
            "B1": _cmat_to_json(self.B1),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentedManifold":
        return cls(
            _cmat_from_json(d["B1"]),
            np.deg2rad(d["angles_deg"]),
            np.array([complex(a, b) for a, b in d["gains"]]),
            float(d["scale"]),
            float(d["d_over_lambda"]),
            bool(d["gain_normalized"]),
        )


def augmented_manifold(
    channel: ChannelRealization, J: int, d_over_lambda: float | None = None
) -> AugmentedManifold:
    """Columns are lags ``0..J-1`` of the augmented steering vectors."""
    dl = channel.wavelength_ratio if d_over_lambda is None else d_over_lambda
    if channel.layout.kind in ("TLNA", "CPA") and J != segment_half_extent(channel.layout):
        raise InvalidParameterError(
            f"J={J} does not match the layout's virtual extent "
            f"{segment_half_extent(channel.layout)}"
        )
    cols = [augmented_steering(t, g, J, dl)[J - 1:] for t, g in zip(channel.angles, channel.gains)]
    B1 = np.stack(cols, axis=1) if cols else np.zeros((J, 0), dtype=complex)
    return AugmentedManifold(B1, channel.angles, channel.gains, J ** -0.25, dl, True)


def synthesize_augmented_snapshots(
    manifold: AugmentedManifold, S_a: np.ndarray, noise_power: float, rng: np.random.Generator
) -> np.ndarray:
    """``scale * (B1 s_a(t) + z_a(t))`` with ``z_a ~ CN(0, noise_power I)``."""
    S_a = np.atleast_2d(S_a)
    if S_a.shape[0] != manifold.K:
        raise DimensionError(f"S_a has {S_a.shape[0]} rows, manifold has {manifold.K} users")
    X = manifold.B1 @ S_a
    if noise_power > 0:
        X = X + complex_normal(rng, X.shape, noise_power)
    return manifold.scale * X


def virtual_design_covariance(
    R_x: np.ndarray, layout: SensorLayout, mode: str = "average", J: int | None = None
) -> tuple[SmoothedCovariance, np.ndarray]:
    """Run the pipeline on ``R_x``; also return ``sqrt(J) * R_bar``, the
    full-form covariance ``B1 Omega B1^H + sigma^2 I`` used for filter design."""
    vs = deduplicate_and_sort(vectorize_covariance(R_x), layout, mode, J)
    sc = spatial_smoothing(vs)
    return sc, np.sqrt(sc.J) * sc.R_bar


def _cmat_to_json(A: np.ndarray) -> list:
    A = np.atleast_2d(A)
    return [[[z.real, z.imag] for z in row] for row in A.tolist()]


def _cmat_from_json(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)
