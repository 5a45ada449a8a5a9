"""Output SINR, achievable sum-rate, bit-error rate and filter-design cost."""
from __future__ import annotations

import time

import numpy as np

from .constellation import get_constellation
from .errors import DimensionError, InvalidFilterError
from .receivers import DetectionResult, FilterBank, filter_bank
from .virtualization import AugmentedManifold


def sinr(w: np.ndarray, manifold: AugmentedManifold, powers, noise_power: float, k: int) -> float:
    """``p_k |w^H b_k|^2 / (sum_{i!=k} p_i |w^H b_i|^2 + noise_power ||w||^2)``."""
    p = np.asarray(powers, dtype=float)
    w = np.asarray(w).reshape(-1)
    if w.shape != (manifold.J,):
        raise DimensionError(f"filter length {w.shape} does not match J={manifold.J}")
    gains = p * np.abs(w.conj() @ manifold.B1) ** 2
    den = gains.sum() - gains[k] + noise_power * np.vdot(w, w).real
    if den <= 0.0:
        if gains[k] == 0.0 and not np.any(w):
            raise InvalidFilterError("zero filter has undefined SINR")
        return float("inf")
    return float(gains[k] / den)


def sinr_all(W: np.ndarray, manifold: AugmentedManifold, powers, noise_power: float) -> np.ndarray:
    p = np.asarray(powers, dtype=float)
    G = np.abs(W.conj().T @ manifold.B1) ** 2 * p[None, :]
    sig = np.diag(G).copy()
    den = G.sum(axis=1) - sig + noise_power * np.sum(np.abs(W) ** 2, axis=0)
    if np.any(den <= 0):
        return np.array([sinr(W[:, k], manifold, p, noise_power, k) for k in range(manifold.K)])
    return sig / den


def achievable_sum_rate(bank: FilterBank | np.ndarray, manifold, powers, noise_power: float) -> float:
    """``sum_k log2(1 + SINR_k)`` in bits/s/Hz."""
    W = bank.W if isinstance(bank, FilterBank) else np.asarray(bank)
    if W.shape[1] != manifold.K:
        raise DimensionError(f"need {manifold.K} filters, got {W.shape[1]}")
    return float(np.sum(np.log2(1.0 + sinr_all(W, manifold, powers, noise_power))))


def symbol_bit_errors(hard_index: np.ndarray, true_index: np.ndarray, constellation="qpsk") -> int:
    const = get_constellation(constellation)
    hard_index, true_index = np.asarray(hard_index), np.asarray(true_index)
    if hard_index.shape != true_index.shape:
        raise DimensionError(f"shape mismatch {hard_index.shape} vs {true_index.shape}")
    return int(np.sum(const.bits[hard_index] != const.bits[true_index]))


def bit_error_rate(result: DetectionResult, truth: np.ndarray, constellation="qpsk") -> float:
    """Gray-mapped bit errors over all bits; ``truth`` holds transmitted symbols."""
    const = get_constellation(constellation)
    truth = np.atleast_2d(truth)
    if truth.shape != result.hard_index.shape:
        raise DimensionError(f"truth {truth.shape} vs detections {result.hard_index.shape}")
    true_index = const.nearest_index(truth / result.amplitudes[:, None])
    nbits = truth.size * const.bits_per_symbol
    return symbol_bit_errors(result.hard_index, true_index, const) / nbits


# complex Cholesky costs about J^3/3 complex multiply-adds, ~4/3 J^3 real flops
CHOLESKY_FLOP_COEFF = 4.0 / 3.0


def complexity_report(J: int, K: int = 8, repeats: int = 7, number: int = 200, seed: int = 0) -> dict:
    """Dominant ``c * J^3`` cost of filter-bank design and its measured time.

    The timing is the best of ``repeats`` batches of ``number`` designs on a
    random virtual manifold with ``K`` users.
    """
    if J < 1:
        raise ValueError("J must be >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-np.pi / 2, np.pi / 2, K)
    g = np.abs(rng.standard_normal(K) + 1j * rng.standard_normal(K)) ** 2 / 2
    B1 = g * np.exp(-1j * np.pi * np.arange(J)[:, None] * np.sin(theta)[None, :])
    manifold = AugmentedManifold(B1, theta, np.sqrt(g), J ** -0.25)
    p = np.ones(K)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(number):
            filter_bank(manifold, p, 0.1)
        best = min(best, (time.perf_counter() - t0) / number)
    return {
        "J": J,
        "cubic_term": J ** 3,
        "flop_coefficient": CHOLESKY_FLOP_COEFF,
        "predicted_flops": CHOLESKY_FLOP_COEFF * J ** 3,
        "seconds_per_design": best,
    }
