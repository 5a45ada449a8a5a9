"""Linear MMSE and norm-ordered SIC receivers on an (augmented) manifold.

The snapshot model is ``x(t) = c * (B s(t) + z(t))`` with ``c = manifold.scale``
(``J**-0.25`` on the virtual array). User indices are 0-based.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np
import scipy.linalg as sla

from .constellation import Constellation, get_constellation
from .errors import DimensionError, InvalidParameterError, SingularSystemError
from .virtualization import AugmentedManifold

log = logging.getLogger(__name__)

COND_WARN = 1e10


def _check_user(manifold: AugmentedManifold, k: int) -> None:
    if not 0 <= k < manifold.K:
        raise InvalidParameterError(f"user index {k} outside [0, {manifold.K})")


def _powers(manifold: AugmentedManifold, powers) -> np.ndarray:
    p = np.asarray(powers, dtype=float).reshape(-1)
    if p.shape != (manifold.K,):
        raise DimensionError(f"expected {manifold.K} powers, got {p.shape}")
    return p


def hpd_solve(R: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``R x = rhs`` for Hermitian positive definite ``R`` via Cholesky."""
    try:
        c, lower = sla.cho_factor(R, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"matrix is not positive definite: {exc}") from None
    d = np.abs(np.diag(c))
    if d.min() == 0.0:
        raise SingularSystemError("singular matrix")
    kappa = (d.max() / d.min()) ** 2  # lower bound on the condition number
    if kappa > COND_WARN:
        log.warning("ill-conditioned filter design, condition number >= %.2e", kappa)
    return sla.cho_solve((c, lower), rhs, check_finite=False)


def _deflated_solve(R: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # a deflated covariance estimate may be indefinite; fall back to LDL^H
    try:
        return hpd_solve(R, rhs)
    except SingularSystemError:
        pass
    try:
        return sla.solve(R, rhs, assume_a="her", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(str(exc)) from None


def interference_plus_noise_cov(
    manifold: AugmentedManifold, powers, noise_power: float, k: int
) -> np.ndarray:
    """``sum_{i != k} p_i b_i b_i^H + noise_power I``."""
    _check_user(manifold, k)
    p = _powers(manifold, powers).copy()
    p[k] = 0.0
    return manifold.covariance(p, noise_power)


def mmse_filter(
    manifold: AugmentedManifold,
    powers,
    noise_power: float,
    k: int,
    covariance: np.ndarray | None = None,
) -> np.ndarray:
    """``(1/c) p_k (R_{i+n} + p_k b_k b_k^H)^{-1} b_k``.

    ``covariance`` replaces the bracketed matrix by an estimate of the full
    received covariance (unscaled, i.e. ``B diag(p) B^H + noise_power I``).
    """
    p = _powers(manifold, powers)
    _check_user(manifold, k)
    b = manifold.B1[:, k]
    if covariance is None:
        R = interference_plus_noise_cov(manifold, p, noise_power, k) + p[k] * np.outer(b, b.conj())
    else:
        R = covariance
    return p[k] / manifold.scale * hpd_solve(R, b)


@dataclass(frozen=True, eq=False)
class FilterBank:
    W: np.ndarray  # J x K, column k filters user k
    powers: np.ndarray
    noise_power: float


def filter_bank(
    manifold: AugmentedManifold,
    powers,
    noise_power: float,
    covariance: np.ndarray | None = None,
) -> FilterBank:
    """All MMSE filters at once.

    ``R_{i+n} + p_k b_k b_k^H`` is the same full covariance for every ``k``,
    so one factorization serves the whole bank.
    """
    p = _powers(manifold, powers)
    R = manifold.covariance(p, noise_power) if covariance is None else covariance
    W = hpd_solve(R, manifold.B1 * p) / manifold.scale
    return FilterBank(W, p, float(noise_power))


def stationarity_residual(
    w: np.ndarray, manifold: AugmentedManifold, powers, noise_power: float, k: int
) -> float:
    """Relative norm of the MSE gradient at ``w``.

    Evaluates ``c^2 p_k (b b^H)^T w* - c p_k b* + c^2 R_{i+n}^T w*`` scaled by
    the norm of its constant term.
    """
    p = _powers(manifold, powers)
    c = manifold.scale
    b = manifold.B1[:, k]
    Rin = interference_plus_noise_cov(manifold, p, noise_power, k)
    ws = np.conj(w)
    g = c * c * p[k] * np.outer(b, b.conj()).T @ ws - c * p[k] * b.conj() + c * c * Rin.T @ ws
    return float(np.linalg.norm(g) / np.linalg.norm(c * p[k] * b))


@dataclass(frozen=True, eq=False)
class DetectionResult:
    soft: np.ndarray
    hard: np.ndarray
    hard_index: np.ndarray
    order: np.ndarray
    amplitudes: np.ndarray  # per-user alphabet scaling used by the slicer


def slice_symbols(soft: np.ndarray, amplitudes: np.ndarray, constellation) -> tuple:
    """Nearest-point decisions on a per-user scaled alphabet."""
    const = get_constellation(constellation)
    amp = np.asarray(amplitudes, dtype=float).reshape(-1, *([1] * (np.ndim(soft) - 1)))
    idx = const.nearest_index(soft / amp)
    return const.points[idx] * amp, idx


def _check_block(X_a: np.ndarray, manifold: AugmentedManifold) -> np.ndarray:
    X_a = np.atleast_2d(X_a)
    if X_a.shape[0] != manifold.J:
        raise DimensionError(f"snapshots have {X_a.shape[0]} rows, manifold has {manifold.J}")
    return X_a


def detect_linear(
    X_a: np.ndarray,
    manifold: AugmentedManifold,
    powers,
    noise_power: float,
    constellation: str | Constellation = "qpsk",
    covariance: np.ndarray | None = None,
    bank: FilterBank | None = None,
) -> DetectionResult:
    X_a = _check_block(X_a, manifold)
    if bank is None:
        bank = filter_bank(manifold, powers, noise_power, covariance)
    soft = bank.W.conj().T @ X_a
    amp = np.sqrt(bank.powers)
    hard, idx = slice_symbols(soft, amp, constellation)
    return DetectionResult(soft, hard, idx, np.arange(manifold.K), amp)


def osic_detect(
    X_a: np.ndarray,
    manifold: AugmentedManifold,
    powers,
    noise_power: float,
    constellation: str | Constellation = "qpsk",
    covariance: np.ndarray | None = None,
) -> DetectionResult:
    """Detect users in decreasing ``||b_k||`` order, cancelling each decision.

    Each stage redesigns the MMSE filter against the users not yet
    cancelled, then subtracts ``c * b_k * s_k`` using the sliced symbol.
    """
    X_a = _check_block(X_a, manifold)
    p = _powers(manifold, powers)
    B, c = manifold.B1, manifold.scale
    K, T = manifold.K, X_a.shape[1]
    order = np.argsort(-np.linalg.norm(B, axis=0), kind="stable")
    amp = np.sqrt(p)
    soft = np.zeros((K, T), dtype=complex)
    hard = np.zeros((K, T), dtype=complex)
    idx = np.zeros((K, T), dtype=np.int64)
    active = np.ones(K, dtype=bool)
    residual = X_a.copy()
    for k in order:
        b = B[:, k]
        if covariance is None:
            R = manifold.covariance(np.where(active, p, 0.0), noise_power)
            w = p[k] / c * hpd_solve(R, b)
        else:
            done = ~active
            R = covariance - (B[:, done] * p[done]) @ B[:, done].conj().T
            w = p[k] / c * _deflated_solve(R, b)
        soft[k] = w.conj() @ residual
        h, i = slice_symbols(soft[k][None, :], amp[k:k + 1], constellation)
        hard[k], idx[k] = h[0], i[0]
        residual = residual - c * np.outer(b, hard[k])
        active[k] = False
    return DetectionResult(soft, hard, idx, order, amp)


def write_detection_csv(path, rows: Iterable[tuple[int, DetectionResult, np.ndarray]]) -> None:
    """Rows of ``(trial, result, true_index)``; one CSV line per symbol."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "user", "t", "soft_re", "soft_im", "hard_index", "true_index"])
        for trial, res, truth in rows:
            K, T = res.soft.shape
            for k in range(K):
                for t in range(T):
                    z = res.soft[k, t]
                    w.writerow([trial, k, t, repr(float(z.real)), repr(float(z.imag)),
                                int(res.hard_index[k, t]), int(truth[k, t])])
