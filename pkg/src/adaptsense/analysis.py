"""Closed-form analysis of 1-sparse Fourier/Haar sensing.

Coherence ``|<f_j, h_L>|`` between DFT row ``j`` and Haar synthesis column
``L`` has the closed form (``L`` in block ``a``, ``j >= 1``)

    (1 - cos(2**a * pi * j / n)) / sqrt(n * 2**(a-1) * (1 - cos(2*pi*j/n)))

with ``|<f_0, h_0>| = 1`` and zero for every other pair involving index 0.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .transforms import HaarBasis, _check_dimension, block_of_index, fourier_haar_matrix


def _check_block(n: int, a: int) -> int:
    levels = n.bit_length() - 1
    if not 1 <= a <= levels:
        raise ValueError(f"block must lie in 1..{levels} for n={n}, got {a}")
    return levels


def geometric_sum_magnitude(n: int, j: int, a: int, k: int = 0) -> float:
    """``|sum_{q=k}^{k + 2**a/2 - 1} exp(-2 pi i j q / n)|`` in closed form (independent of ``k``)."""
    _check_dimension(n)
    _check_block(n, a)
    if not 1 <= j <= n - 1:
        raise ValueError(f"j must lie in 1..{n - 1}, got {j}")
    if not 0 <= k <= n - 2**a // 2:
        raise ValueError(f"offset k must lie in 0..{n - 2**a // 2}, got {k}")
    num = 1.0 - math.cos(2**a * math.pi * j / n)
    den = 1.0 - math.cos(2.0 * math.pi * j / n)
    return math.sqrt(max(num, 0.0) / den)


def coherence_closed_form(n: int, j: int, index: int) -> float:
    _check_dimension(n)
    if not (0 <= j < n and 0 <= index < n):
        raise ValueError(f"row and column indices must lie in 0..{n - 1}, got ({j}, {index})")
    if j == 0 or index == 0:
        return 1.0 if j == index else 0.0
    a = block_of_index(HaarBasis(n), index)
    num = 1.0 - math.cos(2**a * math.pi * j / n)
    den = 1.0 - math.cos(2.0 * math.pi * j / n)
    return max(num, 0.0) / math.sqrt(n * 2 ** (a - 1) * den)


def coherence_table(n: int) -> np.ndarray:
    """Closed-form coherence for every ``(j, L)``; rows are DFT rows, columns Haar indices."""
    _check_dimension(n)
    table = np.zeros((n, n))
    table[0, 0] = 1.0
    if n == 1:
        return table
    j = np.arange(1, n)
    den = 1.0 - np.cos(2.0 * np.pi * j / n)
    levels = n.bit_length() - 1
    for a in range(1, levels + 1):
        num = np.maximum(1.0 - np.cos(2**a * np.pi * j / n), 0.0)
        col = num / np.sqrt(n * 2 ** (a - 1) * den)
        table[1:, n >> a : n >> (a - 1)] = col[:, None]
    return table


def brute_force_coherence_table(n: int) -> np.ndarray:
    """``|F @ H.T|`` computed directly from the dense transforms."""
    return np.abs(fourier_haar_matrix(n))


def best_row(n: int, index: int) -> int:
    """Lowest DFT row index maximizing coherence with Haar column ``index``."""
    col = coherence_table(n)[:, index]
    return int(np.flatnonzero(col >= col.max() * (1 - 1e-12))[0])


def minmax_bounds(n: int) -> tuple[float, float]:
    """``(min_L max_j, max_L max_j)`` of the coherence table."""
    best = coherence_table(n).max(axis=0)
    return float(best.min()), float(best.max())


def _excluded_indices(n: int, excluded_blocks: Iterable[int]) -> np.ndarray:
    levels = n.bit_length() - 1
    mask = np.zeros(n, dtype=bool)
    for a in excluded_blocks:
        _check_block(n, a)
        mask[n >> a : n >> (a - 1)] = True
        # the scaling column shares its entry magnitudes with the coarsest block
        if a == levels:
            mask[0] = True
    return mask


def block_restricted_max(n: int, excluded_blocks: Iterable[int] = ()) -> float:
    """``max_L max_j`` coherence over supports ``L`` outside ``excluded_blocks``.

    The scaling index 0 is grouped with the coarsest block ``log2(n)``.
    """
    _check_dimension(n)
    mask = _excluded_indices(n, excluded_blocks)
    if mask.all():
        raise ValueError("every support is excluded")
    return float(coherence_table(n).max(axis=0)[~mask].max())


def block_removal_curve(n: int) -> list[tuple[tuple[int, ...], float]]:
    """Values of :func:`block_restricted_max` as blocks are removed from the top down."""
    levels = _check_dimension(n).bit_length() - 1
    curve = [((), block_restricted_max(n, ()))]
    removed: list[int] = []
    for a in range(levels, 1, -1):
        removed.append(a)
        curve.append((tuple(removed), block_restricted_max(n, removed)))
    return curve


def one_sparse_mse(n: int, m: float, j: int, index: int, sigma2: float, adaptive: bool = False) -> float:
    """Expected squared error of repeating DFT row ``j`` ``m`` times on a 1-sparse Haar signal.

    With ``adaptive=True`` only ``m/2`` repeats remain after support detection.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    c = coherence_closed_form(n, j, index)
    if c <= 1e-12:
        raise ValueError(f"measurement uninformative for this support: row {j}, index {index}")
    effective = m / 2.0 if adaptive else float(m)
    return sigma2 / (effective * c * c)


def repeated_measurement_mse_mc(
    n: int, m: int, j: int, index: int, sigma2: float, draws: int, rng: np.random.Generator
) -> float:
    """Monte Carlo MSE of the pseudoinverse estimator from ``m`` repeats of DFT row ``j``.

    Noise is circularly-symmetric complex Gaussian with total variance ``sigma2``.
    """
    c = fourier_haar_matrix(n)[j, index]
    col = np.full((m, 1), c)
    pinv = np.linalg.pinv(col)
    alpha = math.sqrt(n)
    noise = math.sqrt(sigma2 / 2.0) * (
        rng.standard_normal((m, draws)) + 1j * rng.standard_normal((m, draws))
    )
    est = pinv @ (col * alpha + noise)
    return float(np.mean(np.abs(est[0] - alpha) ** 2))


def bayes_risk_closed_form(B: np.ndarray, sigma2: float, rho2: float) -> float:
    """``sigma2 * sum_i (sv_i / (sv_i**2 + sigma2/rho2))**2`` over the singular values of ``B``.

    This is ``sigma2 * ||(B^H B + (sigma2/rho2) I)^{-1} B^H||_F^2``, the
    noise-propagation error of the ridge (posterior-mean) estimator; it
    tends to ``sigma2 * ||B^+||_F^2`` as ``rho2 -> inf``. Zero singular
    values (``B`` wider than tall) contribute nothing.
    """
    if not rho2 > 0:
        raise ValueError("prior variance must be positive")
    sv = np.linalg.svd(np.atleast_2d(B), compute_uv=False)
    kappa = sigma2 / rho2
    return float(sigma2 * np.sum((sv / (sv**2 + kappa)) ** 2))


def bayes_risk_full(B: np.ndarray, sigma2: float, rho2: float) -> float:
    """Posterior-mean risk under the ``N(0, rho2 I)`` prior: ``sigma2 * sum_i 1/(sv_i**2 + sigma2/rho2)``.

    Differs from :func:`bayes_risk_closed_form` by the prior-shrinkage bias
    term; the two coincide in the ``rho2 -> inf`` limit.
    """
    if not rho2 > 0:
        raise ValueError("prior variance must be positive")
    B = np.atleast_2d(B)
    sv = np.linalg.svd(B, compute_uv=False)
    full = np.zeros(B.shape[1])
    full[: sv.size] = sv
    return float(sigma2 * np.sum(1.0 / (full**2 + sigma2 / rho2)))


def ridge_monte_carlo(
    B: np.ndarray,
    sigma2: float,
    rho2: float,
    draws: int,
    rng: np.random.Generator,
    noise_only: bool = False,
) -> float:
    """Monte Carlo mean squared error of ``(B^T B + (sigma2/rho2) I)^{-1} B^T y`` for real ``B``.

    Signals are drawn from ``N(0, rho2 I)`` and noise from ``N(0, sigma2 I)``.
    With ``noise_only=True`` the error is measured against the noiseless
    estimate, isolating the noise-propagation term.
    """
    B = np.asarray(B, dtype=float)
    m, s = B.shape
    kappa = sigma2 / rho2
    W = np.linalg.solve(B.T @ B + kappa * np.eye(s), B.T)
    x = math.sqrt(rho2) * rng.standard_normal((s, draws))
    z = math.sqrt(sigma2) * rng.standard_normal((m, draws))
    noisy = W @ (B @ x + z)
    ref = W @ (B @ x) if noise_only else x
    return float(np.mean(np.sum((noisy - ref) ** 2, axis=0)))
