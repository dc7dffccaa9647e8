"""Sparse recovery: CoSaMP, basis-pursuit denoising, thresholding and support least squares.

All routines work on a dense (possibly complex) effective operator ``phi`` of
shape ``m x n`` mapping wavelet/canonical coefficients to measurements.
Recovered coefficients are complex whenever ``phi`` is.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq


class UnidentifiableSupportError(np.linalg.LinAlgError):
    """A restricted operator lacks full column rank, so the support cannot be estimated."""


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class RecoveryProblem:
    phi: np.ndarray
    y: np.ndarray
    s: int
    sigma2: float = 0.0

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi))
        y = np.asarray(self.y).ravel()
        if phi.shape[0] < 1 or phi.shape[0] != y.shape[0]:
            raise ValueError(f"operator shape {phi.shape} inconsistent with {y.shape[0]} measurements")
        if self.s < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.s}")
        if self.sigma2 < 0:
            raise ValueError("noise variance must be nonnegative")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.phi.shape[0]

    @property
    def n(self) -> int:
        return self.phi.shape[1]


def default_epsilon(sigma2: float, m: int) -> float:
    """Residual radius ``sigma*sqrt(m)*(1 + 2/sqrt(m))`` covering the noise ball w.h.p."""
    return math.sqrt(sigma2) * math.sqrt(m) * (1.0 + 2.0 / math.sqrt(m))


def top_s_threshold(alpha: np.ndarray, s: int) -> np.ndarray:
    """Sorted indices of the ``s`` largest-magnitude entries; ties go to the lower index."""
    if s < 1:
        raise ValueError(f"sparsity must be >= 1, got {s}")
    mags = np.abs(np.asarray(alpha))
    order = np.argsort(-mags, kind="stable")
    return np.sort(order[:s])


def ls_on_support(y: np.ndarray, phi_support: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Minimum-norm least-squares coefficients ``pinv(phi_support) @ y``.

    Raises :class:`UnidentifiableSupportError` when ``phi_support`` is not of
    full column rank (relative singular-value cutoff ``rtol``).
    """
    a = np.atleast_2d(np.asarray(phi_support))
    if a.shape[0] < a.shape[1]:
        raise UnidentifiableSupportError(
            f"design does not identify support: {a.shape[0]} measurements for {a.shape[1]} unknowns"
        )
    u, sv, vh = np.linalg.svd(a, full_matrices=False)
    if sv.size == 0 or sv[-1] <= rtol * sv[0]:
        raise UnidentifiableSupportError("design does not identify support: restricted operator is rank deficient")
    return vh.conj().T @ ((u.conj().T @ np.asarray(y)) / sv)


def _robust_ls(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least squares that falls back to a trace-scaled ridge when ``a`` is ill-conditioned."""
    gram = a.conj().T @ a
    k = gram.shape[0]
    if a.shape[0] >= k:
        sv = np.linalg.svd(a, compute_uv=False)
        if sv[-1] > 1e-10 * sv[0]:
            return np.linalg.lstsq(a, y, rcond=None)[0]
    ridge = 1e-12 * max(np.trace(gram).real, np.finfo(float).tiny) / k
    return np.linalg.solve(gram + ridge * np.eye(k), a.conj().T @ y)


def cosamp(
    problem: RecoveryProblem, max_iters: int = 50, tol: float = 1e-8
) -> tuple[np.ndarray, np.ndarray]:
    """Compressive sampling matching pursuit.

    Each iteration forms the proxy ``phi^H r``, merges its ``2s`` largest
    entries with the current support, solves least squares on the merged set,
    prunes to the ``s`` largest and updates the residual. Stops after
    ``max_iters`` or once the residual norm fails to drop by more than ``tol``
    relative; an iterate that increases the residual is discarded.

    Returns
    -------
    alpha : ndarray, shape (n,)
        ``s``-sparse coefficient estimate.
    support : ndarray
        Sorted indices of the nonzeros of ``alpha``.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    phi, y, s = problem.phi, problem.y, problem.s
    n = problem.n
    dtype = np.result_type(phi.dtype, y.dtype, np.float64)
    alpha = np.zeros(n, dtype=dtype)
    support = np.zeros(0, dtype=np.int64)
    res_norm = np.linalg.norm(y)
    if res_norm == 0:
        return alpha, support
    y_scale = res_norm
    residual = y.astype(dtype)
    for _ in range(max_iters):
        proxy = phi.conj().T @ residual
        omega = top_s_threshold(proxy, min(2 * s, n))
        merged = np.union1d(omega, support)
        b = _robust_ls(phi[:, merged], y)
        keep = top_s_threshold(b, min(s, merged.size))
        cand = np.zeros(n, dtype=dtype)
        cand[merged[keep]] = b[keep]
        cand_support = np.flatnonzero(cand)
        cand_residual = y - phi @ cand
        cand_norm = np.linalg.norm(cand_residual)
        if cand_norm > res_norm:
            break
        improved = res_norm - cand_norm > tol * res_norm
        alpha, support, residual, res_norm = cand, cand_support, cand_residual, cand_norm
        if not improved or res_norm <= 1e-14 * y_scale:
            break
    return alpha, support


def _soft(z: np.ndarray, t: float) -> np.ndarray:
    mag = np.abs(z)
    scale = np.maximum(mag - t, 0.0) / np.where(mag > 0, mag, 1.0)
    return z * scale


@dataclass
class BpdnResult:
    alpha: np.ndarray
    residual_norm: float
    lam: float
    converged: bool
    iterations: int = 0
    history: list = field(default_factory=list)


def lasso_fista(
    phi: np.ndarray,
    y: np.ndarray,
    lam: float,
    x0: np.ndarray | None = None,
    lipschitz: float | None = None,
    tol: float = 1e-6,
    max_iters: int = 5000,
) -> tuple[np.ndarray, int, bool]:
    """FISTA with adaptive restart for ``0.5*||phi a - y||^2 + lam*||a||_1``.

    Convergence is declared when the relative change of the iterate drops
    below ``tol``.
    """
    if lipschitz is None:
        lipschitz = np.linalg.norm(phi, 2) ** 2
    step = 1.0 / lipschitz
    dtype = np.result_type(phi.dtype, y.dtype, np.float64)
    x = np.zeros(phi.shape[1], dtype=dtype) if x0 is None else x0.astype(dtype, copy=True)
    z = x.copy()
    t = 1.0
    phi_h = phi.conj().T
    for it in range(1, max_iters + 1):
        grad = phi_h @ (phi @ z - y)
        x_new = _soft(z - step * grad, lam * step)
        delta = x_new - x
        change = np.linalg.norm(delta)
        scale = max(np.linalg.norm(x_new), 1e-300)
        # gradient-based restart keeps the momentum from overshooting
        if np.real(np.vdot(z - x_new, delta)) > 0:
            t = 1.0
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = x_new + ((t - 1.0) / t_new) * delta
        x, t = x_new, t_new
        if change <= tol * scale:
            return x, it, True
    return x, max_iters, False


def _feasibility_polish(phi: np.ndarray, y: np.ndarray, alpha: np.ndarray, eps: float) -> np.ndarray:
    """Move ``alpha`` along the least-squares correction until ``||phi a - y|| <= eps`` if possible."""
    r = y - phi @ alpha
    rn = np.linalg.norm(r)
    if rn <= eps:
        return alpha
    d = np.linalg.lstsq(phi, r, rcond=None)[0]
    pr = phi @ d
    perp2 = max(np.linalg.norm(r - pr) ** 2, 0.0)
    par2 = np.linalg.norm(pr) ** 2
    if par2 == 0:
        return alpha
    # ||r - t*pr||^2 = perp2 + (1-t)^2 * par2
    slack = eps * eps - perp2
    t = 1.0 if slack <= 0 else 1.0 - math.sqrt(slack / par2)
    return alpha + min(max(t, 0.0), 1.0) * d


def bpdn_solve(
    problem: RecoveryProblem,
    eps: float,
    max_iters: int = 5000,
    tol: float = 1e-6,
    lam_floor: float = 1e-9,
) -> BpdnResult:
    """Solve ``min ||a||_1`` subject to ``||phi a - y||_2 <= eps``.

    The penalized problem is solved by FISTA while the penalty ``lam`` is
    driven to the value whose solution has residual ``eps``: a geometric
    continuation from ``lam_max = ||phi^H y||_inf`` brackets the root, then
    Brent's method on ``log lam`` refines it. When ``eps`` is at (or below)
    the least-squares residual the continuation runs down to
    ``lam_floor * lam_max``. A final least-squares correction enforces
    feasibility. ``max_iters`` bounds each inner FISTA solve.
    """
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    phi, y = problem.phi, problem.y
    n = problem.n
    dtype = np.result_type(phi.dtype, y.dtype, np.float64)
    y_norm = np.linalg.norm(y)
    if y_norm <= eps:
        return BpdnResult(np.zeros(n, dtype=dtype), y_norm, math.inf, True)

    ls = np.linalg.lstsq(phi, y, rcond=None)[0]
    ls_res = np.linalg.norm(y - phi @ ls)
    if eps < ls_res - 1e-10 * y_norm:
        raise ValueError(f"infeasible: eps={eps:.3g} below least-squares residual {ls_res:.3g}")

    lipschitz = np.linalg.norm(phi, 2) ** 2
    lam_max = np.max(np.abs(phi.conj().T @ y))
    converged = True
    total_iters = 0
    history: list[tuple[float, float]] = []
    cache: dict[float, np.ndarray] = {}

    def solve(lam: float, warm: np.ndarray | None) -> np.ndarray:
        nonlocal converged, total_iters
        a, it, ok = lasso_fista(phi, y, lam, warm, lipschitz, tol, max_iters)
        total_iters += it
        converged &= ok
        cache[lam] = a
        history.append((lam, float(np.linalg.norm(y - phi @ a))))
        return a

    hi_lam, lo_lam = lam_max, lam_max
    warm = np.zeros(n, dtype=dtype)
    alpha = warm
    floor = lam_floor * lam_max
    basis_pursuit = eps <= ls_res * (1.0 + 1e-9) + 1e-12 * y_norm
    while True:
        lo_lam = max(lo_lam * 0.5, floor)
        alpha = solve(lo_lam, warm)
        res = history[-1][1]
        if res <= eps and not basis_pursuit:
            break
        if lo_lam <= floor:
            break
        hi_lam, warm = lo_lam, alpha

    if not basis_pursuit and history[-1][1] < eps and lo_lam < hi_lam:
        log_eps = math.log(eps)

        def gap(log_lam: float) -> float:
            lam = math.exp(log_lam)
            nearest = min(cache, key=lambda k: abs(math.log(k) - log_lam))
            solve(lam, cache[nearest])
            return math.log(max(history[-1][1], 1e-300)) - log_eps

        try:
            root = brentq(gap, math.log(lo_lam), math.log(hi_lam), xtol=1e-6, rtol=1e-10, maxiter=60)
            lo_lam = math.exp(root)
            alpha = cache.get(lo_lam)
            if alpha is None:
                alpha = solve(lo_lam, cache[min(cache, key=lambda k: abs(k - lo_lam))])
        except ValueError:
            # residual curve not bracketed (flat near the root): keep the feasible iterate
            pass

    alpha = _feasibility_polish(phi, y, alpha, eps)
    res = float(np.linalg.norm(y - phi @ alpha))
    if not converged:
        warnings.warn("BPDN inner solver hit max_iters; returning best iterate", ConvergenceWarning, stacklevel=2)
    return BpdnResult(alpha, res, lo_lam, converged, total_iters, history)


def bpdn(problem: RecoveryProblem, eps: float | None = None, max_iters: int = 5000) -> np.ndarray:
    """Basis-pursuit denoising estimate; ``eps`` defaults to :func:`default_epsilon`."""
    if eps is None:
        eps = default_epsilon(problem.sigma2, problem.m)
    return bpdn_solve(problem, eps, max_iters=max_iters).alpha
