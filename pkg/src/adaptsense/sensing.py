"""Sensing strategies over the DFT ensemble: nonadaptive, two-stage adaptive and oracle.

Every strategy draws rows of the unitary DFT with replacement, observes
``y = F[rows] @ x + z`` and returns the pseudoinverse estimate on a final
support. The effective operator on coefficients is ``F @ Psi`` restricted to
the chosen rows, where ``Psi`` is the Haar synthesis (or the identity for
canonical-basis signals).
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .design import MeasurementPlan, draw_plan, sampling_pmf, solve_relaxation
from .recovery import (
    RecoveryProblem,
    UnidentifiableSupportError,
    bpdn,
    cosamp,
    default_epsilon,
    ls_on_support,
    top_s_threshold,
)
from .signals import NoiseModel, SparseSignal, add_noise
from .transforms import HaarBasis, _check_dimension, _dft_matrix, fourier_haar_matrix

NONADAPTIVE_KINDS = ("nonadaptive-uniform", "nonadaptive-vds")
ADAPTIVE_KINDS = ("adaptive-uniform", "adaptive-vds")
KINDS = NONADAPTIVE_KINDS + ADAPTIVE_KINDS + ("oracle",)
RECOVERIES = ("cosamp", "l1")


@dataclass(frozen=True)
class StrategyConfig:
    kind: str
    recovery: str = "cosamp"
    m: int = 2
    s: int = 1
    sigma2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.recovery not in RECOVERIES:
            raise ValueError(f"unknown recovery {self.recovery!r}; expected one of {RECOVERIES}")
        if self.s < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.s}")
        if self.m < (2 if self.kind in ADAPTIVE_KINDS else 1):
            raise ValueError(f"too few measurements for {self.kind}: m={self.m}")
        if not self.sigma2 >= 0:
            raise ValueError("noise variance must be nonnegative")

    @property
    def label(self) -> str:
        return self.kind if self.kind == "oracle" else f"{self.kind}+{self.recovery}"


@dataclass(frozen=True)
class SensingOutcome:
    x_hat: np.ndarray
    alpha_hat: np.ndarray
    support_hat: np.ndarray
    plan: MeasurementPlan
    sq_error: float
    failed: bool = False
    fallback: bool = False
    support_correct: bool = False


def vds_pmf(n: int) -> np.ndarray:
    """Variable-density row distribution ``p_j ~ 1/max(1, min(j, n - j))``."""
    _check_dimension(n)
    j = np.arange(n)
    w = 1.0 / np.maximum(1, np.minimum(j, n - j))
    return w / w.sum()


def _nonadaptive_pmf(kind: str, n: int) -> np.ndarray:
    if kind.endswith("vds"):
        return vds_pmf(n)
    return np.full(n, 1.0 / n)


def _operator(signal: SparseSignal) -> np.ndarray:
    """Full-ensemble operator on coefficients (n x n)."""
    if signal.basis == "haar":
        return fourier_haar_matrix(signal.n)
    return _dft_matrix(signal.n)


def _measure(signal: SparseSignal, rows: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    clean = _dft_matrix(signal.n)[rows] @ signal.x
    return add_noise(clean, NoiseModel(sigma2), rng)


def _estimate_support(phi: np.ndarray, y: np.ndarray, cfg: StrategyConfig) -> np.ndarray:
    problem = RecoveryProblem(phi, y, cfg.s, cfg.sigma2)
    if cfg.recovery == "cosamp":
        return cosamp(problem)[1]
    alpha = bpdn(problem, default_epsilon(cfg.sigma2, problem.m))
    return top_s_threshold(alpha, cfg.s)


def _finish(
    signal: SparseSignal,
    op: np.ndarray,
    rows: np.ndarray,
    y: np.ndarray,
    support: np.ndarray,
    fallback: bool = False,
) -> SensingOutcome:
    """Pseudoinverse on ``support`` using every measurement, and the resulting error."""
    n = signal.n
    plan = MeasurementPlan(rows, n)
    alpha_hat = np.zeros(n, dtype=complex)
    failed = False
    try:
        alpha_hat[support] = ls_on_support(y, op[np.ix_(rows, support)])
    except UnidentifiableSupportError:
        failed = True
        alpha_hat[:] = 0.0
    if signal.basis == "haar":
        x_hat = HaarBasis(n).adjoint(alpha_hat)
    else:
        x_hat = alpha_hat.copy()
    err = float(np.sum(np.abs(x_hat - signal.x) ** 2))
    correct = bool(np.array_equal(np.sort(support), np.sort(signal.support)))
    return SensingOutcome(x_hat, alpha_hat, np.sort(support), plan, err, failed, fallback, correct)


def run_nonadaptive(signal: SparseSignal, cfg: StrategyConfig, rng: np.random.Generator) -> SensingOutcome:
    if cfg.kind not in NONADAPTIVE_KINDS:
        raise ValueError(f"run_nonadaptive needs a nonadaptive kind, got {cfg.kind!r}")
    op = _operator(signal)
    rows = rng.choice(signal.n, size=cfg.m, p=_nonadaptive_pmf(cfg.kind, signal.n))
    y = _measure(signal, rows, cfg.sigma2, rng)
    support = _estimate_support(op[rows], y, cfg)
    return _finish(signal, op, rows, y, support)


def _designed_rows(
    op: np.ndarray, support: np.ndarray, budget: int, rng: np.random.Generator
) -> np.ndarray:
    B = op[:, support]
    sol = solve_relaxation(B, budget, rng=rng)
    return draw_plan(sampling_pmf(sol.design), budget, B, rng).rows


def run_adaptive(
    signal: SparseSignal,
    cfg: StrategyConfig,
    rng: np.random.Generator,
    stage1_support: np.ndarray | None = None,
) -> SensingOutcome:
    """Two-stage sensing: ``m//2`` nonadaptive rows, then a design on the estimated support.

    If the second-stage design cannot identify the estimated support (for
    example fewer remaining rows than ``s``), the remaining rows are drawn from
    the first-stage distribution instead and the outcome is flagged.
    ``stage1_support`` replaces the first-stage estimate (the first-stage
    rows are still measured and used in the final recovery).
    """
    if cfg.kind not in ADAPTIVE_KINDS:
        raise ValueError(f"run_adaptive needs an adaptive kind, got {cfg.kind!r}")
    n = signal.n
    op = _operator(signal)
    pmf = _nonadaptive_pmf(cfg.kind, n)
    m1 = cfg.m // 2
    m2 = cfg.m - m1

    rows1 = rng.choice(n, size=m1, p=pmf)
    y1 = _measure(signal, rows1, cfg.sigma2, rng)
    if stage1_support is None:
        support1 = _estimate_support(op[rows1], y1, cfg)
    else:
        support1 = np.sort(np.asarray(stage1_support, dtype=np.int64))

    fallback = False
    try:
        rows2 = _designed_rows(op, support1, m2, rng)
    except (UnidentifiableSupportError, ValueError):
        fallback = True
        rows2 = rng.choice(n, size=m2, p=pmf)
    y2 = _measure(signal, rows2, cfg.sigma2, rng)

    rows = np.concatenate([rows1, rows2])
    y = np.concatenate([y1, y2])
    support = _estimate_support(op[rows], y, cfg)
    return _finish(signal, op, rows, y, support, fallback=fallback)


def run_oracle(signal: SparseSignal, cfg: StrategyConfig, rng: np.random.Generator) -> SensingOutcome:
    if cfg.kind != "oracle":
        raise ValueError(f"run_oracle needs kind 'oracle', got {cfg.kind!r}")
    op = _operator(signal)
    support = np.sort(signal.support)
    rows = _designed_rows(op, support, cfg.m, rng)
    y = _measure(signal, rows, cfg.sigma2, rng)
    return _finish(signal, op, rows, y, support)


def run_strategy(signal: SparseSignal, cfg: StrategyConfig, rng: np.random.Generator) -> SensingOutcome:
    if cfg.kind in NONADAPTIVE_KINDS:
        return run_nonadaptive(signal, cfg, rng)
    if cfg.kind in ADAPTIVE_KINDS:
        return run_adaptive(signal, cfg, rng)
    return run_oracle(signal, cfg, rng)
