"""Closed-form and Monte Carlo self-checks, shared by ``adaptsense validate`` and the test-suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .analysis import (
    best_row,
    bayes_risk_closed_form,
    bayes_risk_full,
    brute_force_coherence_table,
    coherence_table,
    minmax_bounds,
    one_sparse_mse,
    repeated_measurement_mse_mc,
    ridge_monte_carlo,
)
from .design import design_gradient, design_objective, solve_relaxation
from .transforms import _dft_matrix, fourier_haar_matrix


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - t0)


def check_coherence(max_n: int = 256, atol: float = 1e-10) -> CheckResult:
    def run():
        worst, bad = 0.0, []
        n = 2
        while n <= max_n:
            worst = max(worst, float(np.max(np.abs(coherence_table(n) - brute_force_coherence_table(n)))))
            lo, hi = minmax_bounds(n)
            if abs(lo - math.sqrt(2.0 / n)) > atol or abs(hi - 1.0) > atol:
                bad.append(n)
            n *= 2
        return worst <= atol and not bad, f"max |closed - brute| = {worst:.2e}, minmax failures at n={bad}"

    return _timed("criterion 1: closed-form coherence", run)


def check_one_sparse_mc(n: int = 64, m: int = 32, sigma2: float = 1e-4, draws: int = 100_000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        parts, ok = [], True
        for index, target in ((0, sigma2 / m), (n // 2, (n / 2) * sigma2 / m)):
            j = best_row(n, index)
            mc = repeated_measurement_mse_mc(n, m, j, index, sigma2, draws, rng)
            rel = abs(mc - target) / target
            ok &= rel <= 0.03 and math.isclose(one_sparse_mse(n, m, j, index, sigma2), target, rel_tol=1e-9)
            parts.append(f"index {index}: rel err {rel:.4f}")
        return ok, ", ".join(parts)

    return _timed("criterion 2: one-sparse Monte Carlo", run)


def check_frobenius(plans: int = 1000, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(plans):
            n = int(2 ** rng.integers(1, 11))
            m = int(rng.integers(1, 2 * n + 1))
            s = int(rng.integers(1, n + 1))
            rows = rng.integers(0, n, size=m)
            support = rng.choice(n, size=s, replace=False)
            sub = _dft_matrix(n)[np.ix_(rows, support)]
            worst = max(worst, abs(float(np.sum(np.abs(sub) ** 2)) - s * m / n))
        return worst <= 1e-10, f"max deviation {worst:.2e} over {plans} plans"

    return _timed("criterion 3: Frobenius identity", run)


def check_design(points: int = 100, n: int = 64, seed: int = 0) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        fh = fourier_haar_matrix(n)
        worst_grad = 0.0
        for _ in range(points):
            s = int(rng.integers(1, 9))
            B = fh[:, np.sort(rng.choice(n, size=s, replace=False))]
            m = float(rng.uniform(s, 4 * n))
            w = rng.uniform(0.2, 1.0, size=n)
            w *= m * rng.uniform(0.5, 1.0) / w.sum()
            g = design_gradient(w, B)
            h = 1e-6 * w
            fd = np.empty(n)
            for i in range(n):
                e = np.zeros(n)
                e[i] = h[i]
                fd[i] = (design_objective(w + e, B) - design_objective(w - e, B)) / (2 * h[i])
            worst_grad = max(worst_grad, float(np.max(np.abs(fd - g)) / np.max(np.abs(g))))
        monotone, worst_opt = True, 0.0
        m = 20
        table = coherence_table(n)
        for index in range(n):
            sol = solve_relaxation(fh[:, [index]], m)
            hist = np.asarray(sol.history)
            monotone &= bool(np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1])))
            target = 1.0 / (m * table[:, index].max() ** 2)
            worst_opt = max(worst_opt, abs(sol.objective - target) / target)
        ok = worst_grad <= 1e-5 and monotone and worst_opt <= 1e-6
        return ok, f"grad rel err {worst_grad:.2e}, monotone={monotone}, s=1 optimum rel err {worst_opt:.2e}"

    return _timed("criterion 4: design solver certification", run)


def check_bayes(operators: int = 5, draws: int = 100_000, seed: int = 0) -> CheckResult:
    """Ridge-estimator Monte Carlo against the closed forms on random 20 x 5 operators.

    Two regimes: a diffuse prior (``rho2 = 1e4 sigma2``), where the full
    Monte Carlo risk is compared with :func:`bayes_risk_closed_form`; and a
    moderate prior (``rho2 = sigma2``), where the noise-propagation part is
    compared with :func:`bayes_risk_closed_form` and the full risk with
    :func:`bayes_risk_full`.
    """

    def run():
        rng = np.random.default_rng(seed)
        sigma2 = 1.0
        worst = 0.0
        for _ in range(operators):
            B = rng.standard_normal((20, 5))
            for rho2, comparisons in (
                (1e4, ((False, bayes_risk_closed_form),)),
                (1.0, ((True, bayes_risk_closed_form), (False, bayes_risk_full))),
            ):
                for noise_only, formula in comparisons:
                    mc = ridge_monte_carlo(B, sigma2, rho2, draws, rng, noise_only=noise_only)
                    cf = formula(B, sigma2, rho2)
                    worst = max(worst, abs(mc - cf) / cf)
        return worst <= 0.03, f"max rel err {worst:.4f} over {operators} operators"

    return _timed("criterion 5: Bayes-risk validator", run)


def run_all() -> list[CheckResult]:
    return [check_coherence(), check_one_sparse_mc(), check_frobenius(), check_design(), check_bayes()]
