import math
import os

import numpy as np
import pytest

from adaptsense.sensing import (
    KINDS,
    StrategyConfig,
    run_adaptive,
    run_nonadaptive,
    run_oracle,
    run_strategy,
    vds_pmf,
)
from adaptsense.signals import SparseSignal, make_signal

slow = pytest.mark.skipif(not os.environ.get("ADAPTSENSE_SLOW"), reason="long-running; set ADAPTSENSE_SLOW=1")


def one_sparse(n, index, value=None):
    alpha = np.zeros(n)
    alpha[index] = math.sqrt(n) if value is None else value
    return SparseSignal.from_coefficients(alpha)


class TestVds:
    def test_n4(self):
        w = np.array([1, 1, 0.5, 1])
        assert np.allclose(vds_pmf(4), w / w.sum(), atol=1e-15)

    @pytest.mark.parametrize("n", [2, 8, 64, 1024])
    def test_symmetric_normalized(self, n):
        p = vds_pmf(n)
        assert abs(p.sum() - 1) <= 1e-12
        assert np.allclose(p[1:], p[1:][::-1])
        assert p[0] == p.max()

    def test_bad_n(self):
        with pytest.raises(ValueError):
            vds_pmf(12)


class TestConfig:
    def test_adaptive_needs_two(self):
        with pytest.raises(ValueError):
            StrategyConfig("adaptive-vds", "cosamp", 1, 1)

    @pytest.mark.parametrize("bad", [dict(kind="magic"), dict(recovery="omp"), dict(s=0), dict(sigma2=-1.0)])
    def test_invalid(self, bad):
        args = dict(kind="oracle", recovery="cosamp", m=4, s=1, sigma2=0.0) | bad
        with pytest.raises(ValueError):
            StrategyConfig(**args)

    def test_wrong_runner(self):
        sig = one_sparse(16, 0)
        with pytest.raises(ValueError):
            run_oracle(sig, StrategyConfig("nonadaptive-vds", m=4), np.random.default_rng(0))
        with pytest.raises(ValueError):
            run_adaptive(sig, StrategyConfig("oracle", m=4), np.random.default_rng(0))
        with pytest.raises(ValueError):
            run_nonadaptive(sig, StrategyConfig("adaptive-vds", m=4), np.random.default_rng(0))


class TestNonadaptive:
    def test_noiseless_full_coverage(self):
        n = 16
        sig = make_signal(n, 3, np.random.default_rng(0))
        out = run_nonadaptive(sig, StrategyConfig("nonadaptive-uniform", "cosamp", 96, 3, 0.0), np.random.default_rng(1))
        assert set(out.plan.rows.tolist()) == set(range(n))
        assert out.support_correct
        assert out.sq_error <= 1e-16 * np.sum(sig.x**2)
        assert np.allclose(out.x_hat, sig.x, atol=1e-8)

    def test_zero_signal(self):
        n, m, s, sigma2 = 64, 48, 3, 1e-4
        sig = SparseSignal.from_coefficients(np.zeros(n))
        errs = [
            run_nonadaptive(sig, StrategyConfig("nonadaptive-uniform", "cosamp", m, s, sigma2), np.random.default_rng(t)).sq_error
            for t in range(200)
        ]
        # a fit of s coefficients to pure noise; each costs about sigma2 * n / m
        assert np.median(errs) <= 4 * s * sigma2 * n / m

    def test_failed_recovery_reports_zero_estimate(self):
        sig = make_signal(32, 4, np.random.default_rng(2))
        out = run_nonadaptive(sig, StrategyConfig("nonadaptive-vds", "cosamp", 2, 4, 1e-4), np.random.default_rng(3))
        assert out.failed
        assert out.sq_error == pytest.approx(float(np.sum(sig.x**2)), rel=1e-12)

    def test_l1_recovery(self):
        sig = make_signal(64, 4, np.random.default_rng(4))
        out = run_nonadaptive(sig, StrategyConfig("nonadaptive-vds", "l1", 40, 4, 1e-4), np.random.default_rng(5))
        assert out.support_hat.size == 4
        assert out.sq_error >= 0 and out.plan.m == 40


class TestAdaptive:
    def test_minimal_split(self):
        out = run_adaptive(one_sparse(16, 0), StrategyConfig("adaptive-vds", "cosamp", 2, 1, 1e-4), np.random.default_rng(0))
        assert out.plan.m == 2

    def test_one_sparse_known_support(self):
        n, m, sigma2 = 64, 32, 1e-4
        sig = one_sparse(n, 0)
        cfg = StrategyConfig("adaptive-uniform", "cosamp", m, 1, sigma2)
        errs = [run_adaptive(sig, cfg, np.random.default_rng(t), stage1_support=[0]).sq_error for t in range(10_000)]
        assert np.mean(errs) == pytest.approx(2 * sigma2 / m, rel=0.10)

    def test_fallback_keeps_budget(self):
        # second stage has fewer rows than s, so the design cannot identify the support
        sig = make_signal(64, 6, np.random.default_rng(6))
        out = run_adaptive(sig, StrategyConfig("adaptive-vds", "cosamp", 8, 6, 1e-4), np.random.default_rng(7))
        assert out.fallback and out.plan.m == 8

    def test_odd_split(self):
        sig = make_signal(64, 3, np.random.default_rng(8))
        out = run_adaptive(sig, StrategyConfig("adaptive-vds", "cosamp", 41, 3, 1e-4), np.random.default_rng(9))
        assert out.plan.m == 41

    def test_l1(self):
        sig = make_signal(64, 3, np.random.default_rng(10))
        out = run_adaptive(sig, StrategyConfig("adaptive-vds", "l1", 40, 3, 1e-4), np.random.default_rng(11))
        assert out.plan.m == 40 and out.support_hat.size <= 3


class TestOracle:
    def test_scaling_root(self):
        n, m, sigma2 = 64, 16, 1e-4
        sig = one_sparse(n, 0)
        cfg = StrategyConfig("oracle", "cosamp", m, 1, sigma2)
        errs = [run_oracle(sig, cfg, np.random.default_rng(t)).sq_error for t in range(10_000)]
        assert np.mean(errs) == pytest.approx(sigma2 / m, rel=0.10)

    def test_finest_block(self):
        n, m, sigma2 = 64, 16, 1e-4
        sig = one_sparse(n, 45)
        cfg = StrategyConfig("oracle", "cosamp", m, 1, sigma2)
        errs = [run_oracle(sig, cfg, np.random.default_rng(t)).sq_error for t in range(10_000)]
        assert np.mean(errs) == pytest.approx((n / 2) * sigma2 / m, rel=0.10)

    def test_noiseless(self):
        sig = make_signal(128, 8, np.random.default_rng(12), "uniform")
        out = run_oracle(sig, StrategyConfig("oracle", "cosamp", 40, 8, 0.0), np.random.default_rng(13))
        assert np.allclose(out.x_hat, sig.x, atol=1e-8)


class TestInvariants:
    @pytest.mark.parametrize("kind", KINDS)
    def test_stage_accounting_and_reproducibility(self, kind):
        sig = make_signal(128, 5, np.random.default_rng(14))
        cfg = StrategyConfig(kind, "cosamp", 45, 5, 1e-4)
        a = run_strategy(sig, cfg, np.random.default_rng(15))
        b = run_strategy(sig, cfg, np.random.default_rng(15))
        assert a.plan.m == 45
        assert np.array_equal(a.plan.rows, b.plan.rows) and a.sq_error == b.sq_error
        assert a.support_hat.size <= 5 and a.sq_error >= 0

    @pytest.mark.parametrize("kind", KINDS)
    def test_noise_free_exact(self, kind):
        sig = make_signal(64, 4, np.random.default_rng(16))
        out = run_strategy(sig, StrategyConfig(kind, "cosamp", 64, 4, 0.0), np.random.default_rng(17))
        assert out.support_correct
        assert np.allclose(out.x_hat, sig.x, atol=1e-8)

    def test_unitarity_of_error(self):
        sig = make_signal(64, 4, np.random.default_rng(18))
        out = run_strategy(sig, StrategyConfig("nonadaptive-vds", "cosamp", 30, 4, 1e-3), np.random.default_rng(19))
        assert out.sq_error == pytest.approx(float(np.sum(np.abs(out.alpha_hat - sig.alpha) ** 2)), rel=1e-9)


def _medians(n, m, s, sigma2, kinds, trials, support_model="tree"):
    errs = {k: [] for k in kinds}
    for t in range(trials):
        sig = make_signal(n, s, np.random.default_rng(10_000 + t), support_model)
        for i, k in enumerate(kinds):
            out = run_strategy(sig, StrategyConfig(k, "cosamp", m, s, sigma2), np.random.default_rng(100 * t + i))
            errs[k].append(out.sq_error)
    return {k: float(np.median(v)) for k, v in errs.items()}


@slow
class TestLargeScale:
    def test_vds_beats_uniform_n1024(self):
        med = _medians(1024, 614, 10, 1e-4, ["nonadaptive-vds", "nonadaptive-uniform"], 200)
        assert med["nonadaptive-vds"] < med["nonadaptive-uniform"]

    def test_adaptive_near_oracle_n1024(self):
        med = _medians(1024, 614, 10, 1e-4, ["adaptive-vds", "nonadaptive-vds", "oracle"], 200)
        assert med["adaptive-vds"] <= med["nonadaptive-vds"]
        assert med["adaptive-vds"] <= 2 * med["oracle"]
