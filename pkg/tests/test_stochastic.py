import math

import numpy as np
import pytest
from scipy.special import erf

from kschaos import rng
from kschaos.errors import DomainError, StateError
from kschaos.grids import TimeGrid
from kschaos.initial import InitialLaw
from kschaos.kernels import KernelParams
from kschaos.particles import PathEnsemble, brownian_paths, simulate
from kschaos.stochastic import (
    GirsanovAccumulator,
    PathPair,
    exp_moment_mc,
    functional_F,
    girsanov_accumulate,
    girsanov_mean_z_with_logs,
    lemma31_scaling_mc,
    novikov_probe,
)

LAW = InitialLaw.gaussian(0.0, 1.0)
PARAMS = KernelParams(0.0, 1.0)


class TestFunctionalF:
    def test_equal_paths_zero(self):
        grid = TimeGrid(0.1, 5)
        path = np.array([0.0, 0.3, -0.2, 0.5, 0.1, 0.0])
        pair = PathPair(grid, path, path.copy())
        for k in range(1, 6):
            assert functional_F(pair, k) == 0.0

    def test_single_slab_value(self):
        # x at 0, history constant at 1, one slab of width 0.5: (erf(1) - 1)^2
        grid = TimeGrid(0.5, 1)
        pair = PathPair(grid, np.zeros(2), np.ones(2))
        want = (erf(1.0) - 1.0) ** 2
        assert functional_F(pair, 1) == pytest.approx(want, rel=1e-12)
        assert functional_F(pair, 1) == pytest.approx(0.024743, abs=1e-6)

    def test_upper_bound(self):
        grid = TimeGrid(0.05, 20)
        g = np.random.default_rng(2)
        x = np.cumsum(g.standard_normal(21)) * 0.2
        y = np.cumsum(g.standard_normal(21)) * 0.2
        pair = PathPair(grid, x, y)
        for k in range(1, 21):
            assert 0.0 <= functional_F(pair, k) <= k ** 2

    def test_constant_history_telescopes(self):
        # against a constant path the slab sum telescopes to a single erf gap
        grid = TimeGrid(0.01, 40)
        c = 0.7
        x = np.full(41, 0.2)
        pair = PathPair(grid, x, np.full(41, c))
        k = 40
        want = (erf((0.2 - c) / math.sqrt(2 * k * grid.dt)) - np.sign(0.2 - c)) ** 2
        assert functional_F(pair, k) == pytest.approx(float(want), rel=1e-12)

    def test_k_bounds(self):
        grid = TimeGrid(0.1, 3)
        pair = PathPair(grid, np.zeros(4), np.ones(4))
        with pytest.raises(DomainError):
            functional_F(pair, 0)
        with pytest.raises(DomainError):
            functional_F(pair, 4)


class TestLemma31:
    def test_empty_window(self):
        grid = TimeGrid(0.0025, 84)
        out = lemma31_scaling_mc(0.05, 0.05, np.zeros(85), 500, grid, seed=1)
        assert out == {"estimate": 0.0, "std_error": 0.0, "n_samples": 500}

    def test_small_sample_refused(self):
        grid = TimeGrid(0.0025, 84)
        with pytest.raises(DomainError):
            lemma31_scaling_mc(0.0, 0.05, np.zeros(85), 99, grid, seed=1)

    def test_left_anchored_zero_path_oracle(self):
        # For x == 0 and restart at 0 the slab sum telescopes exactly, so
        # F_t = 4 Phi(-|Z|)^2 with Phi(Z) uniform and E F_t = 4/12 = 1/3 at
        # every grid time; the window integral is exactly (t2 - t1)/3 in
        # expectation.  This pins the estimator against a closed-form oracle.
        grid = TimeGrid(0.0025, 80)
        t2 = 0.2
        out = lemma31_scaling_mc(0.0, t2, np.zeros(81), 4000, grid, seed=3)
        assert abs(out["estimate"] - t2 / 3.0) < 4 * out["std_error"]
        assert out["std_error"] < 0.01

    def test_monotone_in_t2(self):
        grid = TimeGrid(0.0025, 80)
        a = lemma31_scaling_mc(0.02, 0.1, np.zeros(81), 2000, grid, seed=5)
        b = lemma31_scaling_mc(0.02, 0.2, np.zeros(81), 2000, grid, seed=5)
        assert b["estimate"] >= a["estimate"] - 2 * (a["std_error"] + b["std_error"])

    def test_off_grid_window_rejected(self):
        grid = TimeGrid(0.0025, 80)
        with pytest.raises(DomainError):
            lemma31_scaling_mc(0.0011, 0.1, np.zeros(81), 500, grid, seed=1)


class TestExpMoment:
    def test_alpha_to_zero(self):
        grid = TimeGrid(1 / 64, 16)
        out = exp_moment_mc(1e-9, grid, ("brownian", 0.0), 400, seed=2)
        assert out["estimate"] == pytest.approx(1.0, abs=1e-6)
        assert out["stable"]

    def test_damping_monotone_in_n(self):
        # common random numbers: the exponent scales by alpha/N pointwise,
        # so the sample estimates are strictly ordered
        grid = TimeGrid(1 / 128, 32)
        ests = []
        for n in (8, 32, 128):
            out = exp_moment_mc(2.0, grid, ("brownian", 0.0), 1000, seed=44, scale_inv_n=n)
            ests.append(out["estimate"])
        assert ests[0] >= ests[1] >= ests[2]
        assert ests[2] >= 1.0

    def test_law_insensitivity_probe(self):
        # small alpha*T: all three laws stay within a common narrow band above 1
        grid = TimeGrid(1 / 128, 32)
        ests = []
        for law in (("brownian", 0.0), ("constant", 0.0), ("constant", 5.0)):
            out = exp_moment_mc(0.5, grid, law, 3000, seed=7)
            assert out["stable"]
            ests.append(out["estimate"])
            assert out["estimate"] >= 1.0 - 3 * out["std_error"]
        assert max(ests) < 1.25  # pilot-derived common cap for T=0.25, alpha=0.5

    def test_far_constant_negligible(self):
        grid = TimeGrid(1 / 128, 32)
        out = exp_moment_mc(0.5, grid, ("constant", 5.0), 1000, seed=9)
        assert out["estimate"] == pytest.approx(1.0, abs=1e-4)

    def test_bad_args(self):
        grid = TimeGrid(1 / 64, 8)
        with pytest.raises(DomainError):
            exp_moment_mc(0.0, grid, ("brownian", 0.0), 100, seed=1)
        with pytest.raises(DomainError):
            exp_moment_mc(1.0, grid, ("weird", 0.0), 100, seed=1)
        with pytest.raises(DomainError):
            exp_moment_mc(1.0, grid, ("brownian", 0.0), 100, seed=1, scale_inv_n=0)


class TestGirsanov:
    def test_chi_zero_weight_is_one(self):
        grid = TimeGrid(0.02, 10)
        ens = brownian_paths(4, grid, LAW, seed=6)
        acc = girsanov_accumulate(ens, 1, KernelParams(0.0, 0.0))
        assert np.all(acc.log_weight == 0.0)
        assert acc.final_weight == 1.0

    def test_identity_and_monotone_quad(self):
        grid = TimeGrid(1 / 64, 16)
        ens = brownian_paths(6, grid, LAW, seed=11)
        acc = girsanov_accumulate(ens, 2, PARAMS)
        assert np.array_equal(acc.log_weight, acc.ito_term - 0.5 * acc.quad_term)
        assert np.all(np.diff(acc.quad_term) >= 0.0)
        assert acc.quad_term[0] == 0.0

    def test_single_matches_batch(self):
        grid = TimeGrid(1 / 64, 16)
        master = 314
        summary, logs = girsanov_mean_z_with_logs(1, 5, 6, grid, LAW, PARAMS, seed=master)
        for rep in range(5):
            ens = brownian_paths(6, grid, LAW, seed=rng.child_seed(master, rep))
            acc = girsanov_accumulate(ens, 1, PARAMS)
            assert acc.log_weight[-1] == pytest.approx(logs[rep], rel=1e-12, abs=1e-14)

    def test_mean_z_near_one_small(self):
        grid = TimeGrid(1 / 128, 16)
        summary, _ = girsanov_mean_z_with_logs(1, 400, 4, grid, LAW, PARAMS, seed=21)
        assert abs(summary["mean"] - 1.0) <= 4 * summary["std_error"]

    def test_full_transform_mean_z(self):
        # r = 0: the full drift-adding martingale also has E Z = 1
        grid = TimeGrid(1 / 128, 16)
        summary, _ = girsanov_mean_z_with_logs(0, 400, 4, grid, LAW, PARAMS, seed=22)
        assert abs(summary["mean"] - 1.0) <= 4 * summary["std_error"]

    def test_chunking_invariance(self):
        grid = TimeGrid(1 / 64, 8)
        a, logs_a = girsanov_mean_z_with_logs(1, 64, 4, grid, LAW, PARAMS, seed=5, chunk=64)
        b, logs_b = girsanov_mean_z_with_logs(1, 64, 4, grid, LAW, PARAMS, seed=5, chunk=7)
        assert np.array_equal(logs_a, logs_b)

    def test_missing_increments(self):
        grid = TimeGrid(0.1, 2)
        ens = PathEnsemble(grid, np.zeros((3, 3)), None, n_filled=3)
        with pytest.raises(StateError):
            girsanov_accumulate(ens, 1, PARAMS)

    def test_r_bounds(self):
        grid = TimeGrid(0.1, 2)
        ens = brownian_paths(3, grid, LAW, seed=1)
        with pytest.raises(DomainError):
            girsanov_accumulate(ens, 3, PARAMS)


class TestNovikov:
    def test_kappa_to_zero(self):
        grid = TimeGrid(1 / 64, 16)
        out = novikov_probe(1e-9, 300, 4, grid, LAW, PARAMS, seed=2)
        assert out["estimate"] == pytest.approx(1.0, abs=1e-6)

    def test_monotone_in_kappa(self):
        # same seed: exponents scale linearly in kappa, pointwise monotone
        grid = TimeGrid(1 / 64, 16)
        outs = [novikov_probe(k, 500, 4, grid, LAW, PARAMS, seed=13)
                for k in (0.25, 0.5, 1.0)]
        assert outs[0]["estimate"] <= outs[1]["estimate"] <= outs[2]["estimate"]

    def test_stable_across_seeds(self):
        grid = TimeGrid(1 / 128, 32)
        outs = [novikov_probe(0.5, 1500, 4, grid, LAW, PARAMS, seed=s)
                for s in (101, 202, 303)]
        for out in outs:
            assert out["stable"]
        for i in range(3):
            for j in range(i + 1, 3):
                gap = abs(outs[i]["estimate"] - outs[j]["estimate"])
                assert gap <= 3 * (outs[i]["std_error"] + outs[j]["std_error"])
