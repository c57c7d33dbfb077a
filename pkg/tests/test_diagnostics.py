import math

import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from kschaos.diagnostics import (
    ChaosConfig,
    chaos_study,
    density_estimate,
    l2_decay_series,
    silverman_bandwidth,
    wasserstein1_1d,
)
from kschaos.errors import DomainError
from kschaos.grids import DensityGrid, SpatialGrid, TimeGrid
from kschaos.initial import InitialLaw
from kschaos.kernels import KernelParams
from kschaos.meanfield import pde_solve
from kschaos.particles import brownian_paths

GAUSS = InitialLaw.gaussian(0.0, 1.0)


class TestW1Samples:
    def test_identical_zero(self):
        s = np.array([0.1, -0.4, 2.0])
        assert wasserstein1_1d(s, s.copy()) == 0.0

    def test_translation(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal(257)
        for c in (-1.5, 0.3, 2.0):
            assert wasserstein1_1d(s, s + c) == pytest.approx(abs(c), rel=1e-12)

    def test_two_point_brute_force(self):
        # optimal coupling of {0,1} vs {0,3}: min over both pairings / 2
        a, b = np.array([0.0, 1.0]), np.array([0.0, 3.0])
        brute = min(abs(0 - 0) + abs(1 - 3), abs(0 - 3) + abs(1 - 0)) / 2.0
        assert wasserstein1_1d(a, b) == pytest.approx(brute, rel=1e-15)
        assert wasserstein1_1d(a, b) == 1.0

    def test_exhaustive_coupling_small_sets(self):
        from itertools import permutations
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.standard_normal(5)
            b = rng.standard_normal(5)
            brute = min(np.mean(np.abs(a[list(p)] - b)) for p in permutations(range(5)))
            assert wasserstein1_1d(a, b) == pytest.approx(brute, rel=1e-12)

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            a, b, c = (rng.standard_normal(rng.integers(3, 40)) for _ in range(3))
            dab, dba = wasserstein1_1d(a, b), wasserstein1_1d(b, a)
            assert dab == dba
            assert wasserstein1_1d(a, c) <= dab + wasserstein1_1d(b, c) + 1e-12

    def test_against_scipy_unequal_sizes(self):
        rng = np.random.default_rng(2)
        for _ in range(25):
            a = rng.standard_normal(rng.integers(2, 50))
            b = 0.5 * rng.standard_normal(rng.integers(2, 50)) + 0.3
            assert wasserstein1_1d(a, b) == pytest.approx(
                wasserstein_distance(a, b), rel=1e-10, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            wasserstein1_1d(np.array([]), np.array([1.0]))


class TestW1Density:
    @pytest.fixture()
    def density(self):
        grid = SpatialGrid(-8, 8, 801)
        return GAUSS.density_on(grid)

    def test_quantile_samples_converge(self, density):
        # samples at the density's own quantiles: W1 -> 0 like O(1/n)
        for n, tol in ((200, 0.05), (2000, 0.005)):
            q = (np.arange(n) + 0.5) / n
            samples = GAUSS.quantile(q)
            assert wasserstein1_1d(samples, density) < tol

    def test_consistency_with_sample_route(self, density):
        rng = np.random.default_rng(3)
        samples = rng.standard_normal(500)
        direct = wasserstein1_1d(samples, density)
        nq = 20000
        quantile_samples = GAUSS.quantile((np.arange(nq) + 0.5) / nq)
        via_samples = wasserstein1_1d(samples, quantile_samples)
        assert direct == pytest.approx(via_samples, abs=5.0 / nq + 1e-4)

    def test_translation_lower_bound(self, density):
        # mean displacement is a lower bound; a shifted cloud has W1 >= shift - o(1)
        rng = np.random.default_rng(4)
        samples = rng.standard_normal(4000) + 2.0
        d = wasserstein1_1d(samples, density)
        assert 1.8 < d < 2.2


class TestDensityEstimate:
    def test_single_sample_is_discretized_gaussian(self):
        grid = SpatialGrid(-8, 8, 801)
        bw = 0.5
        kde = density_estimate(np.array([0.0]), grid, bw)
        x = grid.nodes()
        want = np.exp(-x * x / (2 * bw * bw)) / (bw * math.sqrt(2 * math.pi))
        assert np.max(np.abs(kde.values - want)) < 1e-12
        assert kde.mass() == pytest.approx(1.0, abs=1e-6)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(6)
        s = rng.standard_normal(500)
        grid = SpatialGrid(-8, 8, 201)
        a = density_estimate(s, grid, 0.3)
        b = density_estimate(rng.permutation(s), grid, 0.3)
        assert np.array_equal(a.values, b.values)

    def test_uniform_oracle(self):
        rng = np.random.default_rng(7)
        n = 100_000
        s = rng.random(n)
        grid = SpatialGrid(-0.3, 1.3, 1601)
        kde = density_estimate(s, grid, silverman_bandwidth(s))
        x = grid.nodes()
        truth = np.where((x >= 0) & (x <= 1), 1.0, 0.0)
        l1 = np.trapezoid(np.abs(kde.values - truth), dx=grid.h)
        assert l1 < 0.05

    def test_bad_bandwidth(self):
        grid = SpatialGrid(-1, 1, 32)
        with pytest.raises(DomainError):
            density_estimate(np.array([0.0]), grid, 0.0)


class TestL2Decay:
    def test_pde_snapshots(self):
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 10)
        snaps = pde_solve(GAUSS, space, grid, KernelParams(0.0, 1.0))
        times = [0.05, 0.1, 0.25, 0.5]
        rows = l2_decay_series(snaps, times)
        vals = [r["value"] for r in rows]
        assert all(v >= 0 for v in vals)
        assert max(vals) <= 3.0 * vals[-1]

    def test_heat_semigroup_l2_contraction(self):
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 10)
        snaps = pde_solve(GAUSS, space, grid, KernelParams(0.0, 0.0))
        norms = [s.rho.l2_norm() for s in snaps]
        assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))

    def test_ensemble_route_with_bandwidth_pair(self):
        grid = TimeGrid(0.05, 10)
        ens = brownian_paths(2000, grid, GAUSS, seed=3)
        space = SpatialGrid(-8, 8, 401)
        rows = l2_decay_series(ens, [0.25, 0.5], grid=space)
        for r in rows:
            assert r["bandwidth"] > 0
            assert r["value"] > 0 and r["value_half_bw"] > 0

    def test_nonpositive_time_rejected(self):
        grid = TimeGrid(0.05, 4)
        ens = brownian_paths(10, grid, GAUSS, seed=1)
        with pytest.raises(DomainError):
            l2_decay_series(ens, [0.0], grid=SpatialGrid(-8, 8, 64))


@pytest.fixture(scope="module")
def tiny_config():
    return ChaosConfig(
        n_values=(8, 24),
        n_replicas=4,
        eval_times=(0.1, 0.2),
        grid=TimeGrid(0.01, 20),
        initial=GAUSS,
        params=KernelParams(0.0, 1.0),
        space=SpatialGrid(-8.0, 8.0, 401),
    )


class TestChaosStudy:
    def test_deterministic_under_seed(self, tiny_config):
        a = chaos_study(tiny_config, seed=5)
        b = chaos_study(tiny_config, seed=5)
        assert np.array_equal(a.w1_mean, b.w1_mean)
        assert np.array_equal(a.w1_replicas, b.w1_replicas)
        assert a.slopes == b.slopes

    def test_shapes_and_positivity(self, tiny_config):
        rep = chaos_study(tiny_config, seed=5)
        assert rep.w1_mean.shape == (2, 2)
        assert np.all(rep.w1_mean > 0)
        assert np.all(rep.w1_se >= 0)
        assert len(rep.slopes) == 2
        assert len(rep.w1_table()) == 4

    def test_precomputed_rows_reused(self, tiny_config):
        full = chaos_study(tiny_config, seed=5)
        pre = {(0, 0): [float(v) for v in full.w1_replicas[0, 0]],
               (1, 2): [float(v) for v in full.w1_replicas[1, 2]]}
        resumed = chaos_study(tiny_config, seed=5, precomputed=pre)
        assert np.array_equal(resumed.w1_replicas, full.w1_replicas)
