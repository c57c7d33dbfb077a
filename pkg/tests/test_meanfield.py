import math

import numpy as np
import pytest

from kschaos.errors import ConfigError, DomainError
from kschaos.grids import DensityGrid, SpatialGrid, TimeGrid
from kschaos.initial import InitialLaw
from kschaos.kernels import KernelParams, kernel_time_integral
from kschaos.meanfield import (
    PdeState,
    nl_drift_from_density,
    nl_sde_simulate,
    pde_solve,
    pde_step,
)
from kschaos.particles import brownian_paths

GAUSS = InitialLaw.gaussian(0.0, 1.0)
CHI0 = KernelParams(0.0, 0.0)
CHI1 = KernelParams(0.0, 1.0)


def heat_density(x, t, sigma2=1.0):
    v = sigma2 + t
    return np.exp(-x * x / (2 * v)) / math.sqrt(2 * math.pi * v)


class TestPdeStep:
    def test_cfl_guard(self):
        space = SpatialGrid(-8, 8, 101)
        state = PdeState(GAUSS.density_on(space), np.zeros(101), 0.0)
        with pytest.raises(ConfigError):
            pde_step(state, 2 * space.h ** 2, CHI1)

    def test_mass_conserved_per_step(self):
        space = SpatialGrid(-8, 8, 401)
        state = PdeState(GAUSS.density_on(space), np.zeros(401), 0.0)
        mass0 = state.rho.mass()
        for _ in range(25):
            state = pde_step(state, space.h ** 2, CHI1)
            assert abs(state.rho.mass() - mass0) < 1e-12
            mass0 = state.rho.mass()

    def test_symmetry_preserved(self):
        space = SpatialGrid(-8, 8, 401)
        state = PdeState(GAUSS.density_on(space), np.zeros(401), 0.0)
        for _ in range(50):
            state = pde_step(state, space.h ** 2, CHI1)
        assert np.max(np.abs(state.rho.values - state.rho.values[::-1])) < 1e-10
        # d_x c antisymmetric <=> c symmetric
        assert np.max(np.abs(state.c - state.c[::-1])) < 1e-10


class TestPdeSolve:
    def test_heat_oracle_coarse(self):
        # chi = 0: exact solution is the widening Gaussian
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 10)
        snaps = pde_solve(GAUSS, space, grid, CHI0)
        x = space.nodes()
        err = np.max(np.abs(snaps[-1].rho.values - heat_density(x, grid.horizon)))
        assert err < 1e-3

    def test_snapshot_times_align(self):
        space = SpatialGrid(-8, 8, 128)
        grid = TimeGrid(0.04, 5)
        snaps = pde_solve(GAUSS, space, grid, CHI0)
        assert [s.time for s in snaps] == pytest.approx(list(grid.times()), abs=0)

    def test_cumulative_mass(self):
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 10)
        snaps = pde_solve(GAUSS, space, grid, CHI1)
        for s in snaps:
            assert abs(s.rho.mass() - 1.0) < 1e-8
            assert np.min(s.rho.values) >= 0.0

    def test_l2_decay_bounded(self):
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 10)
        snaps = pde_solve(GAUSS, space, grid, CHI1)
        series = [s.time ** 0.25 * s.rho.l2_norm() for s in snaps[1:]]
        assert max(series) <= 3.0 * series[-1]

    def test_small_domain_rejected(self):
        space = SpatialGrid(-2, 2, 64)
        grid = TimeGrid(0.05, 2)
        with pytest.raises(ConfigError):
            pde_solve(GAUSS, space, grid, CHI1)

    def test_bad_pde_dt_rejected(self):
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 2)
        with pytest.raises(ConfigError):
            pde_solve(GAUSS, space, grid, CHI1, pde_dt=1.0)  # violates h^2
        with pytest.raises(ConfigError):
            pde_solve(GAUSS, space, grid, CHI1, pde_dt=0.0299)  # does not divide dt

    def test_self_convergence_under_refinement(self):
        coarse_space = SpatialGrid(-8, 8, 201)
        fine_space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.05, 8)
        coarse = pde_solve(GAUSS, coarse_space, grid, CHI1)[-1]
        fine = pde_solve(GAUSS, fine_space, grid, CHI1, pde_dt=None)[-1]
        fine_on_coarse = np.interp(coarse_space.nodes(), fine_space.nodes(), fine.rho.values)
        l1 = np.trapezoid(np.abs(fine_on_coarse - coarse.rho.values), dx=coarse_space.h)
        assert l1 < 1e-3


@pytest.fixture(scope="module")
def snaps():
    space = SpatialGrid(-8, 8, 401)
    grid = TimeGrid(0.05, 10)
    return pde_solve(GAUSS, space, grid, CHI1)


class TestNlDrift:

    def test_zero_at_symmetry_point(self, snaps):
        assert nl_drift_from_density(snaps, 6, 0.0, CHI1) == pytest.approx(0.0, abs=1e-12)

    def test_antisymmetric(self, snaps):
        for x in (0.4, 1.1, 2.5):
            assert nl_drift_from_density(snaps, 6, x, CHI1) == pytest.approx(
                -nl_drift_from_density(snaps, 6, -x, CHI1), abs=1e-12)

    def test_k0_zero(self, snaps):
        assert nl_drift_from_density(snaps, 0, 1.3, CHI1) == 0.0

    def test_narrow_bump_oracle(self):
        # delta-like density at 0: drift at x over one slab ~ slab integral at x.
        # slab wide enough that the kernel is not in its far tail at x, where
        # the bump's finite width would be exponentially amplified
        space = SpatialGrid(-8, 8, 3201)
        dt = 0.5
        bump = InitialLaw.gaussian(0.0, 0.02)
        rho = bump.density_on(space)
        state0 = PdeState(rho, np.zeros(space.n_cells), 0.0)
        state1 = PdeState(rho, np.zeros(space.n_cells), dt)
        got = nl_drift_from_density([state0, state1], 1, 1.0, CHI1)
        want = kernel_time_integral(1.0, 0.0, dt)
        assert got == pytest.approx(want, rel=2e-3)

    def test_out_of_range_index(self, snaps):
        with pytest.raises(DomainError):
            nl_drift_from_density(snaps, 99, 0.0, CHI1)


class TestNlSde:
    def test_chi0_matches_brownian(self):
        space = SpatialGrid(-8, 8, 128)
        grid = TimeGrid(0.05, 6)
        snaps = pde_solve(GAUSS, space, grid, CHI0)
        ens = nl_sde_simulate(20, grid, GAUSS, snaps, CHI0, seed=5)
        ref = brownian_paths(20, grid, GAUSS, seed=5)
        assert np.array_equal(ens.positions, ref.positions)

    def test_same_seed_deterministic(self):
        space = SpatialGrid(-8, 8, 201)
        grid = TimeGrid(0.05, 6)
        snaps = pde_solve(GAUSS, space, grid, CHI1)
        a = nl_sde_simulate(30, grid, GAUSS, snaps, CHI1, seed=8)
        b = nl_sde_simulate(30, grid, GAUSS, snaps, CHI1, seed=8)
        assert np.array_equal(a.positions, b.positions)

    def test_grid_mismatch_rejected(self):
        space = SpatialGrid(-8, 8, 128)
        snaps = pde_solve(GAUSS, space, TimeGrid(0.05, 6), CHI1)
        with pytest.raises(ConfigError):
            nl_sde_simulate(10, TimeGrid(0.04, 6), GAUSS, snaps, CHI1, seed=1)
        with pytest.raises(ConfigError):
            nl_sde_simulate(10, TimeGrid(0.05, 12), GAUSS, snaps, CHI1, seed=1)

    def test_marginal_matches_pde_density(self):
        # self-consistency: KDE of the copies vs the PDE density the drift reads
        from kschaos.diagnostics import density_estimate, silverman_bandwidth
        space = SpatialGrid(-8, 8, 401)
        grid = TimeGrid(0.025, 10)
        snaps = pde_solve(GAUSS, space, grid, CHI1)
        n_copies = 20000
        ens = nl_sde_simulate(n_copies, grid, GAUSS, snaps, CHI1, seed=99)
        samples = ens.positions[:, -1]
        bw = silverman_bandwidth(samples)
        kde = density_estimate(samples, space, bw)
        l1 = np.trapezoid(np.abs(kde.values - snaps[-1].rho.values), dx=space.h)
        rho = snaps[-1].rho.values
        d2 = np.gradient(np.gradient(rho, space.h), space.h)
        bias = 0.5 * bw ** 2 * np.trapezoid(np.abs(d2), dx=space.h)
        rk = 1.0 / (2 * math.sqrt(math.pi))
        mc = np.trapezoid(np.sqrt(rho * rk / (n_copies * bw)), dx=space.h)
        assert l1 < 5.0 * (bias + mc)
