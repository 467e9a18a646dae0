import numpy as np
import pytest

from fracvar.core import DomainMask, Field, FracParams, GridSpec, smooth_cutoff
from fracvar.ops import OperatorBackend, frac_gradient, spectral
from fracvar.relaxlab import poincare_probe
from fracvar.solver import (
    SolverConfig,
    _prox_area_conjugate,
    area_energy,
    area_stationarity,
    estimate_operator_norm,
    solve_frac_area,
    solve_frac_rof,
)


@pytest.fixture(scope="module")
def rof_setup():
    g = GridSpec(1, 256, 2.0)
    mask = DomainMask(g, (0.0,), 1.0, 1.4)
    x = g.axis()
    clean = (np.abs(x) < 0.5).astype(float)
    noisy = clean + 0.1 * np.random.default_rng(0).standard_normal(g.shape)
    G = Field(g, np.where(mask.omega, 0.0, noisy))
    return g, mask, Field(g, noisy), G


@pytest.fixture(scope="module")
def rof_result(rof_setup):
    g, mask, noisy, G = rof_setup
    return solve_frac_rof(noisy, G, mask, 10.0, FracParams(0.5), SolverConfig(tolerance=1e-6))


def _plateau_data(n, L=3.0):
    g = GridSpec(1, n, L)
    x = g.axis()
    G = Field(g, 2.0 * x * smooth_cutoff(g, (0.0,), 0.55 * L, 0.85 * L).values)
    return g, DomainMask(g, (0.0,), L / 3, L / 2), G


class TestConfig:
    def test_step_invariant(self):
        SolverConfig(primal_step=0.5, dual_step=0.5, operator_norm_estimate=2.0)
        with pytest.raises(ValueError):
            SolverConfig(primal_step=1.0, dual_step=1.0, operator_norm_estimate=2.0)

    def test_resolve_defaults(self):
        c = SolverConfig().resolve(4.0)
        assert c.primal_step == c.dual_step == 0.25
        assert c.primal_step * c.dual_step * 16.0 == pytest.approx(1.0)
        c2 = SolverConfig(primal_step=0.1).resolve(4.0)
        assert c2.primal_step * c2.dual_step * 16.0 == pytest.approx(1.0)

    @pytest.mark.parametrize("kw", [{"max_iters": 0}, {"tolerance": -1.0}, {"primal_step": -0.1}, {"check_every": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)


class TestOperatorNorm:
    @pytest.mark.parametrize("grid", [GridSpec(1, 256, 2.0), GridSpec(2, 256, 2.0)])
    def test_power_iteration_matches_lattice(self, grid):
        for a in (0.3, 0.9):
            est = estimate_operator_norm(OperatorBackend.spectral(a), grid)
            assert est == pytest.approx(spectral.gradient_operator_norm(grid, a), rel=1e-2)
            # the lattice maximum sits on the Nyquist corner, which the odd symbol drops; under 1% at N=256
            assert est == pytest.approx(spectral.symbol_max(grid, a), rel=1e-2)

    def test_monotone_in_alpha(self):
        g = GridSpec(1, 256, 2.0)
        assert estimate_operator_norm(OperatorBackend.spectral(0.1), g) < estimate_operator_norm(
            OperatorBackend.spectral(0.9), g)

    def test_iters_precondition(self):
        with pytest.raises(ValueError):
            estimate_operator_norm(OperatorBackend.spectral(0.5), GridSpec(1, 64, 1.0), iters=5)


class TestROF:
    def test_zero_data(self, rof_setup):
        g, mask, _, _ = rof_setup
        z = Field(g, np.zeros(g.shape))
        r = solve_frac_rof(z, z, mask, 1.0, FracParams(0.5))
        assert r.converged and r.iterations_used == 0
        assert np.all(r.minimizer.values == 0.0)
        assert r.gap_history[-1] == 0.0

    def test_converges_with_certificate(self, rof_result):
        r = rof_result
        assert r.converged
        assert r.gap_history[-1] <= 1e-6
        assert np.all(np.array(r.gap_history) >= -1e-12)  # dual never exceeds primal

    def test_energy_nonincreasing(self, rof_result):
        assert np.all(np.diff(rof_result.energy_history) <= 1e-9)

    def test_exterior_exact(self, rof_setup, rof_result):
        _, mask, _, G = rof_setup
        u = rof_result.minimizer.values
        assert np.array_equal(u[mask.exterior], G.values[mask.exterior])

    def test_deterministic(self, rof_setup, rof_result):
        g, mask, noisy, G = rof_setup
        again = solve_frac_rof(noisy, G, mask, 10.0, FracParams(0.5), SolverConfig(tolerance=1e-6))
        assert again.energy_history == rof_result.energy_history
        assert np.array_equal(again.minimizer.values, rof_result.minimizer.values)

    def test_fidelity_limit(self, rof_setup):
        g, mask, noisy, G = rof_setup
        r = solve_frac_rof(noisy, G, mask, 1e8, FracParams(0.5), SolverConfig(max_iters=200))
        om = mask.omega
        dev = np.linalg.norm((r.minimizer.values - noisy.values)[om]) / np.linalg.norm(noisy.values[om])
        assert dev <= 1e-3

    def test_denoises(self, rof_setup):
        g, mask, noisy, G = rof_setup
        clean = (np.abs(g.axis()) < 0.5).astype(float)
        om = mask.omega
        err = lambda u: np.linalg.norm((u - clean)[om])
        r = solve_frac_rof(noisy, G, mask, 100.0, FracParams(0.5))
        assert err(r.minimizer.values) < 0.8 * err(noisy.values)

    def test_quadrature_backend(self, rof_setup):
        g, mask, noisy, G = rof_setup
        r = solve_frac_rof(noisy, G, mask, 10.0, FracParams(0.5, "quadrature"), SolverConfig(tolerance=1e-4))
        assert r.converged

    def test_step_violation(self, rof_setup):
        g, mask, noisy, G = rof_setup
        bad = SolverConfig(primal_step=1.0, dual_step=1.0, operator_norm_estimate=1.0)
        with pytest.raises(ValueError):
            solve_frac_rof(noisy, G, mask, 1.0, FracParams(0.5), bad)

    def test_lambda_positive(self, rof_setup):
        g, mask, noisy, G = rof_setup
        with pytest.raises(ValueError):
            solve_frac_rof(noisy, G, mask, 0.0, FracParams(0.5))

    def test_serialises(self, rof_result):
        d = rof_result.to_dict()
        assert d["final_gap"] == rof_result.gap_history[-1]
        assert d["iterations_used"] == rof_result.iterations_used


class TestArea:
    def test_prox_stays_in_ball(self):
        y = np.random.default_rng(0).standard_normal((2, 50)) * 10
        q = _prox_area_conjugate(y, 0.3)
        r = np.sqrt((q**2).sum(axis=0))
        assert np.all(r < 1.0)
        # optimality: y - q = sigma * q / sqrt(1 - |q|^2)
        np.testing.assert_allclose(y - q, 0.3 * q / np.sqrt(1 - r**2), rtol=1e-5, atol=1e-9)

    def test_zero_boundary_data(self):
        g, mask, _ = _plateau_data(128)
        z = Field(g, np.zeros(g.shape))
        r = solve_frac_area(z, mask, FracParams(0.5))
        assert r.converged and np.all(r.minimizer.values == 0.0)

    def test_stationarity_and_energy(self):
        g, mask, G = _plateau_data(256)
        r = solve_frac_area(G, mask, FracParams(0.5))
        b = OperatorBackend.spectral(0.5)
        assert r.converged
        assert r.gap_history[-1] <= 1e-4
        assert area_stationarity(r.minimizer, mask, b) <= 1e-4 * area_stationarity(G, mask, b)
        assert r.energy_history[-1] <= r.energy_history[0] + 1e-9
        assert area_energy(r.minimizer, b) == pytest.approx(r.energy_history[-1], rel=1e-12)
        assert np.array_equal(r.minimizer.values[mask.exterior], G.values[mask.exterior])

    def test_refinement_stability(self):
        energies = []
        for n in (128, 256):
            g, mask, G = _plateau_data(n)
            energies.append(solve_frac_area(G, mask, FracParams(0.5)).energy_history[-1])
        assert abs(energies[1] - energies[0]) <= 0.02 * energies[1]

    def test_coercivity_chain(self):
        # ||u - g||_BV^a <= C (energy + 1) with C from the Poincare probe
        g, mask, G = _plateau_data(256)
        r = solve_frac_area(G, mask, FracParams(0.5))
        b = OperatorBackend.spectral(0.5)
        C = poincare_probe(mask, 0.5, 20, seed=0).C_hat
        d = r.minimizer - G
        bv = d.norm_l1() + frac_gradient(d, b).norm_l1()
        assert bv <= C * (r.energy_history[-1] + 1.0)

    def test_2d(self):
        g = GridSpec(2, 64, 3.0)
        x = g.coords()
        G = Field(g, x[0] * smooth_cutoff(g, (0.0, 0.0), 1.6, 2.5).values)
        mask = DomainMask(g, (0.0, 0.0), 1.0, 1.5)
        r = solve_frac_area(G, mask, FracParams(0.5))
        assert r.converged and r.energy_history[-1] <= r.energy_history[0]
