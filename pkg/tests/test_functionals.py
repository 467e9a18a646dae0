import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fracvar.core import DomainMask, Field, GridSpec, make_bump
from fracvar.functionals import (
    Atom,
    EnergyReport,
    Integrand,
    MeasureDecomp,
    abs_integrand,
    area_functional,
    area_integrand,
    check_complementary,
    convex_envelope_1d,
    energy_extended,
    energy_plain,
    energy_relaxed,
    envelope_at,
    envelope_recession,
    matrix_area,
    recession_condition_gap,
    recession_estimate,
    well_integrand,
)
from fracvar.ops import OperatorBackend, frac_gradient


def biconjugate(t_eval, t, f, slopes):
    """Brute-force Legendre-Fenchel biconjugate of samples ``(t, f)``, evaluated at ``t_eval``."""
    fstar = np.max(slopes[:, None] * t[None, :] - f[None, :], axis=1)
    return np.max(slopes[None, :] * t_eval[:, None] - fstar[None, :], axis=1)


finite = st.floats(-50, 50, allow_nan=False)


class TestIntegrands:
    @pytest.mark.parametrize("make", [area_integrand, abs_integrand, lambda: well_integrand(0.7)])
    def test_audit(self, make, rng):
        f = make()
        for rows in (1, 2):
            rep = f.audit(2, rng, rows=rows)
            assert rep["growth"] <= 1e-12 and rep["coercivity"] <= 1e-12

    def test_zero_at_origin(self):
        assert area_integrand()(np.zeros(1), np.zeros(1))[0] == 0.0
        assert abs_integrand()(np.zeros(2), np.zeros((1, 2)))[0] == 0.0

    def test_well_field_profile(self, grid1d):
        b = Field(grid1d, np.where(np.abs(grid1d.axis()) < 1, 0.5, 0.0))
        f = well_integrand(b)
        assert f(np.array([[0.0]]), np.array([[[0.5]]]))[0] == pytest.approx(0.0)
        assert f(np.array([[2.0]]), np.array([[[0.5]]]))[0] == pytest.approx(0.5)

    def test_bad_constants(self):
        with pytest.raises(ValueError):
            Integrand(lambda x, A: np.zeros(len(x)), growth_M=0.0)


class TestRecession:
    @given(arrays(float, 2, elements=st.floats(-10, 10)))
    def test_area(self, a):
        if np.linalg.norm(a) < 1e-3:
            return
        est = recession_estimate(area_integrand(), np.zeros(2), a[None])
        assert est.exists
        assert est.value == pytest.approx(np.linalg.norm(a), abs=1e-3)

    def test_abs_exact(self):
        A = np.array([[3.0, -4.0]])
        assert recession_estimate(abs_integrand(), np.zeros(2), A).value == pytest.approx(5.0, rel=1e-12)

    def test_well(self):
        A = np.array([[0.3]])
        assert recession_estimate(well_integrand(1.0), np.zeros(1), A).value == pytest.approx(0.3, abs=1e-3)

    def test_oscillating_flagged(self):
        osc = lambda x, A: np.abs(A[:, 0, 0]) * (1.5 + np.sin(np.log(np.abs(A[:, 0, 0]) + 1)))
        est = recession_estimate(osc, np.zeros(1), np.array([[1.0]]))
        assert not est.exists
        assert est.value >= max(est.quotients[len(est.quotients) // 2 :]) - 1e-9

    @pytest.mark.parametrize("sched", [[1e6, 1e7], [1e2, 1e1, 1e6], [1.0, 10.0, 100.0]])
    def test_bad_schedule(self, sched):
        with pytest.raises(ValueError):
            recession_estimate(abs_integrand(), np.zeros(1), np.array([[1.0]]), sched)


class TestEnvelope:
    def test_double_well(self):
        env = convex_envelope_1d(lambda t: np.abs(np.abs(t) - 1), None, np.linspace(-3, 3, 601))
        assert env(0.0) == pytest.approx(0.0, abs=1e-12)
        assert env(2.0) == pytest.approx(1.0, abs=1e-12)
        assert env(0.5) == pytest.approx(0.0, abs=1e-12)
        # linear continuation outside the window
        assert env(10.0) == pytest.approx(9.0, abs=1e-9)

    def test_double_well_against_biconjugate(self):
        # samples contain the kinks at +-1; evaluation on 1001 separate points
        ts = np.linspace(-4, 4, 801)
        fs = np.abs(np.abs(ts) - 1)
        t = np.linspace(-3, 3, 1001)
        env = convex_envelope_1d(lambda s: np.abs(np.abs(s) - 1), None, ts)
        bic = biconjugate(t, ts, fs, np.linspace(-1.5, 1.5, 3001))
        np.testing.assert_allclose(env(t), np.maximum(np.abs(t) - 1, 0), atol=1e-6)
        np.testing.assert_allclose(env(t), bic, atol=1e-6)

    def test_piecewise_against_biconjugate(self):
        # two wells of different depth: the hull bridges them with slope 1/4
        ts = np.linspace(-4, 8, 1201)
        fn = lambda s: np.minimum(np.abs(s), 2 * np.abs(s - 4) + 1)
        env = convex_envelope_1d(fn, None, ts)
        t = np.linspace(-4, 8, 1001)
        bic = biconjugate(t, ts, fn(ts), np.linspace(-3, 3, 24001))
        np.testing.assert_allclose(env(t), bic, atol=1e-6)

    def test_convex_is_fixed(self):
        t = np.linspace(-5, 5, 401)
        env = convex_envelope_1d(area_integrand(), np.zeros(1), t)
        np.testing.assert_allclose(env(t), np.sqrt(1 + t**2) - 1, atol=1e-9)

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            convex_envelope_1d(np.abs, None, [0.0, 1.0])
        with pytest.raises(ValueError):
            convex_envelope_1d(np.abs, None, [0.0, 1.0, 1.0])

    @given(arrays(float, 41, elements=finite))
    def test_convex_and_below(self, vals):
        t = np.linspace(-2, 2, 41)
        env = convex_envelope_1d(lambda s: np.interp(s, t, vals), None, t)
        e = env(t)
        assert np.all(e <= vals + 1e-9)
        assert np.all(np.diff(e, 2) >= -1e-9 * (1 + np.abs(vals).max()))
        # the envelope touches f at its hull vertices
        on = np.isin(t, env.knots)
        np.testing.assert_allclose(e[on], vals[on], atol=1e-9)

    def test_envelope_at_known_and_sampled(self):
        b = 0.8
        f = well_integrand(b)
        stripped = Integrand(f.eval, f.growth_M, f.growth_a, f.coercivity_mu, f.coercivity_c,
                             profile=f.profile, name="well-sampled")
        x = np.zeros((5, 1))
        A = np.linspace(-2, 2, 5).reshape(5, 1, 1)
        exact = np.maximum(np.abs(A[:, 0, 0]) - b, 0)
        np.testing.assert_allclose(envelope_at(f, x, A), exact, atol=1e-12)
        np.testing.assert_allclose(envelope_at(stripped, x, A), exact, atol=1e-2)

    def test_envelope_recession_below_recession(self, rng):
        for f in (well_integrand(0.6), area_integrand()):
            for _ in range(5):
                A = rng.standard_normal((1, 1))
                r = recession_estimate(f, np.zeros(1), A).value
                assert envelope_recession(f, np.zeros((1, 1)), A).value <= r + 1e-3

    def test_recession_condition(self):
        assert recession_condition_gap(well_integrand(0.5), np.zeros((1, 1)), np.array([[1.0]])) <= 1e-3


class TestMeasures:
    def test_atom_shapes(self):
        a = Atom((0.5,), 2.0)
        assert a.weight.shape == (1, 1) and a.mass == 2.0
        b = Atom((0.0, 0.0), [3.0, 4.0])
        assert b.mass == 5.0

    def test_support_check(self, mask1d, grid1d):
        z = Field(grid1d, np.zeros((1,) + grid1d.shape), "vector")
        MeasureDecomp(z, (Atom((1.0,), 1.0),)).check_support(mask1d)
        with pytest.raises(ValueError):
            MeasureDecomp(z, (Atom((1.2,), 1.0),)).check_support(mask1d)

    def test_density_must_not_be_scalar(self, grid1d):
        with pytest.raises(ValueError):
            MeasureDecomp(Field(grid1d, np.zeros(grid1d.shape)))

    def test_total_variation(self, grid1d):
        d = Field(grid1d, np.ones((1,) + grid1d.shape), "vector")
        mu = MeasureDecomp(d, (Atom((0.0,), -2.0),))
        assert mu.total_variation() == pytest.approx(8.0 + 2.0)


class TestEnergies:
    def test_report_total(self):
        r = EnergyReport(1.0, 2.0, 3.0)
        assert r.total == 6.0
        with pytest.raises(ValueError):
            EnergyReport(1.0, 2.0, 3.0, total=7.0)
        assert set(json.loads(r.to_json())) == {"bulk_omega", "singular_omega_bar", "exterior", "total", "metadata"}

    def test_complementary_violation(self, grid1d, mask1d):
        u = Field(grid1d, np.where(mask1d.omega, 0.0, 1.0))
        g = Field(grid1d, np.where(mask1d.omega, 0.0, 1.0 + 1e-10))
        with pytest.raises(ValueError):
            check_complementary(u, g, mask1d)
        with pytest.raises(ValueError):
            energy_plain(u, g, mask1d, area_integrand(), OperatorBackend.spectral(0.5))

    def test_plain_zero(self, grid1d, mask1d):
        z = Field(grid1d, np.zeros(grid1d.shape))
        assert energy_plain(z, z, mask1d, area_integrand(), OperatorBackend.spectral(0.5)).total == 0.0

    def test_plain_abs_is_l1_gradient(self, grid1d, mask1d):
        b = OperatorBackend.spectral(0.5)
        u = make_bump(grid1d, (0.0,), 0.8)
        g = Field(grid1d, np.where(mask1d.omega, 0.0, u.values))
        rep = energy_plain(u, g, mask1d, abs_integrand(), b)
        assert rep.total == pytest.approx(frac_gradient(u, b).norm_l1(), rel=1e-12)
        assert rep.singular_omega_bar == 0.0
        assert rep.metadata["alpha"] == 0.5

    def test_plain_growth_bound(self, grid1d, mask1d):
        b = OperatorBackend.spectral(0.5)
        u = make_bump(grid1d, (2.0,), 0.5)
        rep = energy_plain(u, u, mask1d, area_integrand(), b)
        assert 0 < rep.total <= frac_gradient(u, b).norm_l1()

    def test_extended_singular_terms(self, grid1d, mask1d):
        z = Field(grid1d, np.zeros((1,) + grid1d.shape), "vector")
        one = MeasureDecomp(z, (Atom((0.2,), -0.7),))
        assert energy_extended(one, mask1d, area_integrand()).singular_omega_bar == pytest.approx(0.7, abs=1e-3)
        two = MeasureDecomp(z, (Atom((0.2,), -0.7), Atom((-0.5,), 1.3)))
        assert energy_extended(two, mask1d, abs_integrand()).singular_omega_bar == pytest.approx(2.0, rel=1e-12)
        with pytest.raises(ValueError):
            energy_extended(MeasureDecomp(z, (Atom((1.4,), 1.0),)), mask1d, abs_integrand())

    def test_extended_without_atoms_matches_plain(self, grid1d, mask1d):
        b = OperatorBackend.spectral(0.5)
        u = make_bump(grid1d, (0.0,), 0.8)
        mu = MeasureDecomp(frac_gradient(u, b))
        ext = energy_extended(mu, mask1d, area_integrand())
        plain = energy_plain(u, Field(grid1d, np.where(mask1d.omega, 0.0, u.values)), mask1d, area_integrand(), b)
        assert ext.total == pytest.approx(plain.total, rel=1e-12)

    def test_relaxed_equals_extended_for_convex(self, grid1d, mask1d):
        b = OperatorBackend.spectral(0.5)
        u = make_bump(grid1d, (0.0,), 0.8)
        atoms = (Atom((0.5,), 0.4),)
        mu = MeasureDecomp(frac_gradient(u, b), atoms)
        ext = energy_extended(mu, mask1d, area_integrand())
        rel = energy_relaxed(mu.density, atoms, None, mask1d, area_integrand())
        assert rel.total == pytest.approx(ext.total, rel=1e-6)
        assert rel.singular_omega_bar == pytest.approx(0.4, abs=1e-3)

    def test_relaxed_well_zero(self, grid1d, mask1d):
        x = grid1d.axis()
        bvals = np.where(np.abs(x) < 0.8, 0.5 * (1 - np.abs(x) / 0.8), 0.0)
        f = well_integrand(Field(grid1d, bvals))
        z = Field(grid1d, np.zeros(grid1d.shape))
        rep = energy_relaxed(z, [], z, mask1d, f, OperatorBackend.spectral(0.5))
        assert rep.total == 0.0
        assert energy_plain(z, z, mask1d, f, OperatorBackend.spectral(0.5)).total == pytest.approx(0.4, rel=1e-2)

    def test_relaxed_below_plain(self, grid1d, mask1d):
        b = OperatorBackend.spectral(0.5)
        u = make_bump(grid1d, (0.0,), 0.8, 0.3)
        f = well_integrand(0.6)
        relaxed = energy_relaxed(u, [], u, mask1d, f, b).total
        plain = energy_plain(u, u, mask1d, f, b).total
        assert relaxed <= plain + 1e-12

    def test_relaxed_scalar_needs_backend(self, grid1d, mask1d):
        z = Field(grid1d, np.zeros(grid1d.shape))
        with pytest.raises(ValueError):
            energy_relaxed(z, [], z, mask1d, area_integrand())


class TestArea:
    def test_zero_measure(self, grid1d, mask1d):
        z = MeasureDecomp(Field(grid1d, np.zeros((1,) + grid1d.shape), "vector"))
        assert area_functional(z, mask1d, "omega") == pytest.approx(mask1d.volume())
        assert area_functional(z, mask1d, "box") == pytest.approx(8.0)

    def test_atom_inside(self, grid1d, mask1d):
        z = Field(grid1d, np.zeros((1,) + grid1d.shape), "vector")
        mu = MeasureDecomp(z, (Atom((0.3,), -0.25),))
        assert area_functional(mu, mask1d, "omega") == pytest.approx(mask1d.volume() + 0.25)

    def test_constant_density(self, grid1d, mask1d):
        d = Field(grid1d, np.full((1,) + grid1d.shape, 0.75), "vector")
        assert area_functional(MeasureDecomp(d), mask1d, "omega_prime") == pytest.approx(
            mask1d.omega_prime.sum() * grid1d.spacing * 1.25)

    @given(st.lists(st.tuples(st.sampled_from([-1.0, -0.5, 0.0, 0.7, 1.0]), st.floats(-3, 3)), max_size=6))
    def test_boundary_atoms(self, spec):
        g = GridSpec(1, 64, 4.0)
        mask = DomainMask(g, (0.0,), 1.0, 1.5)
        atoms = tuple(Atom((loc,), w) for loc, w in spec)
        mu = MeasureDecomp(Field(g, np.zeros((1,) + g.shape), "vector"), atoms)
        diff = area_functional(mu, mask, "omega_bar") - area_functional(mu, mask, "omega")
        on_bdry = sum(abs(w) for loc, w in spec if abs(loc) == 1.0)
        assert diff == pytest.approx(on_bdry, abs=1e-12)

    @given(arrays(float, (2, 3), elements=finite), arrays(float, (2, 3), elements=finite))
    def test_one_lipschitz(self, A, B):
        lhs = abs(matrix_area(A[None])[0] - matrix_area(B[None])[0])
        assert lhs <= np.linalg.norm(A - B) + 1e-9
