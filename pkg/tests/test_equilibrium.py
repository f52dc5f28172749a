import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import beckerdoring as bd
from beckerdoring.equilibrium import density_at_activity
from beckerdoring.errors import FreeEnergyDomainError, ParameterError, SupercriticalError


class TestCriticalValues:
    def test_constant_rates_diverge(self, ones_model):
        crit = bd.critical_values(ones_model, 4000)
        assert crit.z_s == pytest.approx(1.0, rel=1e-12)
        assert crit.diverges and math.isinf(crit.rho_s)

    def test_geometric_rates_diverge(self, half_model):
        # Q_i = 2^(1-i), z_s = 2, i Q_i z_s^i = 2i: partial sums blow up
        crit = bd.critical_values(half_model, 4000)
        assert crit.z_s == pytest.approx(2.0, rel=1e-12)
        assert crit.diverges

    def test_family_b_finite(self, family_b):
        crit = bd.critical_values(family_b, 100_000)
        assert crit.z_s == pytest.approx(1.0, rel=5e-3)
        assert not crit.diverges and not crit.inconclusive
        # partial-sum oracle at N = 10^6 against the library value
        db = bd.detailed_balance(family_b, 1_000_000)
        i = np.arange(1, 1_000_001, dtype=float)
        with np.errstate(under="ignore"):
            oracle = float(np.sum(np.exp(np.log(i) + db.log_q + i * math.log(1.0 / db.ratio_tail))))
        # the root-test z_s estimate shifts with N and rho_s is steep in z
        # near the radius, so the two truncations agree only to a few percent
        assert crit.rho_s == pytest.approx(oracle, rel=5e-2)

    def test_family_a_subcritical_window(self, family_a):
        crit = bd.critical_values(family_a, 100_000)
        assert not crit.diverges
        assert 2.0 < crit.rho_s < 10.0


class TestSolveActivity:
    def test_closed_form_exact(self, ones_model):
        # F(z) = z/(1-z)^2 = 2 has root 2z^2 - 5z + 2 = 0, z = 1/2
        z = bd.solve_monomer_activity(ones_model, 2.0, tol=1e-12)
        assert z == pytest.approx(0.5, abs=1e-12)

    def test_tiny_density_gives_tiny_activity(self, family_a):
        z = bd.solve_monomer_activity(family_a, 1e-8)
        assert 0 < z < 2e-8

    def test_supercritical_rejected(self, family_a):
        crit = bd.critical_values(family_a, 100_000)
        with pytest.raises(SupercriticalError):
            bd.solve_monomer_activity(family_a, crit.rho_s * 1.01, critical=crit)

    def test_round_trip(self, family_a):
        crit = bd.critical_values(family_a, 100_000)
        rng = np.random.default_rng(42)
        for _ in range(5):
            z = rng.uniform(0.05, 0.9) * crit.z_s
            rho, converged = density_at_activity(family_a, z, 1e-15)
            assert converged
            z_back = bd.solve_monomer_activity(family_a, rho, critical=crit)
            assert z_back == pytest.approx(z, abs=1e-9)

    def test_bisection_newton_agreement(self, family_b):
        crit = bd.critical_values(family_b, 100_000)
        rho = 0.5 * crit.rho_s
        z_bis = bd.solve_monomer_activity(family_b, rho, critical=crit)
        # independent safeguarded Newton iteration with the analytic derivative
        db = bd.detailed_balance(family_b, 200_000)
        i = np.arange(1, 200_001, dtype=float)

        def f_and_deriv(z):
            with np.errstate(under="ignore"):
                terms = np.exp(np.log(i) + db.log_q + i * math.log(z))
            return float(np.sum(terms)) - rho, float(np.sum(terms * i / z))

        lo, hi = 0.0, 0.999 * crit.z_s
        z = 0.5 * crit.z_s
        for _ in range(200):
            val, deriv = f_and_deriv(z)
            if val > 0:
                hi = z
            else:
                lo = z
            step = val / deriv
            z_next = z - step
            if not lo < z_next < hi:
                z_next = 0.5 * (lo + hi)
            if abs(z_next - z) < 1e-15:
                z = z_next
                break
            z = z_next
        assert z_bis == pytest.approx(z, abs=1e-10)

    def test_monotone_series(self, family_a):
        rng = np.random.default_rng(3)
        crit = bd.critical_values(family_a, 100_000)
        for _ in range(10):
            z1, z2 = sorted(rng.uniform(0.0, 0.95 * crit.z_s, size=2))
            if z1 == z2:
                continue
            f1, _ = density_at_activity(family_a, z1, 1e-14)
            f2, _ = density_at_activity(family_a, z2, 1e-14)
            assert f1 < f2


class TestEquilibriumProfile:
    def test_zero_activity(self, family_a):
        eq = bd.equilibrium_profile(family_a, 0.0, 50)
        assert np.all(eq.profile == 0.0)
        assert eq.rho == 0.0

    def test_geometric_profile(self, ones_model):
        # Q_i = 1, z = 1/2: profile is 2^-i
        eq = bd.equilibrium_profile(ones_model, 0.5, 30)
        expected = 0.5 ** np.arange(1, 31)
        assert eq.profile == pytest.approx(expected, rel=1e-13)

    def test_family_a_entry(self, family_a):
        # Q_2 z^2 at z = 0.3: (sqrt(2) - 1) * 0.09
        eq = bd.equilibrium_profile(family_a, 0.3, 10)
        assert eq.profile[1] == pytest.approx((math.sqrt(2) - 1.0) * 0.09, rel=1e-13)

    def test_underflow_cut_reported(self, family_a):
        crit = bd.critical_values(family_a, 100_000)
        z = bd.solve_monomer_activity(family_a, 1.0, critical=crit)
        eq = bd.equilibrium_profile(family_a, z, 2000, critical=crit)
        assert eq.cut_index is not None
        assert np.all(eq.profile[eq.cut_index - 1 :] == 0.0)
        assert np.all(eq.profile[: eq.cut_index - 1] > 0.0)
        assert eq.rho == pytest.approx(1.0, rel=1e-10)

    def test_fixed_point_net_rates(self, family_a):
        # max_i |a_i z 𝒬_i - b_{i+1} 𝒬_{i+1}| <= 1e-12 max_i(a_i z 𝒬_i)
        crit = bd.critical_values(family_a, 100_000)
        z = bd.solve_monomer_activity(family_a, 1.0, critical=crit)
        eq = bd.equilibrium_profile(family_a, z, 2000, critical=crit)
        state = bd.ClusterState(eq.profile.copy())
        w = bd.net_rates(state, family_a)
        i = np.arange(1, 2000, dtype=float)
        flux = family_a.a(i) * z * eq.profile[:-1]
        assert np.max(np.abs(w[:-1])) <= 1e-12 * np.max(flux)


class TestRelativeFreeEnergy:
    def test_zero_at_equilibrium(self, ones_model):
        eq = bd.equilibrium_profile(ones_model, 0.5, 40)
        assert bd.relative_free_energy(eq.profile.copy(), eq) == pytest.approx(0.0, abs=1e-16)

    def test_empty_state(self, ones_model):
        eq = bd.equilibrium_profile(ones_model, 0.5, 40)
        assert bd.relative_free_energy(np.zeros(40), eq) == pytest.approx(
            math.fsum(eq.profile), rel=1e-14
        )

    def test_doubled_state(self, ones_model):
        # termwise: 2Q log 2 - 2Q + Q = Q (2 log 2 - 1)
        eq = bd.equilibrium_profile(ones_model, 0.5, 40)
        expected = (2.0 * math.log(2.0) - 1.0) * math.fsum(eq.profile)
        assert bd.relative_free_energy(2.0 * eq.profile, eq) == pytest.approx(expected, rel=1e-12)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=40, deadline=None)
    def test_positive_away_from_equilibrium(self, seed):
        rng = np.random.default_rng(seed)
        model = bd.make_custom_model(np.ones(30), np.ones(30), gamma=1.0, z_s=1.0)
        eq = bd.equilibrium_profile(model, 0.5, 30)
        factors = np.exp(rng.normal(0, 0.5, size=30))
        c = eq.profile * factors
        h = bd.relative_free_energy(c, eq)
        assert h >= -1e-12 * (1.0 + abs(h))
        if np.max(np.abs(factors - 1.0)) > 1e-3:
            assert h > 0.0

    def test_domain_error_on_bare_profile(self):
        profile = np.array([0.5, 0.25, 0.0])
        with pytest.raises(FreeEnergyDomainError) as err:
            bd.relative_free_energy(np.array([0.1, 0.1, 0.1]), profile)
        assert err.value.index == 3

    def test_finite_past_cut_with_log_profile(self, family_a):
        crit = bd.critical_values(family_a, 100_000)
        z = bd.solve_monomer_activity(family_a, 1.0, critical=crit)
        eq = bd.equilibrium_profile(family_a, z, 2000, critical=crit)
        c = eq.profile.copy()
        c[-1] = 1e-30  # mass past the underflow cut
        assert math.isfinite(bd.relative_free_energy(c, eq))

    def test_length_mismatch(self, ones_model):
        eq = bd.equilibrium_profile(ones_model, 0.5, 40)
        with pytest.raises(ParameterError):
            bd.relative_free_energy(np.zeros(10), eq)
