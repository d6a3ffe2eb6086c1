import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bfdlab.collision import DistributionState
from bfdlab.equilibria import epsilon_sat, sample_equilibrium, solve_fd_params
from bfdlab.functionals import (
    boltzmann_entropy,
    coercivity_coefficient,
    csiszar_kullback_gap,
    entropy_S,
    entropy_production,
    level_energy_functional,
    level_set_positive,
    moment,
    nonsaturation_margin,
    psi_occupation,
    relative_entropy,
    sobolev_seminorm_sq,
)
from bfdlab.grids import build_grid, build_sphere_quadrature
from bfdlab.kernel import CollisionKernelSpec

SPEC = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))


def maxwellian_state(grid, rho=1.0, u=(0, 0, 0), theta=1.0, eps=0.0):
    d = grid.nodes - np.asarray(u, dtype=float)
    vals = rho * (2 * np.pi * theta) ** -1.5 * np.exp(
        -np.einsum("ij,ij->i", d, d) / (2 * theta))
    return DistributionState(grid, vals, eps)


class TestMoments:
    def test_zero(self):
        g = build_grid(4.0, 8)
        rep = moment(DistributionState(g, np.zeros(g.size), 0.0), 2.0)
        assert rep.m_s == rep.big_m_s == rep.e_s == 0.0

    def test_unit_maxwellian(self):
        g = build_grid(6.0, 24)
        state = maxwellian_state(g)
        assert moment(state, 0.0).m_s == pytest.approx(1.0, abs=1e-6)
        # <v>^2 = 1 + |v|^2 and the energy integral is 3 theta
        assert moment(state, 2.0).m_s == pytest.approx(4.0, abs=1e-5)

    def test_indicator_l2(self):
        g = build_grid(4.0, 8)
        vals = np.zeros(g.size)
        sel = np.abs(g.nodes).max(axis=1) < 1.0
        vals[sel] = 3.0
        volume = sel.sum() * g.cell_weight
        rep = moment(DistributionState(g, vals, 0.0), 0.0)
        assert rep.big_m_s == pytest.approx(9.0 * volume, rel=1e-12)
        assert rep.e_s == pytest.approx(rep.m_s + 0.5 * rep.big_m_s, rel=1e-15)


class TestEntropies:
    def test_plateau_has_zero_entropy(self):
        g = build_grid(2.0, 8)
        vals = np.where(np.linalg.norm(g.nodes, axis=1) <= 1.0, 1.0, 0.0)
        assert entropy_S(DistributionState(g, vals, 1.0)) == 0.0

    def test_zero_state(self):
        g = build_grid(2.0, 8)
        assert entropy_S(DistributionState(g, np.zeros(g.size), 1.0)) == 0.0

    def test_half_occupation_cube(self):
        # value 1/2 on an exact volume of 8 gives 8 log 2
        g = build_grid(4.0, 8)
        vals = np.zeros(g.size)
        vals[np.abs(g.nodes).max(axis=1) < 1.0] = 0.5
        got = entropy_S(DistributionState(g, vals, 1.0))
        assert got == pytest.approx(8 * np.log(2), rel=1e-14)

    def test_requires_quantum_parameter(self):
        g = build_grid(2.0, 8)
        with pytest.raises(ValueError):
            entropy_S(DistributionState(g, np.zeros(g.size), 0.0))

    def test_boltzmann_constant_density(self):
        g = build_grid(4.0, 8)
        vals = np.where(np.abs(g.nodes).max(axis=1) < 2.0, 1.0, 0.0)
        assert boltzmann_entropy(DistributionState(g, vals, 0.0)) == 0.0
        vals_e = vals * np.e
        volume = (vals > 0).sum() * g.cell_weight
        assert boltzmann_entropy(DistributionState(g, vals_e, 0.0)) == pytest.approx(
            np.e * volume * 1.0, rel=1e-12)

    def test_boltzmann_unit_maxwellian(self):
        g = build_grid(6.0, 24)
        got = boltzmann_entropy(maxwellian_state(g))
        assert got == pytest.approx(-1.5 * (1 + np.log(2 * np.pi)), abs=1e-4)


class TestRelativeEntropy:
    def test_identical_states(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g, eps=0.1)
        assert relative_entropy(s, s) == 0.0

    def test_nonnegative_versus_matched_equilibrium(self):
        from bfdlab.runner import matched_equilibrium

        g = build_grid(5.0, 12)
        d = g.nodes
        vals = 0.5 * (2 * np.pi * 0.5) ** -1.5 * (
            np.exp(-((d - [0.5, 0, 0]) ** 2).sum(1))
            + np.exp(-((d + [0.5, 0, 0]) ** 2).sum(1)))
        eps = 0.1 * epsilon_sat(1.0, 0.6)
        state = DistributionState(g, vals, eps)
        ref, _ = matched_equilibrium(state)
        assert relative_entropy(state, ref) >= -1e-10

    def test_classical_limit_matches_kullback(self):
        from bfdlab.runner import discrete_moments

        g = build_grid(6.0, 16)
        d = g.nodes
        vals = 0.5 * (2 * np.pi * 0.5) ** -1.5 * (
            np.exp(-((d - [0.4, 0, 0]) ** 2).sum(1))
            + np.exp(-((d + [0.4, 0, 0]) ** 2).sum(1)))
        eps = 1e-5
        state = DistributionState(g, vals, eps)
        rho, u, theta = discrete_moments(state)
        ref = sample_equilibrium(solve_fd_params(rho, u, theta, eps), g)
        got = relative_entropy(state, ref)
        mref = sample_equilibrium(solve_fd_params(rho, u, theta, 0.0), g)
        mask = vals > 0
        kl = (vals[mask] * np.log(vals[mask] / mref.values[mask])).sum() * g.cell_weight
        assert got == pytest.approx(kl, abs=1e-4)

    def test_rejects_mismatched_parameters(self):
        g = build_grid(4.0, 8)
        with pytest.raises(ValueError):
            relative_entropy(maxwellian_state(g, eps=0.1), maxwellian_state(g, eps=0.2))


class TestOccupationRatio:
    @given(st.floats(0.0, 0.99), st.floats(0.0, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_increasing(self, x, y):
        eps = 1.0
        if x == y:
            return
        lo, hi = min(x, y), max(x, y)
        assert psi_occupation(lo, eps) < psi_occupation(hi, eps)

    def test_identity_at_classical_limit(self):
        xs = np.linspace(0, 5, 11)
        assert np.allclose(psi_occupation(xs, 0.0), xs)


class TestEntropyProduction:
    @pytest.fixture(scope="class")
    def setup(self):
        g = build_grid(4.0, 8)
        sq = build_sphere_quadrature(7)
        return g, sq

    def test_nonnegative_on_mixture(self, setup):
        g, sq = setup
        d = g.nodes
        vals = 0.5 * (2 * np.pi * 0.5) ** -1.5 * (
            np.exp(-((d - [0.5, 0, 0]) ** 2).sum(1))
            + np.exp(-((d + [0.5, 0, 0]) ** 2).sum(1)))
        eps = 0.1 * epsilon_sat(1.0, 0.58)
        val, scale = entropy_production(DistributionState(g, vals, eps), SPEC, sq)
        assert val >= -1e-12 * scale
        assert val > 0.0

    def test_small_on_equilibrium(self, setup):
        g, sq = setup
        e_sat = epsilon_sat(1.0, 0.8)
        p = solve_fd_params(1.0, [0, 0, 0], 0.8, 0.3 * e_sat)
        eq = sample_equilibrium(p, g)
        d_eq, _ = entropy_production(eq, SPEC, sq)
        d = g.nodes
        vals = 0.5 * (2 * np.pi * 0.35) ** -1.5 * (
            np.exp(-((d - [1.1, 0, 0]) ** 2).sum(1) / 0.7)
            + np.exp(-((d + [1.1, 0, 0]) ** 2).sum(1) / 0.7))
        mix = DistributionState(g, vals, p.epsilon)
        d_mix, _ = entropy_production(mix, SPEC, sq)
        assert d_eq < 0.35 * d_mix

    def test_classical_limit_supported(self, setup):
        g, sq = setup
        state = maxwellian_state(g, theta=0.5, eps=0.0)
        val, scale = entropy_production(state, SPEC, sq)
        assert val >= -1e-12 * scale

    def test_eta_defaults_to_kernel_exponent(self, setup):
        g, sq = setup
        state = maxwellian_state(g, theta=0.5, eps=0.0)
        v1, _ = entropy_production(state, SPEC, sq)
        v2, _ = entropy_production(state, SPEC, sq, eta=SPEC.gamma)
        assert v1 == v2


class TestCsiszarKullback:
    def test_vanishes_at_equilibrium(self):
        g = build_grid(5.0, 12)
        e_sat = epsilon_sat(1.0, 0.8)
        p = solve_fd_params(1.0, [0, 0, 0], 0.8, 0.2 * e_sat)
        eq = sample_equilibrium(p, g)
        lhs, mid, rhs = csiszar_kullback_gap(eq, p, moment_tol=0.05)
        assert lhs == pytest.approx(0.0, abs=1e-20)
        assert abs(mid) < 1e-12
        assert rhs == pytest.approx(0.0, abs=1e-18)

    def test_strict_order_for_perturbation(self):
        from bfdlab.runner import matched_equilibrium

        g = build_grid(5.0, 12)
        e_sat = epsilon_sat(1.0, 0.8)
        p = solve_fd_params(1.0, [0, 0, 0], 0.8, 0.2 * e_sat)
        eq = sample_equilibrium(p, g)
        bump = 1.0 + 0.01 * np.cos(g.nodes[:, 0] * np.pi / g.half_width)
        state = DistributionState(g, eq.values * bump, p.epsilon)
        ref, params = matched_equilibrium(state)
        lhs, mid, rhs = csiszar_kullback_gap(state, params)
        assert lhs < mid

    def test_rejects_moment_mismatch(self):
        g = build_grid(5.0, 12)
        e_sat = epsilon_sat(1.0, 0.8)
        p = solve_fd_params(1.0, [0, 0, 0], 0.8, 0.2 * e_sat)
        other = sample_equilibrium(
            solve_fd_params(1.3, [0, 0, 0], 0.8, 0.2 * e_sat), g)
        with pytest.raises(ValueError, match="moment mismatch"):
            csiszar_kullback_gap(other, p)


class TestLevelSets:
    def test_zero_level_returns_field(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g)
        assert np.array_equal(level_set_positive(s, 0.0), s.values)

    def test_high_level_empty(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g)
        assert np.all(level_set_positive(s, s.values.max()) == 0.0)

    @given(st.floats(0.0, 0.1), st.floats(0.0, 0.1))
    @settings(max_examples=30, deadline=None)
    def test_nesting(self, k1, k2):
        g = build_grid(4.0, 6)
        s = maxwellian_state(g)
        lo, hi = min(k1, k2), max(k1, k2)
        assert np.all(level_set_positive(s, hi) <= level_set_positive(s, lo))

    def test_rejects_negative_level(self):
        g = build_grid(4.0, 6)
        with pytest.raises(ValueError):
            level_set_positive(maxwellian_state(g), -0.1)


class TestLevelEnergy:
    def test_seminorm_zero_exponent_is_l2(self):
        g = build_grid(4.0, 8)
        rng = np.random.default_rng(3)
        vals = rng.uniform(size=g.size)
        semi = sobolev_seminorm_sq(vals, g, 0.0)
        l2 = (vals**2).sum() * g.cell_weight
        assert semi == pytest.approx(l2, rel=1e-8)

    def test_high_level_gives_zero(self):
        g = build_grid(4.0, 8)
        states = [maxwellian_state(g), maxwellian_state(g)]
        for i, s in enumerate(states):
            s.time = float(i)
        val = level_energy_functional([0.0, 1.0], states, 10.0, 0.0, 1.0, SPEC)
        assert val == 0.0

    def test_monotone_in_window(self):
        g = build_grid(4.0, 8)
        states = []
        for i in range(4):
            s = maxwellian_state(g, rho=1.0 / (1 + i))
            s.time = float(i)
            states.append(s)
        times = [s.time for s in states]
        e2 = level_energy_functional(times, states, 0.01, 0.0, 2.0, SPEC)
        e3 = level_energy_functional(times, states, 0.01, 0.0, 3.0, SPEC)
        assert e3 >= e2

    def test_empty_window_raises(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g)
        with pytest.raises(ValueError):
            level_energy_functional([0.0], [s], 0.0, 2.0, 3.0, SPEC)


class TestAuxiliaries:
    def test_nonsaturation_margin(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g, eps=2.0)
        assert nonsaturation_margin(s) == pytest.approx(1 - 2.0 * s.values.max())
        assert nonsaturation_margin(maxwellian_state(g)) == 1.0

    def test_coercivity_positive(self):
        g = build_grid(4.0, 8)
        s = maxwellian_state(g, theta=0.8, eps=1.0)
        assert coercivity_coefficient(s, 0.8) > 0.0

    def test_entropy_report_bundle(self):
        from bfdlab.functionals import entropy_report

        g = build_grid(4.0, 8)
        sq = build_sphere_quadrature(5)
        s = maxwellian_state(g, theta=0.6, eps=1.0)
        ref = maxwellian_state(g, theta=0.6, eps=1.0)
        rep = entropy_report(s, SPEC, sq, reference=ref)
        assert rep.h_rel == 0.0
        assert rep.kappa0 == pytest.approx(1 - s.values.max())
        assert rep.d_eta >= 0.0
        assert np.isfinite(rep.s_eps) and np.isfinite(rep.boltzmann_h)
