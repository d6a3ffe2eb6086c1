import numpy as np
import pytest

from bfdlab.collision import DistributionState, collision_invariants
from bfdlab.equilibria import epsilon_sat, sample_equilibrium, solve_fd_params
from bfdlab.grids import build_grid, build_sphere_quadrature
from bfdlab.integrator import (
    StepControl,
    corrected_collision,
    initial_dt,
    integrate,
    load_checkpoint,
    picard_apply,
    picard_solve,
    save_checkpoint,
    step,
)
from bfdlab.kernel import CollisionKernelSpec

SPEC = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))


@pytest.fixture(scope="module")
def sphere():
    return build_sphere_quadrature(7)


def mixture_state(grid, eps_frac=0.2):
    d = grid.nodes
    vals = 0.5 * (2 * np.pi * 0.5) ** -1.5 * (
        np.exp(-((d - [0.5, 0, 0]) ** 2).sum(1))
        + np.exp(-((d + [0.5, 0, 0]) ** 2).sum(1)))
    eps = eps_frac * epsilon_sat(1.0, 0.5 + 0.25 / 3)
    return DistributionState(grid, vals, eps)


class TestStep:
    def test_zero_state_fixed(self, sphere):
        g = build_grid(4.0, 6)
        state = DistributionState(g, np.zeros(g.size), 0.5)
        new, info = step(state, SPEC, sphere, StepControl(dt=0.1))
        assert np.array_equal(new.values, state.values)
        assert new.time == pytest.approx(0.1)

    def test_conservation_per_step(self, sphere):
        g = build_grid(4.0, 8)
        state = mixture_state(g)
        new, _ = step(state, SPEC, sphere, StepControl(dt=0.05))
        psi = collision_invariants(g)
        w = g.cell_weight
        pre = psi @ state.values * w
        post = psi @ new.values * w
        scale = np.abs(psi) @ state.values * w
        assert np.all(np.abs(post - pre) <= 1e-11 * scale)

    def test_near_stationary_on_equilibrium(self, sphere):
        g = build_grid(4.0, 10)
        e_sat = epsilon_sat(1.0, 0.6)
        p = solve_fd_params(1.0, [0, 0, 0], 0.6, 0.3 * e_sat)
        eq = sample_equilibrium(p, g)
        q = corrected_collision(eq, SPEC, sphere)
        dt = 0.05
        new, _ = step(eq, SPEC, sphere, StepControl(dt=dt))
        drift = np.abs(new.values - eq.values).max()
        # one step cannot move the state by more than the residual flux times dt
        assert drift <= 1.05 * dt * np.abs(q.values).max()
        assert drift <= 1e-2 * eq.values.max()

    def test_bound_failure_is_loud(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        ctl = StepControl(dt=50.0, dt_min=25.0, max_halvings=1)
        with pytest.raises(RuntimeError, match="positivity/Pauli"):
            step(state, SPEC, sphere, ctl)

    def test_states_stay_admissible(self, sphere):
        g = build_grid(4.0, 8)
        state = mixture_state(g, eps_frac=0.35)
        ctl = StepControl(dt=0.0)
        for _ in range(5):
            state, _ = step(state, SPEC, sphere, ctl)
            assert state.values.min() >= 0.0
            assert state.values.max() <= state.pauli_ceiling


class TestIntegrate:
    def test_zero_horizon_records_initial(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        series = integrate(state, SPEC, sphere, 0.0)
        assert len(series.outputs) == 1
        assert series.outputs[0].t == 0.0
        assert series.outputs[0].mass == pytest.approx(
            state.values.sum() * g.cell_weight)

    def test_second_order_in_dt(self, sphere):
        g = build_grid(3.5, 6)
        state = mixture_state(g)

        def final(dt):
            series = integrate(
                state.copy_with(), SPEC, sphere, 0.4,
                output_times=[0.0, 0.4], ctl=StepControl(dt=dt),
                moment_exponents=(0.0,), store_states=True,
            )
            return series.states[-1].values

        ref = final(0.025)
        err1 = np.abs(final(0.2) - ref).max()
        err2 = np.abs(final(0.1) - ref).max()
        assert err1 / err2 >= 3.0

    def test_entropy_monotone_and_kappa_recorded(self, sphere):
        g = build_grid(4.0, 8)
        state = mixture_state(g)
        from bfdlab.runner import matched_equilibrium

        ref, _ = matched_equilibrium(state)
        series = integrate(state, SPEC, sphere, 0.5, ctl=StepControl(dt=0.05),
                           reference=ref, output_times=[0.0, 0.25, 0.5])
        ent = series.step_array("entropy")
        assert np.all(np.diff(ent) >= -1e-10 * np.abs(ent[:-1]))
        assert series.h_rel_violations == []
        kappa = series.output_array("kappa0")
        assert np.all(kappa > 0.0)
        assert np.all(kappa <= 1.0)


class TestPicard:
    def test_zero_interval(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        sol = picard_solve(state, 0.0, SPEC, sphere, iterations=3)
        assert sol["converged"]
        assert sol["diffs"][0] == 0.0

    def test_map_fixes_initial_time(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        times = np.linspace(0.0, 0.1, 5)
        traj = [state.values.copy() for _ in times]
        image = picard_apply(traj, times, state, SPEC, sphere)
        assert np.array_equal(image[0], state.values)

    def test_constant_trajectory_image_is_euler(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        delta = 0.08
        times = np.linspace(0.0, delta, 5)
        traj = [state.values.copy() for _ in times]
        image = picard_apply(traj, times, state, SPEC, sphere)
        q = corrected_collision(state, SPEC, sphere).values
        assert np.allclose(image[-1], state.values + delta * q, rtol=0, atol=1e-15)

    def test_truncation_noop_for_admissible(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        assert np.all(state.values <= state.pauli_ceiling)
        times = np.array([0.0, 0.05])
        traj = [state.values.copy(), state.values.copy()]
        image_a = picard_apply(traj, times, state, SPEC, sphere)
        clipped = DistributionState(
            g, np.minimum(np.abs(state.values), state.pauli_ceiling), state.epsilon)
        traj_b = [clipped.values.copy(), clipped.values.copy()]
        image_b = picard_apply(traj_b, times, clipped, SPEC, sphere)
        assert np.array_equal(image_a[-1], image_b[-1])

    def test_contraction_and_divergence_report(self, sphere):
        g = build_grid(4.0, 6)
        state = mixture_state(g)
        sol = picard_solve(state, 0.05, SPEC, sphere, iterations=12)
        assert all(r < 1.0 for r in sol["ratios"])
        with pytest.raises(RuntimeError, match="too large"):
            picard_solve(state, 80.0, SPEC, sphere, iterations=12)


class TestScalePair:
    def test_trajectories_related_by_exact_scale_map(self, sphere):
        # rescaling (f, kernel, eps) -> (eps f, kernel/eps, 1) commutes with
        # the integrator when both runs take identical steps
        from dataclasses import replace

        g = build_grid(4.0, 6)
        state = mixture_state(g, eps_frac=0.25)
        eps = state.epsilon
        scaled = DistributionState(g, eps * state.values, 1.0)
        spec_scaled = replace(SPEC, b0=SPEC.b0 / eps,
                              power_amplitude=SPEC.power_amplitude / eps)
        ctl = StepControl(dt=0.05)
        out_t = [0.0, 0.1, 0.2]
        a = integrate(state, SPEC, sphere, 0.2, output_times=out_t, ctl=ctl,
                      moment_exponents=(0.0,), store_states=True)
        b = integrate(scaled, spec_scaled, sphere, 0.2, output_times=out_t,
                      ctl=ctl, moment_exponents=(0.0,), store_states=True)
        for sa, sb in zip(a.states, b.states):
            scale = max(sb.values.max(), 1e-300)
            assert np.abs(sb.values - eps * sa.values).max() <= 1e-10 * scale


class TestCheckpoint:
    def test_lossless_roundtrip(self, tmp_path):
        g = build_grid(4.0, 6)
        rng = np.random.default_rng(8)
        state = DistributionState(g, rng.uniform(size=g.size), 0.7, time=1.234567890123)
        path = tmp_path / "state.json"
        save_checkpoint(state, path)
        back = load_checkpoint(path)
        assert np.array_equal(back.values, state.values)
        assert back.epsilon == state.epsilon
        assert back.time == state.time
        assert back.grid.points_per_axis == 6
        assert back.grid.half_width == 4.0


class TestInitialDt:
    def test_positive_and_stable(self, sphere):
        g = build_grid(4.0, 8)
        state = mixture_state(g)
        dt = initial_dt(state, SPEC)
        assert dt > 0.0
        new, info = step(state, SPEC, sphere, StepControl(dt=dt))
        assert info["halvings"] == 0
