"""The verification layer itself: cheap checks pass, sabotage is caught."""
import numpy as np
import pytest

import bfdlab.collision
from bfdlab import verify
from bfdlab.config import RunConfig, GridConfig, KernelConfig, PhysicsConfig, InitialConfig, TimeConfig, DiagnosticsConfig
from bfdlab.runner import run_series


def test_cheap_checks_pass_quick():
    for check in (verify.check_scaling_identity, verify.check_equilibrium_solver,
                  verify.check_exponents):
        r = check("quick")
        assert r.passed, r.detail


def test_corrupted_projection_fails_loudly(monkeypatch):
    # fault injection: a projection that no longer removes the invariant
    # moments must trip the conservation check
    real = bfdlab.collision.conservation_correction

    def sabotaged(q, grid, weights=None):
        return real(q, grid, weights) + 1e-6

    monkeypatch.setattr(bfdlab.collision, "conservation_correction", sabotaged)
    r = verify.check_conservation("quick")
    assert not r.passed


def test_stationary_equilibrium_datum():
    # an equilibrium-family datum stays put up to the discrete annihilation
    # defect; its relative-entropy column stays at the small sampling offset
    # (which may be negative: the sampled reference is not the exact discrete
    # entropy maximizer at coarse resolution)
    cfg = RunConfig(
        grid=GridConfig(half_width=4.0, points_per_axis=8),
        kernel=KernelConfig(gamma=-0.5, nu=0.75, b0=1 / (8 * np.pi), sphere_order=5),
        physics=PhysicsConfig(epsilon_fraction=0.2),
        initial=InitialConfig("fermi_dirac", {"rho": 1.0, "u": [0, 0, 0], "theta": 0.6}),
        time=TimeConfig(t_end=0.4, outputs=4),
        diagnostics=DiagnosticsConfig(s_values=[4.0], track_production_every=0),
    )
    series = run_series(cfg)
    first, last = series.states[0], series.states[-1]
    drift = np.abs(last.values - first.values).max() / first.values.max()
    assert drift <= 0.01
    h_rel = series.output_array("h_rel")
    assert np.abs(h_rel).max() < 1e-2
    assert np.abs(h_rel - h_rel[0]).max() < 1e-3
