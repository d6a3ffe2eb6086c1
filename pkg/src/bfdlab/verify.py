"""Acceptance suite: every shipped claim as an executable check.

Each check returns a CheckResult and can run in two profiles: "full" uses
the problem sizes the claims are stated at, "quick" shrinks the grids for a
fast smoke pass.  The pytest acceptance module and the CLI `verify`
subcommand both drive these functions, so there is a single source of truth
for what the package promises.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .collision import (
    DistributionState,
    cancellation_oracle,
    collision_operator,
    scaling_identity_check,
)
from .config import (
    DiagnosticsConfig,
    GridConfig,
    InitialConfig,
    KernelConfig,
    PhysicsConfig,
    RunConfig,
    TimeConfig,
    maxwellian_values,
)
from .diagnostics import (
    expected_decay_exponent,
    moment_drift_rate,
    moment_growth_envelope,
    moment_inequality_monitor,
)
from .equilibria import epsilon_sat, sample_equilibrium, solve_fd_params
from .functionals import bracket_weight, csiszar_kullback_gap
from .grids import build_grid, build_sphere_quadrature
from .integrator import StepControl, integrate, picard_solve
from .kernel import CollisionKernelSpec
from .runner import run_series, run_sweep


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    elapsed: float = 0.0
    data: dict = field(default_factory=dict)


_CACHE = {}


def _timed(name):
    def wrap(fn):
        def inner(profile="full"):
            t0 = time.time()
            result = fn(profile)
            result.elapsed = time.time() - t0
            result.name = name
            return result

        inner.check_name = name
        return inner

    return wrap


def _mixture_state(grid, eps):
    v = maxwellian_values(grid, 0.5, [-0.512, 0.0, 0.0], 0.4)
    v = v + maxwellian_values(grid, 0.5, [0.512, 0.0, 0.0], 0.4)
    return DistributionState(grid, v, eps)


def _asymmetric_state(grid, eps):
    # broad components keep the lattice in the resolved regime at N = 12
    v = maxwellian_values(grid, 0.6, [0.45, 0.15, -0.1], 1.0)
    v = v + maxwellian_values(grid, 0.4, [-0.5, -0.2, 0.12], 0.75)
    return DistributionState(grid, v, eps)


@_timed("scaling_identity")
def check_scaling_identity(profile="full") -> CheckResult:
    """Quantum-parameter rescaling must leave the discrete operator invariant."""
    spec = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))
    grid = build_grid(5.0, 8)
    sphere = build_sphere_quadrature(7)
    rng = np.random.default_rng(2024)
    values = rng.uniform(0.0, 0.9, grid.size)
    worst = 0.0
    for eps in (0.25, 1.0):
        state = DistributionState(grid, values, eps)
        worst = max(worst, scaling_identity_check(state, spec, sphere))
    return CheckResult("", worst <= 1e-12, f"max relative deviation {worst:.3e} (<= 1e-12)")


@_timed("conservation")
def check_conservation(profile="full") -> CheckResult:
    """Projection zeroes the invariant moments; raw defects shrink with h."""
    spec = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))
    sphere = build_sphere_quadrature(7)
    coarse, fine = (12, 24) if profile == "full" else (8, 16)
    raw = {}
    corrected_worst = 0.0
    for n in (coarse, fine):
        grid = build_grid(4.5, n)
        state = _asymmetric_state(grid, 0.4)
        res = collision_operator(state, spec, sphere, correct=True)
        from .collision import collision_invariants

        psi = collision_invariants(grid)
        post = np.abs(psi @ res.values * grid.cell_weight) / res.defect_scales
        corrected_worst = max(corrected_worst, float(post.max()))
        raw[n] = res.defects
    ratio = float(np.linalg.norm(raw[coarse]) / np.linalg.norm(raw[fine]))
    need = 3.5 if profile == "full" else 3.0
    ok = corrected_worst <= 1e-12 and ratio >= need
    return CheckResult(
        "", ok,
        f"corrected moments {corrected_worst:.2e} (<= 1e-12); raw defect ratio "
        f"N={coarse}->N={fine}: {ratio:.2f} (>= {need})",
    )


@_timed("equilibrium_annihilation")
def check_annihilation(profile="full") -> CheckResult:
    """The collision operator vanishes on equilibria under refinement."""
    spec = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))
    sphere = build_sphere_quadrature(7)
    coarse, fine = (12, 24) if profile == "full" else (8, 16)
    need = 3.0 if profile == "full" else 2.0
    e_sat = epsilon_sat(1.0, 1.0)
    details = []
    ok = True
    for eps in (0.0, 0.3 * e_sat):
        l1 = {}
        for n in (coarse, fine):
            grid = build_grid(5.0, n)
            params = solve_fd_params(1.0, [0.0, 0.0, 0.0], 1.0, eps)
            state = sample_equilibrium(params, grid)
            res = collision_operator(state, spec, sphere, correct=False)
            l1[n] = float(np.abs(res.values).sum() * grid.cell_weight)
        ratio = l1[coarse] / l1[fine]
        ok = ok and ratio >= need
        details.append(f"eps={eps:.3g}: ratio {ratio:.2f}")
    return CheckResult("", ok, "; ".join(details) + f" (>= {need})")


@_timed("equilibrium_solver")
def check_equilibrium_solver(profile="full") -> CheckResult:
    """Classical limit, residuals and the admissibility boundary."""
    p = solve_fd_params(1.0, [0.0, 0.0, 0.0], 1.0, 1e-8)
    a_err = abs(p.a_eps - (2 * np.pi) ** -1.5)
    b_err = abs(p.b_eps - 0.5)
    res_ok = max(abs(p.mass_residual), abs(p.energy_residual)) <= 1e-10
    e_sat = epsilon_sat(1.0, 0.2)
    try:
        solve_fd_params(1.0, [0.0, 0.0, 0.0], 0.2, 1.01 * e_sat)
        rejected = False
    except ValueError:
        rejected = True
    p9 = solve_fd_params(1.0, [0.0, 0.0, 0.0], 0.2, 0.9 * e_sat)
    accepted = max(abs(p9.mass_residual), abs(p9.energy_residual)) <= 1e-10
    ok = a_err <= 1e-6 and b_err <= 1e-6 and res_ok and rejected and accepted
    return CheckResult(
        "", ok,
        f"|a - closed form| {a_err:.2e}, |b - 1/2| {b_err:.2e}, residuals ok "
        f"{res_ok}, boundary reject/accept {rejected}/{accepted}",
    )


@_timed("cancellation_oracle")
def check_cancellation(profile="full") -> CheckResult:
    """Direct 5D and reduced 1D sides of the cancellation identity agree."""
    n = 24 if profile == "full" else 12
    grid = build_grid(6.0, n)
    spec = CollisionKernelSpec(gamma=-1.0, nu=0.75, b0=1.0 / (4 * np.pi))
    sphere = build_sphere_quadrature(15)
    values = maxwellian_values(grid, 1.0, [0.0, 0.0, 0.0], 1.0)
    state = DistributionState(grid, values, 0.0)
    tol = 0.01 if profile == "full" else 0.15
    gaps = []
    for variant in ("gain", "star"):
        direct = cancellation_oracle(state, spec, sphere, 1.0, "direct", variant)
        reduced = cancellation_oracle(state, spec, sphere, 1.0, "reduced", variant)
        gaps.append(abs(direct - reduced) / abs(reduced))
    ok = all(g <= tol for g in gaps)
    return CheckResult(
        "", ok,
        f"relative gaps gain={gaps[0]:.4f}, star={gaps[1]:.4f} (<= {tol})",
    )


def _reference_config(profile) -> RunConfig:
    n = 16 if profile == "full" else 10
    t_end = 5.0 if profile == "full" else 1.5
    outputs = 25 if profile == "full" else 8
    return RunConfig(
        grid=GridConfig(half_width=4.0, points_per_axis=n),
        kernel=KernelConfig(gamma=-0.5, nu=0.75, b0=1.0 / (8 * np.pi), sphere_order=7),
        physics=PhysicsConfig(epsilon_fraction=0.2),
        initial=InitialConfig("two_maxwellian_mixture", {
            "rho": [0.5, 0.5],
            "u": [[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0]],
            "theta": [0.5, 0.5],
        }),
        time=TimeConfig(t_end=t_end, outputs=outputs),
        diagnostics=DiagnosticsConfig(s_values=[4.0], track_production_every=1),
    )


def reference_run(profile="full"):
    key = ("reference_run", profile)
    if key not in _CACHE:
        cfg = _reference_config(profile)
        _CACHE[key] = (cfg, run_series(cfg))
    return _CACHE[key]


@_timed("h_theorem")
def check_h_theorem(profile="full") -> CheckResult:
    """Entropy grows at every step and the dissipation quadrature is nonnegative."""
    cfg, series = reference_run(profile)
    entropy = series.step_array("entropy")
    scale = np.maximum(np.abs(entropy[:-1]), np.abs(entropy[1:]))
    monotone = bool(np.all(np.diff(entropy) >= -1e-10 * np.maximum(scale, 1e-300)))
    d = series.output_array("d_gamma")
    d_scale = series.output_array("d_gamma_scale")
    nonneg = bool(np.all(d >= -1e-12 * np.maximum(d_scale, 1e-300)))
    return CheckResult(
        "", monotone and nonneg,
        f"entropy monotone per step {monotone}; "
        f"dissipation quadrature nonnegative {nonneg}",
    )


@_timed("entropy_identity")
def check_entropy_identity(profile="full") -> CheckResult:
    """Entropy gain balances the time-integrated dissipation quadrature.

    The 1e-3 relative target is not reachable on a 16^3 lattice: the
    dissipation integrand (x - y) log(x/y) is pointwise nonnegative, so the
    trilinear interpolation error of the post-collision samples rectifies
    into a positive bias of order (relative interpolation error)^2 times the
    gross collision rate, which persists as the state equilibrates instead
    of decaying with the true dissipation.  The check reports the measured
    residual against both the strict target and the resolution-aware budget
    10 h^2 + 10 dt^2.
    """
    cfg, series = reference_run(profile)
    entropy = series.step_array("entropy")
    delta_s = float(entropy[-1] - entropy[0])
    prod = float(series.outputs[-1].prod_integral)
    residual = abs(delta_s - prod) / max(abs(delta_s), 1e-300)
    tol = 1e-3
    grid = cfg.build_grid()
    dts = series.step_array("dt")
    budget = 10.0 * grid.spacing**2 + 10.0 * float(np.max(dts)) ** 2
    ok = residual <= tol
    return CheckResult(
        "", ok,
        f"identity residual {residual:.2e} (strict target {tol:g}; "
        f"resolution-aware budget {budget:.2g} "
        f"{'met' if residual <= budget else 'missed'})",
    )


@_timed("relaxation")
def check_relaxation(profile="full") -> CheckResult:
    """Relative entropy decreases strictly; distance inequality; positive rate."""
    cfg, series = reference_run(profile)
    h_rel = series.output_array("h_rel")
    strict = bool(np.all(np.diff(h_rel) < 0.0))
    ck_ok = True
    worst_gap = -np.inf
    for state in series.states:
        lhs, mid, _ = csiszar_kullback_gap(state, series.reference_params)
        gap = lhs - mid
        worst_gap = max(worst_gap, gap)
        ck_ok = ck_ok and gap <= 1e-10 * max(abs(mid), 1.0)
    from .diagnostics import decay_fit

    window = (0.25 * cfg.time.t_end, cfg.time.t_end)
    fit = decay_fit(series, "H_rel", window)
    ok = strict and ck_ok and fit.exponent > 0.0
    return CheckResult(
        "", ok,
        f"strict decrease {strict}; distance bound margin {worst_gap:.2e}; "
        f"fitted exponent {fit.exponent:.3f} (> 0), residual {fit.residual:.3f}",
    )


@_timed("moment_monitor")
def check_moment_monitor(profile="full") -> CheckResult:
    """Explicit-constant moment inequality holds along the reference run."""
    cfg, series = reference_run(profile)
    spec = cfg.kernel_spec()
    mon = moment_inequality_monitor(series, 4.0, spec, cfg.diagnostics.c1_prime)
    min_margin = float(mon["margin"].min())
    unit = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0)
    c4 = moment_drift_rate(unit, 4.0)
    c4_err = abs(c4 - np.pi / 48.0)
    ok = min_margin >= 0.0 and c4_err <= 1e-12
    return CheckResult(
        "", ok,
        f"min margin {min_margin:.3e} (>= 0); c'_4 error {c4_err:.2e} (<= 1e-12)",
    )


def _sweep_config(profile) -> RunConfig:
    n = 12 if profile == "full" else 8
    t_end = 6.0 if profile == "full" else 1.0
    return RunConfig(
        grid=GridConfig(half_width=4.5, points_per_axis=n),
        kernel=KernelConfig(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi), sphere_order=7),
        physics=PhysicsConfig(epsilon_fraction=0.2),
        initial=InitialConfig("fermi_dirac", {
            "rho": 1.0, "u": [0.0, 0.0, 0.0], "theta": 0.5, "shape_fraction": 0.6,
        }),
        time=TimeConfig(t_end=t_end, outputs=16 if profile == "full" else 5),
        diagnostics=DiagnosticsConfig(s_values=[4.0], track_production_every=0),
    )


def sweep_run(profile="full"):
    key = ("sweep", profile)
    if key not in _CACHE:
        import tempfile

        cfg = _sweep_config(profile)
        e_sat = epsilon_sat(1.0, 0.5)
        fractions = (0.0, 0.1, 0.3, 0.5)
        with tempfile.TemporaryDirectory() as tmp:
            report = run_sweep(cfg, [f * e_sat for f in fractions], tmp)
        _CACHE[key] = (cfg, report)
    return _CACHE[key]


@_timed("nonsaturation_sweep")
def check_sweep(profile="full") -> CheckResult:
    """Sweep of the quantum parameter: Pauli bound, margins, uniform sup norm.

    Growing toward the equilibrium peak is physical (the shared datum is
    admissible for the largest member, hence flatter than any member's
    equilibrium), so absence of blow-up is checked as decaying growth: the
    sup-norm gain over the final third of the horizon must fall below half
    the first-third gain (or 2% outright).
    """
    cfg, report = sweep_run(profile)
    kappa_ok = all(r["kappa0"] > 0.0 for r in report["rows"] if r["epsilon"] > 0.0)
    pauli_ok = all(r["pauli_ok"] for r in report["rows"])
    bounded = np.isfinite(report["sup_over_sweep"])
    return CheckResult(
        "", kappa_ok and pauli_ok and bounded and report["plateau_ok"],
        f"kappa0 > 0: {kappa_ok}; Pauli: {pauli_ok}; sup over sweep "
        f"{report['sup_over_sweep']:.4g} finite: {bounded}; plateau: {report['plateau_ok']}",
    )


@_timed("picard_vs_rk")
def check_picard(profile="full") -> CheckResult:
    """Fixed-point trajectory matches the RK path at second order in delta."""
    n = 8 if profile == "full" else 8
    grid = build_grid(4.0, n)
    spec = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1.0 / (4 * np.pi))
    sphere = build_sphere_quadrature(7)
    e_sat = epsilon_sat(1.0, 0.4874)
    state = _mixture_state(grid, 0.2 * e_sat)
    wgt = bracket_weight(grid, 2.0) * grid.cell_weight

    def mismatch(delta):
        sol = picard_solve(state, delta, spec, sphere, iterations=30, tol=1e-14)
        steps = 8
        ctl = StepControl(dt=delta / steps, dt_min=delta / steps / 2, tol_bound=1e-12)
        series = integrate(
            state.copy_with(), spec, sphere, delta,
            output_times=[0.0, delta], ctl=ctl, store_states=True,
            moment_exponents=(0.0,), track_production_every=0,
        )
        rk_final = series.states[-1].values
        err = float(np.abs(sol["trajectory"][-1] - rk_final) @ wgt)
        ratios = sol["ratios"]
        return err, (ratios[len(ratios) // 2] if ratios else np.nan)

    err1, ratio1 = mismatch(0.05)
    err2, ratio2 = mismatch(0.025)
    order_ratio = err1 / max(err2, 1e-300)
    contraction_ok = ratio1 < 1.0 and ratio2 < 1.0
    # halving delta should roughly halve the contraction factor
    prop = ratio2 / max(ratio1, 1e-300)
    prop_ok = 0.2 <= prop <= 0.95
    ok = order_ratio >= 3.5 and contraction_ok and prop_ok
    return CheckResult(
        "", ok,
        f"mismatch ratio delta->delta/2: {order_ratio:.2f} (>= 3.5); contraction "
        f"ratios {ratio1:.3f}, {ratio2:.3f} (< 1); proportionality {prop:.2f}",
    )


@_timed("exponent_formulas")
def check_exponents(profile="full") -> CheckResult:
    """Closed-form reporting exponents match hand-plugged values."""
    e1 = abs(expected_decay_exponent(30.0, -0.5) - 1.9)
    _, short = moment_growth_envelope(30.0, 0.75)
    e2 = abs(short - (-2.0))
    e3 = abs(expected_decay_exponent(28.0, -1.0) - 5.0 / 6.0)
    ok = e1 <= 1e-14 and e2 <= 1e-14 and e3 <= 1e-14
    return CheckResult("", ok, f"errors {e1:.2e}, {e2:.2e}, {e3:.2e} (<= 1e-14)")


ALL_CHECKS = [
    check_scaling_identity,
    check_conservation,
    check_annihilation,
    check_equilibrium_solver,
    check_cancellation,
    check_h_theorem,
    check_entropy_identity,
    check_relaxation,
    check_moment_monitor,
    check_sweep,
    check_picard,
    check_exponents,
]


def run_verification(quick=False, only=None):
    profile = "quick" if quick else "full"
    names = None
    if only:
        names = {s.strip() for s in only.split(",")}
    results = []
    for check in ALL_CHECKS:
        if names and check.check_name not in names:
            continue
        results.append(check(profile))
    return results
