"""Run orchestration: reproducible artifacts from a validated config.

A run writes timeseries.csv (one row per output time), a schema describing
every column, and summary.json with fits, inequality margins and invariant
checks.  Given the same config and seed the artifacts are byte-identical;
plots are optional and always rendered from the CSV, never from memory.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import replace

import numpy as np

from .collision import DistributionState
from .config import RunConfig, build_initial_state, datum_moments, serialize_config
from .diagnostics import (
    decay_fit,
    expected_decay_exponent,
    moment_growth_envelope,
    moment_inequality_monitor,
    nonsaturation_kappa,
)
from .equilibria import epsilon_sat, sample_equilibrium, solve_fd_params
from .functionals import (
    bracket_weight,
    coercivity_coefficient,
    csiszar_kullback_gap,
    level_energy_functional,
)
from .integrator import StepControl, TimeSeries, integrate


def discrete_moments(state: DistributionState):
    """(rho, u, theta) carried by the lattice sample."""
    grid = state.grid
    w = grid.cell_weight
    rho = float(state.values.sum() * w)
    u = (state.values[None, :] * grid.nodes.T).sum(axis=1) * w / rho
    d = grid.nodes - u[None, :]
    theta = float(
        (state.values * np.einsum("ij,ij->i", d, d)).sum() * w / (3.0 * rho)
    )
    return rho, u, theta


def matched_equilibrium(state: DistributionState):
    """Equilibrium reference sharing the state's discrete invariant moments."""
    rho, u, theta = discrete_moments(state)
    params = solve_fd_params(rho, u, theta, state.epsilon)
    return sample_equilibrium(params, state.grid), params


def moment_exponent_set(cfg: RunConfig):
    gamma = cfg.kernel.gamma
    exps = {0.0, 2.0}
    for s in cfg.diagnostics.s_values:
        exps.add(float(s))
        exps.add(float(s) + gamma)
    return sorted(exps)


def run_series(cfg: RunConfig, state: DistributionState = None,
               epsilon: float = None) -> TimeSeries:
    """Integrate the configured problem and return the recorded trajectory."""
    grid = cfg.build_grid()
    spec = cfg.kernel_spec()
    sphere = cfg.build_sphere()
    if state is None:
        state = build_initial_state(cfg, grid, epsilon)
    reference, params = matched_equilibrium(state)
    t = cfg.time
    ctl = StepControl(t.dt, t.dt_min, t.dt_max, t.tol_bound, t.max_halvings)
    output_times = np.linspace(0.0, t.t_end, t.outputs + 1)
    series = integrate(
        state, spec, sphere, t.t_end,
        output_times=output_times,
        ctl=ctl,
        reference=reference,
        moment_exponents=moment_exponent_set(cfg),
        eta_values=[float(e) for e in cfg.diagnostics.eta_values],
        track_production_every=cfg.diagnostics.track_production_every,
        store_states=True,
    )
    series.reference = reference
    series.reference_params = params
    wgt = bracket_weight(grid, 0.0) * grid.cell_weight
    series.l1_dist = [
        float(np.abs(st.values - reference.values) @ wgt) for st in series.states
    ]
    return series


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))  # shortest representation that round-trips
    return str(x)


def csv_columns(cfg: RunConfig):
    cols = ["t", "mass", "momentum_x", "momentum_y", "momentum_z", "energy"]
    for s in moment_exponent_set(cfg):
        cols.append(f"m_{s:g}")
    cols.append("M_0")
    cols += ["S_eps", "H", "H_rel", "D_gamma"]
    for eta in cfg.diagnostics.eta_values:
        cols.append(f"D_eta_{float(eta):g}")
    cols += ["max_f", "kappa0", "dt"]
    return cols


def write_timeseries(cfg: RunConfig, series: TimeSeries, path):
    cols = csv_columns(cfg)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for rec in series.outputs:
            row = [rec.t, rec.mass, rec.momentum[0], rec.momentum[1],
                   rec.momentum[2], rec.energy]
            for s in moment_exponent_set(cfg):
                row.append(rec.moments[s][0])
            row.append(rec.moments[0.0][1])
            row += [rec.entropy, rec.boltzmann_h, rec.h_rel, rec.d_gamma]
            for eta in cfg.diagnostics.eta_values:
                row.append(rec.d_eta[float(eta)])
            row += [rec.max_f, rec.kappa0, rec.dt]
            writer.writerow([_fmt(x) for x in row])


def write_schema(cfg: RunConfig, path):
    descriptions = {
        "t": "output time",
        "mass": "discrete mass integral of f",
        "momentum_x": "discrete x-momentum integral",
        "momentum_y": "discrete y-momentum integral",
        "momentum_z": "discrete z-momentum integral",
        "energy": "discrete integral of f |v|^2",
        "M_0": "integral of f^2 (squared L2 norm)",
        "S_eps": "entropy functional (quantum for eps > 0, -H for eps = 0)",
        "H": "classical entropy integral f log f",
        "H_rel": "relative entropy versus the matched equilibrium",
        "D_gamma": "entropy production with relative-speed exponent gamma",
        "max_f": "sup norm of f",
        "kappa0": "non-saturation margin 1 - eps * max f",
        "dt": "time step accepted at this output",
    }
    cols = []
    for name in csv_columns(cfg):
        if name.startswith("m_"):
            desc = f"integral of f <v>^{name[2:]}"
        elif name.startswith("D_eta_"):
            desc = f"entropy production with relative-speed exponent {name[6:]}"
        else:
            desc = descriptions[name]
        cols.append({"name": name, "description": desc})
    with open(path, "w") as fh:
        json.dump({"columns": cols}, fh, indent=2, sort_keys=True)


def summarize(cfg: RunConfig, series: TimeSeries) -> dict:
    t_out = series.output_array("t")
    entropy = series.output_array("entropy")
    d_gamma = series.output_array("d_gamma")
    d_scale = series.output_array("d_gamma_scale")
    spec = cfg.kernel_spec()

    delta_s = float(entropy[-1] - entropy[0])
    if cfg.diagnostics.track_production_every > 0:
        prod_int = float(series.outputs[-1].prod_integral)
    else:
        prod_int = float(np.trapezoid(d_gamma, t_out))
    identity_residual = abs(delta_s - prod_int) / max(abs(delta_s), 1e-300)

    h_rel_steps = series.step_array("h_rel")
    entropy_steps = series.step_array("entropy")
    ds = np.diff(entropy_steps)
    scale_steps = np.maximum(np.abs(entropy_steps[:-1]), np.abs(entropy_steps[1:]))
    entropy_monotone = bool(np.all(ds >= -1e-10 * np.maximum(scale_steps, 1e-300)))

    mass = series.step_array("mass")
    energy = series.step_array("energy")
    momentum = np.array([r.momentum for r in series.steps])
    mom_scale = max(float(np.abs(momentum).max()), float(energy[0]), 1e-300)
    drift = {
        "mass": float(np.abs(mass - mass[0]).max() / max(abs(mass[0]), 1e-300)),
        "energy": float(np.abs(energy - energy[0]).max() / max(abs(energy[0]), 1e-300)),
        "momentum": float(np.abs(momentum - momentum[0]).max() / mom_scale),
    }

    import warnings as _warnings
    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        p_ref = expected_decay_exponent(cfg.diagnostics.s_decay, spec.gamma)
        _, short_expo = moment_growth_envelope(cfg.diagnostics.s_decay, spec.nu)

    fit_window = cfg.diagnostics.fit_window or [0.25 * cfg.time.t_end, cfg.time.t_end]
    fits = {}
    for quantity in ("H_rel", "L1_dist"):
        try:
            fit = decay_fit(series, quantity, fit_window, reference_exponent=p_ref)
            fits[quantity] = {
                "amplitude": fit.amplitude,
                "exponent": fit.exponent,
                "residual": fit.residual,
                "window": list(fit.window),
                "reference_exponent": fit.reference_exponent,
            }
        except (ValueError, np.linalg.LinAlgError) as exc:
            fits[quantity] = {"error": str(exc)}

    monitors = {}
    for s in cfg.diagnostics.s_values:
        s = float(s)
        if s < max(2.0 - spec.gamma, 4.0):
            monitors[f"s={s:g}"] = {"skipped": "below the validity order"}
            continue
        mon = moment_inequality_monitor(series, s, spec, cfg.diagnostics.c1_prime)
        monitors[f"s={s:g}"] = {
            "min_margin": float(mon["margin"].min()),
            "drift_rate": mon["drift_rate"],
            "growth_constant": mon["growth_constant"],
        }

    level_energies = {}
    if series.states and cfg.diagnostics.level_sets:
        times = [st.time for st in series.states]
        for level in cfg.diagnostics.level_sets:
            level_energies[f"K={float(level):g}"] = level_energy_functional(
                times, series.states, float(level), fit_window[0], fit_window[1],
                spec, cfg.diagnostics.c0_level_energy,
            )

    kappa_tail = nonsaturation_kappa(series, min(1.0, 0.5 * cfg.time.t_end))
    final = series.states[-1] if series.states else None
    tail_mass = None
    if final is not None:
        # mass fraction in the outermost cell shell: the truncation diagnostic
        # for the compact-support sampling convention
        fgrid = final.grid
        shell = np.abs(fgrid.nodes).max(axis=1) >= fgrid.half_width - 1.5 * fgrid.spacing
        total = float(final.values.sum())
        tail_mass = float(final.values[shell].sum() / max(total, 1e-300))
    ck = None
    if final is not None and final.epsilon > 0.0:
        try:
            lhs, mid, rhs = csiszar_kullback_gap(final, series.reference_params)
            ck = {"lhs": lhs, "mid": mid, "rhs": rhs, "lower_holds": bool(lhs <= mid + 1e-10 * max(mid, 1.0))}
        except ValueError as exc:
            ck = {"error": str(exc)}
    coercivity = None
    if final is not None:
        _, _, theta_d = discrete_moments(final)
        coercivity = coercivity_coefficient(final, theta_d)

    rho, _, theta = datum_moments(cfg.initial)
    summary = {
        "epsilon": series.epsilon,
        "epsilon_sat": epsilon_sat(rho, theta) if np.isfinite(theta) else None,
        "entropy_identity": {
            "delta_s": delta_s,
            "production_integral": prod_int,
            "relative_residual": identity_residual,
        },
        "entropy_monotone_per_step": entropy_monotone,
        "h_rel_violations": len(getattr(series, "h_rel_violations", [])),
        "production_nonnegative": bool(np.all(d_gamma >= -1e-12 * np.maximum(d_scale, 1e-300))),
        "conservation_drift": drift,
        "fits": fits,
        "reference_exponent": p_ref,
        "moment_envelope_short_time_exponent": short_expo,
        "monitors": monitors,
        "level_energies": level_energies,
        "kappa0": kappa_tail,
        "tail_mass_fraction": tail_mass,
        "csiszar_kullback": ck,
        "coercivity_coefficient": coercivity,
        "checks": {},
    }
    checks = summary["checks"]
    checks["entropy_monotone"] = entropy_monotone
    checks["h_rel_monotone"] = summary["h_rel_violations"] == 0
    checks["production_nonnegative"] = summary["production_nonnegative"]
    checks["conserved_drift_below_1e-10"] = bool(max(drift.values()) <= 1e-10)
    checks["monitor_margins_nonnegative"] = all(
        ("min_margin" not in m) or m["min_margin"] >= 0.0 for m in monitors.values()
    )
    return summary


def maybe_plot(cfg: RunConfig, out_dir: str):
    if not cfg.diagnostics.plots:
        return
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = []
    with open(os.path.join(out_dir, "timeseries.csv")) as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    t = np.array([float(r["t"]) for r in rows])
    h_rel = np.array([float(r["H_rel"]) for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    good = h_rel > 0
    ax.loglog(1.0 + t[good], h_rel[good], "o-")
    ax.set_xlabel("1 + t")
    ax.set_ylabel("relative entropy")
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "entropy_decay.png"), dpi=120)
    plt.close(fig)


def run(cfg: RunConfig, out_dir: str = None) -> dict:
    """Execute a configured run and write its artifacts; returns the summary."""
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    series = run_series(cfg)
    write_timeseries(cfg, series, os.path.join(out_dir, "timeseries.csv"))
    write_schema(cfg, os.path.join(out_dir, "schema.json"))
    summary = summarize(cfg, series)
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=float)
    with open(os.path.join(out_dir, "config.normalized.json"), "w") as fh:
        fh.write(serialize_config(cfg))
    maybe_plot(cfg, out_dir)
    summary["_series"] = series
    return summary


def run_sweep(cfg: RunConfig, epsilons, out_dir: str = None) -> dict:
    """Run the pipeline once per quantum parameter from one shared datum."""
    epsilons = [float(e) for e in epsilons]
    if any(e < 0 for e in epsilons):
        raise ValueError("sweep epsilons must be nonnegative")
    out_dir = out_dir or cfg.output_dir
    os.makedirs(out_dir, exist_ok=True)
    grid = cfg.build_grid()
    base_state = build_initial_state(cfg, grid)
    datum_max = float(base_state.values.max())
    for e in epsilons:
        if e > 0.0 and datum_max > 1.0 / e:
            raise ValueError(
                f"shared datum (sup = {datum_max:.6g}) is inadmissible at "
                f"eps = {e:.6g} (ceiling {1.0 / e:.6g})"
            )
    rows = []
    sup_over_sweep = 0.0
    for e in epsilons:
        member_cfg = replace(cfg, physics=replace(cfg.physics, epsilon=e, epsilon_fraction=None))
        member_dir = os.path.join(out_dir, f"eps_{e:.8g}")
        os.makedirs(member_dir, exist_ok=True)
        state = DistributionState(grid, base_state.values.copy(), e)
        series = run_series(member_cfg, state=state)
        write_timeseries(member_cfg, series, os.path.join(member_dir, "timeseries.csv"))
        write_schema(member_cfg, os.path.join(member_dir, "schema.json"))
        summary = summarize(member_cfg, series)
        with open(os.path.join(member_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True, default=float)
        max_f = series.step_array("max_f")
        sup_over_sweep = max(sup_over_sweep, float(max_f.max()))
        diffs = np.diff(max_f)
        t_steps = series.step_array("t")
        # growth toward the equilibrium peak is physical; blow-up would show
        # as growth that keeps pace at the horizon, so compare the sup-norm
        # gain over the first and final thirds of the run
        span = t_steps[-1] - t_steps[0]
        third = lambda lo, hi: max_f[(t_steps >= t_steps[0] + lo * span)
                                     & (t_steps <= t_steps[0] + hi * span)]
        head, tail = third(0.0, 1.0 / 3.0), third(2.0 / 3.0, 1.0)
        scale = max(float(max_f.max()), 1e-300)
        early_gain = float((head.max() - head[0]) / scale)
        late_gain = float((tail.max() - tail[0]) / scale)
        decaying = late_gain <= max(0.5 * early_gain, 0.02)
        rows.append({
            "epsilon": e,
            "kappa0": nonsaturation_kappa(series, 0.5 * (t_steps[0] + t_steps[-1])),
            "fitted_exponent": summary["fits"]["H_rel"].get("exponent"),
            "final_h_rel": float(series.step_array("h_rel")[-1]),
            "sup_norm": float(max_f.max()),
            "monotone_growth": bool(diffs.size and np.all(diffs > 0.0)),
            "early_gain": early_gain,
            "late_gain": late_gain,
            "growth_decaying": bool(decaying),
            "pauli_ok": bool(e == 0.0 or max_f.max() <= (1.0 / e) * (1.0 + 1e-12)),
        })
    report = {
        "epsilons": epsilons,
        "rows": rows,
        "sup_over_sweep": sup_over_sweep,
        "uniform_bound_ok": bool(np.isfinite(sup_over_sweep)),
        "plateau_ok": bool(all(r["growth_decaying"] for r in rows)),
    }
    with open(os.path.join(out_dir, "sweep_summary.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=float)
    if cfg.diagnostics.plots:
        _plot_sweep(report, out_dir)
    return report


def _plot_sweep(report, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with open(os.path.join(out_dir, "sweep_summary.json")) as fh:
        data = json.load(fh)
    eps = [row["epsilon"] for row in data["rows"]]
    kappa = [row["kappa0"] for row in data["rows"]]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(eps, kappa, "o-")
    ax.set_xlabel("quantum parameter")
    ax.set_ylabel("non-saturation margin")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "kappa_vs_epsilon.png"), dpi=120)
    plt.close(fig)
