"""Trajectory-level analyses: rate fits, growth envelopes, monitors, sweeps.

The theoretical relaxation rate is an asymptotic lower bound with
non-explicit constants, so it is not asserted quantitatively; the fitters
report the measured algebraic exponent next to the formula value, and the
monitors check the inequalities that do carry explicit constants.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .kernel import CollisionKernelSpec, angular_factor


@dataclass(frozen=True)
class DecayFit:
    """Algebraic-decay fit y ~ amplitude * (1 + t)^(-exponent) on a window."""

    amplitude: float
    exponent: float
    window: tuple
    residual: float
    reference_exponent: float


def expected_decay_exponent(s: float, gamma: float) -> float:
    """Guaranteed algebraic decay exponent for initial moments up to order s.

    Valid under s > 22 + 5|gamma|; outside that range the value is still
    returned with a warning since it is used for side-by-side reporting.
    """
    agam = abs(gamma)
    if s <= 22.0 + 5.0 * agam:
        warnings.warn(
            f"decay-exponent hypothesis s > 22 + 5|gamma| violated "
            f"(s = {s}, gamma = {gamma}); value is extrapolated",
            stacklevel=2,
        )
    return (s - 18.0 - 5.0 * agam) / (4.0 + 2.0 * agam)


def moment_growth_envelope(s: float, nu: float, gamma: float = None, c_s: float = 1.0):
    """Envelope t -> c_s * (t + t^(-3/(2 nu))) bounding the combined moments.

    Returns (envelope callable, short-time exponent -3/(2 nu)).  The envelope
    is minimal at t = (3/(2 nu))^(2 nu / (2 nu + 3)).
    """
    if not (0.0 < nu < 1.0):
        raise ValueError(f"nu must lie in (0, 1), got {nu}")
    if gamma is not None and s < 8.0 + abs(gamma):
        warnings.warn(
            f"moment envelope hypothesis s >= 8 + |gamma| violated "
            f"(s = {s}, gamma = {gamma})",
            stacklevel=2,
        )
    expo = -3.0 / (2.0 * nu)

    def envelope(t):
        t = np.asarray(t, dtype=float)
        return c_s * (t + t**expo)

    return envelope, expo


def linf_envelope(s: float, nu: float, gamma: float, t_star: float,
                  sup_m_s: float, c: float = 1.0) -> float:
    """Qualitative ceiling for the sup norm on [t_star, T].

    c * (1 + t_star^(-3s/(4 nu s + 3 gamma) - 3/(4 nu))) *
    sup_m_s^(3|gamma|/(4 nu s + 3 gamma)); the constant c is configured, not
    derived.
    """
    if s <= 3.0 * abs(gamma) / (2.0 * nu):
        raise ValueError(
            f"sup-norm envelope requires s > 3|gamma|/(2 nu) = "
            f"{3.0 * abs(gamma) / (2.0 * nu):.6g}, got s = {s}"
        )
    if t_star <= 0.0:
        raise ValueError("t_star must be positive")
    denom = 4.0 * nu * s + 3.0 * gamma
    prefactor = 1.0 + t_star ** (-3.0 * s / denom - 3.0 / (4.0 * nu))
    return c * prefactor * sup_m_s ** (3.0 * abs(gamma) / denom)


def angular_sin3_integral(spec: CollisionKernelSpec) -> float:
    """Quadrature of b(cos theta) sin^3(theta) over [0, pi/2]."""
    pts = [spec.theta_cut] if spec.angular_model != "constant" and spec.theta_cut < np.pi / 2 else None
    val, _ = quad(
        lambda th: angular_factor(spec, np.cos(th)) * np.sin(th) ** 3,
        0.0, np.pi / 2, points=pts, limit=200, epsabs=0.0, epsrel=1e-13,
    )
    return val


def moment_drift_rate(spec: CollisionKernelSpec, s: float) -> float:
    """Explicit dissipation coefficient of the order-s moment inequality.

    2 pi 2^(-4 - s/2) * integral over [0, pi/2] of b(cos theta) sin^3 theta.
    """
    return 2.0 * np.pi * 2.0 ** (-4.0 - 0.5 * s) * angular_sin3_integral(spec)


def moment_growth_constant(spec: CollisionKernelSpec, s: float,
                           l12_norm: float, c1_prime: float = 1.0) -> float:
    """Explicit upper bound for the linear-growth constant of the moment bound.

    ||f_in||_{L1_2}^2 * c1^(-(s + gamma - 1)) * 2^(s (s + gamma - 1)/2) *
    (s^2 + s + 6)^(s + gamma - 1) with c1 = a sin a, a = min(c1_prime, pi/2).
    c1_prime is not fixed by the underlying estimate; the default keeps the
    bound generously conservative.
    """
    a = min(c1_prime, np.pi / 2.0)
    c1 = a * np.sin(a)
    p = s + spec.gamma - 1.0
    return l12_norm**2 * c1 ** (-p) * 2.0 ** (0.5 * s * p) * (s * s + 6.0 + s) ** p


def moment_inequality_monitor(series, s: float, spec: CollisionKernelSpec,
                              c1_prime: float = 1.0):
    """Margin of the explicit-constant moment inequality at each output time.

    margin(t) = [m_s(0) + C_s t] - [m_s(t) + (c_s/2) int_0^t m_{s+gamma}]
    must stay nonnegative; a negative margin flags either a discretization
    bug or a misread constant.  The trajectory must record the moments of
    order s and s + gamma.
    """
    if s < max(2.0 - spec.gamma, 4.0):
        raise ValueError(
            f"moment inequality requires s >= max(2 - gamma, 4) = "
            f"{max(2.0 - spec.gamma, 4.0):.6g}, got {s}"
        )
    t = series.output_array("t")
    try:
        m_s = series.output_moment(s)
        m_sg = series.output_moment(s + spec.gamma)
    except KeyError as exc:
        raise KeyError(
            f"trajectory lacks recorded moments of order {exc}; configure "
            f"moment exponents to include s and s + gamma"
        ) from exc
    m20 = series.output_moment(2.0)[0]
    m00 = series.output_moment(0.0)[0]
    c_s = moment_drift_rate(spec, s) * m00
    big_c = moment_growth_constant(spec, s, m20, c1_prime)
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (m_sg[1:] + m_sg[:-1]))])
    margin = (m_s[0] + big_c * t) - (m_s + 0.5 * c_s * integral)
    return {
        "t": t,
        "margin": margin,
        "c_s": c_s,
        "growth_constant": big_c,
        "drift_rate": moment_drift_rate(spec, s),
    }


def decay_fit(series, quantity: str, window,
              reference_exponent: float = np.nan) -> DecayFit:
    """Least-squares algebraic fit of a positive trajectory quantity.

    Fits log y against log(1 + t) on the window; the residual (RMS in log
    space) is always reported so exponential or mixed decay shows up as a
    poor fit rather than a confident wrong exponent.  The optional
    reference_exponent is carried along for side-by-side reporting.
    """
    if quantity == "H_rel":
        t = series.step_array("t")
        y = series.step_array("h_rel")
    elif quantity == "L1_dist":
        t = series.output_array("t")
        y = np.asarray(series.l1_dist)  # populated by runners that track it
    else:
        raise ValueError(f"unknown decay quantity {quantity!r}")
    t0, t1 = window
    mask = (t >= t0) & (t <= t1)
    if not np.any(mask):
        raise ValueError(f"empty fit window [{t0}, {t1}]")
    t, y = t[mask], y[mask]
    if np.any(y <= 0.0) or np.any(~np.isfinite(y)):
        raise ValueError("decay fit requires positive finite samples on the window")
    x = np.log1p(t)
    z = np.log(y)
    coeff = np.polyfit(x, z, 1)
    resid = z - np.polyval(coeff, x)
    return DecayFit(
        amplitude=float(np.exp(coeff[1])),
        exponent=float(-coeff[0]),
        window=(float(t0), float(t1)),
        residual=float(np.sqrt(np.mean(resid**2))),
        reference_exponent=float(reference_exponent),
    )


def fit_synthetic(t, y) -> DecayFit:
    """Fit helper for externally supplied samples (used by self-tests)."""
    x = np.log1p(np.asarray(t, dtype=float))
    z = np.log(np.asarray(y, dtype=float))
    coeff = np.polyfit(x, z, 1)
    resid = z - np.polyval(coeff, x)
    return DecayFit(float(np.exp(coeff[1])), float(-coeff[0]),
                    (float(t[0]), float(t[-1])),
                    float(np.sqrt(np.mean(resid**2))), np.nan)


def nonsaturation_kappa(series, t_min: float) -> float:
    """1 - eps * sup over t >= t_min of the sup norm along the trajectory."""
    t = series.step_array("t")
    mask = t >= t_min
    if not np.any(mask):
        raise ValueError(f"trajectory does not reach t_min = {t_min}")
    sup = float(series.step_array("max_f")[mask].max())
    return 1.0 - series.epsilon * sup


def epsilon_sweep(run_one, epsilons, datum_max: float):
    """Run the pipeline per quantum parameter from one shared datum.

    `run_one(eps)` must return a TimeSeries; `datum_max` is the sup norm of
    the shared initial datum, checked against every Pauli ceiling up front.
    Returns per-member rows (kappa0, fitted exponent, final relative entropy,
    sup norm) plus the sweep-wide sup-norm bound.
    """
    epsilons = [float(e) for e in epsilons]
    if any(e < 0 for e in epsilons):
        raise ValueError("quantum parameters must be nonnegative")
    for e in epsilons:
        if e > 0.0 and datum_max > (1.0 / e) * (1.0 + 1e-12):
            raise ValueError(
                f"shared datum (sup = {datum_max:.6g}) violates the Pauli "
                f"ceiling 1/eps = {1.0 / e:.6g} at eps = {e:.6g}"
            )
    rows = []
    sup_over_sweep = 0.0
    for e in epsilons:
        series = run_one(e)
        max_f = series.step_array("max_f")
        sup_over_sweep = max(sup_over_sweep, float(max_f.max()))
        t = series.step_array("t")
        t_mid = 0.5 * (t[0] + t[-1])
        kappa = nonsaturation_kappa(series, t_mid) if t.size > 1 else 1.0 - e * float(max_f.max())
        h_rel = series.step_array("h_rel")
        fitted = np.nan
        try:
            fit = decay_fit(series, "H_rel", (max(t[0], 0.25 * t[-1]), t[-1]))
            fitted = fit.exponent
        except (ValueError, np.linalg.LinAlgError):
            pass
        # growth pattern of the sup norm: strictly increasing across every
        # recorded step would signal the onset of blow-up
        diffs = np.diff(max_f)
        monotone_growth = bool(diffs.size > 0 and np.all(diffs > 0.0))
        rows.append({
            "epsilon": e,
            "kappa0": kappa,
            "fitted_exponent": fitted,
            "final_h_rel": float(h_rel[-1]) if np.isfinite(h_rel[-1]) else np.nan,
            "sup_norm": float(max_f.max()),
            "monotone_growth": monotone_growth,
            "series": series,
        })
    return {"rows": rows, "sup_over_sweep": sup_over_sweep}
