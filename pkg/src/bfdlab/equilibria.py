"""Fermi-Dirac equilibria, the saturation threshold, and grid samples.

The smooth equilibrium with prescribed mass, bulk velocity and temperature
has the occupation form a*exp(-b|v-u|^2) / (1 + eps*a*exp(-b|v-u|^2)).  Its
two radial moment integrals are matched to (rho, 3*rho*theta) by a damped
Newton iteration in (log a, log b); solving on the continuum keeps the fit
independent of any lattice.  Above the saturation threshold no smooth
equilibrium exists and the degenerate state is a Pauli-ceiling ball.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .collision import DistributionState
from .grids import VelocityGrid

_QUAD_OPTS = dict(epsabs=1e-300, epsrel=1e-13, limit=200)


@dataclass(frozen=True)
class FermiDiracParams:
    """Fitted equilibrium coefficients for given (rho, u, theta, epsilon)."""

    rho: float
    u: np.ndarray
    theta: float
    epsilon: float
    a_eps: float
    b_eps: float
    mass_residual: float
    energy_residual: float


@dataclass(frozen=True)
class SaturatedState:
    """Degenerate equilibrium: the Pauli ceiling on a ball of radius R."""

    rho: float
    u: np.ndarray
    epsilon: float
    radius: float


def epsilon_sat(rho: float, theta: float) -> float:
    """Saturation threshold of the quantum parameter at given mass and temperature."""
    if rho <= 0.0 or theta <= 0.0:
        raise ValueError("rho and theta must be positive")
    return 4.0 * np.pi * (5.0 * theta) ** 1.5 / (3.0 * rho)


def _radial_pair(f, b):
    """Integrate f(r)*r^2 and f(r)*r^4 over (0, inf), splitting at the thermal radius."""
    split = 8.0 / np.sqrt(b)
    out = []
    for p in (2, 4):
        head, _ = quad(lambda r: f(r) * r**p, 0.0, split, **_QUAD_OPTS)
        tail, _ = quad(lambda r: f(r) * r**p, split, np.inf, **_QUAD_OPTS)
        out.append(head + tail)
    return out


def fd_moments(a: float, b: float, eps: float):
    """Mass and energy moments of the radial occupation profile.

    Returns 4*pi * int of [a e^{-b r^2} / (1 + eps a e^{-b r^2})] r^2 dr and
    the r^4-weighted analogue (both centered, independent of u).
    """
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")

    def profile(r):
        m = a * np.exp(-b * r * r)
        return m / (1.0 + eps * m)

    m2, m4 = _radial_pair(profile, b)
    return 4.0 * np.pi * m2, 4.0 * np.pi * m4


def _fd_moments_and_jacobian(loga, logb, eps):
    """Moments and their derivatives w.r.t. (log a, log b).

    d profile / d log a = m / (1 + eps m)^2 and
    d profile / d log b = -b r^2 m / (1 + eps m)^2 for m = a e^{-b r^2}.
    """
    a = np.exp(loga)
    b = np.exp(logb)

    def profile(r):
        m = a * np.exp(-b * r * r)
        return m / (1.0 + eps * m)

    def dprofile(r):
        m = a * np.exp(-b * r * r)
        return m / (1.0 + eps * m) ** 2

    m2, m4 = _radial_pair(profile, b)
    d2a, d4a = _radial_pair(dprofile, b)
    d2b, d4b = _radial_pair(lambda r: -b * r * r * dprofile(r), b)
    four_pi = 4.0 * np.pi
    mass, energy = four_pi * m2, four_pi * m4
    jac = four_pi * np.array([[d2a, d2b], [d4a, d4b]])
    return mass, energy, jac


def solve_fd_params(rho: float, u, theta: float, eps: float,
                    tol: float = 1e-12, max_iter: int = 80) -> FermiDiracParams:
    """Fit (a, b) so the equilibrium carries mass rho and energy 3*rho*theta.

    Rejects quantum parameters at or above the saturation threshold (within a
    relative margin of 1e-6 of equality).  Newton runs on (log a, log b) with
    step damping; the classical closed form seeds the iteration.
    """
    if rho <= 0.0 or theta <= 0.0:
        raise ValueError("rho and theta must be positive")
    if eps < 0.0:
        raise ValueError("eps must be nonnegative")
    u = np.asarray(u, dtype=float).reshape(3)
    e_sat = epsilon_sat(rho, theta)
    if eps > 0.0 and eps >= e_sat * (1.0 - 1e-6):
        raise ValueError(
            f"saturation threshold exceeded: eps = {eps:.6g} >= "
            f"(1 - 1e-6) * eps_sat = {e_sat * (1.0 - 1e-6):.6g}"
        )

    a0 = rho * (2.0 * np.pi * theta) ** -1.5
    b0 = 1.0 / (2.0 * theta)
    if eps == 0.0:
        return FermiDiracParams(rho, u, theta, 0.0, a0, b0, 0.0, 0.0)

    target = np.array([rho, 3.0 * rho * theta])
    x = np.array([np.log(a0), np.log(b0)])

    def residual(xv):
        mass, energy, jac = _fd_moments_and_jacobian(xv[0], xv[1], eps)
        res = np.array([mass, energy]) / target - 1.0
        return res, jac / target[:, None]

    res, jac = residual(x)
    norm = np.linalg.norm(res)
    for _ in range(max_iter):
        if norm <= tol:
            break
        step = np.linalg.solve(jac, res)
        # cap the log-space step; near saturation the first Newton steps
        # overshoot wildly otherwise
        cap = np.max(np.abs(step))
        if cap > 4.0:
            step *= 4.0 / cap
        lam = 1.0
        for _ in range(40):
            trial = x - lam * step
            tres, tjac = residual(trial)
            tnorm = np.linalg.norm(tres)
            if tnorm < norm:
                break
            lam *= 0.5
        else:
            raise RuntimeError(
                f"equilibrium Newton stagnated at residual {norm:.3e} "
                f"(rho={rho}, theta={theta}, eps={eps})"
            )
        x, res, jac, norm = trial, tres, tjac, tnorm
    else:
        raise RuntimeError(
            f"equilibrium Newton did not converge within {max_iter} iterations; "
            f"residual {norm:.3e}"
        )
    return FermiDiracParams(
        rho, u, theta, eps, float(np.exp(x[0])), float(np.exp(x[1])),
        float(res[0]), float(res[1]),
    )


def sample_equilibrium(params: FermiDiracParams, grid: VelocityGrid) -> DistributionState:
    """Sample the fitted equilibrium on the lattice.

    The occupation form keeps every node strictly below the Pauli ceiling.
    """
    d = grid.nodes - params.u[None, :]
    m = params.a_eps * np.exp(-params.b_eps * np.einsum("ij,ij->i", d, d))
    values = m / (1.0 + params.epsilon * m)
    return DistributionState(grid, values, params.epsilon)


def saturated_descriptor(rho: float, u, eps: float) -> SaturatedState:
    """Ball-state parameters for given mass and quantum parameter."""
    if eps <= 0.0:
        raise ValueError("saturated state requires eps > 0")
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    u = np.asarray(u, dtype=float).reshape(3)
    radius = (3.0 * rho * eps / (4.0 * np.pi)) ** (1.0 / 3.0)
    return SaturatedState(float(rho), u, float(eps), float(radius))


def saturated_state(rho: float, u, eps: float, grid: VelocityGrid):
    """Sample the saturated ball state and report its discrete-mass defect.

    Returns (state, mass_defect).  The ball must fit inside the grid box.
    """
    desc = saturated_descriptor(rho, u, eps)
    if desc.radius > grid.half_width:
        raise ValueError(
            f"saturated ball radius {desc.radius:.6g} exceeds the grid half "
            f"width {grid.half_width:.6g}"
        )
    d = grid.nodes - desc.u[None, :]
    inside = np.einsum("ij,ij->i", d, d) <= desc.radius * desc.radius
    values = np.where(inside, 1.0 / eps, 0.0)
    state = DistributionState(grid, values, eps)
    mass_defect = float(values.sum() * grid.cell_weight - rho)
    return state, mass_defect
