"""Scalar diagnostics: moments, entropies, entropy production, level sets.

All functionals use the same lattice quadrature as the rest of the package.
The entropy production is the symmetrized quadruple quadrature sharing the
collision operator's pair/sphere sums, with a configurable relative-speed
exponent; setting the exponent equal to the kernel's kinetic exponent gives
the physical dissipation that balances the entropy in time.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .collision import DistributionState, _direction_set, _model_code
from .equilibria import FermiDiracParams, sample_equilibrium
from .grids import SphereQuadrature
from .kernel import CollisionKernelSpec

LOG_FLOOR = 1e-30


@dataclass(frozen=True)
class MomentReport:
    """Weighted L1/L2 moments at exponent s and their combination."""

    s: float
    m_s: float   # integral of f <v>^s
    big_m_s: float  # integral of f^2 <v>^s
    e_s: float   # m_s + big_m_s / 2


@dataclass(frozen=True)
class EntropyReport:
    s_eps: float
    boltzmann_h: float
    h_rel: float
    d_eta: float
    kappa0: float


def bracket_weight(grid, s: float) -> np.ndarray:
    """<v>^s = (1 + |v|^2)^(s/2) on the lattice nodes."""
    return (1.0 + grid.squared_speeds()) ** (0.5 * s)


def moment(state: DistributionState, s: float) -> MomentReport:
    state.validate()
    w = state.grid.cell_weight
    wt = bracket_weight(state.grid, s)
    m_s = float((state.values * wt).sum() * w)
    big = float((state.values**2 * wt).sum() * w)
    return MomentReport(s, m_s, big, m_s + 0.5 * big)


def psi_occupation(x, eps: float):
    """Occupation ratio x / (1 - eps x), increasing on [0, 1/eps); identity at eps = 0."""
    x = np.asarray(x, dtype=float)
    out = x / (1.0 - eps * x)
    return float(out) if out.ndim == 0 else out


def entropy_S(state: DistributionState) -> float:
    """Quantum entropy of the occupation fractions (requires epsilon > 0).

    Integrand -(1 - eps f) log(1 - eps f) - eps f log(eps f), scaled by
    1/eps, with the 0 log 0 = 0 convention at both endpoints.
    """
    if state.epsilon <= 0.0:
        raise ValueError("entropy_S requires epsilon > 0; use boltzmann_entropy at eps = 0")
    state.validate()
    eps = state.epsilon
    x = np.clip(eps * state.values, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(x < 1.0, -(1.0 - x) * np.log1p(-x), 0.0)
        term2 = np.where(x > 0.0, -x * np.log(x), 0.0)
    total = (term1 + term2).sum() * state.grid.cell_weight
    return float(total / eps)


def boltzmann_entropy(state: DistributionState) -> float:
    """Classical entropy integral f log f with 0 log 0 = 0."""
    state.validate()
    f = state.values
    with np.errstate(divide="ignore", invalid="ignore"):
        term = np.where(f > 0.0, f * np.log(f), 0.0)
    return float(term.sum() * state.grid.cell_weight)


def entropy_functional(state: DistributionState) -> float:
    """Entropy used in time-series reporting: quantum for eps > 0, -H classically.

    Both versions are non-decreasing along the dynamics, so the same column
    carries the dissipation check across the whole quantum sweep including
    the classical member.
    """
    if state.epsilon > 0.0:
        return entropy_S(state)
    return -boltzmann_entropy(state)


def relative_entropy(f: DistributionState, g: DistributionState) -> float:
    """Entropy gap S(g) - S(f) for states sharing a grid and quantum parameter.

    For matched invariant moments this is the quantum relative entropy of f
    with respect to g and is nonnegative when g is the matched equilibrium.
    At eps = 0 it degenerates to the classical H(f) - H(g).
    """
    if f.grid is not g.grid and (
        f.grid.points_per_axis != g.grid.points_per_axis
        or f.grid.half_width != g.grid.half_width
    ):
        raise ValueError("relative entropy requires a shared grid")
    if f.epsilon != g.epsilon:
        raise ValueError(
            f"relative entropy requires a shared quantum parameter, "
            f"got {f.epsilon} and {g.epsilon}"
        )
    return entropy_functional(g) - entropy_functional(f)


def entropy_production(
    state: DistributionState,
    spec: CollisionKernelSpec,
    sphere: SphereQuadrature,
    eta: float = None,
    floor: float = LOG_FLOOR,
):
    """Nonnegative dissipation functional with relative-speed weight |v-v_*|^eta.

    eta defaults to the kernel's kinetic exponent, which recovers the
    dissipation balancing the entropy identity.  Occupation ratios inside the
    logarithm are floored at `floor` so truncation zeros stay finite; the
    integrand is pointwise nonnegative up to that flooring.

    Returns (value, scale) where scale is the accumulated absolute
    contribution, the natural yardstick for the >= -1e-12 * scale contract.
    """
    state.validate()
    if eta is None:
        eta = spec.gamma
    grid = state.grid
    model, b0, amp, expo, tcut = _model_code(spec)
    dirs, wts, mirror = _direction_set(sphere)
    partial = np.empty(grid.size)
    partial_abs = np.empty(grid.size)
    _kernels.entropy_production(
        state.values, grid.points_per_axis, grid.half_width, grid.spacing,
        state.epsilon, float(eta), model, b0, amp, expo, tcut,
        dirs, wts, mirror, floor, partial, partial_abs,
    )
    if not np.all(np.isfinite(partial)):
        bad = int(np.argmin(np.isfinite(partial)))
        raise FloatingPointError(f"non-finite entropy production at node {bad}")
    return float(partial.sum()), float(partial_abs.sum())


def entropy_report(
    state: DistributionState,
    spec: CollisionKernelSpec,
    sphere: SphereQuadrature,
    reference: DistributionState = None,
    eta: float = None,
) -> EntropyReport:
    """One-call bundle of the entropy diagnostics at a single state."""
    s_eps = entropy_functional(state)
    h = boltzmann_entropy(state)
    h_rel = relative_entropy(state, reference) if reference is not None else np.nan
    d_eta, _ = entropy_production(state, spec, sphere, eta)
    return EntropyReport(s_eps, h, h_rel, d_eta, nonsaturation_margin(state))


def csiszar_kullback_gap(state: DistributionState, params: FermiDiracParams,
                         moment_tol: float = 1e-6):
    """Distances entering the two-sided entropy-distance inequality.

    Returns (lhs, mid, rhs): the squared L1 distance to the matched
    equilibrium, 2 * mass * relative entropy, and the weighted L1_2 distance
    appearing on the upper side.  The contract is lhs <= mid (up to
    quadrature roundoff); the upper comparison is reported, not asserted,
    since its constant is not explicit.
    """
    state.validate()
    if params.epsilon != state.epsilon:
        raise ValueError("equilibrium parameters carry a different quantum parameter")
    grid = state.grid
    w = grid.cell_weight
    rho = float(state.values.sum() * w)
    mom = (state.values[None, :] * grid.nodes.T).sum(axis=1) * w
    u = mom / rho
    d = grid.nodes - u[None, :]
    theta = float((state.values * np.einsum("ij,ij->i", d, d)).sum() * w / (3.0 * rho))
    rel = np.array([
        abs(rho - params.rho) / max(params.rho, 1e-300),
        float(np.linalg.norm(u - params.u)) / max(1.0, abs(params.rho)),
        abs(theta - params.theta) / max(params.theta, 1e-300),
    ])
    if np.any(rel > moment_tol):
        raise ValueError(
            f"moment mismatch between state and equilibrium parameters: "
            f"relative deviations {rel}"
        )
    eq = sample_equilibrium(params, grid)
    diff = np.abs(state.values - eq.values)
    l1 = float(diff.sum() * w)
    l12 = float((diff * bracket_weight(grid, 2.0)).sum() * w)
    mid = 2.0 * rho * relative_entropy(state, eq)
    return l1 * l1, mid, l12


def level_set_positive(state: DistributionState, level: float) -> np.ndarray:
    """Positive part of f - level, node by node."""
    if level < 0.0:
        raise ValueError(f"level must be nonnegative, got {level}")
    return np.maximum(state.values - level, 0.0)


def sobolev_seminorm_sq(values: np.ndarray, grid, nu: float) -> float:
    """Squared fractional seminorm of the box-periodized node samples.

    Computed by the discrete Fourier transform with multiplier |xi|^(2 nu)
    under the convention 0^0 = 1, so nu = 0 returns the squared L2 norm
    exactly.  The periodization is a diagnostic-only approximation of the
    whole-space seminorm.
    """
    n = grid.points_per_axis
    g = np.asarray(values, dtype=float).reshape(n, n, n)
    ghat = np.fft.fftn(g)
    xi = 2.0 * np.pi * np.fft.fftfreq(n, d=grid.spacing)
    xx, yy, zz = np.meshgrid(xi, xi, xi, indexing="ij")
    q2 = xx**2 + yy**2 + zz**2
    mult = q2 ** nu if nu > 0.0 else np.ones_like(q2)
    total = float((np.abs(ghat) ** 2 * mult).sum())
    return total * grid.cell_weight / grid.size


def level_energy_functional(times, states, level: float, t1: float, t2: float,
                            spec: CollisionKernelSpec, c0: float = 1.0) -> float:
    """De Giorgi level-set energy over a recorded window [t1, t2].

    Sup over recorded times of half the squared L2 norm of the level-set
    excess plus c0/2 times the time integral (trapezoid over the records) of
    its weighted fractional Sobolev norm.  c0 is a configured constant; the
    functional is a qualitative diagnostic of the level-set decay.
    """
    times = np.asarray(times, dtype=float)
    idx = np.nonzero((times >= t1) & (times <= t2))[0]
    if t2 < t1 or idx.size == 0:
        raise ValueError(f"empty time window [{t1}, {t2}]")
    grid = states[idx[0]].grid
    wgt = bracket_weight(grid, spec.gamma)  # <v>^gamma = (<v>^(gamma/2))^2
    w = grid.cell_weight
    best = -np.inf
    accum = 0.0
    prev_t = None
    prev_h = None
    for k in idx:
        fk = level_set_positive(states[k], level)
        l2_sq = float((fk**2).sum() * w)
        weighted = np.sqrt(wgt) * fk
        h_sq = float((weighted**2).sum() * w) + sobolev_seminorm_sq(weighted, grid, spec.nu)
        if prev_t is not None:
            accum += 0.5 * (times[k] - prev_t) * (h_sq + prev_h)
        prev_t, prev_h = times[k], h_sq
        best = max(best, 0.5 * l2_sq + 0.5 * c0 * accum)
    return best


def nonsaturation_margin(state: DistributionState) -> float:
    """kappa_0 = 1 - eps * max f; positive means strictly below the Pauli ceiling."""
    return 1.0 - state.epsilon * float(state.values.max())


def coercivity_coefficient(state: DistributionState, theta: float,
                           kappa0: float = None) -> float:
    """Lower-bound coefficient relating dissipation to relative entropy.

    (2 pi / 7) * kappa0^5 * min(1, temperature) * smallest directional second
    moment of f.  The temperature stands in for the unspecified reference
    scale of the bound; reported for context only.
    """
    if kappa0 is None:
        kappa0 = nonsaturation_margin(state)
    grid = state.grid
    w = grid.cell_weight
    second = np.einsum("i,ij,ik->jk", state.values, grid.nodes, grid.nodes) * w
    lam_min = float(np.linalg.eigvalsh(second)[0])
    return (2.0 * np.pi / 7.0) * kappa0**5 * min(1.0, theta) * lam_min
