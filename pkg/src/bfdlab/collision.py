"""Quantum collision operator on the velocity lattice.

The operator is evaluated in strong form by direct quadrature: for every
output node the pair sum runs over all other lattice nodes (the same-node
pair is excluded, removing the |v - v_*|^gamma singularity) and the angular
sum over a sphere rule, with post-collision values taken by trilinear
interpolation.  Discrete conservation of mass, momentum and energy is
restored by a weighted least-squares projection; the pre-correction defects
double as an accuracy metric.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .grids import SphereQuadrature, VelocityGrid, antipodal_half, trilinear_sample
from .kernel import ANGULAR_CONSTANT, CollisionKernelSpec, angular_factor

PAULI_SLACK = 1e-12


@dataclass
class DistributionState:
    """Grid sample of the one-particle distribution at one instant.

    For epsilon > 0 the values must respect the Pauli ceiling 1/epsilon; the
    classical case is epsilon = 0.
    """

    grid: VelocityGrid
    values: np.ndarray
    epsilon: float
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (self.grid.size,):
            raise ValueError(
                f"values must have shape ({self.grid.size},), got {self.values.shape}"
            )
        if self.epsilon < 0.0:
            raise ValueError(f"epsilon must be nonnegative, got {self.epsilon}")

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            bad = int(np.argmin(np.isfinite(self.values)))
            raise ValueError(f"non-finite distribution value at node {bad}")
        if np.any(self.values < 0.0):
            bad = int(np.argmin(self.values))
            raise ValueError(
                f"negative distribution value {self.values[bad]:.3e} at node {bad}"
            )
        if self.epsilon > 0.0:
            ceiling = 1.0 / self.epsilon
            worst = float(self.values.max())
            if worst > ceiling * (1.0 + PAULI_SLACK):
                bad = int(np.argmax(self.values))
                raise ValueError(
                    f"Pauli bound violated at node {bad}: f = {worst:.6e} > "
                    f"1/epsilon = {ceiling:.6e}"
                )
        return self

    @property
    def pauli_ceiling(self) -> float:
        return np.inf if self.epsilon == 0.0 else 1.0 / self.epsilon

    def copy_with(self, values=None, time=None) -> "DistributionState":
        return replace(
            self,
            values=self.values.copy() if values is None else values,
            time=self.time if time is None else time,
        )


@dataclass
class CollisionResult:
    """Collision operator values plus the raw conservation defects.

    `defects` holds (mass, momentum_x, momentum_y, momentum_z, energy)
    moments of the uncorrected operator; `values` is corrected when
    `corrected` is True.
    """

    values: np.ndarray
    defects: np.ndarray
    corrected: bool
    defect_scales: np.ndarray = field(default=None)


def collision_invariants(grid: VelocityGrid) -> np.ndarray:
    """Rows (1, v_x, v_y, v_z, |v|^2) evaluated on the lattice."""
    psi = np.empty((5, grid.size))
    psi[0] = 1.0
    psi[1:4] = grid.nodes.T
    psi[4] = grid.squared_speeds()
    return psi


def _model_code(spec: CollisionKernelSpec):
    if spec.angular_model == ANGULAR_CONSTANT:
        return 0, spec.b0, 0.0, 0.0, 1.0
    return 1, spec.b0, spec.power_amplitude, -2.0 - 2.0 * spec.nu, spec.theta_cut


def _direction_set(sphere: SphereQuadrature):
    half = antipodal_half(sphere)
    if half is None:
        return (
            np.ascontiguousarray(sphere.directions),
            np.ascontiguousarray(sphere.weights),
            0,
        )
    dirs, wts = half
    return dirs, wts, 1


def collision_operator(
    state: DistributionState,
    spec: CollisionKernelSpec,
    sphere: SphereQuadrature,
    correct: bool = True,
) -> CollisionResult:
    """Evaluate the collision operator, optionally conservation-corrected.

    The epsilon = 0 input dispatches to a dedicated classical kernel with the
    identical summation structure, so the classical limit is a code path, not
    a parameter limit.
    """
    state.validate()
    grid = state.grid
    model, b0, amp, expo, tcut = _model_code(spec)
    dirs, wts, mirror = _direction_set(sphere)
    out = np.empty(grid.size)
    if state.epsilon == 0.0:
        _kernels.classical_collision(
            state.values, grid.points_per_axis, grid.half_width, grid.spacing,
            spec.gamma, model, b0, amp, expo, tcut, dirs, wts, mirror, out,
        )
    else:
        _kernels.bfd_collision(
            state.values, grid.points_per_axis, grid.half_width, grid.spacing,
            state.epsilon, spec.gamma, model, b0, amp, expo, tcut,
            dirs, wts, mirror, out,
        )
    if not np.all(np.isfinite(out)):
        bad = int(np.argmin(np.isfinite(out)))
        raise FloatingPointError(
            f"non-finite collision operator value at node {bad} "
            f"(v = {grid.nodes[bad]})"
        )
    psi = collision_invariants(grid)
    w = grid.cell_weight
    defects = psi @ out * w
    scales = np.maximum(np.abs(psi) @ np.abs(out) * w, 1e-300)
    values = conservation_correction(out, grid) if correct else out
    return CollisionResult(values, defects, correct, scales)


def conservation_correction(q: np.ndarray, grid: VelocityGrid,
                            weights: np.ndarray = None) -> np.ndarray:
    """Remove the components of q along the five collision invariants.

    Returns the minimal modification of q whose discrete mass, momentum and
    energy moments vanish, minimal in the cell-weighted L2 sense (the
    default) or in the 1/weights-weighted sense when a nonnegative node
    weight profile is given.  A state-shaped profile confines the correction
    to where the distribution lives, which is what the time integrator needs
    to keep empty cells from being pushed negative.
    """
    q = np.asarray(q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("conservation correction requires finite input")
    psi = collision_invariants(grid)
    w = grid.cell_weight
    if weights is None:
        shaped = psi
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != q.shape or np.any(weights < 0.0) or not np.all(np.isfinite(weights)):
            raise ValueError("weights must be a finite nonnegative node profile")
        # tiny uniform floor keeps the Gram matrix nonsingular for sparse profiles
        weights = weights + max(float(weights.max()), 1.0) * 1e-16
        shaped = psi * weights[None, :]
    gram = (psi * w) @ shaped.T
    moments = (psi * w) @ q
    try:
        lam = np.linalg.solve(gram, moments)
    except np.linalg.LinAlgError as exc:  # degenerate lattice, N >= 4 prevents it
        raise np.linalg.LinAlgError(f"singular invariant Gram matrix: {exc}") from exc
    return q - shaped.T @ lam


def scaling_identity_check(
    state: DistributionState,
    spec: CollisionKernelSpec,
    sphere: SphereQuadrature,
) -> float:
    """Max relative deviation of the quantum-parameter scale identity.

    Rescaling the distribution by epsilon, the kernel by 1/epsilon and the
    quantum parameter to one must reproduce epsilon times the original
    operator exactly at the discrete level (identical quadrature on both
    sides).
    """
    if state.epsilon <= 0.0:
        raise ValueError("scaling identity requires epsilon > 0")
    eps = state.epsilon
    d1 = collision_operator(state, spec, sphere, correct=False).values
    scaled_spec = replace(
        spec,
        b0=spec.b0 / eps,
        power_amplitude=spec.power_amplitude / eps,
    )
    scaled_state = DistributionState(state.grid, eps * state.values, 1.0, state.time)
    d2 = collision_operator(scaled_state, scaled_spec, sphere, correct=False).values
    target = eps * d1
    scale = max(float(np.max(np.abs(target))), 1e-300)
    return float(np.max(np.abs(d2 - target)) / scale)


def _reduced_theta_integral(spec, r_tilde, lam, r_max, variant, n_nodes):
    """Angle-average factor of the cancellation identity for one distance.

    The kinetic factor r^gamma restricted to lam < r <= r_max is dilated by
    1/sin(theta/2) ("gain" variant) or 1/cos(theta/2) ("star" variant); the
    two-sided restriction turns into an explicit theta interval on which the
    integrand is smooth, handled by Gauss-Legendre nodes.
    """
    if r_tilde <= 0.0 or r_tilde > r_max:
        return 0.0
    lo_s = r_tilde / r_max          # lower bound on the dilation factor
    hi_s = min(1.0, r_tilde / lam)  # upper bound (1 when r_tilde >= lam)
    if hi_s <= lo_s:
        return 0.0
    if variant == "gain":
        th_lo = 2.0 * np.arcsin(lo_s)
        th_hi = 2.0 * np.arcsin(hi_s) if hi_s < 1.0 else np.pi
    elif variant == "star":
        th_lo = 2.0 * np.arccos(hi_s) if hi_s < 1.0 else 0.0
        th_hi = 2.0 * np.arccos(lo_s)
    else:
        raise ValueError(f"unknown cancellation variant {variant!r}")
    if th_hi <= th_lo:
        return 0.0
    x, wq = np.polynomial.legendre.leggauss(n_nodes)
    theta = 0.5 * (th_hi - th_lo) * x + 0.5 * (th_hi + th_lo)
    wq = wq * 0.5 * (th_hi - th_lo)
    half = 0.5 * theta
    dil = np.sin(half) if variant == "gain" else np.cos(half)
    integrand = (
        angular_factor(spec, np.cos(theta))
        * np.sin(theta)
        / dil**3
        * (r_tilde / dil) ** spec.gamma
    )
    return 2.0 * np.pi * float(wq @ integrand)


def cancellation_oracle(
    state: DistributionState,
    spec: CollisionKernelSpec,
    sphere: SphereQuadrature,
    lam: float,
    side: str,
    variant: str = "gain",
    probe=(0.0, 0.0, 0.0),
    r_max: float = None,
    theta_nodes: int = 256,
) -> float:
    """Either side of the collision-sphere cancellation identity at a probe.

    side="direct" evaluates the full pair-and-sphere quadrature of
    b * Phi * f(post-collision velocity); side="reduced" evaluates the
    equivalent single pair integral with the angle average folded into a 1D
    kinetic-factor transform.  The two sides are independent discretizations
    of the same quantity and serve as mutual oracles.

    The kinetic factor is r^gamma restricted to lam < r <= r_max.  The upper
    cutoff (default: the largest probe-centered sphere inside the node hull)
    keeps both sides finite for gamma >= -1, where the one-sided restriction
    alone leaves the angle transform divergent, and makes the two sides
    discretizations of exactly the same integral on the truncated domain.
    """
    if lam <= 0.0:
        raise ValueError(f"lam must be positive, got {lam}")
    state.validate()
    grid = state.grid
    probe = np.asarray(probe, dtype=float)
    if r_max is None:
        r_max = grid.half_width - float(np.max(np.abs(probe)))
    if r_max <= lam:
        raise ValueError(f"r_max = {r_max:.6g} must exceed lam = {lam:.6g}")

    d = probe[None, :] - grid.nodes
    r = np.linalg.norm(d, axis=1)
    mask = (r > lam) & (r <= r_max)
    w = grid.cell_weight

    if side == "reduced":
        total = 0.0
        cache = {}
        # the angle transform ignores the lower restriction on the original
        # distance, so every node with a positive transform contributes
        for j in np.nonzero((r > 0.0) & (r <= r_max) & (state.values > 0.0))[0]:
            key = round(float(r[j]), 12)
            if key not in cache:
                cache[key] = _reduced_theta_integral(
                    spec, float(r[j]), lam, r_max, variant, theta_nodes
                )
            total += state.values[j] * cache[key]
        return float(total * w)

    if side != "direct":
        raise ValueError(f"side must be 'direct' or 'reduced', got {side!r}")

    idx = np.nonzero(mask)[0]
    total = 0.0
    dirs, wts = sphere.directions, sphere.weights
    for j in idx:
        center = 0.5 * (probe + grid.nodes[j])
        rj = r[j]
        cos_t = (d[j] / rj) @ dirs.T
        b = angular_factor(spec, cos_t)
        sign = 1.0 if variant == "gain" else -1.0
        pts = center[None, :] + sign * 0.5 * rj * dirs
        fs = trilinear_sample(state.values, grid, pts)
        total += rj**spec.gamma * float((wts * b) @ fs)
    return float(total * w)
