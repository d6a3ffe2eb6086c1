"""Collision kernel model and the two-particle collision geometry.

The kernel factorizes into a kinetic part |v - v_*|^gamma (moderately soft,
gamma in (-2, 0) with gamma + 2 nu > 0) and an angular part b(cos theta)
that is bounded below by b0 and integrable over the sphere (angular cutoff).
Two angular models are supported: a constant b0 and a capped power law that
mimics a grazing-collision singularity of order theta^(-2-2nu) away from a
plateau below theta_cut.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

ANGULAR_CONSTANT = "constant"
ANGULAR_TRUNCATED_POWER = "truncated_power"


@dataclass(frozen=True)
class CollisionKernelSpec:
    """Parameters of the factorized collision kernel.

    gamma: kinetic exponent, in (-2, 0).
    nu: angular singularity exponent, in (0, 1); gamma + 2 nu > 0 is required
        (the moderately soft regime).  For the constant angular model nu
        enters only through this validity check and the reporting exponents.
    b0: positive lower bound of the angular factor.
    angular_model: "constant" or "truncated_power".
    power_amplitude: C in the capped power law b0 + C * theta^(-2-2nu).
    theta_cut: plateau angle of the capped power law; below it the angular
        factor is frozen at its theta_cut value so the cutoff condition holds.
    """

    gamma: float
    nu: float
    b0: float = 1.0
    angular_model: str = ANGULAR_CONSTANT
    power_amplitude: float = 0.0
    theta_cut: float = 0.1

    def __post_init__(self):
        if not (-2.0 < self.gamma < 0.0):
            raise ValueError(f"gamma must lie in (-2, 0), got {self.gamma}")
        if not (0.0 < self.nu < 1.0):
            raise ValueError(f"nu must lie in (0, 1), got {self.nu}")
        if self.gamma + 2.0 * self.nu <= 0.0:
            raise ValueError(
                f"moderately-soft condition violated: gamma + 2*nu = "
                f"{self.gamma + 2.0 * self.nu:.6g} <= 0"
            )
        if self.b0 <= 0.0:
            raise ValueError(f"b0 must be positive, got {self.b0}")
        if self.angular_model not in (ANGULAR_CONSTANT, ANGULAR_TRUNCATED_POWER):
            raise ValueError(f"unknown angular model {self.angular_model!r}")
        if self.angular_model == ANGULAR_TRUNCATED_POWER:
            if self.power_amplitude < 0.0:
                raise ValueError("power_amplitude must be nonnegative")
            if not (0.0 < self.theta_cut < np.pi):
                raise ValueError(f"theta_cut must lie in (0, pi), got {self.theta_cut}")


def angular_factor(spec: CollisionKernelSpec, cos_theta):
    """Angular factor b(cos theta); always >= b0.

    The capped power law evaluates b0 + C * theta^(-2-2nu) for
    theta >= theta_cut and stays on the plateau value at theta_cut below it.
    """
    c = np.asarray(cos_theta, dtype=float)
    if np.any(np.abs(c) > 1.0 + 1e-12):
        raise ValueError("cos(theta) must lie in [-1, 1]")
    c = np.clip(c, -1.0, 1.0)
    if spec.angular_model == ANGULAR_CONSTANT:
        out = np.full_like(c, spec.b0)
    else:
        theta = np.arccos(c)
        expo = -2.0 - 2.0 * spec.nu
        out = spec.b0 + spec.power_amplitude * np.maximum(theta, spec.theta_cut) ** expo
    return float(out) if np.isscalar(cos_theta) or np.ndim(cos_theta) == 0 else out


def b_l1_norm(spec: CollisionKernelSpec) -> float:
    """Angular cutoff norm 2 pi * integral of b(cos theta) sin(theta) dtheta."""
    if spec.angular_model == ANGULAR_CONSTANT:
        return 4.0 * np.pi * spec.b0
    val, _ = quad(
        lambda th: angular_factor(spec, np.cos(th)) * np.sin(th),
        0.0,
        np.pi,
        points=[spec.theta_cut],
        limit=200,
        epsabs=0.0,
        epsrel=1e-12,
    )
    return 2.0 * np.pi * val


def kinetic_factor(spec: CollisionKernelSpec, r):
    """Relative-speed factor r^gamma, with the excluded-pair convention 0 at r = 0."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("relative speed must be nonnegative")
    with np.errstate(divide="ignore"):
        out = np.where(r > 0.0, r**spec.gamma, 0.0)
    return float(out) if out.ndim == 0 else out


def _check_unit(vec: np.ndarray, name: str) -> np.ndarray:
    v = np.asarray(vec, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    norm = np.sqrt(v @ v)
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"{name} must be a unit vector, |{name}| = {norm:.12g}")
    return v


def post_collision_sigma(v, v_star, sigma):
    """Post-collision velocities in the scattering-direction parametrization.

    v' and v'_* share the pair's center of mass and redistribute the relative
    velocity along sigma; momentum and kinetic energy are conserved
    identically.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = _check_unit(sigma, "sigma")
    center = 0.5 * (v + v_star)
    half_gap = 0.5 * np.linalg.norm(v - v_star)
    return center + half_gap * sigma, center - half_gap * sigma


def post_collision_omega(v, v_star, omega):
    """Post-collision velocities in the impact-direction parametrization."""
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    omega = _check_unit(omega, "omega")
    proj = np.dot(v - v_star, omega)
    return v - proj * omega, v_star + proj * omega


def sigma_from_omega(n, omega):
    """Map an impact direction to the equivalent scattering direction.

    n is the unit relative velocity; the returned sigma satisfies
    post_collision_sigma(..., sigma) == post_collision_omega(..., omega).
    """
    n = _check_unit(n, "n")
    omega = _check_unit(omega, "omega")
    sigma = n - 2.0 * np.dot(n, omega) * omega
    return sigma
