"""Numerical laboratory for the homogeneous quantum Boltzmann dynamics of
Fermi-Dirac particles: direct collision quadrature with Pauli blocking,
equilibrium solvers, entropy diagnostics, bound-preserving time integration
and relaxation analyses."""

from .collision import (
    CollisionResult,
    DistributionState,
    cancellation_oracle,
    collision_operator,
    conservation_correction,
    scaling_identity_check,
)
from .equilibria import (
    FermiDiracParams,
    SaturatedState,
    epsilon_sat,
    fd_moments,
    sample_equilibrium,
    saturated_state,
    solve_fd_params,
)
from .grids import (
    SphereQuadrature,
    VelocityGrid,
    build_grid,
    build_sphere_quadrature,
    integrate_grid,
    trilinear_sample,
)
from .integrator import (
    StepControl,
    TimeSeries,
    integrate,
    load_checkpoint,
    picard_apply,
    picard_solve,
    save_checkpoint,
    step,
)
from .kernel import (
    CollisionKernelSpec,
    angular_factor,
    b_l1_norm,
    kinetic_factor,
    post_collision_omega,
    post_collision_sigma,
    sigma_from_omega,
)

__version__ = "0.1.0"
