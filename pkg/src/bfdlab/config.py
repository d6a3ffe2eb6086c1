"""Run configuration: parsing, validation, initial data families.

Configs are human-editable YAML (JSON is accepted as well, either as a
.json file or inline, since the parser sniffs the content).  Every field has
a default; validation errors name the offending key.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import yaml

from .collision import DistributionState
from .equilibria import epsilon_sat, sample_equilibrium, saturated_state, solve_fd_params
from .grids import VelocityGrid, build_grid, build_sphere_quadrature
from .kernel import CollisionKernelSpec

FAMILIES = (
    "maxwellian",
    "fermi_dirac",
    "two_maxwellian_mixture",
    "saturated",
    "perturbed_equilibrium",
)


@dataclass
class GridConfig:
    half_width: float = 5.0
    points_per_axis: int = 16


@dataclass
class KernelConfig:
    gamma: float = -0.5
    nu: float = 0.75
    angular_model: str = "constant"
    b0: float = 1.0 / (4.0 * np.pi)
    power_amplitude: float = 0.0
    theta_cut: float = 0.1
    sphere_order: int = 7


@dataclass
class PhysicsConfig:
    # exactly one of epsilon / epsilon_fraction; the fraction is taken of the
    # saturation threshold of the initial datum's analytic moments
    epsilon: float = None
    epsilon_fraction: float = None


@dataclass
class InitialConfig:
    family: str = "two_maxwellian_mixture"
    params: dict = field(default_factory=lambda: {
        "rho": [0.5, 0.5],
        "u": [[-0.75, 0.0, 0.0], [0.75, 0.0, 0.0]],
        "theta": [0.35, 0.35],
    })


@dataclass
class TimeConfig:
    t_end: float = 5.0
    outputs: int = 25          # number of output intervals
    dt: float = 0.0            # 0: loss-rate heuristic
    dt_min: float = 1e-10
    dt_max: float = np.inf
    tol_bound: float = 1e-12
    max_halvings: int = 30


@dataclass
class DiagnosticsConfig:
    s_values: list = field(default_factory=lambda: [4.0])
    eta_values: list = field(default_factory=list)
    level_sets: list = field(default_factory=list)
    fit_window: list = None    # default: last three quarters of the run
    s_decay: float = 30.0      # moment order quoted next to fitted exponents
    c1_prime: float = 1.0
    c0_level_energy: float = 1.0
    track_production_every: int = 1
    plots: bool = False


@dataclass
class SweepConfig:
    epsilon_fractions: list = None
    epsilons: list = None


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    seed: int = 0
    output_dir: str = "out"

    def kernel_spec(self) -> CollisionKernelSpec:
        k = self.kernel
        return CollisionKernelSpec(
            gamma=k.gamma, nu=k.nu, b0=k.b0, angular_model=k.angular_model,
            power_amplitude=k.power_amplitude, theta_cut=k.theta_cut,
        )

    def build_grid(self) -> VelocityGrid:
        return build_grid(self.grid.half_width, self.grid.points_per_axis)

    def build_sphere(self):
        return build_sphere_quadrature(self.kernel.sphere_order)


def _apply_section(obj, data: dict, section: str):
    valid = set(obj.__dataclass_fields__)
    for key, value in data.items():
        if key not in valid:
            raise ValueError(f"unknown key '{section}.{key}'")
        setattr(obj, key, value)
    return obj


def config_from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    if not isinstance(data, dict):
        raise ValueError("configuration root must be a mapping")
    sections = {
        "grid": cfg.grid, "kernel": cfg.kernel, "physics": cfg.physics,
        "time": cfg.time, "diagnostics": cfg.diagnostics, "sweep": cfg.sweep,
    }
    for name, value in data.items():
        if name in sections:
            if not isinstance(value, dict):
                raise ValueError(f"section '{name}' must be a mapping")
            _apply_section(sections[name], value, name)
        elif name == "initial":
            if not isinstance(value, dict) or "family" not in value:
                raise ValueError("section 'initial' must be a mapping with a 'family' key")
            params = {k: v for k, v in value.items() if k != "family"}
            cfg.initial = InitialConfig(value["family"], params)
        elif name == "seed":
            cfg.seed = int(value)
        elif name == "output_dir":
            cfg.output_dir = str(value)
        else:
            raise ValueError(f"unknown configuration section '{name}'")
    validate_config(cfg)
    return cfg


def parse_config(path) -> RunConfig:
    """Read and validate a YAML or JSON configuration file."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ValueError(f"config {path} is neither valid JSON nor YAML: {exc}") from exc
    return config_from_dict(data)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical JSON form; parse(serialize(parse(x))) == parse(x)."""
    data = asdict(cfg)
    initial = data.pop("initial")
    data["initial"] = {"family": initial["family"], **initial["params"]}
    if data["sweep"]["epsilon_fractions"] is None and data["sweep"]["epsilons"] is None:
        data.pop("sweep")
    data["time"] = {k: (v if v != np.inf else 1e308) for k, v in data["time"].items()}
    return json.dumps(data, indent=2, sort_keys=True, default=float)


def validate_config(cfg: RunConfig):
    g = cfg.grid
    if g.points_per_axis < 4 or g.points_per_axis % 2 != 0:
        raise ValueError(
            f"grid.points_per_axis must be an even integer >= 4, got {g.points_per_axis}"
        )
    if not (g.half_width > 0 and np.isfinite(g.half_width)):
        raise ValueError(f"grid.half_width must be finite and positive, got {g.half_width}")
    k = cfg.kernel
    if k.gamma + 2.0 * k.nu <= 0.0:
        raise ValueError(
            f"kernel.gamma + 2 * kernel.nu = {k.gamma + 2.0 * k.nu:.6g} <= 0 "
            f"violates the moderately-soft condition"
        )
    cfg.kernel_spec()  # full kernel validation
    p = cfg.physics
    if (p.epsilon is None) == (p.epsilon_fraction is None):
        raise ValueError(
            "physics: set exactly one of 'epsilon' and 'epsilon_fraction'"
        )
    if p.epsilon is not None and p.epsilon < 0.0:
        raise ValueError(f"physics.epsilon must be nonnegative, got {p.epsilon}")
    if p.epsilon_fraction is not None and p.epsilon_fraction < 0.0:
        raise ValueError(
            f"physics.epsilon_fraction must be nonnegative, got {p.epsilon_fraction}"
        )
    if cfg.initial.family not in FAMILIES:
        raise ValueError(
            f"initial.family '{cfg.initial.family}' unknown; choose from {FAMILIES}"
        )
    datum_moments(cfg.initial)  # checks family parameters are complete
    t = cfg.time
    if t.t_end < 0.0:
        raise ValueError(f"time.t_end must be nonnegative, got {t.t_end}")
    if t.outputs < 1:
        raise ValueError(f"time.outputs must be >= 1, got {t.outputs}")
    d = cfg.diagnostics
    if d.fit_window is not None and len(d.fit_window) != 2:
        raise ValueError("diagnostics.fit_window must be [t_start, t_stop]")
    # the saturation admissibility check needs the resolved epsilon
    rho, _, theta = datum_moments(cfg.initial)
    eps = resolve_epsilon(cfg)
    if eps > 0.0:
        e_sat = epsilon_sat(rho, theta)
        if eps >= e_sat * (1.0 - 1e-6):
            key = "physics.epsilon" if p.epsilon is not None else "physics.epsilon_fraction"
            raise ValueError(
                f"{key}: resolved epsilon {eps:.6g} reaches the saturation "
                f"threshold {e_sat:.6g}; no smooth equilibrium reference exists"
            )
    return cfg


def _family_params(initial: InitialConfig, names):
    missing = [n for n in names if n not in initial.params]
    if missing:
        raise ValueError(
            f"initial family '{initial.family}' lacks parameters {missing}"
        )
    return [initial.params[n] for n in names]


def datum_moments(initial: InitialConfig):
    """Analytic (rho, u, theta) of the configured datum family."""
    fam = initial.family
    if fam in ("maxwellian", "fermi_dirac", "perturbed_equilibrium"):
        rho, u, theta = _family_params(initial, ["rho", "u", "theta"])
        return float(rho), np.asarray(u, dtype=float).reshape(3), float(theta)
    if fam == "two_maxwellian_mixture":
        rhos, us, thetas = _family_params(initial, ["rho", "u", "theta"])
        rhos = np.asarray(rhos, dtype=float)
        us = np.asarray(us, dtype=float).reshape(2, 3)
        thetas = np.asarray(thetas, dtype=float)
        if rhos.shape != (2,) or thetas.shape != (2,):
            raise ValueError("two_maxwellian_mixture needs two rho/u/theta entries")
        rho = float(rhos.sum())
        u = (rhos[:, None] * us).sum(axis=0) / rho
        theta = float(
            (rhos * (thetas + ((us - u) ** 2).sum(axis=1) / 3.0)).sum() / rho
        )
        return rho, u, theta
    if fam == "saturated":
        rho, u = _family_params(initial, ["rho", "u"])
        # the ball state sits exactly at the saturation temperature
        return float(rho), np.asarray(u, dtype=float).reshape(3), np.nan
    raise ValueError(f"unknown initial family '{fam}'")


def resolve_epsilon(cfg: RunConfig) -> float:
    if cfg.physics.epsilon is not None:
        return float(cfg.physics.epsilon)
    rho, _, theta = datum_moments(cfg.initial)
    return float(cfg.physics.epsilon_fraction) * epsilon_sat(rho, theta)


def maxwellian_values(grid, rho, u, theta):
    d = grid.nodes - np.asarray(u, dtype=float)[None, :]
    return rho * (2.0 * np.pi * theta) ** -1.5 * np.exp(
        -np.einsum("ij,ij->i", d, d) / (2.0 * theta)
    )


def build_initial_state(cfg: RunConfig, grid: VelocityGrid = None,
                        epsilon: float = None) -> DistributionState:
    """Sample the configured datum family on the grid.

    The returned state carries the resolved quantum parameter; randomized
    families draw from a generator seeded by cfg.seed, so identical configs
    produce identical data.
    """
    grid = grid or cfg.build_grid()
    eps = resolve_epsilon(cfg) if epsilon is None else float(epsilon)
    fam = cfg.initial.family
    params = cfg.initial.params
    if fam == "maxwellian":
        rho, u, theta = datum_moments(cfg.initial)
        values = maxwellian_values(grid, rho, u, theta)
    elif fam == "two_maxwellian_mixture":
        rhos, us, thetas = _family_params(cfg.initial, ["rho", "u", "theta"])
        us = np.asarray(us, dtype=float).reshape(2, 3)
        values = maxwellian_values(grid, float(rhos[0]), us[0], float(thetas[0]))
        values = values + maxwellian_values(grid, float(rhos[1]), us[1], float(thetas[1]))
    elif fam == "fermi_dirac":
        rho, u, theta = datum_moments(cfg.initial)
        shape_frac = params.get("shape_fraction")
        if shape_frac is not None:
            shape_eps = float(shape_frac) * epsilon_sat(rho, theta)
        else:
            shape_eps = eps
        fd = solve_fd_params(rho, u, theta, shape_eps)
        values = sample_equilibrium(fd, grid).values
    elif fam == "saturated":
        rho, u = _family_params(cfg.initial, ["rho", "u"])
        if eps <= 0.0:
            raise ValueError("initial.family 'saturated' requires epsilon > 0")
        state, _ = saturated_state(float(rho), u, eps, grid)
        values = state.values
    elif fam == "perturbed_equilibrium":
        rho, u, theta = datum_moments(cfg.initial)
        amplitude = float(params.get("amplitude", 0.01))
        fd = solve_fd_params(rho, u, theta, eps)
        base = sample_equilibrium(fd, grid).values
        rng = np.random.default_rng(cfg.seed)
        bump = np.zeros(grid.size)
        # a handful of long-wavelength modes keeps the perturbation smooth
        for _ in range(4):
            kvec = rng.uniform(-1.0, 1.0, 3) * np.pi / grid.half_width
            phase = rng.uniform(0.0, 2.0 * np.pi)
            bump += np.cos(grid.nodes @ kvec + phase)
        bump /= max(np.abs(bump).max(), 1e-300)
        values = base * (1.0 + amplitude * bump)
        if eps > 0.0:
            values = np.minimum(values, (1.0 - 1e-9) / eps)
    else:
        raise ValueError(f"unknown initial family '{fam}'")
    if eps > 0.0 and values.max() > 1.0 / eps:
        raise ValueError(
            f"initial datum violates the Pauli ceiling: sup f = "
            f"{values.max():.6g} > 1/epsilon = {1.0 / eps:.6g}"
        )
    return DistributionState(grid, values, eps)
