"""Sweep the quantum parameter from one shared datum and tabulate the outcome.

Usage: python scripts/sweep_quantum_parameter.py [config.yaml] [out_dir]
"""
import sys
from pathlib import Path

from bfdlab.config import datum_moments, parse_config
from bfdlab.equilibria import epsilon_sat
from bfdlab.runner import run_sweep

here = Path(__file__).parent
cfg_path = sys.argv[1] if len(sys.argv) > 1 else here / "configs" / "sweep.yaml"
cfg = parse_config(cfg_path)
out_dir = sys.argv[2] if len(sys.argv) > 2 else cfg.output_dir

rho, _, theta = datum_moments(cfg.initial)
e_sat = epsilon_sat(rho, theta)
fractions = cfg.sweep.epsilon_fractions or [0.0, 0.1, 0.3, 0.5]
report = run_sweep(cfg, [f * e_sat for f in fractions], out_dir)

print(f"{'eps':>10} {'eps/eps_sat':>12} {'kappa0':>8} {'fit p':>7} "
      f"{'final H_rel':>12} {'sup f':>8}")
for frac, row in zip(fractions, report["rows"]):
    p = row["fitted_exponent"]
    print(f"{row['epsilon']:>10.4f} {frac:>12.2f} {row['kappa0']:>8.4f} "
          f"{p if p is not None else float('nan'):>7.3f} "
          f"{row['final_h_rel']:>12.3e} {row['sup_norm']:>8.5f}")
print(f"sup over sweep: {report['sup_over_sweep']:.5f} "
      f"(plateau ok: {report['plateau_ok']})")
print(f"artifacts in {out_dir}")
