"""Run the mixture equilibration experiment and print the headline numbers.

Usage: python scripts/run_equilibration.py [config.yaml] [out_dir]
"""
import json
import sys
from pathlib import Path

from bfdlab.config import parse_config
from bfdlab.runner import run

here = Path(__file__).parent
cfg_path = sys.argv[1] if len(sys.argv) > 1 else here / "configs" / "mixture.yaml"
cfg = parse_config(cfg_path)
if len(sys.argv) > 2:
    cfg.output_dir = sys.argv[2]

summary = run(cfg)
summary.pop("_series", None)

print(json.dumps({
    "epsilon": summary["epsilon"],
    "kappa0": summary["kappa0"],
    "entropy_identity": summary["entropy_identity"],
    "fits": summary["fits"],
    "reference_exponent": summary["reference_exponent"],
    "conservation_drift": summary["conservation_drift"],
    "checks": summary["checks"],
}, indent=2, default=float))
print(f"artifacts in {cfg.output_dir}")
