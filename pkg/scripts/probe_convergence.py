"""Probe script: h-convergence of annihilation and conservation defects.

Exploratory companion to the acceptance suite; prints the N=12 -> N=24
ratios that the suite asserts.
"""
import time

import numpy as np

from bfdlab.collision import DistributionState, collision_operator
from bfdlab.config import maxwellian_values
from bfdlab.equilibria import epsilon_sat, sample_equilibrium, solve_fd_params
from bfdlab.grids import build_grid, build_sphere_quadrature
from bfdlab.kernel import CollisionKernelSpec

spec = CollisionKernelSpec(gamma=-0.5, nu=0.75, b0=1 / (4 * np.pi))
sq = build_sphere_quadrature(7)
L = 5.0
es = epsilon_sat(1.0, 1.0)

for eps in (0.0, 0.3 * es):
    vals = {}
    for n in (12, 24):
        g = build_grid(L, n)
        p = solve_fd_params(1.0, [0, 0, 0], 1.0, eps)
        st = sample_equilibrium(p, g)
        t0 = time.time()
        res = collision_operator(st, spec, sq, correct=False)
        vals[n] = np.abs(res.values).sum() * g.cell_weight
        print(f"eps={eps:.3g} N={n}: L1={vals[n]:.5e}  ({time.time()-t0:.1f}s)", flush=True)
    print(f"eps={eps:.3g} annihilation ratio 12->24: {vals[12]/vals[24]:.3f}", flush=True)

# conservation defects on an asymmetric mixture
for n in (12, 24):
    g = build_grid(L, n)
    v = maxwellian_values(g, 0.6, [0.9, 0.2, -0.1], 0.45)
    v = v + maxwellian_values(g, 0.4, [-0.8, -0.3, 0.2], 0.3)
    st = DistributionState(g, v, 0.4)
    t0 = time.time()
    res = collision_operator(st, spec, sq, correct=False)
    rel = res.defects / res.defect_scales
    print(f"N={n}: relative defects {rel}  ({time.time()-t0:.1f}s)", flush=True)
