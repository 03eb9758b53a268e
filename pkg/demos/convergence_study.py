"""Strong convergence of the Stratonovich Heun scheme, seen three ways.

Coarser grids reuse the fine noise (subsampling), so the errors below
measure discretization alone.
"""

import numpy as np

from symred.models import ModelConfig, full_solve, reduced_solve, rigid_impact
from symred.sde import (
    StratonovichSystem,
    brownian_path,
    coarsen,
    convergence_order,
    integrate_ensemble,
    path_rng,
    project_trajectory,
    strong_error,
)

# Geometric Brownian motion: dx = x o dW has the exact solution exp(W).
# Noise columns are (time, W); the time column carries no field.
gbm = StratonovichSystem(
    lambda w, x: np.stack([np.zeros_like(x), x], axis=-2), 2, state_dim=1, vectorized=True
)
fine = [brownian_path(1, 1.0, 10_000, rng=path_rng(3, i)) for i in range(200)]
exact = np.exp([p.values[-1, 1] for p in fine])
errs = {}
for steps in (100, 1_000, 10_000):
    x = integrate_ensemble(gbm, [coarsen(p, 10_000 // steps) for p in fine], np.ones(1)).vector[:, -1, 0]
    errs[1.0 / steps] = float(np.mean(np.abs(x - exact)))
    print(f"GBM  dt={1.0 / steps:.0e}  mean error {errs[1.0 / steps]:.2e}")
print("fitted order (200 paths):", round(convergence_order(list(errs.items())), 3))

# Reduction commutes with solving: reduced orbit scheme vs projected full solve.
cfg = ModelConfig("rigid_impact", T=1.0, steps=10_000, seed=0)
model = rigid_impact(cfg)
fine = model.noise()
errs = {}
for steps in (100, 1_000, 10_000):
    p = coarsen(fine, 10_000 // steps)
    full = project_trajectory(full_solve(model, p), lambda z: z[1])
    errs[1.0 / steps] = strong_error(full, reduced_solve(model, p, scheme="orbit"))
    print(f"rigid dt={1.0 / steps:.0e}  error {errs[1.0 / steps]:.2e}")
print("fitted order (reduction):", round(convergence_order(list(errs.items())), 3))
