"""Brownian motion on the sphere from a rotation-group SDE.

A right-invariant system on SO(3) pushed to S^2 by g -> g p0 is Brownian
motion on the sphere. Legendre moments of <x_t, x_0> then decay like
exp(-l(l+1) t / 2), which is what we estimate below.
"""

import numpy as np

from symred.models import ModelConfig, sphere_bm, sphere_moments

cfg = ModelConfig("sphere_bm", T=0.5, steps=500, seed=0)
model = sphere_bm(cfg)

print("noise components:", model.noise().labels)

times, mean, se = sphere_moments(model, 2000, seed=0)
for l in (1, 2):
    for t in (0.25, 0.5):
        k = int(np.argmin(np.abs(times - t)))
        target = np.exp(-l * (l + 1) * t / 2)
        z = (mean[l - 1, k] - target) / se[l - 1, k]
        print(f"P{l} at t={t}: {mean[l - 1, k]:.4f} +- {se[l - 1, k]:.4f}  (target {target:.4f}, z={z:+.2f})")
