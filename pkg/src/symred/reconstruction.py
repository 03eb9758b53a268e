"""Reconstruction of full solutions on T*SO(3) from reduced Lie-Poisson solutions.

The pipeline has three steps:

1. lift the reduced path horizontally with respect to a principal connection,
2. integrate the connection against the operator along the lift to obtain a
   so(3)-valued drive ``Y``,
3. solve the phase equation ``dg = g dY`` from the identity and act with the
   phase on the lift.

For lifted left translations on SO(3) x so(3)* the vertical directions at
``(h, mu)`` are right-invariant, and the connection used here is the
right Maurer-Cartan form on the group factor,
``A_(h, mu)(h hat(v), f) = Ad_h v``. Horizontal lifts then keep the group
component fixed.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from symred.hamiltonian import full_system
from symred.lie import random_rotation
from symred.sde import (
    GridMismatch,
    NoisePath,
    StratonovichSystem,
    Trajectory,
    integrate_group,
)
from symred.symmetry import Report, left_translation

__all__ = [
    "Connection",
    "PhaseDrive",
    "right_maurer_cartan",
    "horizontal_lift",
    "phase_drive",
    "phase_solve",
    "reconstruct",
]


@dataclass(frozen=True, eq=False)
class Connection:
    """Principal connection one-form ``(z, v) -> A_z(v)`` with values in so(3)."""

    form: Callable
    name: str = ""

    def __call__(self, z, v):
        return self.form(z, v)

    def check_vertical(self, act, samples=64, seed=0, tol=1e-10):
        """Check ``A_z(xi_M(z)) = xi`` on sampled ``xi`` and ``z``."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            z = (random_rotation(rng), rng.standard_normal(3))
            xi = rng.standard_normal(3)
            worst = max(worst, float(np.linalg.norm(self.form(z, act.generator(xi, z)) - xi)))
        return Report("vertical reproduction", worst <= tol, worst, tol, {"samples": samples})


def right_maurer_cartan():
    """Right Maurer-Cartan form on the group factor of SO(3) x so(3)*.

    Tangent vectors are left-trivialized pairs ``(v, f)``; the form returns
    ``h v``. Broadcasts over a leading axis.
    """

    def form(z, v):
        h = z[0]
        return np.einsum("...ij,...j->...i", h, v[0])

    return Connection(form, "right Maurer-Cartan")


@dataclass(frozen=True, eq=False)
class PhaseDrive:
    """Increments of the so(3)-valued drive on the reduced trajectory's grid."""

    times: np.ndarray
    increments: np.ndarray

    def as_noise(self):
        return NoisePath.from_increments(self.times, self.increments, ("user",) * 3)


def horizontal_lift(reduced, g0):
    """Horizontal lift ``d_t = (g0, mu_t)`` of a reduced trajectory."""
    mu = np.asarray(reduced.vector, dtype=float)
    if not np.all(np.isfinite(mu)):
        raise ValueError("reduced trajectory is not finite")
    g = np.broadcast_to(np.asarray(g0, dtype=float), mu.shape[:-1] + (3, 3)).copy()
    return Trajectory(reduced.times, g, mu.copy(), {}, reduced.labels)


def phase_drive(spec, lift, noise, connection=None):
    """Discretize ``Y = sum_i int <A, S(X, d)(e_i)> dX^i`` along the lift.

    The integrand is averaged over the two ends of each step (Stratonovich
    trapezoid). With the default connection and ``d = (g0, mu)`` this gives
    ``dY_k = (1/2) sum_i Ad_g0 (dh_i(mu_k) + dh_i(mu_{k+1})) dX^i_k``.

    Raises:
        GridMismatch: if the lift and the noise live on different grids.
    """
    if not np.array_equal(np.asarray(lift.times), noise.times):
        raise GridMismatch("lift and noise must share a grid")
    connection = connection or right_maurer_cartan()
    sys = full_system(spec)
    g, mu = lift.group, lift.vector
    V, F = sys.fields(noise.values, (g, mu))  # (K+1, r, 3)
    z = (g[:, None], mu[:, None])
    integrand = connection(z, (V, F))  # (K+1, r, 3)
    dX = noise.increments
    avg = 0.5 * (integrand[:-1] + integrand[1:])
    return PhaseDrive(noise.times, np.einsum("km,kmj->kj", dX, avg))


def _phase_system():
    fields = lambda x, g: np.eye(3)  # noqa: E731  dg = g dY
    return StratonovichSystem(fields, 3, kind="group", side="left", name="phase")


def phase_solve(drive, g_init=None, **kw):
    """Solve the phase equation ``dg = T_e L_g (dY)`` with ``g(0) = g_init``."""
    g_init = np.eye(3) if g_init is None else np.asarray(g_init, dtype=float)
    return integrate_group(_phase_system(), drive.as_noise(), g_init, **kw)


def reconstruct(spec, reduced, noise, z0, connection=None, **kw):
    """Rebuild the full solution ``Gamma = g^Xi . d`` from a reduced trajectory.

    Args:
        spec: Hamiltonian components.
        reduced: solution of the reduced system on ``noise``.
        noise: driving path.
        z0: initial full state ``(g0, mu0)``; ``mu0`` must start ``reduced``.

    Returns:
        Bundle trajectory ``(g^Xi_t g0, mu_t)``.

    Raises:
        GridMismatch: reduced trajectory and noise on different grids.
        Diverged: the phase equation blew up.
    """
    g0, mu0 = (np.asarray(a, dtype=float) for a in z0)
    if not np.array_equal(np.asarray(reduced.times), noise.times):
        raise GridMismatch("reduced trajectory and noise must share a grid")
    if not np.allclose(reduced.vector[0], mu0, rtol=0, atol=1e-12):
        raise ValueError("reduced trajectory does not start at mu0")
    lift = horizontal_lift(reduced, g0)
    phase = phase_solve(phase_drive(spec, lift, noise, connection), **kw)
    act = left_translation(bundle=True)
    states = [act.apply(phase.group[k], lift.state(k)) for k in range(len(lift))]
    return Trajectory.from_states(noise.times, states, "bundle", reduced.labels)
