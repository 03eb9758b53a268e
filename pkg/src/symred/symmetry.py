"""Group actions, invariance checks and reduction of Stratonovich operators.

Quotients are handled through explicit charts: a projection, its tangent map
and a section. Only quotients with a global chart are covered
(``T*SO(3) -> so(3)*``, ``R^2 minus 0 -> (0, inf)``, ``SO(3) -> S^2``).
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from symred.lie import exp_so3, random_rotation
from symred.sde import (
    StratonovichSystem,
    Trajectory,
    integrate,
    state_distance,
)

__all__ = [
    "NotInvariant",
    "GroupAction",
    "QuotientChart",
    "Report",
    "plane_rotation",
    "plane_rotation_action",
    "trivial_action",
    "left_translation",
    "right_isotropy_action",
    "identity_chart",
    "coadjoint_chart",
    "radial_chart",
    "sphere_chart",
    "tangent_defect",
    "check_invariance",
    "reduce_operator",
    "degeneracy_test",
    "isotropy_test",
]


class NotInvariant(ValueError):
    """A system failed its invariance verification."""


@dataclass(frozen=True, eq=False)
class GroupAction:
    """Action of a group on the state space of a system.

    Tangent vectors are handled in the system's own representation, so for
    left-trivialized group states ``tangent`` acts on algebra vectors.

    Attributes:
        apply: ``(g, z) -> g.z``.
        tangent: ``(g, z, v) -> T_z Phi_g (v)`` for one tangent vector ``v``.
        generator: ``(xi, z) -> xi_M(z)``; optional.
        sample: ``rng -> g``.
        compose: group product.
        identity: neutral element.
    """

    apply: Callable
    tangent: Callable
    sample: Callable
    compose: Callable
    identity: object
    generator: Callable | None = None
    name: str = ""


@dataclass(frozen=True, eq=False)
class QuotientChart:
    """Global chart of an orbit space.

    Attributes:
        project: ``z -> q``.
        push: ``(z, v) -> T_z pi (v)``.
        lift_section: ``q -> z`` with ``project(lift_section(q)) == q``.
        dim: dimension of the reduced coordinates.
        labels: names of the reduced coordinates.
    """

    project: Callable
    push: Callable
    lift_section: Callable
    dim: int
    labels: tuple[str, ...] | None = None


@dataclass
class Report:
    """Outcome of a verification with its measured defect."""

    name: str
    passed: bool
    defect: float
    tolerance: float
    details: dict = field(default_factory=dict)

    def to_text(self):
        lines = [
            f"check: {self.name}",
            f"passed: {'yes' if self.passed else 'no'}",
            f"defect: {self.defect!r}",
            f"tolerance: {self.tolerance!r}",
        ]
        lines += [f"{k}: {v}" for k, v in self.details.items()]
        return "\n".join(lines) + "\n"

    def __bool__(self):
        return self.passed


# --- standard actions -------------------------------------------------------


def plane_rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def plane_rotation_action():
    """SO(2) acting on R^2 by rotation; group elements are angles."""
    return GroupAction(
        apply=lambda th, z: plane_rotation(th) @ z,
        tangent=lambda th, z, v: plane_rotation(th) @ v,
        sample=lambda rng: rng.uniform(-np.pi, np.pi),
        compose=lambda a, b: a + b,
        identity=0.0,
        generator=lambda xi, z: xi * np.array([-z[1], z[0]]),
        name="SO(2) on R^2",
    )


def trivial_action():
    return GroupAction(
        apply=lambda g, z: z,
        tangent=lambda g, z, v: v,
        sample=lambda rng: None,
        compose=lambda a, b: None,
        identity=None,
        name="trivial",
    )


def left_translation(bundle=True):
    """Lifted left translation ``g.(h, mu) = (g h, mu)`` in body coordinates.

    With ``bundle=False`` the action is plain left translation on SO(3).
    Left-trivialized tangent vectors are unchanged by the action.
    """

    def apply(g, z):
        if bundle:
            return (g @ z[0], z[1])
        return g @ z

    def generator(xi, z):
        h = z[0] if bundle else z
        v = h.T @ xi  # xi^ h = h (h^T xi)^
        return (v, np.zeros_like(z[1])) if bundle else v

    return GroupAction(
        apply=apply,
        tangent=lambda g, z, v: v,
        sample=lambda rng: random_rotation(rng),
        compose=lambda a, b: a @ b,
        identity=np.eye(3),
        generator=generator,
        name="left translation",
    )


def right_isotropy_action(p0):
    """Right multiplication by rotations about ``p0`` (isotropy group of ``p0``)."""
    p0 = np.asarray(p0, dtype=float) / np.linalg.norm(p0)
    return GroupAction(
        apply=lambda k, g: g @ k,
        tangent=lambda k, g, v: v,  # right-trivialized vectors are unchanged
        sample=lambda rng: exp_so3(rng.uniform(-np.pi, np.pi) * p0),
        compose=lambda a, b: a @ b,
        identity=np.eye(3),
        generator=lambda xi, g: g @ (np.dot(xi, p0) * p0),
        name="right SO(2) isotropy",
    )


# --- standard charts --------------------------------------------------------


def identity_chart(n):
    return QuotientChart(
        project=lambda z: np.asarray(z, dtype=float),
        push=lambda z, v: np.asarray(v, dtype=float),
        lift_section=lambda q: np.asarray(q, dtype=float),
        dim=n,
    )


def coadjoint_chart():
    """``T*SO(3) = SO(3) x so(3)* -> so(3)*`` with section ``mu -> (I, mu)``."""
    return QuotientChart(
        project=lambda z: np.asarray(z[1], dtype=float),
        push=lambda z, v: np.asarray(v[1], dtype=float),
        lift_section=lambda q: (np.eye(3), np.asarray(q, dtype=float)),
        dim=3,
        labels=("mu_x", "mu_y", "mu_z"),
    )


def radial_chart():
    """``R^2 minus 0 -> (0, inf)``, ``z -> |z|`` with section ``r -> (r, 0)``."""
    return QuotientChart(
        project=lambda z: np.array([np.hypot(z[0], z[1])]),
        push=lambda z, v: np.array([np.dot(z, v) / np.hypot(z[0], z[1])]),
        lift_section=lambda q: np.array([q[0], 0.0]),
        dim=1,
        labels=("r",),
    )


def _rotation_to(p0, q):
    """A rotation taking ``p0`` to ``q`` (both unit vectors)."""
    axis = np.cross(p0, q)
    s, c = np.linalg.norm(axis), float(np.dot(p0, q))
    if s < 1e-15:
        if c > 0:
            return np.eye(3)
        perp = np.cross(p0, [1.0, 0.0, 0.0])
        if np.linalg.norm(perp) < 1e-8:
            perp = np.cross(p0, [0.0, 1.0, 0.0])
        return exp_so3(np.pi * perp / np.linalg.norm(perp))
    return exp_so3(np.arctan2(s, c) * axis / s)


def sphere_chart(p0, side="right"):
    """``SO(3) -> S^2``, ``g -> g p0``, for right-trivialized tangent vectors."""
    p0 = np.asarray(p0, dtype=float) / np.linalg.norm(p0)
    if side != "right":
        raise NotImplementedError("only right-trivialized systems project to S^2 here")
    return QuotientChart(
        project=lambda g: g @ p0,
        push=lambda g, v: np.cross(v, g @ p0),
        lift_section=lambda q: _rotation_to(p0, np.asarray(q) / np.linalg.norm(q)),
        dim=3,
        labels=("x", "y", "z"),
    )


# --- checks -----------------------------------------------------------------


def _default_state_sampler(sys):
    n = sys.state_dim

    def sample(rng):
        if sys.kind == "vector":
            return rng.standard_normal(n)
        if sys.kind == "group":
            return random_rotation(rng)
        return (random_rotation(rng), rng.standard_normal(n))

    return sample


def _split_fields(sys, F):
    """Per-component tangent vectors of a field evaluation."""
    if sys.kind == "bundle":
        V, Y = F
        return [(V[i], Y[i]) for i in range(sys.noise_dim)]
    return [F[i] for i in range(sys.noise_dim)]


def _norm(v):
    if isinstance(v, tuple):
        return float(np.sqrt(sum(np.sum(np.square(a)) for a in v)))
    return float(np.linalg.norm(v))


def _diff(a, b):
    if isinstance(a, tuple):
        return tuple(np.asarray(x) - np.asarray(y) for x, y in zip(a, b))
    return np.asarray(a) - np.asarray(b)


def tangent_defect(sys, act, g, x, z):
    """``max_i |S(x, g.z)(e_i) - T_z Phi_g (S(x, z)(e_i))|`` at one sample."""
    moved = _split_fields(sys, sys.fields(x, act.apply(g, z)))
    here = _split_fields(sys, sys.fields(x, z))
    return max(_norm(_diff(m, act.tangent(g, z, v))) for m, v in zip(moved, here))


def check_invariance(
    sys, act, samples=256, seed=0, *, tol=1e-10, state_sampler=None, noise_sampler=None
):
    """Sample the invariance condition ``S(x, g.z) = T_z Phi_g o S(x, z)``.

    Group elements come from ``act.sample``, noise positions from a standard
    Gaussian and states from ``state_sampler`` (Gaussian vectors and random
    rotations by default). The report passes iff the worst defect is at most
    ``tol`` and records the offending sample.
    """
    rng = np.random.default_rng(seed)
    state_sampler = state_sampler or _default_state_sampler(sys)
    noise_sampler = noise_sampler or (lambda r: r.standard_normal(sys.noise_dim))
    worst, where = 0.0, None
    for _ in range(samples):
        g = act.sample(rng)
        x = noise_sampler(rng)
        z = state_sampler(rng)
        d = tangent_defect(sys, act, g, x, z)
        if d > worst or where is None:
            worst, where = d, (g, x, z)
    details = {"samples": samples, "action": act.name}
    if where is not None:
        details["worst_state"] = np.array2string(
            np.asarray(where[2][1] if isinstance(where[2], tuple) else where[2]),
            precision=6,
        )
    return Report("invariance", bool(worst <= tol), float(worst), tol, details)


def reduce_operator(
    sys,
    act,
    chart,
    *,
    verify=True,
    samples=64,
    seed=0,
    tol=1e-10,
    state_sampler=None,
    reduced_sampler=None,
):
    """Push an invariant operator down to the orbit space through ``chart``.

    The reduced fields are ``q -> T pi (S(x, lift_section(q)))``. With
    ``verify`` the invariance is re-checked on samples and the fields are
    recomputed at a second point of each sampled orbit; a mismatch raises.

    Raises:
        NotInvariant: if verification fails.
    """
    if verify:
        rep = check_invariance(
            sys, act, samples, seed, tol=tol, state_sampler=state_sampler
        )
        if not rep.passed:
            raise NotInvariant(f"invariance defect {rep.defect:.3g} exceeds {tol:g}")

    def fields(x, q):
        z = chart.lift_section(q)
        return np.array([chart.push(z, v) for v in _split_fields(sys, sys.fields(x, z))])

    reduced = StratonovichSystem(
        fields,
        sys.noise_dim,
        kind="vector",
        state_dim=chart.dim,
        labels=chart.labels,
        name=f"{sys.name} reduced" if sys.name else "reduced",
    )

    if verify:
        rng = np.random.default_rng(seed + 1)
        if reduced_sampler is None:
            reduced_sampler = lambda r: chart.project(  # noqa: E731
                (state_sampler or _default_state_sampler(sys))(r)
            )
        for _ in range(samples):
            q = reduced_sampler(rng)
            x = rng.standard_normal(sys.noise_dim)
            z = act.apply(act.sample(rng), chart.lift_section(q))
            other = np.array(
                [chart.push(z, v) for v in _split_fields(sys, sys.fields(x, z))]
            )
            d = float(np.max(np.abs(other - fields(x, q))))
            if d > max(tol, 1e-9 * (1.0 + float(np.max(np.abs(other))))):
                raise NotInvariant(f"reduced field depends on the section (defect {d:.3g})")
    return reduced


def _act_on_trajectory(act, g, tr):
    return Trajectory.from_states(
        tr.times, [act.apply(g, tr.state(k)) for k in range(len(tr))], tr.kind, tr.labels
    )


def degeneracy_test(sys, act, g, z0, noise, *, tol=1e-9, integrator=integrate):
    """Check that ``g`` maps the solution from ``z0`` onto the solution from ``g.z0``.

    Both solutions are driven by the same noise path; the report carries
    ``sup_t dist(g.Gamma_t, Gamma'_t)``.
    """
    a = integrator(sys, noise, z0)
    b = integrator(sys, noise, act.apply(g, z0))
    moved = _act_on_trajectory(act, g, a)
    d = float(np.max(state_distance(moved, b)))
    return Report("degeneracy", bool(d <= tol), d, tol, {"steps": noise.steps})


def isotropy_test(
    sys,
    act,
    z0,
    noise,
    stratum_distance,
    *,
    tol=1e-12,
    boundary_distance=None,
    integrator=integrate,
):
    """Measure how far a solution started on an isotropy stratum drifts off it.

    Args:
        stratum_distance: ``z -> distance from z to the stratum``.
        boundary_distance: optional ``z -> distance to the stratum's boundary``;
            when given, the test also requires it to stay positive.
        integrator: ``(sys, noise, z0) -> Trajectory``.
    """
    tr = integrator(sys, noise, z0)
    states = [tr.state(k) for k in range(len(tr))]
    drift = float(max(stratum_distance(z) for z in states))
    details = {"steps": noise.steps}
    passed = drift <= tol
    if boundary_distance is not None:
        margin = float(min(boundary_distance(z) for z in states))
        details["boundary_margin"] = repr(margin)
        passed = passed and margin > 0.0
    return Report("isotropy", bool(passed), drift, tol, details)
