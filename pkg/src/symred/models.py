"""Worked models: stochastic rigid bodies, collective motion, Brownian motion on S^2.

Every Hamiltonian model is returned as a :class:`HamiltonianModel`, which
unpacks as ``full, reduced, spec`` and knows how to draw its driving noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from symred.hamiltonian import (
    HamiltonianSpec,
    casimir_monitor,
    full_system,
    integrate_orbit,
    noether_monitor,
    reduced_system,
    spatial_momentum,
    strong_conservation_check,
)
from symred.lie import cross, exp_so3, hat, inertia_map, random_rotation, reorthonormalize
from symred.reconstruction import reconstruct
from symred.sde import (
    NoisePath,
    StratonovichSystem,
    Trajectory,
    brownian_path,
    integrate_ensemble,
    integrate_group,
    integrate_heun,
    path_rng,
    state_distance,
    time_path,
)
from symred.symmetry import (
    NotInvariant,
    Report,
    check_invariance,
    coadjoint_chart,
    degeneracy_test,
    left_translation,
    reduce_operator,
    right_isotropy_action,
    sphere_chart,
)

__all__ = [
    "BadConfig",
    "ModelConfig",
    "HamiltonianModel",
    "SphereModel",
    "MODELS",
    "build",
    "rigid_impact",
    "loose_body",
    "collective",
    "sphere_bm",
    "skew_solve",
    "skew_demo",
    "full_solve",
    "reduced_solve",
    "routes",
    "euler_top_rk4",
    "rigid_body_rk4",
    "liao_drift",
    "group_drift",
    "liao_drift_defect",
    "symmetric_basis",
    "legendre",
    "sphere_moments",
    "decay_rate",
    "reduction_cross_check",
    "verify_suite",
]

DEFAULT_LAMBDA = (1.0, 0.5, 1.0 / 3.0)


class BadConfig(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelConfig:
    """Parameters shared by all models.

    Attributes:
        name: model name, one of :data:`MODELS`.
        lam: inverse inertia (3x3 or its diagonal).
        sigma: amplitude of the impact / collective noise.
        epsilon: amplitude of the inertia perturbation (loose body).
        T, steps, seed: grid and noise seed.
        g0: initial attitude (rotation matrix).
        mu0: initial body angular momentum.
        p0: base point on the unit sphere (sphere model).
    """

    name: str = "rigid_impact"
    lam: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_LAMBDA))
    sigma: float = 1.0
    epsilon: float = 0.1
    T: float = 1.0
    steps: int = 1000
    seed: int = 0
    g0: np.ndarray = field(default_factory=lambda: np.eye(3))
    mu0: np.ndarray = field(default_factory=lambda: np.ones(3))
    p0: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        if self.name not in MODELS:
            raise BadConfig(f"unknown model {self.name!r}; choose from {sorted(MODELS)}")
        try:
            lam = inertia_map(self.lam)
        except ValueError as exc:
            raise BadConfig(str(exc)) from None
        if not self.T > 0:
            raise BadConfig("T must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise BadConfig("steps must be a positive integer")
        if self.sigma < 0 or self.epsilon < 0:
            raise BadConfig("noise amplitudes must be non-negative")
        g0 = np.asarray(self.g0, dtype=float)
        if g0.shape == (3,):
            g0 = exp_so3(g0)
        if (
            g0.shape != (3, 3)
            or np.linalg.norm(g0.T @ g0 - np.eye(3)) > 1e-10
            or np.linalg.det(g0) <= 0
        ):
            raise BadConfig("g0 must be a rotation (matrix or rotation vector)")
        mu0 = np.asarray(self.mu0, dtype=float)
        p0 = np.asarray(self.p0, dtype=float)
        if mu0.shape != (3,) or not np.all(np.isfinite(mu0)):
            raise BadConfig("mu0 must be a finite 3-vector")
        if p0.shape != (3,) or abs(np.linalg.norm(p0) - 1.0) > 1e-12:
            raise BadConfig("p0 must be a unit 3-vector")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "g0", g0)
        object.__setattr__(self, "mu0", mu0)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "steps", int(self.steps))

    def replace(self, **kw):
        return replace(self, **kw)

    @property
    def z0(self):
        return (self.g0, self.mu0)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """A Hamiltonian model with its full and reduced operators and noise recipe."""

    cfg: ModelConfig
    spec: HamiltonianSpec
    full: StratonovichSystem
    reduced: StratonovichSystem
    brownian_dim: int
    scale: float

    def __iter__(self):
        return iter((self.full, self.reduced, self.spec))

    def noise(self, seed=None, steps=None, rng=None):
        """Driving path: time plus ``brownian_dim`` scaled Brownian components."""
        steps = self.cfg.steps if steps is None else steps
        seed = self.cfg.seed if seed is None else seed
        if self.brownian_dim == 0:
            return time_path(self.cfg.T, steps)
        return brownian_path(
            self.brownian_dim, self.cfg.T, steps, seed, rng=rng, scale=self.scale
        )

    def energy(self, mu):
        return self.spec.h[0](mu)


def _kinetic(lam):
    """Kinetic energy, its gradient and its exact coadjoint field.

    ``mu x lam mu = mu x (lam - c I) mu`` for any ``c``; with ``c = lam[0, 0]``
    the Euler drift of a spherical body is exactly zero.
    """
    dev = lam - lam[0, 0] * np.eye(3)
    h0 = lambda mu: 0.5 * np.einsum("...i,ij,...j->...", mu, lam, mu)  # noqa: E731
    dh0 = lambda mu: np.einsum("ij,...j->...i", lam, mu)  # noqa: E731
    ad0 = lambda mu: cross(mu, np.einsum("ij,...j->...i", dev, mu))  # noqa: E731
    return h0, dh0, ad0


def _hamiltonian_model(cfg, h, dh, labels, brownian_dim, scale, ad=()):
    spec = HamiltonianSpec(tuple(h), tuple(dh), tuple(labels), cfg.name, tuple(ad))
    return HamiltonianModel(
        cfg, spec, full_system(spec), reduced_system(spec), brownian_dim, scale
    )


def rigid_impact(cfg):
    """Free rigid body under random impacts on the body angular momentum.

    ``h = (h0, J_R)`` with ``h0 = <mu, lam mu>/2`` and ``J_R`` paired with the
    standard basis, driven by ``(t, sigma W)`` with ``W`` three-dimensional.
    """
    h0, dh0, ad0 = _kinetic(cfg.lam)
    h, dh = [h0], [dh0]
    for e in np.eye(3):
        h.append(lambda mu, e=e: np.einsum("...i,i->...", mu, e))
        dh.append(lambda mu, e=e: e)
    labels = ("h0", "jr_x", "jr_y", "jr_z")
    return _hamiltonian_model(cfg, h, dh, labels, 3, cfg.sigma, (ad0, None, None, None))


def symmetric_basis():
    """Orthonormal basis of symmetric 3x3 matrices (Frobenius inner product)."""
    out = [np.outer(e, e) for e in np.eye(3)]
    for i, j in ((0, 1), (0, 2), (1, 2)):
        m = np.zeros((3, 3))
        m[i, j] = m[j, i] = 1.0 / math.sqrt(2.0)
        out.append(m)
    return np.array(out)


def loose_body(cfg):
    """Rigid body with a randomly perturbed inertia tensor.

    Noise ``X = lam t + epsilon A_t`` with ``A`` a Brownian motion in the
    symmetric matrices, expanded on :func:`symmetric_basis`; the component for
    basis element ``E`` is ``h_E = <mu, E mu>/2``.
    """
    h0, dh0, ad0 = _kinetic(cfg.lam)
    h, dh, labels = [h0], [dh0], ["h0"]
    for a, E in enumerate(symmetric_basis()):
        h.append(lambda mu, E=E: 0.5 * np.einsum("...i,ij,...j->...", mu, E, mu))
        dh.append(lambda mu, E=E: np.einsum("ij,...j->...i", E, mu))
        labels.append(f"inertia_{a}")
    return _hamiltonian_model(cfg, h, dh, labels, 6, cfg.epsilon, (ad0,) + (None,) * 6)


def collective(cfg):
    """Rigid body perturbed by the collective Hamiltonian ``f(J_R)``, ``f = |mu|^2/2``.

    ``f`` is Ad*-invariant, so its reduced field ``mu x mu`` vanishes and the
    reduced dynamics is the deterministic Euler top.
    """
    h0, dh0, ad0 = _kinetic(cfg.lam)
    f = lambda mu: 0.5 * np.einsum("...i,...i->...", mu, mu)  # noqa: E731
    df = lambda mu: np.asarray(mu, dtype=float)  # noqa: E731
    zero = lambda mu: np.zeros_like(np.asarray(mu, dtype=float))  # noqa: E731  mu x mu
    return _hamiltonian_model(
        cfg, [h0, f], [dh0, df], ("h0", "collective"), 1, cfg.sigma, (ad0, zero)
    )


@dataclass(frozen=True, eq=False)
class SphereModel:
    """Right-invariant Brownian motion on SO(3) and its projection ``g -> g p0``."""

    cfg: ModelConfig
    system: StratonovichSystem
    p0: np.ndarray

    def __iter__(self):
        return iter((self.system, self.project))

    @property
    def chart(self):
        return sphere_chart(self.p0)

    @property
    def isotropy(self):
        return right_isotropy_action(self.p0)

    def noise(self, seed=None, steps=None, rng=None):
        steps = self.cfg.steps if steps is None else steps
        seed = self.cfg.seed if seed is None else seed
        return brownian_path(3, self.cfg.T, steps, seed, rng=rng, scale=self.cfg.sigma)

    def project(self, traj):
        """Sphere trajectory ``Gamma_t = g_t p0`` (states stacked on the last axis)."""
        pts = np.einsum("...ij,j->...i", traj.group, self.p0)
        return Trajectory(traj.times, None, pts, {}, ("x", "y", "z"))


def sphere_bm(cfg):
    """Brownian motion on S^2 as the projection of a right-invariant SDE on SO(3).

    All three so(3) generators are driven by unit Brownian motions
    ``dg = sum_i hat(e_i) g dB^i``; the projected process then has generator
    ``(1/2) Laplacian`` on the unit sphere.
    """
    fields_single = np.vstack([np.zeros(3), np.eye(3)])

    def fields(x, g):
        return np.broadcast_to(fields_single, np.shape(g)[:-2] + (4, 3))

    sys = StratonovichSystem(
        fields, 4, kind="group", side="right", vectorized=True, name="sphere_bm"
    )
    return SphereModel(cfg, sys, cfg.p0)


def _skew_placeholder(cfg):
    return rigid_impact(cfg)


MODELS = {
    "rigid_impact": rigid_impact,
    "loose_body": loose_body,
    "collective": collective,
    "sphere_bm": sphere_bm,
    "skew_demo": _skew_placeholder,
}


def build(cfg):
    return MODELS[cfg.name](cfg)


# --- solves and routes ------------------------------------------------------


def full_solve(model, noise, z0=None, **kw):
    """Direct solve of the full system on SO(3) x so(3)*."""
    return integrate_group(model.full, noise, model.cfg.z0 if z0 is None else z0, **kw)


def reduced_solve(model, noise, mu0=None, scheme="heun"):
    """Solve the Lie-Poisson equations with ``"heun"`` or ``"orbit"``."""
    mu0 = model.cfg.mu0 if mu0 is None else mu0
    if scheme == "heun":
        return integrate_heun(model.reduced, noise, mu0)
    if scheme == "orbit":
        return integrate_orbit(model.spec, noise, mu0)
    raise ValueError(f"unknown reduced scheme {scheme!r}")


def _fiber_system(spec, g0):
    """Fiber factor ``dg = sum_i g hat(Ad_g0 dh_i(mu)) dX^i`` on SO(3).

    The base trajectory enters through the noise position (components past
    ``r``); those components carry no field.
    """
    r = spec.r
    g0 = np.asarray(g0, dtype=float)

    def fields(x, g):
        x = np.asarray(x)
        V = np.einsum("ij,...mj->...mi", g0, spec.gradients(x[..., r:]))
        return np.concatenate([V, np.zeros(V.shape[:-2] + (3, 3))], axis=-2)

    return StratonovichSystem(fields, r + 3, kind="group", side="left", name="fiber")


def skew_solve(model, noise, z0=None, base=None, **kw):
    """Solve the full system through its skew-product factorization.

    With the global section ``mu -> (e, mu)`` the base factor is the
    Lie-Poisson operator, solved first unless given as ``base``. The fiber
    factor is solved from the identity with the base path appended to the
    noise, and the pair is mapped by ``F(g, mu) = (g g0, mu)``.
    """
    g0, mu0 = model.cfg.z0 if z0 is None else z0
    if base is None:
        base = integrate_heun(model.reduced, noise, mu0)
    aug = NoisePath(
        noise.times,
        np.hstack([noise.values, base.vector]),
        noise.labels + ("user",) * 3,
    )
    fiber = integrate_group(_fiber_system(model.spec, g0), aug, np.eye(3), **kw)
    group = fiber.group @ np.asarray(g0, dtype=float)
    return Trajectory(noise.times, group, base.vector.copy(), {}, base.labels)


def routes(model, noise, z0=None):
    """Full trajectory by three routes: direct, reconstruction, skew product."""
    z0 = model.cfg.z0 if z0 is None else z0
    direct = full_solve(model, noise, z0)
    base = integrate_heun(model.reduced, noise, z0[1])
    recon = reconstruct(model.spec, base, noise, z0)
    skew = skew_solve(model, noise, z0, base=base)
    return {"direct": direct, "reconstruct": recon, "skew": skew}


def skew_demo(cfg, noise=None, tol=1e-2):
    """Check that the skew-product factorization reproduces the direct solution.

    Also checks that the base factor does not depend on the group point.
    """
    model = rigid_impact(cfg) if cfg.name in ("skew_demo", "rigid_impact") else build(cfg)
    noise = model.noise() if noise is None else noise
    direct = full_solve(model, noise)
    skew = skew_solve(model, noise)
    dist = float(np.max(state_distance(direct, skew)))
    rng = np.random.default_rng(cfg.seed)
    base_defect = 0.0
    chart = coadjoint_chart()
    for _ in range(16):
        mu = rng.standard_normal(3)
        x = rng.standard_normal(model.full.noise_dim)
        a = chart.push(None, tuple(model.full.fields(x, (np.eye(3), mu))))
        g = exp_so3(rng.standard_normal(3))
        b = chart.push(None, tuple(model.full.fields(x, (g, mu))))
        base_defect = max(base_defect, float(np.max(np.abs(a - b))))
    passed = dist <= tol and base_defect == 0.0
    return Report(
        "skew product",
        bool(passed),
        dist,
        tol,
        {"dt": repr(float(noise.times[1] - noise.times[0])), "base_factor_defect": repr(base_defect)},
    )


# --- deterministic oracles --------------------------------------------------


def euler_top_rk4(lam, mu0, T, dt):
    """Classical RK4 for ``mu' = mu x lam mu``; returns ``(times, mu)``."""
    lam = np.asarray(lam, dtype=float)
    n = int(round(T / dt))
    h = T / n
    f = lambda m: np.cross(m, lam @ m)  # noqa: E731
    mu = np.array(mu0, dtype=float)
    out = np.empty((n + 1, 3))
    out[0] = mu
    for k in range(n):
        k1 = f(mu)
        k2 = f(mu + 0.5 * h * k1)
        k3 = f(mu + 0.5 * h * k2)
        k4 = f(mu + h * k3)
        mu = mu + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = mu
    return np.linspace(0.0, T, n + 1), out


def rigid_body_rk4(lam, g0, mu0, T, dt):
    """RK4 for ``(A', mu') = (A hat(lam mu), mu x lam mu)``; returns final ``(A, mu)``."""
    lam = np.asarray(lam, dtype=float)
    n = int(round(T / dt))
    h = T / n

    def f(A, mu):
        w = lam @ mu
        return A @ hat(w), np.cross(mu, w)

    A, mu = np.array(g0, dtype=float), np.array(mu0, dtype=float)
    for _ in range(n):
        a1, m1 = f(A, mu)
        a2, m2 = f(A + 0.5 * h * a1, mu + 0.5 * h * m1)
        a3, m3 = f(A + 0.5 * h * a2, mu + 0.5 * h * m2)
        a4, m4 = f(A + h * a3, mu + h * m3)
        A = A + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        mu = mu + h / 6.0 * (m1 + 2 * m2 + 2 * m3 + m4)
    return reorthonormalize(A), mu


# --- Liao comparison --------------------------------------------------------


def liao_drift(A, alpha, lam):
    """Drift ``A hat(lam Ad*_A alpha)`` of the configuration-space impact model."""
    return A @ hat(np.einsum("ij,...j->...i", lam, np.einsum("...ji,...j->...i", A, alpha)))


def group_drift(A, mu, lam):
    """Drift ``A hat(lam mu)`` of the attitude equation of the Hamiltonian model."""
    return A @ hat(np.einsum("ij,...j->...i", lam, mu))


def liao_drift_defect(traj, lam):
    """Per-step spectral-norm gap between the two drifts, with ``alpha = J_L(0)``.

    Returns ``(gap, noether)`` where ``noether`` is the spatial momentum drift;
    analytically ``gap <= |lam|_2 * noether``.
    """
    jl = spatial_momentum(traj)
    alpha = jl[0]
    gap = np.linalg.norm(
        liao_drift(traj.group, alpha, lam) - group_drift(traj.group, traj.vector, lam),
        ord=2,
        axis=(-2, -1),
    )
    return gap, np.linalg.norm(jl - alpha, axis=-1)


# --- sphere ensemble --------------------------------------------------------


def legendre(l, c):
    if l == 1:
        return c
    if l == 2:
        return 1.5 * c * c - 0.5
    raise ValueError("only l = 1, 2 are used")


def sphere_moments(model, paths, *, seed=None, chunk=1000, ls=(1, 2), identical=False):
    """Monte Carlo means and standard errors of ``P_l(<Gamma_t, Gamma_0>)``.

    Path ``i`` is driven by the stream ``(seed, i)`` (or all by ``(seed, 0)``
    when ``identical``). Returns ``(times, mean, stderr)`` with arrays of
    shape ``(len(ls), K+1)``.
    """
    seed = model.cfg.seed if seed is None else seed
    s1 = s2 = None
    for start in range(0, paths, chunk):
        idx = range(start, min(start + chunk, paths))
        noises = [model.noise(rng=path_rng(seed, 0 if identical else i)) for i in idx]
        tr = integrate_ensemble(model.system, noises, np.eye(3))
        c = np.einsum("...i,i->...", model.project(tr).vector, model.p0)
        vals = np.stack([legendre(l, c) for l in ls])  # (L, n, K+1)
        a, b = vals.sum(axis=1), (vals * vals).sum(axis=1)
        s1 = a if s1 is None else s1 + a
        s2 = b if s2 is None else s2 + b
        times = tr.times
    mean = s1 / paths
    var = np.maximum(s2 / paths - mean * mean, 0.0) * paths / (paths - 1)
    return times, mean, np.sqrt(var / paths)


def decay_rate(model, paths, ls=(1, 2), seed=0, chunk=2000):
    """Fit ``-d/dt log E[P_l]`` over the model's grid (use a short horizon)."""
    times, mean, _ = sphere_moments(model, paths, seed=seed, chunk=chunk, ls=ls)
    return np.array([-np.polyfit(times[1:], np.log(m[1:]), 1)[0] for m in mean])


# --- verification suites ----------------------------------------------------


def _report(name, defect, tol, **details):
    return Report(name, bool(defect <= tol), float(defect), tol, details)


def reduction_cross_check(model, samples=1000, seed=0):
    """Compare the reduced fields with the pushed-forward full fields."""
    pushed = reduce_operator(
        model.full, left_translation(), coadjoint_chart(), samples=64, seed=seed
    )
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        mu = rng.standard_normal(3) * 2.0
        x = rng.standard_normal(model.full.noise_dim)
        worst = max(worst, float(np.max(np.abs(pushed.fields(x, mu) - model.reduced.fields(x, mu)))))
    return _report("reduced operator cross-check", worst, 1e-12, samples=samples)


def _hamiltonian_suite(model):
    cfg = model.cfg
    noise = model.noise()
    rng = np.random.default_rng(cfg.seed)
    out = [
        model.spec.verify(),
        check_invariance(model.full, left_translation()),
        reduction_cross_check(model),
        strong_conservation_check(model.spec, lambda mu: 0.5 * float(np.dot(mu, mu))),
    ]
    rep = degeneracy_test(model.full, left_translation(), random_rotation(rng), cfg.z0, noise)
    out.append(rep)
    orbit = integrate_orbit(model.spec, noise, cfg.mu0)
    c0 = float(np.dot(cfg.mu0, cfg.mu0))
    out.append(
        _report(
            "casimir (orbit scheme)",
            float(np.max(np.abs(casimir_monitor(orbit)))) / c0,
            1e-12,
            steps=noise.steps,
        )
    )
    r = routes(model, noise)
    d1 = float(np.max(state_distance(r["direct"], r["reconstruct"])))
    d2 = float(np.max(state_distance(r["direct"], r["skew"])))
    out.append(_report("reconstruction vs direct", d1, 1e-2, dt=repr(noise.times[1])))
    out.append(_report("skew product vs direct", d2, 1e-2, dt=repr(noise.times[1])))
    det = build(cfg.replace(sigma=0.0, epsilon=0.0, T=10.0, steps=10000))
    tr = full_solve(det, det.noise())
    out.append(_report("noether (deterministic limit)", float(noether_monitor(tr).max()), 1e-6, T=10.0))
    gap, noe = liao_drift_defect(r["direct"], cfg.lam)
    out.append(_report("liao drift coincidence", float(np.max(gap - noe)), 1e-8))
    if cfg.name == "collective":
        a = reduced_solve(model, model.noise(seed=cfg.seed + 1))
        b = reduced_solve(model, model.noise(seed=cfg.seed + 2))
        out.append(
            _report("collective reduced determinism", float(np.max(np.abs(a.vector - b.vector))), 0.0)
        )
    if cfg.name == "skew_demo":
        out.append(skew_demo(cfg, noise))
    return out


def _sphere_suite(model, paths=2000):
    cfg = model.cfg
    out = [check_invariance(model.system, model.isotropy)]
    try:
        reduce_operator(model.system, model.isotropy, model.chart)
        out.append(_report("sphere projection well defined", 0.0, 0.0))
    except NotInvariant as exc:
        out.append(Report("sphere projection well defined", False, math.inf, 0.0, {"error": str(exc)}))
    tr = integrate_group(model.system, model.noise(), cfg.g0)
    pts = model.project(tr).vector
    out.append(_report("sphere norm", float(np.max(np.abs(np.linalg.norm(pts, axis=-1) - 1.0))), 1e-9))
    short = sphere_bm(cfg.replace(T=0.5, steps=500))
    times, mean, se = sphere_moments(short, paths, seed=cfg.seed)
    worst = 0.0
    for i, l in enumerate((1, 2)):
        z = np.abs(mean[i, 1:] - np.exp(-0.5 * l * (l + 1) * times[1:])) / se[i, 1:]
        worst = max(worst, float(np.max(z[[249, 499]])))
    out.append(_report("sphere Legendre decay (standard errors)", worst, 3.0, paths=paths))
    return out


def verify_suite(cfg):
    """Run the structural checks that apply to ``cfg``'s model."""
    model = build(cfg)
    if isinstance(model, SphereModel):
        return _sphere_suite(model)
    return _hamiltonian_suite(model)
