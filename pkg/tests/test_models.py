import numpy as np
import pytest

from symred.hamiltonian import casimir_monitor, integrate_orbit, noether_monitor
from symred.lie import exp_so3, hat
from symred.models import (
    MODELS,
    BadConfig,
    HamiltonianModel,
    ModelConfig,
    SphereModel,
    _hamiltonian_model,
    build,
    collective,
    decay_rate,
    euler_top_rk4,
    full_solve,
    liao_drift,
    liao_drift_defect,
    loose_body,
    reduced_solve,
    rigid_impact,
    routes,
    skew_demo,
    skew_solve,
    sphere_bm,
    symmetric_basis,
    verify_suite,
)
from symred.sde import NoisePath, coarsen, convergence_order, integrate_group, state_distance, time_path

LAM = np.diag([1.0, 0.5, 1.0 / 3.0])
# Euler top mu(1) from mu0 = (1, 1, 1): 30-digit Taylor-series ODE solution
EULER_TOP_T1 = np.array([0.852264317956816008, 1.447267124393562982, 0.423158838956709398])


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            {"name": "pendulum"},
            {"T": 0.0},
            {"steps": 0},
            {"steps": 2.5},
            {"lam": np.diag([1.0, -1.0, 1.0])},
            {"sigma": -1.0},
            {"p0": [0.0, 0.0, 2.0]},
            {"mu0": [1.0, np.inf, 0.0]},
            {"g0": np.diag([1.0, 1.0, -1.0])},
        ],
    )
    def test_bad(self, kw):
        with pytest.raises(BadConfig):
            ModelConfig(**kw)

    def test_rotation_vector_g0(self):
        cfg = ModelConfig(g0=[0.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(cfg.g0, exp_so3([0.0, 0.0, np.pi / 2]))

    def test_registry(self):
        assert set(MODELS) == {"rigid_impact", "loose_body", "collective", "sphere_bm", "skew_demo"}
        for name in MODELS:
            m = build(ModelConfig(name=name))
            assert isinstance(m, SphereModel if name == "sphere_bm" else HamiltonianModel)


class TestRigidImpact:
    def test_unpacks(self, rigid):
        full, reduced, spec = rigid
        assert full.kind == "bundle" and reduced.kind == "vector" and spec.r == 4

    def test_noise_scaled(self):
        a = rigid_impact(ModelConfig()).noise(seed=1)
        b = rigid_impact(ModelConfig(sigma=0.5)).noise(seed=1)
        np.testing.assert_allclose(b.increments[:, 1:], 0.5 * a.increments[:, 1:])
        assert a.labels == ("time", "brownian", "brownian", "brownian")

    def test_rk4_oracle(self):
        _, mu = euler_top_rk4(LAM, np.ones(3), 1.0, 1e-5)
        np.testing.assert_allclose(mu[-1], EULER_TOP_T1, atol=1e-12)
        energy = 0.5 * np.einsum("ki,ij,kj->k", mu, LAM, mu)
        assert np.ptp(energy) <= 1e-10
        assert np.ptp(np.sum(mu * mu, axis=1)) <= 1e-10

    def test_deterministic_limit(self):
        model = rigid_impact(ModelConfig(sigma=0.0))
        for scheme in ("heun", "orbit"):
            mu = reduced_solve(model, model.noise(), scheme=scheme).vector[-1]
            np.testing.assert_allclose(mu, EULER_TOP_T1, atol=1e-6)

    def test_spherical_body(self, rng):
        model = rigid_impact(ModelConfig(lam=2.5 * np.eye(3)))
        mu = rng.standard_normal(3)
        assert not model.reduced.fields(None, mu)[0].any()
        assert not model.full.fields(None, (np.eye(3), mu))[1][0].any()
        tr = reduced_solve(model, model.noise(seed=3), scheme="orbit")
        assert np.abs(casimir_monitor(tr)).max() <= 1e-12 * 3.0

    def test_noether(self, rigid, rigid_noise):
        drift = [noether_monitor(full_solve(rigid, coarsen(rigid_noise, f))).max() for f in (10, 1)]
        assert drift[1] < drift[0] < 0.1

    def test_unknown_scheme(self, rigid, rigid_noise):
        with pytest.raises(ValueError):
            reduced_solve(rigid, rigid_noise, scheme="euler")


class TestLooseBody:
    def test_basis_orthonormal(self):
        B = symmetric_basis()
        gram = np.einsum("aij,bij->ab", B, B)
        np.testing.assert_allclose(gram, np.eye(6), atol=1e-15)
        assert all(np.array_equal(E, E.T) for E in B)

    def test_zero_epsilon(self):
        model = loose_body(ModelConfig(name="loose_body", epsilon=0.0))
        mu = reduced_solve(model, model.noise(), scheme="orbit").vector[-1]
        np.testing.assert_allclose(mu, EULER_TOP_T1, atol=1e-6)

    def test_fields_orthogonal(self, rng):
        model = loose_body(ModelConfig(name="loose_body"))
        for _ in range(20):
            mu = rng.standard_normal(3)
            assert np.abs(model.reduced.fields(None, mu) @ mu).max() <= 1e-14

    def test_basis_field(self):
        model = loose_body(ModelConfig(name="loose_body"))
        f = model.reduced.fields(None, np.array([0.0, 1.0, 1.0]))
        np.testing.assert_array_equal(f[1], np.zeros(3))

    def test_noise_dimension(self):
        model = loose_body(ModelConfig(name="loose_body", epsilon=0.2))
        assert model.noise().dim == 7 and model.full.noise_dim == 7


class TestCollective:
    model = collective(ModelConfig(name="collective"))

    def test_reduced_seed_independent(self):
        a = reduced_solve(self.model, self.model.noise(seed=1))
        b = reduced_solve(self.model, self.model.noise(seed=2))
        np.testing.assert_array_equal(a.vector, b.vector)

    def test_full_group_differs(self):
        a = full_solve(self.model, self.model.noise(seed=1))
        b = full_solve(self.model, self.model.noise(seed=2))
        np.testing.assert_array_equal(a.vector, b.vector)
        assert np.max(np.abs(a.group - b.group)) > 1e-3

    def test_noise_acts_on_group_only(self, rng):
        mu = rng.standard_normal(3)
        V, F = self.model.full.fields(None, (np.eye(3), mu))
        np.testing.assert_array_equal(V[1], mu)
        assert not F[1].any()


class TestSphere:
    model = sphere_bm(ModelConfig(name="sphere_bm", p0=[0.0, 0.6, 0.8]))

    def test_zero_noise(self):
        times = np.linspace(0.0, 1.0, 51)
        still = NoisePath(times, np.column_stack([times, np.zeros((51, 3))]), ("time",) + ("brownian",) * 3)
        tr = integrate_group(self.model.system, still, np.eye(3))
        pts = self.model.project(tr).vector
        np.testing.assert_array_equal(pts, np.broadcast_to(self.model.p0, pts.shape))

    def test_unit_norm(self):
        tr = integrate_group(self.model.system, self.model.noise(seed=2), np.eye(3))
        assert np.abs(np.linalg.norm(self.model.project(tr).vector, axis=1) - 1.0).max() <= 1e-12

    def test_noise_dimension_checked(self):
        with pytest.raises(ValueError):
            integrate_group(self.model.system, time_path(1.0, 5), np.eye(3))

    def test_unpacks(self):
        system, project = self.model
        assert system.side == "right" and callable(project)

    def test_decay_rate_calibration(self):
        # the normalization is fixed by this brute-force fit, not assumed
        short = sphere_bm(ModelConfig(name="sphere_bm", T=0.05, steps=50))
        rates = decay_rate(short, 10**5, seed=1, chunk=5000)
        np.testing.assert_allclose(rates, [1.0, 3.0], rtol=0.05)


class TestRoutes:
    def test_zero_hamiltonian(self):
        cfg = ModelConfig(g0=[0.2, 0.1, 0.0])
        zero = _hamiltonian_model(cfg, [lambda mu: 0.0] * 2, [lambda mu: np.zeros(3)] * 2, ("a", "b"), 1, 1.0)
        noise = zero.noise()
        for tr in routes(zero, noise).values():
            # periodic reorthonormalization may move g0 by rounding
            np.testing.assert_allclose(tr.group, np.broadcast_to(cfg.g0, tr.group.shape), atol=1e-14)
            np.testing.assert_array_equal(tr.vector, np.broadcast_to(cfg.mu0, tr.vector.shape))

    def test_skew_demo_report(self):
        rep = skew_demo(ModelConfig(name="skew_demo"))
        assert rep.passed and rep.defect <= 1e-2
        assert float(rep.details["base_factor_defect"]) == 0.0

    def test_skew_with_rotated_start(self):
        model = rigid_impact(ModelConfig(g0=[0.4, -0.3, 1.0], mu0=[0.5, -1.0, 2.0]))
        noise = model.noise(seed=6)
        r = routes(model, noise)
        assert np.max(state_distance(r["direct"], r["skew"])) <= 1e-2
        assert np.max(state_distance(r["reconstruct"], r["skew"])) <= 1e-12

    def test_skew_converges(self, rigid):
        fine = rigid.noise(seed=12, steps=10000)
        errs = []
        for f in (100, 10, 1):
            p = coarsen(fine, f)
            errs.append((1.0 / p.steps, float(np.max(state_distance(full_solve(rigid, p), skew_solve(rigid, p))))))
        assert convergence_order(errs) >= 0.9


class TestLiao:
    def test_drift_at_start(self, rigid, rng):
        A = exp_so3(rng.standard_normal(3))
        mu = rng.standard_normal(3)
        np.testing.assert_allclose(liao_drift(A, A @ mu, LAM), A @ hat(LAM @ mu), atol=1e-14)

    def test_bounded_by_noether(self, rigid, rigid_noise):
        gap, noether = liao_drift_defect(full_solve(rigid, rigid_noise), LAM)
        assert np.all(gap <= 1e-8 + noether)
        assert gap[0] == 0.0


def test_orbit_scheme_for_every_model():
    for name in ("rigid_impact", "loose_body", "collective", "skew_demo"):
        model = build(ModelConfig(name=name, seed=4))
        tr = integrate_orbit(model.spec, model.noise(), model.cfg.mu0)
        assert np.abs(casimir_monitor(tr)).max() <= 1e-12 * 3.0


@pytest.mark.parametrize("name", sorted(MODELS))
def test_verify_suite_passes(name):
    reports = verify_suite(ModelConfig(name=name))
    assert reports and all(r.passed for r in reports), [r.to_text() for r in reports if not r.passed]
