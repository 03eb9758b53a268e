import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symred.lie import exp_so3, is_rotation, orthogonality_defect
from symred.models import ModelConfig, build, full_solve
from symred.sde import (
    Diverged,
    GridMismatch,
    InsufficientData,
    InvalidGrid,
    NoisePath,
    NotDivisible,
    StratonovichSystem,
    Trajectory,
    brownian_path,
    coarsen,
    convergence_order,
    integrate_ensemble,
    integrate_group,
    integrate_heun,
    path_rng,
    strong_error,
    time_path,
)


def scalar(fields, m=2):
    return StratonovichSystem(fields, m, kind="vector", state_dim=1)


GBM = scalar(lambda x, z: np.array([[0.0], [z[0]]]))  # dx = x dW
GBM_BATCH = StratonovichSystem(
    lambda x, z: np.stack([np.zeros_like(z), z], axis=-2), 2, kind="vector", state_dim=1, vectorized=True
)
DECAY = scalar(lambda x, z: np.array([[-z[0]]]), m=1)  # dx = -x dt
BLOWUP = scalar(lambda x, z: np.array([[z[0] ** 2]]), m=1)  # dx = x^2 dt


class TestNoise:
    def test_deterministic(self):
        a, b = brownian_path(1, 1.0, 1000, 42), brownian_path(1, 1.0, 1000, 42)
        np.testing.assert_array_equal(a.increments, b.increments)

    def test_seeds_differ(self):
        a, b = brownian_path(1, 1.0, 100, 1), brownian_path(1, 1.0, 100, 2)
        assert not np.array_equal(a.values, b.values)

    def test_moments(self):
        K = 10**6
        p = brownian_path(1, 1.0, K, 7)
        dt = 1.0 / K
        dw = p.increments[:, 1]
        assert abs(dw.mean()) <= 4 * math.sqrt(dt / K)
        assert dw.var() == pytest.approx(dt, rel=0.05)

    def test_time_component_exact(self):
        p = brownian_path(2, 0.7, 333, 0)
        np.testing.assert_array_equal(p.increments[:, 0], np.diff(p.times))
        assert p.labels == ("time", "brownian", "brownian")

    def test_scale(self):
        a, b = brownian_path(2, 1.0, 10, 5), brownian_path(2, 1.0, 10, 5, scale=3.0)
        np.testing.assert_allclose(b.increments[:, 1:], 3.0 * a.increments[:, 1:])

    @pytest.mark.parametrize("T,K", [(1.0, 0), (0.0, 10), (-1.0, 10)])
    def test_invalid_grid(self, T, K):
        with pytest.raises(InvalidGrid):
            brownian_path(1, T, K, 0)
        with pytest.raises(InvalidGrid):
            time_path(T, K)

    def test_rejects_bad_time_column(self):
        times = np.linspace(0, 1, 3)
        with pytest.raises(ValueError):
            NoisePath(times, np.zeros((3, 1)), ("time",))

    def test_rejects_non_increasing(self):
        times = np.array([0.0, 0.5, 0.5])
        with pytest.raises(ValueError):
            NoisePath(times, np.zeros((3, 1)), ("user",))

    def test_read_only(self):
        p = brownian_path(1, 1.0, 10, 0)
        with pytest.raises(ValueError):
            p.values[0, 0] = 1.0


class TestCoarsen:
    def test_factor_one(self):
        p = brownian_path(2, 1.0, 12, 0)
        assert coarsen(p, 1) is p

    def test_associative(self):
        p = brownian_path(2, 1.0, 16, 0)
        a, b = coarsen(coarsen(p, 2), 2), coarsen(p, 4)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.times, b.times)

    def test_endpoint(self):
        p = brownian_path(3, 1.0, 1000, 0)
        np.testing.assert_array_equal(coarsen(p, 10).values[-1], p.values[-1])

    def test_partial_sums(self):
        p = brownian_path(1, 1.0, 100, 0)
        c = coarsen(p, 10)
        np.testing.assert_allclose(
            c.increments, p.increments.reshape(10, 10, 2).sum(axis=1), atol=1e-15
        )

    def test_not_divisible(self):
        with pytest.raises(NotDivisible):
            coarsen(brownian_path(1, 1.0, 10, 0), 3)


class TestHeun:
    def test_zero_fields(self):
        sys = scalar(lambda x, z: np.zeros((2, 1)))
        tr = integrate_heun(sys, brownian_path(1, 1.0, 50, 0), np.array([2.5]))
        assert np.all(tr.vector == 2.5)

    def test_one_step_formula(self):
        p = brownian_path(1, 0.1, 1, 3)
        tr = integrate_heun(GBM, p, np.array([1.0]))
        dw = p.increments[0, 1]
        assert tr.vector[1, 0] == pytest.approx(1 + dw + 0.5 * dw**2, rel=1e-15)

    def test_linear_decay(self):
        errs = []
        for K in (10, 20, 40, 80):
            tr = integrate_heun(DECAY, time_path(1.0, K), np.array([1.0]))
            errs.append(abs(tr.vector[-1, 0] - math.exp(-1)))
            # trapezoidal Heun error constant e^{-1}/6 dt^2
            assert errs[-1] <= 0.1 * (1.0 / K) ** 2
        assert convergence_order([(1.0 / K, e) for K, e in zip((10, 20, 40, 80), errs)]) == pytest.approx(2.0, abs=0.05)

    def test_strong_order_gbm(self):
        fines = [brownian_path(1, 1.0, 10**4, rng=path_rng(11, i)) for i in range(200)]
        errs = []
        for factor in (100, 10, 1):
            paths = [coarsen(p, factor) for p in fines]
            tr = integrate_ensemble(GBM_BATCH, paths, np.array([1.0]))
            exact = np.exp([p.values[-1, 1] for p in paths])
            errs.append((1.0 / paths[0].steps, float(np.mean(np.abs(tr.vector[:, -1, 0] - exact)))))
        assert 0.9 <= convergence_order(errs) <= 1.3

    def test_batched_matches_single(self):
        paths = [brownian_path(1, 1.0, 100, rng=path_rng(3, i)) for i in range(4)]
        ens = integrate_ensemble(GBM_BATCH, paths, np.array([1.0]))
        for k, p in enumerate(paths):
            np.testing.assert_allclose(ens.vector[k], integrate_heun(GBM, p, np.array([1.0])).vector, rtol=1e-14)

    def test_blowup_detected(self):
        with pytest.raises(Diverged) as info:
            integrate_heun(BLOWUP, time_path(2.0, 20000), np.array([1.0]))
        assert info.value.time < 1.5

    def test_determinism(self, rigid, rigid_noise):
        a = integrate_heun(rigid.reduced, rigid_noise, np.ones(3))
        b = integrate_heun(rigid.reduced, rigid_noise, np.ones(3))
        np.testing.assert_array_equal(a.vector, b.vector)


def constant_group(v, side="left"):
    return StratonovichSystem(
        lambda x, g: np.array([v]), 1, kind="group", side=side, vectorized=True
    )


class TestGroup:
    v = np.array([0.4, -0.9, 1.3])

    @pytest.mark.parametrize("side", ["left", "right"])
    def test_one_step(self, side, rng):
        g0 = exp_so3(rng.standard_normal(3))
        tr = integrate_group(constant_group(self.v, side), time_path(0.3, 1), g0)
        expected = g0 @ exp_so3(0.3 * self.v) if side == "left" else exp_so3(0.3 * self.v) @ g0
        np.testing.assert_allclose(tr.group[1], expected, atol=1e-15)

    def test_one_parameter_subgroup(self):
        g0 = exp_so3([0.1, 0.2, 0.3])
        tr = integrate_group(constant_group(self.v), time_path(1.0, 1000), g0)
        np.testing.assert_allclose(tr.group[-1], g0 @ exp_so3(self.v), atol=1e-12)

    @pytest.mark.slow
    def test_long_run_stays_on_group(self):
        sys = StratonovichSystem(
            lambda x, g: np.vstack([np.zeros(3), np.eye(3)]), 4, kind="group", side="right"
        )
        tr = integrate_group(sys, brownian_path(3, 10.0, 10**5, 0), np.eye(3))
        assert float(np.max(orthogonality_defect(tr.group))) <= 1e-9
        assert np.all(np.linalg.det(tr.group) > 0)

    def test_large_increment_diverges(self):
        with pytest.raises(Diverged):
            integrate_group(constant_group(np.array([100.0, 0, 0])), time_path(1.0, 5), np.eye(3))

    def test_ensemble_matches_single(self, rigid):
        noises = [rigid.noise(seed=s, steps=50) for s in range(3)]
        ens = integrate_ensemble(rigid.full, noises, rigid.cfg.z0)
        for k, p in enumerate(noises):
            one = integrate_group(rigid.full, p, rigid.cfg.z0)
            np.testing.assert_allclose(ens.group[k], one.group, atol=1e-13)
            np.testing.assert_allclose(ens.vector[k], one.vector, atol=1e-13)

    def test_ensemble_grid_mismatch(self, rigid):
        with pytest.raises(GridMismatch):
            integrate_ensemble(rigid.full, [rigid.noise(steps=10), rigid.noise(steps=20)], rigid.cfg.z0)


def random_traj(seed, K=20):
    r = np.random.default_rng(seed)
    return Trajectory(np.linspace(0, 1, K + 1), exp_so3(r.standard_normal((K + 1, 3))), r.standard_normal((K + 1, 2)))


class TestStrongError:
    def test_self(self):
        a = random_traj(0)
        assert strong_error(a, a) == 0.0

    @settings(max_examples=25)
    @given(st.integers(0, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
    def test_metric(self, s1, s2, s3):
        a, b, c = random_traj(s1), random_traj(s2), random_traj(s3)
        assert strong_error(a, b) == strong_error(b, a)
        assert strong_error(a, c) <= strong_error(a, b) + strong_error(b, c) + 1e-12

    def test_nested_grids(self):
        fine = random_traj(1, K=40)
        coarse = Trajectory(fine.times[::4], fine.group[::4], fine.vector[::4])
        assert strong_error(coarse, fine) == 0.0

    def test_mismatch(self):
        a = random_traj(0)
        b = Trajectory(a.times * 2, a.group, a.vector)
        with pytest.raises(GridMismatch):
            strong_error(a, b)
        c = Trajectory(np.linspace(0, 1, 8), a.group[:8], a.vector[:8])
        with pytest.raises(GridMismatch):
            strong_error(a, c)


class TestOrder:
    dts = np.array([1e-1, 1e-2, 1e-3, 1e-4])

    @pytest.mark.parametrize("p", [1.0, 0.5])
    def test_exact_power(self, p):
        assert convergence_order(list(zip(self.dts, 3.0 * self.dts**p))) == pytest.approx(p, abs=1e-12)

    @pytest.mark.parametrize("errs", [[(0.1, 1.0), (0.01, 0.1)], [(0.1, 1.0), (0.01, 0.0), (1e-3, 1e-3)]])
    def test_insufficient(self, errs):
        with pytest.raises(InsufficientData):
            convergence_order(errs)


class TestCsv:
    def test_round_trip(self, tmp_path, rigid, rigid_noise):
        tr = full_solve(rigid, coarsen(rigid_noise, 10)).with_monitor("casimir", np.arange(101) / 7.0)
        path = tmp_path / "t.csv"
        tr.to_csv(path)
        back = Trajectory.from_csv(path, monitors=("casimir",))
        np.testing.assert_array_equal(back.times, tr.times)
        np.testing.assert_array_equal(back.group, tr.group)
        np.testing.assert_array_equal(back.vector, tr.vector)
        np.testing.assert_array_equal(back.monitors["casimir"], tr.monitors["casimir"])
        header = path.read_text().splitlines()[0]
        assert header == "t,g00,g01,g02,g10,g11,g12,g20,g21,g22,mu_x,mu_y,mu_z,casimir"


@pytest.mark.parametrize("name", ["rigid_impact", "loose_body", "collective", "sphere_bm"])
def test_refinement_reduces_error(name):
    model = build(ModelConfig(name=name, steps=4000, seed=2))
    fine = model.noise()

    def solve(p):
        if name == "sphere_bm":
            return integrate_group(model.system, p, np.eye(3))
        return full_solve(model, p)

    ref = solve(fine)
    errs = [strong_error(solve(coarsen(fine, f)), ref) for f in (40, 8, 2)]
    assert errs[0] > errs[1] > errs[2]
    assert all(is_rotation(g) for g in ref.group[::500])
