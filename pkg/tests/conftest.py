import numpy as np
import pytest

from symred.models import ModelConfig, rigid_impact


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def cfg():
    return ModelConfig()


@pytest.fixture
def rigid(cfg):
    return rigid_impact(cfg)


@pytest.fixture
def rigid_noise(rigid):
    return rigid.noise(seed=3)


def rotation_series(v, terms=40):
    """exp(hat(v)) by its power series, an oracle independent of Rodrigues."""
    from symred.lie import hat

    K = hat(np.asarray(v, dtype=float))
    out, term = np.eye(3), np.eye(3)
    for k in range(1, terms):
        term = term @ K / k
        out = out + term
    return out


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
