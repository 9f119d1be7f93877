import numpy as np
import pytest

from pigeon_ioc.flock import SampledTrajectory

C_TRUE = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 5.0, 5.0, 1.0])
X0_OFFSET = np.array([0.5, -0.5, 1.0, 0.2, -0.2, 0.3])

_ACCEPTANCE: list[tuple[str, bool, str]] = []


def sinusoid_leader(horizon=10.0, dt=0.02):
    t = dt * np.arange(int(round(horizon / dt)) + 1)
    X = np.column_stack([np.sin(t), np.cos(t), 0.1 * t, np.cos(t), -np.sin(t), np.full_like(t, 0.1)])
    U = np.column_stack([-np.sin(t), -np.cos(t), np.zeros_like(t)])
    return SampledTrajectory(0.0, dt, X, U)


def random_desired(rng, horizon, dt):
    """Sum of two random sinusoids per axis, with consistent velocities."""
    t = dt * np.arange(int(round(horizon / dt)) + 1)
    pos = np.zeros((t.size, 3))
    vel = np.zeros((t.size, 3))
    acc = np.zeros((t.size, 3))
    for j in range(3):
        for _ in range(2):
            a, w, ph = rng.uniform(0.2, 2.0), rng.uniform(0.3, 2.0), rng.uniform(0, 2 * np.pi)
            pos[:, j] += a * np.sin(w * t + ph)
            vel[:, j] += a * w * np.cos(w * t + ph)
            acc[:, j] -= a * w * w * np.sin(w * t + ph)
    return SampledTrajectory(0.0, dt, np.hstack([pos, vel]), acc)


@pytest.fixture(scope="session")
def leader():
    return sinusoid_leader()


@pytest.fixture
def acceptance_record():
    def record(name, ok, detail=""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
