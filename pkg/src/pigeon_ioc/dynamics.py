"""Double-integrator kinematics, the quadratic tracking basis and their gradients.

Gradient arrays follow one convention throughout the package: rows index the
differentiation variable and columns index the basis entry, so
``grad_x_phi_T`` is 6x9 and ``grad_u_phi_T`` is 3x9.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flock import CONTROL_DIM, STATE_DIM, WEIGHT_DIM, ControlVec, StateVec


def _as_state(x) -> np.ndarray:
    return x.as_array() if isinstance(x, StateVec) else np.asarray(x, dtype=float)


def _as_control(u) -> np.ndarray:
    return u.as_array() if isinstance(u, ControlVec) else np.asarray(u, dtype=float)


def _readonly(a):
    a.setflags(write=False)
    return a


A = np.zeros((STATE_DIM, STATE_DIM))
A[:3, 3:] = np.eye(3)
B = np.zeros((STATE_DIM, CONTROL_DIM))
B[3:, :] = np.eye(3)
_readonly(A)
_readonly(B)


@dataclass(frozen=True)
class LinearDynamics:
    A: np.ndarray = A
    B: np.ndarray = B

    def controllability_matrix(self) -> np.ndarray:
        blocks = [self.B]
        for _ in range(STATE_DIM - 1):
            blocks.append(self.A @ blocks[-1])
        return np.hstack(blocks)

    def is_controllable(self) -> bool:
        return int(np.linalg.matrix_rank(self.controllability_matrix())) == STATE_DIM


DOUBLE_INTEGRATOR = LinearDynamics()


def eval_f(x, u) -> np.ndarray:
    """State derivative ``A x + B u`` = ``[vx, vy, vz, ax, ay, az]``."""
    x = _as_state(x)
    u = _as_control(u)
    return np.concatenate([x[3:6], u])


def basis_phi(x, x_des, u) -> np.ndarray:
    """Squared tracking errors for the six states followed by squared controls."""
    e = _as_state(x_des) - _as_state(x)
    u = _as_control(u)
    return np.concatenate([e * e, u * u])


def grad_x_phi_T(x, x_des) -> np.ndarray:
    g = np.zeros((STATE_DIM, WEIGHT_DIM))
    e = _as_state(x_des) - _as_state(x)
    g[np.arange(STATE_DIM), np.arange(STATE_DIM)] = -2.0 * e
    return g


def grad_u_phi_T(u) -> np.ndarray:
    g = np.zeros((CONTROL_DIM, WEIGHT_DIM))
    u = _as_control(u)
    g[np.arange(CONTROL_DIM), STATE_DIM + np.arange(CONTROL_DIM)] = 2.0 * u
    return g


def grad_x_f_T() -> np.ndarray:
    return A.T.copy()


def grad_u_f_T() -> np.ndarray:
    return B.T.copy()


# Batched forms over a sampled grid, shape (N, 6, 9) and (N, 3, 9).

def grad_x_phi_T_series(states: np.ndarray, desired: np.ndarray) -> np.ndarray:
    n = states.shape[0]
    g = np.zeros((n, STATE_DIM, WEIGHT_DIM))
    idx = np.arange(STATE_DIM)
    g[:, idx, idx] = -2.0 * (desired - states)
    return g


def grad_u_phi_T_series(controls: np.ndarray) -> np.ndarray:
    n = controls.shape[0]
    g = np.zeros((n, CONTROL_DIM, WEIGHT_DIM))
    idx = np.arange(CONTROL_DIM)
    g[:, idx, STATE_DIM + idx] = 2.0 * controls
    return g


def running_cost(c, states, desired, controls) -> np.ndarray:
    """Per-sample ``c . phi`` for a whole trajectory."""
    c = np.asarray(c, dtype=float)
    e = desired - states
    return (e * e) @ c[:STATE_DIM] + (controls * controls) @ c[STATE_DIM:]
