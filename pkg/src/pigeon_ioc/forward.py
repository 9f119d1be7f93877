"""Finite-horizon linear-quadratic trajectory tracking.

:func:`solve_tracking` is the production solver (Riccati + feedforward sweeps
and a closed-loop rollout); :func:`direct_qp_oracle` is a brute-force
collocation QP used only to check it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .dynamics import A, B, running_cost
from .flock import (
    CONTROL_DIM,
    STATE_DIM,
    FlockHierarchy,
    SampledTrajectory,
    StateVec,
    WeightVector,
    delay_steps,
    validate_hierarchy,
)

log = logging.getLogger(__name__)

QP_MAX_VARIABLES = 50_000


class TrackingError(ValueError):
    """Invalid input to a tracking solve."""


class SingularKKTError(TrackingError):
    def __init__(self, msg, condition_estimate):
        super().__init__(f"{msg} (condition estimate {condition_estimate:.3e})")
        self.condition_estimate = condition_estimate


@dataclass(frozen=True, eq=False)
class RiccatiSweep:
    S: np.ndarray  # (N, 6, 6)
    s: np.ndarray  # (N, 6)
    t0: float
    dt: float

    @property
    def N(self) -> int:
        return self.S.shape[0]


def _weights_array(c) -> np.ndarray:
    arr = c.c if isinstance(c, WeightVector) else np.asarray(c, dtype=float)
    if arr.shape != (STATE_DIM + CONTROL_DIM,):
        raise TrackingError(f"weight vector must have 9 entries, got shape {arr.shape}")
    if np.any(arr[STATE_DIM:] <= 0):
        raise TrackingError(f"control weights must be positive, got {arr[STATE_DIM:]}")
    if np.any(arr[:STATE_DIM] < 0):
        raise TrackingError(f"state weights must be non-negative, got {arr[:STATE_DIM]}")
    return arr


def _check_desired(desired: SampledTrajectory):
    if len(desired) < 2:
        raise TrackingError("desired trajectory needs at least 2 samples")
    if not desired.is_finite():
        raise TrackingError("desired trajectory contains non-finite values")


def _x0_array(x0) -> np.ndarray:
    arr = x0.as_array() if isinstance(x0, StateVec) else np.asarray(x0, dtype=float).reshape(STATE_DIM)
    if not np.all(np.isfinite(arr)):
        raise TrackingError("initial state must be finite")
    return arr


def riccati(c, desired: SampledTrajectory) -> RiccatiSweep:
    carr = _weights_array(c)
    _check_desired(desired)
    Q = np.diag(carr[:STATE_DIM])
    Rinv = np.diag(1.0 / carr[STATE_DIM:])
    S, s = kernels.riccati_sweep(A, B, Rinv, Q, np.ascontiguousarray(desired.states), desired.dt)
    return RiccatiSweep(S, s, desired.t0, desired.dt)


def solve_tracking(c, desired: SampledTrajectory, x0) -> SampledTrajectory:
    """Optimal trajectory tracking ``desired`` from ``x0`` with diagonal weights ``c``.

    Minimizes the integral of ``(x_T - x)' Q (x_T - x) + u' R u`` over the
    desired trajectory's horizon with free final state. The result shares the
    desired trajectory's grid.
    """
    carr = _weights_array(c)
    _check_desired(desired)
    x0 = _x0_array(x0)
    Q = np.diag(carr[:STATE_DIM])
    Rinv = np.diag(1.0 / carr[STATE_DIM:])
    xd = np.ascontiguousarray(desired.states)
    S, s = kernels.riccati_sweep(A, B, Rinv, Q, xd, desired.dt)
    X, U = kernels.closed_loop_rollout(A, B, Rinv, Q, S, s, xd, x0, desired.dt)
    return SampledTrajectory(desired.t0, desired.dt, X, U)


def objective(c, traj: SampledTrajectory, desired: SampledTrajectory) -> float:
    """Trapezoidal integral of the running tracking cost."""
    carr = c.c if isinstance(c, WeightVector) else np.asarray(c, dtype=float)
    g = running_cost(carr, traj.states, desired.states, traj.controls)
    return float(np.trapezoid(g, dx=traj.dt))


def zero_control_rollout(desired: SampledTrajectory, x0) -> SampledTrajectory:
    x0 = _x0_array(x0)
    t = desired.dt * np.arange(len(desired))
    X = np.empty((len(desired), STATE_DIM))
    X[:, :3] = x0[:3] + np.outer(t, x0[3:])
    X[:, 3:] = x0[3:]
    return SampledTrajectory(desired.t0, desired.dt, X, np.zeros((len(desired), CONTROL_DIM)))


def direct_qp_oracle(c, desired: SampledTrajectory, x0) -> SampledTrajectory:
    """Trapezoidal-collocation QP solved through its KKT system.

    Decision variables are all states and controls at the knots; the cost is
    the trapezoidal quadrature of the running cost and the dynamics are
    enforced by trapezoidal defects.
    """
    carr = _weights_array(c)
    _check_desired(desired)
    x0 = _x0_array(x0)
    N = len(desired)
    n, m = STATE_DIM, CONTROL_DIM
    nz = N * (n + m)
    if nz > QP_MAX_VARIABLES:
        raise TrackingError(f"{nz} decision variables exceed the oracle limit of {QP_MAX_VARIABLES}")
    h = desired.dt

    w = np.full(N, h)
    w[0] = w[-1] = 0.5 * h
    q = carr[:n]
    r = carr[n:]
    # z = [x_0 .. x_{N-1}, u_0 .. u_{N-1}]
    hdiag = np.concatenate([np.kron(w, q), np.kron(w, r)]) * 2.0
    H = sp.diags(hdiag)
    g = np.concatenate([-2.0 * (w[:, None] * q[None, :] * desired.states).ravel(), np.zeros(N * m)])

    I = sp.identity(n, format="csr")
    Ad = sp.csr_matrix(A)
    Bd = sp.csr_matrix(B)
    # defect_k = x_{k+1} - x_k - h/2 (A x_k + B u_k + A x_{k+1} + B u_{k+1})
    left = (-I - 0.5 * h * Ad).tocsr()
    right = (I - 0.5 * h * Ad).tocsr()
    bu = (-0.5 * h * Bd).tocsr()
    ex = sp.diags([np.ones(N - 1)], [0], shape=(N - 1, N))
    ex1 = sp.diags([np.ones(N - 1)], [1], shape=(N - 1, N))
    Cx = sp.kron(ex, left) + sp.kron(ex1, right)
    Cu = sp.kron(ex, bu) + sp.kron(ex1, bu)
    C_dyn = sp.hstack([Cx, Cu])
    C_init = sp.hstack([sp.identity(n), sp.csr_matrix((n, n * (N - 1) + m * N))])
    C = sp.vstack([C_init, C_dyn]).tocsc()
    d = np.concatenate([x0, np.zeros(n * (N - 1))])

    K = sp.bmat([[H, C.T], [C, None]], format="csc")
    rhs = np.concatenate([-g, d])
    lu = spla.splu(K)
    diagU = np.abs(lu.U.diagonal())
    cond_est = float(diagU.max() / diagU.min()) if diagU.min() > 0 else np.inf
    if not np.isfinite(cond_est) or cond_est > 1e14:
        raise SingularKKTError("KKT system is singular", cond_est)
    sol = lu.solve(rhs)
    z = sol[:nz]
    X = z[: n * N].reshape(N, n)
    U = z[n * N :].reshape(N, m)
    return SampledTrajectory(desired.t0, desired.dt, X, U)


def shift_states(traj: SampledTrajectory, steps: int) -> SampledTrajectory:
    """Delay ``traj`` by ``steps`` samples, holding the first sample for padding."""
    if steps < 0:
        raise ValueError("shift must be non-negative")
    if steps == 0:
        return traj
    idx = np.maximum(np.arange(len(traj)) - steps, 0)
    return traj.replace(states=traj.states[idx], controls=traj.controls[idx])


class FollowerError(RuntimeError):
    def __init__(self, follower, cause):
        super().__init__(f"follower {follower}: {cause}")
        self.follower = follower
        self.cause = cause


def rollout_hierarchy(
    h: FlockHierarchy,
    leader_traj: SampledTrajectory,
    weights: Mapping[str, WeightVector | np.ndarray],
    x0: Mapping[str, StateVec | np.ndarray] | None = None,
) -> dict[str, SampledTrajectory]:
    """Realize every agent's trajectory from the root leader downward.

    Each follower tracks its leader's realized trajectory delayed by the pair
    delay. Followers without an ``x0`` entry start at their desired trajectory's
    first sample.
    """
    problems = validate_hierarchy(h, leader_traj.dt)
    if problems:
        raise ValueError("invalid hierarchy: " + "; ".join(v.detail for v in problems))
    roots = h.roots
    if len(roots) != 1:
        raise ValueError(f"expected exactly one root leader, found {sorted(roots)}")
    missing = [f for f in h.followers if f not in weights]
    if missing:
        raise KeyError(f"no weights for follower(s): {', '.join(missing)}")
    x0 = x0 or {}
    out = {next(iter(roots)): leader_traj}
    for pair in h.topological_pairs():
        leader = out[pair.leader]
        desired = shift_states(leader, delay_steps(pair.delay, leader.dt))
        start = x0.get(pair.follower, desired.states[0])
        try:
            out[pair.follower] = solve_tracking(weights[pair.follower], desired, start)
        except (TrackingError, ValueError) as exc:
            raise FollowerError(pair.follower, exc) from exc
        log.debug("rolled out %s following %s", pair.follower, pair.leader)
    return out
