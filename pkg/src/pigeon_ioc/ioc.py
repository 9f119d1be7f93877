"""Hard-constrained minimum-principle inverse optimal control.

The costate is parameterized as ``p(t) = L(t) c``; ``L`` is integrated backward
from ``L(t_f) = 0`` and the stationarity residual of the Hamiltonian in ``u``
is collected into the Gram matrix ``W``. Weights follow from minimizing
``c' W c`` with one or more entries pinned.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from . import kernels
from .dynamics import A, B, grad_u_phi_T_series, grad_x_phi_T_series
from .flock import WEIGHT_DIM, SampledTrajectory, WeightVector, normalize_pins

RANK_RTOL = 1e-12
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
CLIP_RTOL = 1e-6


class IocError(ValueError):
    pass


class GridMismatchError(IocError):
    pass


class FlightError(IocError):
    def __init__(self, index, cause):
        super().__init__(f"flight {index}: {cause}")
        self.index = index
        self.cause = cause


@dataclass(frozen=True, eq=False)
class CostateBasisSeries:
    L: np.ndarray  # (N, 6, 9)
    t0: float
    dt: float

    def __len__(self):
        return self.L.shape[0]

    def costate(self, c) -> np.ndarray:
        """``p(t_k) = L(t_k) c`` for every sample, shape (N, 6)."""
        return self.L @ np.asarray(c, dtype=float)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    W: np.ndarray
    flight_count: int = 1

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.shape != (WEIGHT_DIM, WEIGHT_DIM):
            raise IocError(f"Gram matrix must be {WEIGHT_DIM}x{WEIGHT_DIM}, got {W.shape}")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    def __add__(self, other: GramMatrix) -> GramMatrix:
        return GramMatrix(self.W + other.W, self.flight_count + other.flight_count)

    def scaled(self, alpha: float) -> GramMatrix:
        return GramMatrix(alpha * self.W, self.flight_count)

    @property
    def lambda_max(self) -> float:
        return float(np.linalg.eigvalsh(self.W)[-1])

    def rank(self, rtol: float = RANK_RTOL) -> int:
        sv = np.linalg.svd(self.W, compute_uv=False)
        if sv[0] == 0:
            return 0
        return int(np.sum(sv > rtol * sv[0]))


@dataclass(frozen=True)
class IocSolution:
    c_hat: WeightVector
    r_w: float
    residual: float
    unique: bool
    negatives_clipped: tuple[int, ...] = ()
    flight_ids: tuple[str, ...] = ()
    null_space: np.ndarray | None = field(default=None, compare=False)

    @property
    def known_index(self):
        return self.c_hat.known_index

    @property
    def unknown_indices(self) -> tuple[int, ...]:
        pinned = set(self.c_hat.pins[0])
        return tuple(i for i in range(1, WEIGHT_DIM + 1) if i not in pinned)

    @property
    def violations(self) -> list[str]:
        return self.c_hat.violations()

    def to_dict(self) -> dict:
        idx, vals = self.c_hat.pins
        return {
            "c_hat": [float(v) for v in self.c_hat.c],
            "known_index": idx[0] if len(idx) == 1 else list(idx),
            "known_value": vals[0] if len(vals) == 1 else list(vals),
            "r_w": _json_float(self.r_w),
            "residual": float(self.residual),
            "unique": bool(self.unique),
            "negatives_clipped": list(self.negatives_clipped),
            "flight_ids": list(self.flight_ids),
            "violations": self.violations,
        }

    @classmethod
    def from_dict(cls, d: dict) -> IocSolution:
        c = WeightVector(d["c_hat"], _pin_field(d["known_index"]), _pin_field(d.get("known_value", 1.0)))
        r_w = d["r_w"]
        return cls(
            c_hat=c,
            r_w=math.inf if r_w is None or r_w == "inf" else float(r_w),
            residual=float(d["residual"]),
            unique=bool(d["unique"]),
            negatives_clipped=tuple(d.get("negatives_clipped", ())),
            flight_ids=tuple(d.get("flight_ids", ())),
        )


def _pin_field(v):
    return tuple(v) if isinstance(v, list) else v


def _json_float(x: float):
    return "inf" if math.isinf(x) else float(x)


@dataclass(frozen=True)
class Diagnostics:
    singular_values: np.ndarray
    r_w: float
    rank: int
    null_space: np.ndarray  # (9, k) directions in full weight space
    unknown_indices: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.unknown_indices)

    def to_dict(self) -> dict:
        return {
            "singular_values": [float(s) for s in self.singular_values],
            "r_w": _json_float(self.r_w),
            "rank": self.rank,
            "dim": self.dim,
            "unknown_indices": list(self.unknown_indices),
            "null_space": [[float(v) for v in col] for col in self.null_space.T],
        }


def _check_grid(traj: SampledTrajectory, desired: SampledTrajectory):
    if not traj.same_grid(desired):
        raise GridMismatchError(
            f"grid mismatch: trajectory (t0={traj.t0}, dt={traj.dt}, N={len(traj)}) vs "
            f"desired (t0={desired.t0}, dt={desired.dt}, N={len(desired)})"
        )
    if not (traj.is_finite() and desired.is_finite()):
        raise IocError("trajectory data contains non-finite values")


def integrate_costate_basis(traj: SampledTrajectory, desired: SampledTrajectory) -> CostateBasisSeries:
    """Backward RK4 of ``L' = -grad_x phi^T - A^T L`` with ``L(t_f) = 0``."""
    _check_grid(traj, desired)
    gx = grad_x_phi_T_series(traj.states, desired.states)
    L = kernels.costate_basis(A, gx, traj.dt)
    L[-1] = 0.0
    L.setflags(write=False)
    return CostateBasisSeries(L, traj.t0, traj.dt)


def assemble_gram_single(
    traj: SampledTrajectory, desired: SampledTrajectory, L: CostateBasisSeries | None = None
) -> GramMatrix:
    """Trapezoidal ``W = int W1' W1 dt`` with ``W1 = grad_u phi^T + B^T L``."""
    _check_grid(traj, desired)
    if L is None:
        L = integrate_costate_basis(traj, desired)
    if len(L) != len(traj) or abs(L.dt - traj.dt) > 1e-12 or abs(L.t0 - traj.t0) > 1e-9:
        raise GridMismatchError("costate basis is not defined on the trajectory grid")
    gu = grad_u_phi_T_series(traj.controls)
    W = kernels.gram_trapezoid(B.T, gu, L.L, traj.dt)
    return GramMatrix(W, 1)


def _single(args):
    j, (traj, desired) = args
    try:
        return assemble_gram_single(traj, desired)
    except (IocError, ValueError) as exc:
        raise FlightError(j, exc) from exc


def assemble_gram_multi(
    per_flight: Sequence[tuple[SampledTrajectory, SampledTrajectory]], jobs: int = 1
) -> GramMatrix:
    """Sum of per-flight Grams, equal to integrating the stacked residual block.

    Flights are reduced in list order, so the result does not depend on ``jobs``.
    """
    per_flight = list(per_flight)
    if not per_flight:
        raise IocError("no flights given")
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            grams = list(pool.map(_single, enumerate(per_flight)))
    else:
        grams = [_single(item) for item in enumerate(per_flight)]
    W = np.zeros((WEIGHT_DIM, WEIGHT_DIM))
    for g in grams:
        W = W + g.W
    return GramMatrix(W, len(per_flight))


def build_selection(known_index, dim: int = WEIGHT_DIM) -> np.ndarray:
    """Kernel basis of ``diag(c_bar)``: identity with the known column(s) removed.

    ``known_index`` is 1-based; an int or a sequence of ints.
    """
    idx = (known_index,) if isinstance(known_index, (int, np.integer)) else tuple(known_index)
    for i in idx:
        if not 1 <= i <= dim:
            raise IndexError(f"known index {i} outside 1..{dim}")
    keep = [k for k in range(dim) if k + 1 not in idx]
    return np.eye(dim)[:, keep]


def _as_W(W) -> np.ndarray:
    return W.W if isinstance(W, GramMatrix) else np.asarray(W, dtype=float)


def _check_W(W: np.ndarray):
    if W.shape != (WEIGHT_DIM, WEIGHT_DIM):
        raise IocError(f"W must be {WEIGHT_DIM}x{WEIGHT_DIM}")
    if not np.all(np.isfinite(W)):
        raise IocError("W contains non-finite entries")
    scale = max(np.abs(W).max(), 1e-300)
    asym = np.abs(W - W.T).max()
    if asym > SYMMETRY_TOL * max(scale, 1.0):
        raise IocError(f"W is not symmetric (max asymmetry {asym:.3e})")
    lam = np.linalg.eigvalsh(0.5 * (W + W.T))
    if lam[0] < -PSD_TOL * max(abs(lam[-1]), 0.0):
        raise IocError(f"W is indefinite (min eigenvalue {lam[0]:.3e}, max {lam[-1]:.3e})")


def _spectrum(M: np.ndarray):
    U, sv, Vt = np.linalg.svd(M)
    smax = sv[0] if sv.size else 0.0
    if smax == 0:
        return sv, math.inf, 0, Vt.T
    rank = int(np.sum(sv > RANK_RTOL * smax))
    smin = sv[-1]
    r_w = math.inf if smin == 0 else float(smax / smin)
    return sv, r_w, rank, Vt.T


def solve_weights(W, known_index=9, known_value=1.0, clip: bool = False, flight_ids=()) -> IocSolution:
    """Minimize ``c' W c`` subject to the pinned entries.

    Solves ``(N_h' W N_h) c_U = -N_h' W c_known``. When the reduced matrix is
    numerically singular the minimum-norm least-squares solution is returned
    with ``unique=False`` and the null space attached.
    """
    Wm = _as_W(W)
    _check_W(Wm)
    Wm = 0.5 * (Wm + Wm.T)
    idx, vals = normalize_pins(known_index, known_value)
    Nh = build_selection(idx)
    c_known = np.zeros(WEIGHT_DIM)
    for i, v in zip(idx, vals):
        c_known[i - 1] = v
    M = Nh.T @ Wm @ Nh
    rhs = -(Nh.T @ (Wm @ c_known))
    sv, r_w, rank, V = _spectrum(M)
    unique = rank == M.shape[0]
    null = Nh @ V[:, rank:]
    if unique:
        try:
            cU = sla.cho_solve(sla.cho_factor(M), rhs)
        except np.linalg.LinAlgError:
            cU = sla.solve(M, rhs, assume_a="sym")
    else:
        cU = np.linalg.lstsq(M, rhs, rcond=RANK_RTOL)[0] if sv[0] > 0 else np.zeros(M.shape[0])
    clipped: list[int] = []
    if clip and cU.size:
        eps = CLIP_RTOL * np.abs(cU).max()
        unknown = [k for k in range(1, WEIGHT_DIM + 1) if k not in idx]
        for j, k in enumerate(unknown):
            if -eps < cU[j] < 0:
                cU[j] = 0.0
                clipped.append(k)
    c = Nh @ cU
    for i, v in zip(idx, vals):
        c[i - 1] = v
    pins = (idx[0], vals[0]) if len(idx) == 1 else (idx, vals)
    c_hat = WeightVector(c, *pins)
    residual = float(c @ Wm @ c)
    return IocSolution(
        c_hat=c_hat,
        r_w=r_w,
        residual=residual,
        unique=unique,
        negatives_clipped=tuple(clipped),
        flight_ids=tuple(flight_ids),
        null_space=null,
    )


def diagnose(W, known_index=9) -> Diagnostics:
    """Spectrum, condition number, rank and null directions of ``N_h' W N_h``."""
    Wm = _as_W(W)
    idx = (known_index,) if isinstance(known_index, (int, np.integer)) else tuple(known_index)
    Nh = build_selection(idx)
    M = Nh.T @ (0.5 * (Wm + Wm.T)) @ Nh
    sv, r_w, rank, V = _spectrum(M)
    unknown = tuple(k for k in range(1, WEIGHT_DIM + 1) if k not in idx)
    return Diagnostics(sv, r_w, rank, Nh @ V[:, rank:], unknown)


def recover_weights(
    flights: Sequence[tuple[SampledTrajectory, SampledTrajectory]],
    known_index=9,
    known_value=1.0,
    clip: bool = False,
    flight_ids=(),
    jobs: int = 1,
) -> IocSolution:
    """Gram assembly and weight solve in one call."""
    W = assemble_gram_multi(flights, jobs=jobs)
    return solve_weights(W, known_index, known_value, clip=clip, flight_ids=flight_ids)
