"""Core value types: states, controls, trajectories, weights and the flock hierarchy."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

STATE_DIM = 6
CONTROL_DIM = 3
WEIGHT_DIM = STATE_DIM + CONTROL_DIM

STATE_LABELS = ("x", "y", "z", "vx", "vy", "vz")
CONTROL_LABELS = ("ax", "ay", "az")
WEIGHT_LABELS = ("q_x", "q_y", "q_z", "q_vx", "q_vy", "q_vz", "r_x", "r_y", "r_z")

DELAY_TOL = 1e-9


def _frozen(a, shape=None) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if shape is not None and arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVec:
    x: float
    y: float
    z: float
    vx: float
    vy: float
    vz: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("state entries must be finite")

    @classmethod
    def from_array(cls, a) -> StateVec:
        a = np.asarray(a, dtype=float).reshape(STATE_DIM)
        return cls(*(float(v) for v in a))

    @classmethod
    def from_parts(cls, position, velocity) -> StateVec:
        return cls.from_array(np.concatenate([np.asarray(position, float), np.asarray(velocity, float)]))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.vx, self.vy, self.vz])

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz])


@dataclass(frozen=True)
class ControlVec:
    ax: float
    ay: float
    az: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_array()):
            raise ValueError("control entries must be finite")

    @classmethod
    def from_array(cls, a) -> ControlVec:
        a = np.asarray(a, dtype=float).reshape(CONTROL_DIM)
        return cls(*(float(v) for v in a))

    def as_array(self) -> np.ndarray:
        return np.array([self.ax, self.ay, self.az])


@dataclass(frozen=True, eq=False)
class SampledTrajectory:
    """Uniformly sampled states ``(N, 6)`` and controls ``(N, 3)`` on ``t0 + k*dt``.

    Arrays are stored read-only; use :meth:`replace` to derive new trajectories.
    """

    t0: float
    dt: float
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        controls = np.array(self.controls, dtype=float)
        if states.ndim != 2 or states.shape[1] != STATE_DIM:
            raise ValueError(f"states must have shape (N, {STATE_DIM}), got {states.shape}")
        if controls.ndim != 2 or controls.shape[1] != CONTROL_DIM:
            raise ValueError(f"controls must have shape (N, {CONTROL_DIM}), got {controls.shape}")
        if states.shape[0] != controls.shape[0]:
            raise ValueError("states and controls must have equal length")
        if states.shape[0] < 2:
            raise ValueError("a trajectory needs at least 2 samples")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not math.isfinite(self.t0):
            raise ValueError("t0 must be finite")
        states.setflags(write=False)
        controls.setflags(write=False)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    def __len__(self):
        return self.states.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_final(self) -> float:
        return self.t0 + self.dt * (len(self) - 1)

    @property
    def duration(self) -> float:
        return self.dt * (len(self) - 1)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.controls)))

    def same_grid(self, other: SampledTrajectory, tol: float = 1e-9) -> bool:
        return (
            len(self) == len(other)
            and abs(self.t0 - other.t0) <= tol
            and abs(self.dt - other.dt) <= tol
        )

    def state(self, k: int) -> StateVec:
        return StateVec.from_array(self.states[k])

    def control(self, k: int) -> ControlVec:
        return ControlVec.from_array(self.controls[k])

    def slice(self, start: int, stop: int | None = None) -> SampledTrajectory:
        stop = len(self) if stop is None else stop
        return SampledTrajectory(
            self.t0 + start * self.dt, self.dt, self.states[start:stop], self.controls[start:stop]
        )

    def replace(self, **changes) -> SampledTrajectory:
        fields = dict(t0=self.t0, dt=self.dt, states=self.states, controls=self.controls)
        fields.update(changes)
        return SampledTrajectory(**fields)


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Diagonal cost weights ``[diag(Q); diag(R)]`` with pinned entries.

    ``known_index`` is 1-based (index 9 is the z-acceleration weight) and may
    be a tuple when several entries are known.
    """

    c: np.ndarray
    known_index: int | tuple[int, ...] = 9
    known_value: float | tuple[float, ...] = 1.0

    def __post_init__(self):
        c = _frozen(self.c, (WEIGHT_DIM,))
        if not np.all(np.isfinite(c)):
            raise ValueError("weights must be finite")
        idx, vals = normalize_pins(self.known_index, self.known_value)
        for i, v in zip(idx, vals):
            if c[i - 1] != v:
                raise ValueError(f"c[{i}] = {c[i - 1]!r} does not equal its pinned value {v!r}")
        object.__setattr__(self, "c", c)

    @classmethod
    def pinned(cls, c, known_index=9, known_value=None) -> WeightVector:
        """Build a weight vector whose pinned value(s) are taken from ``c``."""
        c = np.array(c, dtype=float)
        idx = (known_index,) if isinstance(known_index, (int, np.integer)) else tuple(known_index)
        if known_value is None:
            vals = tuple(float(c[i - 1]) for i in idx)
        else:
            _, vals = normalize_pins(idx, known_value)
            for i, v in zip(idx, vals):
                c[i - 1] = v
        if len(idx) == 1:
            return cls(c, int(idx[0]), vals[0])
        return cls(c, idx, vals)

    @property
    def pins(self) -> tuple[tuple[int, ...], tuple[float, ...]]:
        return normalize_pins(self.known_index, self.known_value)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.c[:STATE_DIM])

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.c[STATE_DIM:])

    def is_valid_forward(self) -> bool:
        return bool(np.all(self.c[:STATE_DIM] >= 0) and np.all(self.c[STATE_DIM:] > 0))

    def violations(self) -> list[str]:
        out = []
        for k in range(STATE_DIM):
            if self.c[k] < 0:
                out.append(f"{WEIGHT_LABELS[k]} = {self.c[k]:.6g} < 0")
        for k in range(STATE_DIM, WEIGHT_DIM):
            if self.c[k] <= 0:
                out.append(f"{WEIGHT_LABELS[k]} = {self.c[k]:.6g} <= 0")
        return out


def normalize_pins(known_index, known_value) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Return ``(indices, values)`` tuples for one or several pinned entries."""
    if isinstance(known_index, (int, np.integer)):
        idx = (int(known_index),)
    else:
        idx = tuple(int(i) for i in known_index)
    if isinstance(known_value, (int, float, np.floating, np.integer)):
        vals = (float(known_value),) * len(idx)
    else:
        vals = tuple(float(v) for v in known_value)
    if not idx:
        raise ValueError("at least one known index is required")
    if len(vals) != len(idx):
        raise ValueError("known_index and known_value lengths differ")
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate known index in {idx}")
    for i in idx:
        if not 1 <= i <= WEIGHT_DIM:
            raise ValueError(f"known index {i} outside 1..{WEIGHT_DIM}")
    for v in vals:
        if v == 0 or not math.isfinite(v):
            raise ValueError(f"known value must be finite and non-zero, got {v}")
    return idx, vals


@dataclass(frozen=True)
class LeaderFollowerPair:
    leader: str
    follower: str
    delay: float


@dataclass(frozen=True)
class FlockHierarchy:
    pairs: tuple[LeaderFollowerPair, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    @property
    def followers(self) -> list[str]:
        return [p.follower for p in self.pairs]

    @property
    def agents(self) -> list[str]:
        seen: dict[str, None] = {}
        for p in self.pairs:
            seen.setdefault(p.leader)
            seen.setdefault(p.follower)
        return list(seen)

    @property
    def roots(self) -> set[str]:
        followers = set(self.followers)
        return {a for a in self.agents if a not in followers}

    def pair_for(self, follower: str) -> LeaderFollowerPair:
        for p in self.pairs:
            if p.follower == follower:
                return p
        raise KeyError(follower)

    def topological_pairs(self) -> list[LeaderFollowerPair]:
        """Pairs ordered so every leader is realized before its followers.

        Ties keep the declaration order. Raises ``ValueError`` on cycles.
        """
        done = set(self.roots)
        remaining = list(self.pairs)
        ordered = []
        while remaining:
            ready = [p for p in remaining if p.leader in done]
            if not ready:
                raise ValueError("hierarchy contains a cycle")
            for p in ready:
                ordered.append(p)
                done.add(p.follower)
            remaining = [p for p in remaining if p not in ready]
        return ordered


@dataclass(frozen=True)
class Violation:
    kind: str  # "duplicate-follower" | "cycle" | "delay-multiple" | "negative-delay" | "no-root"
    detail: str


TABLE1 = (
    ("A", "M", 0.2),
    ("A", "G", 0.6),
    ("G", "B", 0.2),
    ("G", "D", 0.2),
    ("M", "I", 0.6),
    ("B", "J", 0.2),
    ("B", "L", 0.2),
    ("D", "H", 0.2),
    ("H", "C", 0.2),
)


def default_hierarchy() -> FlockHierarchy:
    """The nine leader-follower pairs of the ten-pigeon flock, rooted at A."""
    return FlockHierarchy(tuple(LeaderFollowerPair(*row) for row in TABLE1))


def delay_steps(delay: float, dt: float, tol: float = DELAY_TOL) -> int:
    """Integer number of samples in ``delay``; raise if it is not a multiple of ``dt``."""
    if delay < -tol:
        raise ValueError(f"negative delay {delay}")
    k = round(delay / dt)
    if abs(k * dt - delay) > tol:
        raise ValueError(f"delay {delay} s is not a multiple of dt = {dt} s")
    return max(int(k), 0)


def _find_cycles(pairs: Sequence[LeaderFollowerPair]) -> list[list[str]]:
    leader_of: dict[str, list[str]] = {}
    for p in pairs:
        leader_of.setdefault(p.follower, []).append(p.leader)
    cycles = []
    seen_cycles = set()
    for start in leader_of:
        # walk leader links; any revisit is a cycle
        path = [start]
        stack = [(start, iter(leader_of.get(start, [])))]
        on_path = {start}
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                on_path.discard(node)
                path.pop()
                continue
            if nxt in on_path:
                cyc = path[path.index(nxt):]
                key = frozenset(cyc)
                if key not in seen_cycles:
                    seen_cycles.add(key)
                    cycles.append(list(reversed(cyc)))
                continue
            path.append(nxt)
            on_path.add(nxt)
            stack.append((nxt, iter(leader_of.get(nxt, []))))
    return cycles


def validate_hierarchy(h: FlockHierarchy, dt: float) -> list[Violation]:
    """Every violated hierarchy invariant; an empty list means valid."""
    report: list[Violation] = []
    counts: dict[str, int] = {}
    for p in h.pairs:
        counts[p.follower] = counts.get(p.follower, 0) + 1
    for follower, n in counts.items():
        if n > 1:
            report.append(Violation("duplicate-follower", f"{follower} follows {n} leaders"))
    for cyc in _find_cycles(h.pairs):
        report.append(Violation("cycle", " -> ".join(cyc + [cyc[0]])))
    if h.pairs and not h.roots:
        report.append(Violation("no-root", "every agent follows another agent"))
    for p in h.pairs:
        if p.delay < 0:
            report.append(Violation("negative-delay", f"{p.leader}->{p.follower}: {p.delay} s"))
            continue
        k = round(p.delay / dt)
        if abs(k * dt - p.delay) > DELAY_TOL:
            report.append(
                Violation("delay-multiple", f"{p.leader}->{p.follower}: {p.delay} s is not a multiple of {dt} s")
            )
    return report


def parse_hierarchy(lines: Iterable[str]) -> FlockHierarchy:
    pairs = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [s.strip() for s in line.split(",")]
        if len(parts) != 3 or not parts[0] or not parts[1]:
            raise ValueError(f"line {lineno}: expected 'leader,follower,delay_seconds', got {raw.rstrip()!r}")
        try:
            delay = float(parts[2])
        except ValueError:
            raise ValueError(f"line {lineno}: bad delay {parts[2]!r}") from None
        pairs.append(LeaderFollowerPair(parts[0], parts[1], delay))
    return FlockHierarchy(tuple(pairs))


def load_hierarchy(source: str | Path) -> FlockHierarchy:
    """Load ``builtin:table1`` or a ``leader,follower,delay`` text file."""
    if str(source) == "builtin:table1":
        return default_hierarchy()
    with open(source, encoding="utf-8") as fh:
        return parse_hierarchy(fh)


def format_hierarchy(h: FlockHierarchy) -> str:
    lines = ["# leader,follower,delay_seconds"]
    lines += [f"{p.leader},{p.follower},{p.delay!r}" for p in h.pairs]
    return "\n".join(lines) + "\n"
