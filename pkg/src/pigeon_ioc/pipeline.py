"""Flight data ingestion and construction of (follower, delayed leader) datasets."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .flock import FlockHierarchy, SampledTrajectory, delay_steps

EARTH_RADIUS = 6371000.0
SPACING_TOL = 1e-6

METRIC_COLUMNS = ("flight_id", "pigeon_id", "t", "x", "y", "z")
GEODETIC_COLUMNS = ("flight_id", "pigeon_id", "t", "lat", "lon", "alt")


class DataError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RawTrack:
    flight_id: str
    pigeon_id: str
    t: np.ndarray  # (N,)
    xyz: np.ndarray  # (N, 3) meters

    def __len__(self):
        return self.t.shape[0]

    @property
    def dt(self) -> float:
        return float((self.t[-1] - self.t[0]) / (len(self) - 1)) if len(self) > 1 else math.nan

    def is_uniform(self, tol: float = SPACING_TOL) -> bool:
        if len(self) < 2:
            return True
        return bool(np.all(np.abs(np.diff(self.t) - self.dt) <= tol))

    def resample(self, dt: float) -> RawTrack:
        """Linear interpolation onto ``t[0] + k*dt`` within the original span."""
        n = int(math.floor((self.t[-1] - self.t[0]) / dt + 1e-9)) + 1
        t = self.t[0] + dt * np.arange(n)
        xyz = np.column_stack([np.interp(t, self.t, self.xyz[:, j]) for j in range(3)])
        return RawTrack(self.flight_id, self.pigeon_id, t, xyz)

    def window(self, t_start: float | None, t_end: float | None) -> RawTrack:
        keep = np.ones(len(self), bool)
        if t_start is not None:
            keep &= self.t >= t_start - 1e-9
        if t_end is not None:
            keep &= self.t <= t_end + 1e-9
        return RawTrack(self.flight_id, self.pigeon_id, self.t[keep], self.xyz[keep])


@dataclass(frozen=True, eq=False)
class PairDataset:
    follower_id: str
    leader_id: str
    flight_id: str
    traj: SampledTrajectory
    desired: SampledTrajectory
    delay: float

    def to_dict(self) -> dict:
        return {
            "follower_id": self.follower_id,
            "leader_id": self.leader_id,
            "flight_id": self.flight_id,
            "delay": self.delay,
            "t0": self.traj.t0,
            "dt": self.traj.dt,
            "n": len(self.traj),
            "states": self.traj.states.tolist(),
            "controls": self.traj.controls.tolist(),
            "desired_states": self.desired.states.tolist(),
            "desired_controls": self.desired.controls.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> PairDataset:
        traj = SampledTrajectory(d["t0"], d["dt"], d["states"], d["controls"])
        desired = SampledTrajectory(d["t0"], d["dt"], d["desired_states"], d["desired_controls"])
        return cls(d["follower_id"], d["leader_id"], d["flight_id"], traj, desired, d["delay"])


def _project(lat, lon, alt, origin):
    lat0, lon0, alt0 = origin
    k = math.pi / 180.0
    x = EARTH_RADIUS * (lon - lon0) * k * math.cos(lat0 * k)
    y = EARTH_RADIUS * (lat - lat0) * k
    return x, y, alt - alt0


def load_tracks(path, format: str = "auto", resample: float | None = None) -> list[RawTrack]:
    """Read a flight CSV into one :class:`RawTrack` per ``(flight_id, pigeon_id)``.

    ``format`` is ``"metric"`` (x, y, z meters), ``"geodetic"`` (lat, lon in
    degrees, alt in meters) or ``"auto"`` to decide from the header. Geodetic
    rows are projected onto a local tangent plane anchored at each flight's
    earliest sample. Tracks come back ordered by first appearance in the file.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        cols = set(header)
        has_metric = {"x", "y", "z"} & cols
        has_geo = {"lat", "lon", "alt"} & cols
        if has_metric and has_geo:
            raise DataError(f"{path}: header mixes metric and geodetic columns")
        if format == "auto":
            format = "geodetic" if has_geo else "metric"
        wanted = GEODETIC_COLUMNS if format == "geodetic" else METRIC_COLUMNS
        if format not in ("metric", "geodetic"):
            raise DataError(f"unknown format {format!r}")
        missing = [c for c in wanted if c not in cols]
        if missing:
            raise DataError(f"{path}: header lacks column(s) {', '.join(missing)}")
        pos = [header.index(c) for c in wanted]

        groups: dict[tuple[str, str], list[tuple[float, float, float, float]]] = {}
        for row in reader:
            lineno = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(row[i]) for i in pos[2:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value in {row!r}") from None
            if not all(math.isfinite(v) for v in vals):
                raise DataError(f"{path}:{lineno}: non-finite value")
            key = (row[pos[0]].strip(), row[pos[1]].strip())
            groups.setdefault(key, []).append(tuple(vals))

    origins = {}
    if format == "geodetic":
        for (flight, _), rows in groups.items():
            first = min(rows, key=lambda r: r[0])
            if flight not in origins or first[0] < origins[flight][0]:
                origins[flight] = first
    tracks = []
    for (flight, pigeon), rows in groups.items():
        arr = np.array(rows, dtype=float)
        order = np.argsort(arr[:, 0], kind="stable")
        arr = arr[order]
        if np.any(np.diff(arr[:, 0]) <= 0):
            raise DataError(f"track {flight}/{pigeon}: timestamps are not strictly increasing")
        if format == "geodetic":
            o = origins[flight][1:]
            xyz = np.array([_project(r[1], r[2], r[3], o) for r in arr])
        else:
            xyz = arr[:, 1:4]
        track = RawTrack(flight, pigeon, arr[:, 0], xyz)
        if resample is not None:
            track = track.resample(resample)
        elif not track.is_uniform():
            raise DataError(f"track {flight}/{pigeon}: non-uniform sampling (use resampling)")
        tracks.append(track)
    return tracks


def write_tracks(path, tracks: Iterable[RawTrack]):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for tr in tracks:
            for t, (x, y, z) in zip(tr.t, tr.xyz):
                w.writerow([tr.flight_id, tr.pigeon_id, repr(float(t)), repr(float(x)), repr(float(y)), repr(float(z))])


def _moving_average(x: np.ndarray, window: int) -> np.ndarray:
    # symmetric window that shrinks near the ends, so affine data is unchanged
    half = window // 2
    n = x.shape[0]
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    out = np.empty_like(x)
    for i in range(n):
        r = min(half, i, n - 1 - i)
        out[i] = (csum[i + r + 1] - csum[i - r]) / (2 * r + 1)
    return out


def differentiate(track: RawTrack, smoothing: int = 1) -> SampledTrajectory:
    """Velocities and accelerations by second-order finite differences."""
    n = len(track)
    if n < 5:
        raise DataError(f"track {track.flight_id}/{track.pigeon_id}: need at least 5 samples, got {n}")
    if smoothing < 1 or smoothing % 2 == 0:
        raise DataError(f"smoothing window must be odd and positive, got {smoothing}")
    if smoothing >= n:
        raise DataError(f"smoothing window {smoothing} is not shorter than the track ({n} samples)")
    if not track.is_uniform():
        raise DataError(f"track {track.flight_id}/{track.pigeon_id}: non-uniform sampling")
    dt = track.dt
    pos = track.xyz if smoothing == 1 else _moving_average(track.xyz, smoothing)
    vel = np.gradient(pos, dt, axis=0, edge_order=2)
    acc = np.gradient(vel, dt, axis=0, edge_order=2)
    return SampledTrajectory(float(track.t[0]), dt, np.hstack([pos, vel]), acc)


def make_desired(leader: SampledTrajectory, delay: float) -> SampledTrajectory:
    """Leader trajectory delayed by ``delay`` seconds, first sample held as padding."""
    k = delay_steps(delay, leader.dt)
    if k == 0:
        return leader
    idx = np.maximum(np.arange(len(leader)) - k, 0)
    return leader.replace(states=leader.states[idx], controls=leader.controls[idx])


def _grid_index(t: float, t0: float, dt: float) -> int:
    k = round((t - t0) / dt)
    if abs(t0 + k * dt - t) > 1e-6:
        raise DataError(f"time {t} is off the grid (t0={t0}, dt={dt})")
    return int(k)


def build_pair_datasets(
    tracks: Sequence[RawTrack],
    h: FlockHierarchy,
    flights: Sequence[str] | None = None,
    trim_warmup: bool = False,
    smoothing: int = 1,
    t_start: float | None = None,
    t_end: float | None = None,
) -> list[PairDataset]:
    """One dataset per (flight, pair), ordered by flight then hierarchy order."""
    index = {(t.flight_id, t.pigeon_id): t for t in tracks}
    if flights is None:
        flights = list(dict.fromkeys(t.flight_id for t in tracks))
    out = []
    for flight in flights:
        cache: dict[str, SampledTrajectory] = {}

        def traj_of(agent):
            if agent not in cache:
                try:
                    tr = index[(flight, agent)]
                except KeyError:
                    raise DataError(f"missing track for flight {flight}, agent {agent}") from None
                if t_start is not None or t_end is not None:
                    tr = tr.window(t_start, t_end)
                cache[agent] = differentiate(tr, smoothing)
            return cache[agent]

        for pair in h.pairs:
            lead = traj_of(pair.leader)
            foll = traj_of(pair.follower)
            if abs(lead.dt - foll.dt) > SPACING_TOL:
                raise DataError(
                    f"flight {flight}: {pair.leader} dt={lead.dt} differs from {pair.follower} dt={foll.dt}"
                )
            dt = foll.dt
            t_lo = max(lead.t0, foll.t0)
            t_hi = min(lead.t_final, foll.t_final)
            if t_hi - t_lo < dt - 1e-9:
                raise DataError(f"flight {flight}: {pair.leader} and {pair.follower} do not overlap in time")
            i0, i1 = _grid_index(t_lo, lead.t0, dt), _grid_index(t_hi, lead.t0, dt)
            j0, j1 = _grid_index(t_lo, foll.t0, dt), _grid_index(t_hi, foll.t0, dt)
            lead_w = lead.slice(i0, i1 + 1)
            foll_w = foll.slice(j0, j1 + 1)
            desired = make_desired(lead_w, pair.delay).replace(t0=foll_w.t0, dt=foll_w.dt)
            if trim_warmup:
                k = delay_steps(pair.delay, dt)
                if len(foll_w) - k < 2:
                    raise DataError(f"flight {flight}: {pair.follower} too short to trim {k} warm-up samples")
                foll_w = foll_w.slice(k)
                desired = desired.slice(k)
            out.append(PairDataset(pair.follower, pair.leader, flight, foll_w, desired, pair.delay))
    return out


def tracks_from_trajectories(flight_id: str, trajs: dict[str, SampledTrajectory]) -> list[RawTrack]:
    return [RawTrack(flight_id, agent, tr.times, tr.states[:, :3].copy()) for agent, tr in trajs.items()]

