"""Built-in leader trajectories for synthetic flocks."""

from __future__ import annotations

import numpy as np

from .flock import SampledTrajectory
from .pipeline import differentiate, load_tracks


def _grid(horizon: float, dt: float) -> np.ndarray:
    n = int(round(horizon / dt)) + 1
    return dt * np.arange(n)


def sinusoid(horizon=10.0, dt=0.02, axes="xyz") -> SampledTrajectory:
    """``x = sin t``, ``y = cos t``, ``z = 0.1 t``; ``axes`` keeps a subset of the motion."""
    t = _grid(horizon, dt)
    zero = np.zeros_like(t)
    pos = [np.sin(t), np.cos(t), 0.1 * t]
    vel = [np.cos(t), -np.sin(t), 0.1 + zero]
    acc = [-np.sin(t), -np.cos(t), zero]
    for j, ax in enumerate("xyz"):
        if ax not in axes:
            pos[j] = vel[j] = acc[j] = zero
    return SampledTrajectory(0.0, dt, np.column_stack(pos + vel), np.column_stack(acc))


def zero(horizon=10.0, dt=0.02) -> SampledTrajectory:
    n = len(_grid(horizon, dt))
    return SampledTrajectory(0.0, dt, np.zeros((n, 6)), np.zeros((n, 3)))


def polyline(waypoints, horizon=10.0, dt=0.02) -> SampledTrajectory:
    """Constant-speed legs through ``waypoints`` (k, 3), equal time per leg."""
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 3 or len(wp) < 2:
        raise ValueError("polyline needs at least two 3-D waypoints")
    t = _grid(horizon, dt)
    knots = np.linspace(0.0, t[-1], len(wp))
    pos = np.column_stack([np.interp(t, knots, wp[:, j]) for j in range(3)])
    seg = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, len(wp) - 2)
    vel = (wp[seg + 1] - wp[seg]) / (knots[1] - knots[0])
    return SampledTrajectory(0.0, dt, np.hstack([pos, vel]), np.zeros((len(t), 3)))


def leader_from_spec(spec: str, horizon: float, dt: float) -> SampledTrajectory:
    """Parse a leader spec.

    ``sinusoid``, ``sinusoid-x``, ``sinusoid-y``, ``sinusoid-z``, ``zero``,
    ``polyline:x,y,z;x,y,z;...`` or ``csv:PATH[:PIGEON]``.
    """
    if spec == "sinusoid":
        return sinusoid(horizon, dt)
    if spec.startswith("sinusoid-"):
        axes = spec.split("-", 1)[1]
        if not axes or set(axes) - set("xyz"):
            raise ValueError(f"unknown leader spec {spec!r}")
        return sinusoid(horizon, dt, axes)
    if spec == "zero":
        return zero(horizon, dt)
    if spec.startswith("polyline:"):
        pts = [[float(v) for v in p.split(",")] for p in spec[len("polyline:"):].split(";") if p.strip()]
        return polyline(pts, horizon, dt)
    if spec.startswith("csv:"):
        path, _, pigeon = spec[4:].partition(":")
        tracks = load_tracks(path)
        if pigeon:
            tracks = [t for t in tracks if t.pigeon_id == pigeon]
        if not tracks:
            raise ValueError(f"no track {pigeon!r} in {path}")
        traj = differentiate(tracks[0])
        return traj.replace(t0=0.0)
    raise ValueError(f"unknown leader spec {spec!r}")
