import math

import numpy as np
import pytest

from conftest import C_TRUE
from pigeon_ioc import forward, pipeline
from pigeon_ioc.flock import FlockHierarchy, LeaderFollowerPair, SampledTrajectory, default_hierarchy
from pigeon_ioc.pipeline import DataError, RawTrack


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def track_from(fn, n=50, dt=0.2, flight="F", pigeon="A"):
    t = dt * np.arange(n)
    xyz = np.column_stack([fn(t), np.zeros(n), np.zeros(n)])
    return RawTrack(flight, pigeon, t, xyz)


def test_load_two_rows(tmp_path):
    p = write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nFF4,A,0.0,0,0,0\nFF4,A,0.2,1,0,0\n")
    (tr,) = pipeline.load_tracks(p)
    assert (tr.flight_id, tr.pigeon_id, len(tr)) == ("FF4", "A", 2)
    assert tr.dt == pytest.approx(0.2)


def test_load_groups_and_sorts(tmp_path):
    p = write(
        tmp_path,
        "flight_id,pigeon_id,t,x,y,z\nF,B,0.4,2,0,0\nF,A,0.0,0,0,0\nF,B,0.0,0,0,0\nF,B,0.2,1,0,0\nF,A,0.2,1,0,0\n",
    )
    tracks = pipeline.load_tracks(p)
    assert [t.pigeon_id for t in tracks] == ["B", "A"]
    assert np.array_equal(tracks[0].t, [0.0, 0.2, 0.4])
    assert np.array_equal(tracks[0].xyz[:, 0], [0, 1, 2])


def test_geodetic_projection(tmp_path):
    p = write(tmp_path, "flight_id,pigeon_id,t,lat,lon,alt\nF,A,0.0,0,0,100\nF,A,0.2,0,1,100\nF,B,0.0,0,0,100\n")
    tracks = {t.pigeon_id: t for t in pipeline.load_tracks(p)}
    assert np.array_equal(tracks["A"].xyz[0], [0.0, 0.0, 0.0])
    expected = 2 * math.pi * 6371000.0 / 360.0
    assert tracks["A"].xyz[1, 0] == pytest.approx(expected, rel=1e-12)
    assert tracks["A"].xyz[1, 0] == pytest.approx(111194.9, abs=0.05)


def test_load_errors(tmp_path):
    with pytest.raises(DataError, match=":3"):
        pipeline.load_tracks(write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nF,A,0,0,0,0\nF,A,zz,0,0,0\n"))
    with pytest.raises(DataError, match="fields"):
        pipeline.load_tracks(write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nF,A,0,0,0\n"))
    with pytest.raises(DataError, match="F/A"):
        pipeline.load_tracks(write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nF,A,0,0,0,0\nF,A,0,1,0,0\n"))
    with pytest.raises(DataError, match="mixes"):
        pipeline.load_tracks(write(tmp_path, "flight_id,pigeon_id,t,x,y,z,lat\nF,A,0,0,0,0,0\n"))
    with pytest.raises(DataError, match="non-uniform"):
        pipeline.load_tracks(write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nF,A,0,0,0,0\nF,A,0.2,0,0,0\nF,A,0.5,0,0,0\n"))


def test_resample_option(tmp_path):
    p = write(tmp_path, "flight_id,pigeon_id,t,x,y,z\nF,A,0,0,0,0\nF,A,0.2,2,0,0\nF,A,0.5,5,0,0\n")
    (tr,) = pipeline.load_tracks(p, resample=0.1)
    assert np.allclose(tr.t, np.arange(6) * 0.1)
    assert np.allclose(tr.xyz[:, 0], np.arange(6))


def test_differentiate_affine():
    traj = pipeline.differentiate(track_from(lambda t: t))
    assert np.allclose(traj.states[:, 3], 1.0, atol=1e-12)
    assert np.allclose(traj.controls[:, 0], 0.0, atol=1e-10)


def test_differentiate_quadratic():
    traj = pipeline.differentiate(track_from(lambda t: t * t))
    assert np.allclose(traj.controls[1:-1, 0], 2.0, atol=1e-9)
    assert np.allclose(traj.states[:, 3], 2 * traj.times, atol=1e-9)


def test_differentiate_sine_truncation():
    dt = 0.01
    tr = track_from(np.sin, n=700, dt=dt)
    traj = pipeline.differentiate(tr)
    err = np.abs(traj.states[1:-1, 3] - np.cos(tr.t[1:-1])).max()
    assert err <= 2e-5


def test_differentiate_smoothing_keeps_affine():
    traj = pipeline.differentiate(track_from(lambda t: 3 * t - 1), smoothing=5)
    assert np.allclose(traj.states[:, 0], 3 * traj.times - 1, atol=1e-12)


def test_differentiate_errors():
    with pytest.raises(DataError, match="5 samples"):
        pipeline.differentiate(track_from(lambda t: t, n=4))
    with pytest.raises(DataError, match="not shorter"):
        pipeline.differentiate(track_from(lambda t: t, n=5), smoothing=5)
    with pytest.raises(DataError, match="odd"):
        pipeline.differentiate(track_from(lambda t: t), smoothing=4)


def test_differentiation_consistency():
    """Integrating the estimated accelerations twice recovers the positions."""
    dt = 0.02
    tr = track_from(lambda t: np.sin(t) + 0.3 * t * t, n=300, dt=dt)
    traj = pipeline.differentiate(tr)
    from scipy.integrate import cumulative_trapezoid

    v = traj.states[0, 3] + cumulative_trapezoid(traj.controls[:, 0], dx=dt, initial=0)
    x = traj.states[0, 0] + cumulative_trapezoid(v, dx=dt, initial=0)
    assert np.abs(x - tr.xyz[:, 0]).max() <= 5e-3 * np.abs(tr.xyz[:, 0]).max()


def _lead(n=20, dt=0.2):
    rng = np.random.default_rng(0)
    return SampledTrajectory(0.0, dt, rng.normal(size=(n, 6)), rng.normal(size=(n, 3)))


def test_make_desired_shifts():
    lead = _lead()
    assert pipeline.make_desired(lead, 0.0) is lead
    d1 = pipeline.make_desired(lead, 0.2)
    assert np.array_equal(d1.states[1:], lead.states[:-1])
    assert np.array_equal(d1.states[0], lead.states[0])
    d3 = pipeline.make_desired(lead, 0.6)
    assert np.array_equal(d3.states[3:], lead.states[:-3])
    assert np.array_equal(d3.states[:3], np.tile(lead.states[0], (3, 1)))
    assert d3.same_grid(lead)


def test_make_desired_inverse_shift_bit_exact():
    lead = _lead()
    d = pipeline.make_desired(lead, 0.6)
    # shifting back by 3 samples on the overlap
    assert np.array_equal(d.states[3:], lead.states[: len(lead) - 3])
    assert np.array_equal(d.controls[3:], lead.controls[: len(lead) - 3])


def test_make_desired_errors():
    with pytest.raises(ValueError):
        pipeline.make_desired(_lead(), 0.3)
    with pytest.raises(ValueError):
        pipeline.make_desired(_lead(), -0.2)


def synthetic_tracks(flights=("FF4", "FF5", "FF7", "FF9"), dt=0.2, horizon=6.0):
    from conftest import sinusoid_leader

    h = default_hierarchy()
    out = []
    for j, f in enumerate(flights):
        lead = sinusoid_leader(horizon, dt)
        lead = lead.replace(states=lead.states * (1 + 0.1 * j))
        trajs = forward.rollout_hierarchy(h, lead, {a: C_TRUE for a in h.followers})
        out += pipeline.tracks_from_trajectories(f, trajs)
    return out


def test_table1_times_four_flights():
    tracks = synthetic_tracks()
    ds = pipeline.build_pair_datasets(tracks, default_hierarchy(), ["FF4", "FF5", "FF7", "FF9"])
    assert len(ds) == 36
    assert {(d.flight_id, d.follower_id) for d in ds} == {
        (f, p.follower) for f in ["FF4", "FF5", "FF7", "FF9"] for p in default_hierarchy().pairs
    }
    for d in ds:
        assert d.traj.same_grid(d.desired)


def test_identical_tracks_zero_error():
    tr = track_from(np.sin, pigeon="A")
    twin = RawTrack("F", "B", tr.t, tr.xyz)
    h = FlockHierarchy((LeaderFollowerPair("A", "B", 0.0),))
    (d,) = pipeline.build_pair_datasets([tr, twin], h)
    assert np.array_equal(d.traj.states - d.desired.states, np.zeros_like(d.traj.states))


def test_trim_warmup_shortens_by_delay():
    tr = track_from(np.sin, pigeon="A")
    other = RawTrack("F", "B", tr.t, tr.xyz * 2)
    h = FlockHierarchy((LeaderFollowerPair("A", "B", 0.6),))
    (full,) = pipeline.build_pair_datasets([tr, other], h)
    (trim,) = pipeline.build_pair_datasets([tr, other], h, trim_warmup=True)
    assert len(trim.traj) == len(full.traj) - 3
    assert trim.traj.t0 == pytest.approx(full.traj.t0 + 0.6)
    # desired at sample k comes from the leader at k - 3
    assert np.array_equal(trim.desired.states, full.desired.states[3:])
    assert np.array_equal(full.desired.states[3:], pipeline.differentiate(tr).states[:-3])


def test_overlap_intersection():
    a = track_from(np.sin, n=40, pigeon="A")
    b = RawTrack("F", "B", a.t[5:], a.xyz[5:] * 0.5)
    h = FlockHierarchy((LeaderFollowerPair("A", "B", 0.2),))
    (d,) = pipeline.build_pair_datasets([a, b], h)
    assert len(d.traj) == 35
    assert d.traj.t0 == pytest.approx(1.0)


def test_missing_track_named():
    tracks = synthetic_tracks(flights=("FF4",))
    tracks = [t for t in tracks if t.pigeon_id != "H"]
    with pytest.raises(DataError, match="FF4, agent H"):
        pipeline.build_pair_datasets(tracks, default_hierarchy())


def test_dt_mismatch_within_flight():
    a = track_from(np.sin, n=40, pigeon="A")
    b = track_from(np.sin, n=80, dt=0.1, pigeon="B")
    with pytest.raises(DataError, match="dt"):
        pipeline.build_pair_datasets([a, b], FlockHierarchy((LeaderFollowerPair("A", "B", 0.2),)))


def test_serialization_deterministic(tmp_path):
    tracks = synthetic_tracks(flights=("FF4",))
    p = tmp_path / "t.csv"
    pipeline.write_tracks(p, tracks)
    a = [d.to_json() for d in pipeline.build_pair_datasets(pipeline.load_tracks(p), default_hierarchy())]
    b = [d.to_json() for d in pipeline.build_pair_datasets(pipeline.load_tracks(p), default_hierarchy())]
    assert a == b
    import json

    back = pipeline.PairDataset.from_dict(json.loads(a[0]))
    assert back.to_json() == a[0]


def test_time_window():
    tracks = synthetic_tracks(flights=("FF4",))
    ds = pipeline.build_pair_datasets(tracks, default_hierarchy(), t_start=1.0, t_end=4.0)
    assert all(d.traj.t0 == pytest.approx(1.0) and d.traj.t_final == pytest.approx(4.0) for d in ds)
