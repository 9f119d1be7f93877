"""End-to-end acceptance suite.

Each test records one PASS/FAIL line (printed in the terminal summary) and
then asserts, so a failing criterion is visible both in the summary and as
a failed test.
"""

import json
import time

import numpy as np

from conftest import C_TRUE, X0_OFFSET, random_desired, sinusoid_leader
from pigeon_ioc import cli, forward, ioc, pipeline, report
from pigeon_ioc import dynamics as dyn
from pigeon_ioc.flock import SampledTrajectory, WeightVector, default_hierarchy
from pigeon_ioc.pipeline import RawTrack


def _within(c_hat, c_true, tol=1e-2):
    """Relative tolerance on nonzero entries, absolute on true zeros."""
    c_hat, c_true = np.asarray(c_hat), np.asarray(c_true)
    err = np.where(c_true == 0, np.abs(c_hat), np.abs(c_hat - c_true) / np.abs(np.where(c_true == 0, 1, c_true)))
    return float(err.max())


def test_1_round_trip(tmp_path, acceptance_record):
    pair = tmp_path / "pair.txt"
    pair.write_text("A,M,0.2\n")
    start = time.perf_counter()
    assert cli.main(["synth", "--hierarchy", str(pair), "--leader", "sinusoid", "--horizon", "10",
                     "--dt", "0.02", "--out", str(tmp_path / "syn")]) == 0
    assert cli.main(["ioc", "--data", str(tmp_path / "syn" / "tracks.csv"), "--hierarchy", str(pair),
                     "--known-index", "9", "--known-value", "1", "--out", str(tmp_path / "res")]) == 0
    elapsed = time.perf_counter() - start
    sol = json.loads((tmp_path / "res" / "M.json").read_text())["runs"][0]["solution"]
    err = _within(sol["c_hat"], C_TRUE)
    ok = err <= 1e-2 and sol["unique"] and elapsed < 10
    c_txt = ", ".join(f"{v:.3g}" for v in sol["c_hat"])
    acceptance_record("1 forward-inverse round trip", ok,
                      f"max err {err:.3g} (tol 1e-2), unique={sol['unique']}, {elapsed:.1f} s, c_hat=[{c_txt}]")
    assert ok


def test_2_oracle_equivalence(acceptance_record):
    start = time.perf_counter()
    devs = []
    for seed in range(5):
        rng = np.random.default_rng(100 + seed)
        horizon = round(rng.uniform(2.0, 4.0) / 0.02) * 0.02
        desired = random_desired(rng, horizon, 0.02)
        c = np.concatenate([rng.uniform(0, 5, 6), rng.uniform(0.5, 5, 3)])
        x0 = desired.states[0] + rng.normal(0, 0.5, 6)
        fwd = forward.solve_tracking(c, desired, x0)
        qp = forward.direct_qp_oracle(c, desired, x0)
        devs.append(np.abs(fwd.states - qp.states).max() / np.abs(qp.states).max())
    elapsed = time.perf_counter() - start
    ok = max(devs) <= 1e-3 and elapsed < 30
    acceptance_record("2 oracle equivalence", ok, f"max rel dev {max(devs):.3g} (tol 1e-3), {elapsed:.1f} s")
    assert ok


def test_3_minimum_principle_residual(leader, acceptance_record):
    traj = forward.solve_tracking(C_TRUE, leader, leader.states[0] + X0_OFFSET)
    G = ioc.assemble_gram_single(traj, leader)
    value = C_TRUE @ G.W @ C_TRUE / (G.lambda_max * (C_TRUE @ C_TRUE) * leader.duration)
    ok = value <= 1e-6
    acceptance_record("3 minimum-principle residual", ok, f"{value:.3g} (tol 1e-6)")
    assert ok


def _central(fn, x, h=1e-4):
    cols = []
    for m in range(x.size):
        e = np.zeros_like(x)
        e[m] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.array(cols)


def test_4_gradient_suite(acceptance_record):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        x, x_des, u = rng.normal(0, 3, 6), rng.normal(0, 3, 6), rng.normal(0, 3, 3)
        pairs = [
            (dyn.grad_x_phi_T(x, x_des), _central(lambda z: dyn.basis_phi(z, x_des, u), x)),
            (dyn.grad_u_phi_T(u), _central(lambda z: dyn.basis_phi(x, x_des, z), u)),
            (dyn.grad_x_f_T(), _central(lambda z: dyn.eval_f(z, u), x)),
            (dyn.grad_u_f_T(), _central(lambda z: dyn.eval_f(x, z), u)),
        ]
        for analytic, fd in pairs:
            worst = max(worst, np.abs(analytic - fd).max() / max(np.abs(analytic).max(), 1.0))
    ok = worst <= 1e-6
    acceptance_record("4 gradient suite", ok, f"max rel err {worst:.3g} over 100 points (tol 1e-6)")
    assert ok


def _axis_flight(axes, horizon=6.0):
    lead = sinusoid_leader(horizon=horizon)
    keep = np.array([ax in axes for ax in "xyz"] * 2)
    lead = lead.replace(states=lead.states * keep, controls=lead.controls * keep[:3])
    return forward.solve_tracking(C_TRUE, lead, lead.states[0]), lead


def test_5_gram_properties(acceptance_record):
    fx, fy = _axis_flight("x"), _axis_flight("y")
    full = forward.solve_tracking(C_TRUE, sinusoid_leader(6.0), sinusoid_leader(6.0).states[0] + X0_OFFSET)
    G = ioc.assemble_gram_single(full, sinusoid_leader(6.0))
    W = G.W
    lam = np.linalg.eigvalsh(W)
    sym = np.abs(W - W.T).max()
    psd = lam[0] >= -1e-8 * lam[-1]

    Gx, Gy = ioc.assemble_gram_single(*fx), ioc.assemble_gram_single(*fy)
    Gxy = ioc.assemble_gram_multi([fx, fy])
    additivity = np.abs(Gxy.W - (Gx.W + Gy.W)).max() / np.abs(Gxy.W).max()
    rank_up = Gxy.rank() > max(Gx.rank(), Gy.rank())
    Gdup = ioc.assemble_gram_multi([fx, fx])
    rank_same = Gdup.rank() == Gx.rank()

    ok = sym <= 1e-10 and psd and additivity <= 1e-12 and rank_up and rank_same
    detail = (
        f"asym {sym:.2g}, min eig/max {lam[0] / lam[-1]:.2g}, additivity {additivity:.2g}, "
        f"rank x={Gx.rank()} y={Gy.rank()} stacked={Gxy.rank()} dup={Gdup.rank()}"
    )
    acceptance_record("5 Gram properties", ok, detail)
    assert ok


def test_6_uniqueness_gate(leader, acceptance_record):
    still = SampledTrajectory(0.0, 0.02, np.tile(leader.states[0], (len(leader), 1)), np.zeros((len(leader), 3)))
    sol = ioc.recover_weights([(still, still)])
    ok = (not sol.unique) and sol.null_space is not None and sol.null_space.shape[1] > 0
    shape = None if sol.null_space is None else sol.null_space.shape
    acceptance_record("6 uniqueness gate", ok, f"unique={sol.unique}, null space {shape}, r_w={sol.r_w}")
    assert ok


def test_7_pipeline_exactness(acceptance_record):
    dt = 0.2
    t = dt * np.arange(40)
    rng = np.random.default_rng(3)
    lead = SampledTrajectory(0.0, dt, rng.normal(size=(40, 6)), rng.normal(size=(40, 3)))
    shifted = pipeline.make_desired(lead, 0.6)
    shift_ok = np.array_equal(shifted.states[3:], lead.states[:-3]) and np.array_equal(
        shifted.controls[3:], lead.controls[:-3]
    )

    lin = pipeline.differentiate(RawTrack("F", "A", t, np.column_stack([2 * t - 1, -t, 0 * t])))
    quad = pipeline.differentiate(RawTrack("F", "A", t, np.column_stack([t * t, 0.5 * t * t, 0 * t])))
    diff_err = max(
        np.abs(lin.states[1:-1, 3:] - [2, -1, 0]).max(),
        np.abs(lin.controls[1:-1]).max(),
        np.abs(quad.states[1:-1, 3:5] - np.column_stack([2 * t, t])[1:-1]).max(),
        np.abs(quad.controls[1:-1, :2] - [2, 1]).max(),
    )

    h = default_hierarchy()
    tracks = []
    for j, f in enumerate(("FF4", "FF5", "FF7", "FF9")):
        base = sinusoid_leader(4.0, dt)
        base = base.replace(states=base.states * (1 + 0.1 * j))
        trajs = forward.rollout_hierarchy(h, base, {a: C_TRUE for a in h.followers})
        tracks += pipeline.tracks_from_trajectories(f, trajs)
    n = len(pipeline.build_pair_datasets(tracks, h))

    ok = shift_ok and diff_err <= 1e-9 and n == 36
    acceptance_record("7 pipeline exactness", ok, f"shift bit-exact={shift_ok}, diff err {diff_err:.2g}, {n} datasets")
    assert ok


def test_8_report_fidelity(acceptance_record):
    c = WeightVector([0, 0, 0, 6.86, 5.09, 5.62, 59.06, 61.23, 1.0], 9, 1.0)
    sol = ioc.IocSolution(c, r_w=2.33e13, residual=0.0, unique=True, flight_ids=("FF4",))
    row = report.render_row("FF4", 2451.0, sol)
    expected = "FF4 | 2451 s | 0.00, 0.00, 0.00, 6.86, 5.09, 5.62, 59.06, 61.23 | 2.33e13"
    ok = row == expected
    acceptance_record("8 report fidelity", ok, repr(row))
    assert ok
