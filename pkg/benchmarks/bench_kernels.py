#!/usr/bin/env python3
"""Time the hot kernels compiled with numba against the pure-numpy fallback.

Each mode runs in its own interpreter because the backend is chosen once, at
import time, from ``PIGEON_IOC_DISABLE_NUMBA``.

    python3 benchmarks/bench_kernels.py [--horizon 60] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from pigeon_ioc import _accel, forward, ioc, synth

horizon, repeat = float(sys.argv[1]), int(sys.argv[2])
c = np.array([1, 1, 1, 2, 2, 2, 5, 5, 1.0])
lead = synth.sinusoid(horizon, 0.02)
x0 = lead.states[0] + np.array([0.5, -0.5, 1.0, 0.2, -0.2, 0.3])

def best(fn):
    fn()  # warm-up, includes compilation when numba is on
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)

traj = forward.solve_tracking(c, lead, x0)
out = {
    "numba": _accel.USE_NUMBA,
    "samples": len(lead),
    "solve_tracking": best(lambda: forward.solve_tracking(c, lead, x0)),
    "costate_basis": best(lambda: ioc.integrate_costate_basis(traj, lead)),
    "gram_single": best(lambda: ioc.assemble_gram_single(traj, lead)),
    "x_final": traj.states[-1].tolist(),
}
print(json.dumps(out))
"""


def run_mode(disable: bool, horizon: float, repeat: int) -> dict:
    env = dict(os.environ)
    if disable:
        env["PIGEON_IOC_DISABLE_NUMBA"] = "1"
    else:
        env.pop("PIGEON_IOC_DISABLE_NUMBA", None)
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(horizon), str(repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=60.0, help="leader horizon in seconds (dt 0.02)")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    jit = run_mode(False, args.horizon, args.repeat)
    ref = run_mode(True, args.horizon, args.repeat)
    if not jit["numba"]:
        print("numba unavailable; both runs used the numpy fallback")

    print(f"{jit['samples']} samples, best of {args.repeat}")
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for key in ("solve_tracking", "costate_basis", "gram_single"):
        a, b = jit[key], ref[key]
        print(f"{key:<16}{a:12.5f}{b:12.5f}{b / a:9.1f}x")
    diff = max(abs(p - q) for p, q in zip(jit["x_final"], ref["x_final"]))
    print(f"max |x(t_f)| difference between backends: {diff:.2e}")


if __name__ == "__main__":
    main()
