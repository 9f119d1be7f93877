"""Compiled kernels agree with their interpreted source and with the numpy path."""

import os
import subprocess
import sys

import numpy as np
import pytest

from pigeon_ioc import kernels
from pigeon_ioc._accel import USE_NUMBA
from pigeon_ioc.dynamics import A, B

needs_numba = pytest.mark.skipif(not USE_NUMBA, reason="numba disabled")


def _inputs(N=120, seed=0):
    rng = np.random.default_rng(seed)
    xd = rng.normal(size=(N, 6))
    Q = np.diag(rng.uniform(0, 3, 6))
    Rinv = np.diag(1 / rng.uniform(0.5, 3, 3))
    return xd, Q, Rinv


@needs_numba
def test_riccati_compiled_matches_python():
    xd, Q, Rinv = _inputs()
    S1, s1 = kernels.riccati_sweep(A, B, Rinv, Q, xd, 0.02)
    S2, s2 = kernels.riccati_sweep.py_func(A, B, Rinv, Q, xd, 0.02)
    assert np.allclose(S1, S2, rtol=1e-12, atol=1e-12)
    assert np.allclose(s1, s2, rtol=1e-12, atol=1e-12)


@needs_numba
def test_rollout_compiled_matches_python():
    xd, Q, Rinv = _inputs()
    S, s = kernels.riccati_sweep(A, B, Rinv, Q, xd, 0.02)
    x0 = np.ones(6)
    X1, U1 = kernels.closed_loop_rollout(A, B, Rinv, Q, S, s, xd, x0, 0.02)
    X2, U2 = kernels.closed_loop_rollout.py_func(A, B, Rinv, Q, S, s, xd, x0, 0.02)
    assert np.allclose(X1, X2, rtol=1e-12, atol=1e-12)
    assert np.allclose(U1, U2, rtol=1e-12, atol=1e-12)


@needs_numba
def test_costate_compiled_matches_python():
    rng = np.random.default_rng(2)
    g = rng.normal(size=(80, 6, 9))
    assert np.allclose(kernels.costate_basis(A, g, 0.05), kernels.costate_basis.py_func(A, g, 0.05), atol=1e-12)


def test_gram_loop_matches_einsum():
    rng = np.random.default_rng(3)
    gu = rng.normal(size=(50, 3, 9))
    L = rng.normal(size=(50, 6, 9))
    a = kernels._gram_numpy(B.T.copy(), gu, L, 0.1)
    b = kernels._gram_loop(np.ascontiguousarray(B.T), gu, L, 0.1)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_env_flag_selects_fallback():
    code = "from pigeon_ioc import _accel, kernels; print(_accel.USE_NUMBA, hasattr(kernels.riccati_sweep, 'py_func'))"
    env = dict(os.environ, PIGEON_IOC_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "False"]
