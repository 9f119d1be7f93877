"""Time-stepping kernels: Riccati/feedforward sweep, closed-loop rollout,
costate-basis integration and Gram quadrature.

All integrators are fixed-step RK4 on the sample grid. Off-grid values inside
RK4 stages come from linear interpolation of sampled data, or from cubic
Hermite interpolation for the Riccati solution whose derivative is known.
Every kernel is compiled with numba unless ``PIGEON_IOC_DISABLE_NUMBA`` is set.
"""

import numpy as np

from ._accel import USE_NUMBA, jit


@jit
def _riccati_rhs(A, BRB, Q, S, s, xT):
    # derivative in reversed time tau = t_f - t
    AtS = A.T @ S
    dS = AtS + AtS.T - S @ BRB @ S + Q
    dS = 0.5 * (dS + dS.T)
    ds = (A - BRB @ S).T @ s - Q @ xT
    return dS, ds


@jit
def riccati_sweep(A, B, Rinv, Q, x_des, dt):
    """Backward sweep of ``S`` (N,n,n) and ``s`` (N,n) from zero terminal values."""
    N = x_des.shape[0]
    n = A.shape[0]
    BRB = B @ Rinv @ B.T
    S = np.zeros((N, n, n))
    s = np.zeros((N, n))
    h = dt
    for k in range(N - 1, 0, -1):
        Sk = S[k].copy()
        sk = s[k].copy()
        xa = x_des[k]
        xb = x_des[k - 1]
        xm = 0.5 * (xa + xb)
        dS1, ds1 = _riccati_rhs(A, BRB, Q, Sk, sk, xa)
        dS2, ds2 = _riccati_rhs(A, BRB, Q, Sk + 0.5 * h * dS1, sk + 0.5 * h * ds1, xm)
        dS3, ds3 = _riccati_rhs(A, BRB, Q, Sk + 0.5 * h * dS2, sk + 0.5 * h * ds2, xm)
        dS4, ds4 = _riccati_rhs(A, BRB, Q, Sk + h * dS3, sk + h * ds3, xb)
        Sn = Sk + (h / 6.0) * (dS1 + 2.0 * dS2 + 2.0 * dS3 + dS4)
        S[k - 1] = 0.5 * (Sn + Sn.T)
        s[k - 1] = sk + (h / 6.0) * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4)
    return S, s


@jit
def closed_loop_rollout(A, B, Rinv, Q, S, s, x_des, x0, dt):
    """Forward RK4 of ``x' = A x + B u`` with ``u = -R^-1 B^T (S x + s)``.

    Returns states (N,n) and grid controls (N,m).
    """
    N = S.shape[0]
    n = A.shape[0]
    m = B.shape[1]
    BRB = B @ Rinv @ B.T
    K = Rinv @ B.T
    X = np.zeros((N, n))
    U = np.zeros((N, m))
    X[0] = x0
    h = dt
    # reverse-time derivatives at grid points, for Hermite midpoints
    dS = np.zeros((N, n, n))
    ds = np.zeros((N, n))
    for k in range(N):
        a, b = _riccati_rhs(A, BRB, Q, S[k], s[k], x_des[k])
        dS[k] = a
        ds[k] = b
    for k in range(N - 1):
        # d/dt = -d/dtau, so the Hermite correction sign flips
        Sm = 0.5 * (S[k] + S[k + 1]) - (h / 8.0) * (dS[k] - dS[k + 1])
        sm = 0.5 * (s[k] + s[k + 1]) - (h / 8.0) * (ds[k] - ds[k + 1])
        x = X[k]
        Ma = A - BRB @ S[k]
        Mm = A - BRB @ Sm
        Mb = A - BRB @ S[k + 1]
        k1 = Ma @ x - BRB @ s[k]
        k2 = Mm @ (x + 0.5 * h * k1) - BRB @ sm
        k3 = Mm @ (x + 0.5 * h * k2) - BRB @ sm
        k4 = Mb @ (x + h * k3) - BRB @ s[k + 1]
        X[k + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    for k in range(N):
        U[k] = -(K @ (S[k] @ X[k] + s[k]))
    return X, U


@jit
def costate_basis(A, grad_x, dt):
    """Integrate ``L' = -grad_x - A^T L`` backward from ``L(t_f) = 0``.

    ``grad_x`` is the sampled ``grad_x phi^T`` series (N,n,k); the forcing is
    linearly interpolated between samples.
    """
    N = grad_x.shape[0]
    n = grad_x.shape[1]
    nk = grad_x.shape[2]
    L = np.zeros((N, n, nk))
    At = A.T.copy()
    h = dt
    for k in range(N - 1, 0, -1):
        Lk = L[k].copy()
        Ga = grad_x[k]
        Gb = grad_x[k - 1]
        Gm = 0.5 * (Ga + Gb)
        # reversed time: dL/dtau = grad_x + A^T L
        k1 = Ga + At @ Lk
        k2 = Gm + At @ (Lk + 0.5 * h * k1)
        k3 = Gm + At @ (Lk + 0.5 * h * k2)
        k4 = Gb + At @ (Lk + h * k3)
        L[k - 1] = Lk + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return L


@jit
def _gram_loop(Bt, grad_u, L, dt):
    N = L.shape[0]
    nk = L.shape[2]
    W = np.zeros((nk, nk))
    for k in range(N):
        W1 = grad_u[k] + Bt @ L[k]
        w = dt
        if k == 0 or k == N - 1:
            w = 0.5 * dt
        W += w * (W1.T @ W1)
    return 0.5 * (W + W.T)


def _gram_numpy(Bt, grad_u, L, dt):
    W1 = grad_u + np.einsum("ij,njk->nik", Bt, L)
    w = np.full(L.shape[0], dt)
    w[0] = w[-1] = 0.5 * dt
    W = np.einsum("n,nik,nil->kl", w, W1, W1)
    return 0.5 * (W + W.T)


def gram_trapezoid(Bt, grad_u, L, dt):
    """Trapezoidal quadrature of ``W1^T W1`` with ``W1 = grad_u + B^T L``."""
    Bt = np.ascontiguousarray(Bt, dtype=np.float64)
    grad_u = np.ascontiguousarray(grad_u, dtype=np.float64)
    L = np.ascontiguousarray(L, dtype=np.float64)
    if USE_NUMBA:
        return _gram_loop(Bt, grad_u, L, float(dt))
    return _gram_numpy(Bt, grad_u, L, float(dt))
