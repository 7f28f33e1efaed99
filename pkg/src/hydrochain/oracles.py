"""Independent reference computations used to pin expected values.

Everything here takes the slow, obviously-correct route and shares no code
with the solvers it cross-checks: the Lyapunov equation is vectorized with
Kronecker products and solved densely; the covariance ODE is integrated by a
single dense matrix exponential of its vectorized generator; the damped mode
equation is solved as a scalar two-root problem; and the mode quotient and
the boundary force are re-evaluated at 50 significant digits with mpmath.
"""

from __future__ import annotations

import numpy as np

from .chain import ChainConfig
from .covariance import CovarianceBlocks
from .spectral import drift_matrix


def lyapunov_dense_solve(cfg: ChainConfig, p_sq_avg: np.ndarray,
                         r_site: CovarianceBlocks) -> CovarianceBlocks:
    """Solve A S + S A^T = 4 gamma Sigma2 + R by Kronecker vectorization.

    ``p_sq_avg`` is the raw <p_x^2> diagonal (entry 0 replaced by T_-),
    ``r_site`` the site-space time-boundary term.  Sized for n <= 16.
    """
    n = cfg.n
    dim = 2 * n + 1
    a = drift_matrix(n, cfg.gamma)
    rhs = r_site.assemble().astype(float).copy()
    d = np.asarray(p_sq_avg, dtype=float).copy()
    d[0] = cfg.t_minus
    idx = np.arange(n + 1)
    rhs[n + idx, n + idx] += 4.0 * cfg.gamma * d

    eye = np.eye(dim)
    # row-major vec: vec(A S) = (A (x) I) vec(S), vec(S A^T) = (I (x) A) vec(S)
    op = np.kron(a, eye) + np.kron(eye, a)
    s = np.linalg.solve(op, rhs.reshape(-1)).reshape(dim, dim)
    s = 0.5 * (s + s.T)
    return CovarianceBlocks(s_r=s[:n, :n], s_rp=s[:n, n:], s_p=s[n:, n:], tau=0.0)


def covariance_expm_evolution(cfg: ChainConfig, s0: CovarianceBlocks,
                              tau: float) -> CovarianceBlocks:
    """Exact-in-time solution of the covariance ODE for a centered chain.

    Valid when the mean field vanishes (no force, zero-mean start): the ODE
    dvec(S)/dtau = L vec(S) + b is then autonomous and solved by one dense
    matrix exponential of the (dim^2+1) homogenized generator.  n <= 8.
    """
    from scipy.linalg import expm

    n = cfg.n
    dim = 2 * n + 1
    a = drift_matrix(n, cfg.gamma)
    eye = np.eye(dim)
    lin = -(np.kron(a, eye) + np.kron(eye, a))
    # flip reinjection: +4 gamma S_p[y, y] on the (p_y, p_y) diagonal, y >= 1
    for y in range(1, n + 1):
        k = (n + y) * dim + (n + y)
        lin[k, k] += 4.0 * cfg.gamma
    b = np.zeros(dim * dim)
    b[(n + 0) * dim + (n + 0)] = 4.0 * cfg.gamma * cfg.t_minus

    big = np.zeros((dim * dim + 1, dim * dim + 1))
    big[:-1, :-1] = lin
    big[:-1, -1] = b
    v0 = np.concatenate([s0.assemble().reshape(-1), [1.0]])
    v = expm(big * tau) @ v0
    s = v[:-1].reshape(dim, dim)
    s = 0.5 * (s + s.T)
    return CovarianceBlocks(s_r=s[:n, :n], s_rp=s[:n, n:], s_p=s[n:, n:], tau=tau)


def covariance_expm_time_average(cfg: ChainConfig, s0: CovarianceBlocks,
                                 tau: float, n_panels: int = 4096):
    """(1/tau) int_0^tau S dtau' via expm at Gauss-Legendre nodes (n <= 6)."""
    nodes, weights = np.polynomial.legendre.leggauss(12)
    edges = np.linspace(0.0, tau, n_panels + 1)
    acc = None
    for a_, b_ in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (a_ + b_), 0.5 * (b_ - a_)
        for x, w in zip(nodes, weights):
            s = covariance_expm_evolution(cfg, s0, mid + half * x).assemble()
            acc = w * half * s if acc is None else acc + w * half * s
    acc /= tau
    n = cfg.n
    return CovarianceBlocks(s_r=acc[:n, :n], s_rp=acc[:n, n:],
                            s_p=acc[n:, n:], tau=tau)


def damped_mode_oracle(gamma: float, lam: float, z0: float, dz0: float,
                       tau: float) -> float:
    """Scalar solution of z'' + 2 gamma z' + lam z = 0 via the two roots."""
    import cmath

    root = cmath.sqrt(gamma * gamma - lam)
    lp, lm = gamma + root, gamma - root
    if abs(lp - lm) < 1e-13:
        # critical damping: z = (z0 + (dz0 + gamma z0) tau) e^{-gamma tau}
        return float(((z0 + (dz0 + gamma * z0) * tau)
                      * cmath.exp(-gamma * tau)).real)
    # z = c_m e^{-lm tau} + c_p e^{-lp tau}, c_m + c_p = z0,
    # -lm c_m - lp c_p = dz0
    c_m = (dz0 + lp * z0) / (lp - lm)
    c_p = z0 - c_m
    z = c_m * cmath.exp(-lm * tau) + c_p * cmath.exp(-lp * tau)
    return float(z.real)


def quotient_hp(gamma: float, lam: float, t: float, dps: int = 50) -> complex:
    """50-digit evaluation of e^{-lm t}(1 - e^{-dl t})/dl."""
    import mpmath as mp

    with mp.workdps(dps):
        g = mp.mpf(float(gamma))
        l = mp.mpf(float(lam))
        tt = mp.mpf(float(t))
        root = mp.sqrt(mp.mpc(g * g - l))
        lm = g - root
        dl = 2 * root
        if dl == 0:
            val = tt * mp.e ** (-g * tt)
            return complex(float(val), 0.0)
        val = mp.e ** (-lm * tt) * (1 - mp.e ** (-dl * tt)) / dl
        return complex(float(val.real), float(val.imag))


def forcing_hp(cfg: ChainConfig, tau: float, dps: int = 50) -> float:
    """50-digit evaluation of the boundary force series."""
    import mpmath as mp

    with mp.workdps(dps):
        total = mp.mpf(float(cfg.f_bar))
        omega = 2 * mp.pi / mp.mpf(float(cfg.theta))
        scale = 2 / mp.sqrt(cfg.n)
        for m in cfg.forcing_modes:
            z = mp.mpc(float(m.re), float(m.im)) * mp.e ** (
                mp.mpc(0, 1) * m.ell * omega * mp.mpf(float(tau)))
            total += scale * z.real
        return float(total)
