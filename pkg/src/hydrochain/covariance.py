"""Deterministic evolution and algebraic resolution of the fluctuation covariance.

The centered second moments S = [[S_r, S_rp], [S_pr, S_p]] of the chain obey a
closed linear matrix ODE in microscopic time,

    dS/dtau = -A S - S A^T + 4 gamma Sigma2,

where Sigma2 is diagonal in the momentum block with entries
(T_-, E[p_1^2], ..., E[p_n^2]) and E[p_y^2] = S_p[y,y] + pbar_y^2.  The drift
A is bidiagonal-block, so the right-hand side costs O(n^2) using shifted
slices.  Integration is classical RK4 with running trapezoid accumulation of
the time averages <S>_t.

Time-averaging the ODE gives the algebraic system A<S> + <S>A^T = 4g Sigma2 + R
with R = (S(0) - S(n^2 t))/(n^2 t), solved in closed form mode-by-mode: each
Fourier pair (j, j') satisfies a 4x4 linear system whose solution is encoded
by the kernels Theta_alpha and Xi_beta^(alpha) in the two eigenvalues
(c, c') = (lambda_j, lambda_j').  The same kernels build the positive map
Pi(Gamma) and the doubly stochastic matrix M used by the kinetic-energy
flatness diagnostics, and the time-averaged blocks satisfy an exact
fluctuation-dissipation identity checked by ``fd_relation_check``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainConfig
from .spectral import SpectralBasis, build_basis

try:  # optional accelerator; identical arithmetic, see _rk4_step_numba
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# state containers


@dataclass
class CovarianceBlocks:
    """Second moments of the fluctuation field at one microscopic time.

    s_r[x-1, y-1] = E[r'_x r'_y]       (x, y = 1..n)
    s_rp[x-1, y]  = E[r'_x p'_y]       (x = 1..n, y = 0..n)
    s_p[x, y]     = E[p'_x p'_y]       (x, y = 0..n)
    """

    s_r: np.ndarray
    s_rp: np.ndarray
    s_p: np.ndarray
    tau: float = 0.0

    @property
    def n(self) -> int:
        return self.s_r.shape[0]

    def assemble(self) -> np.ndarray:
        n = self.n
        full = np.empty((2 * n + 1, 2 * n + 1))
        full[:n, :n] = self.s_r
        full[:n, n:] = self.s_rp
        full[n:, :n] = self.s_rp.T
        full[n:, n:] = self.s_p
        return full

    def copy(self) -> "CovarianceBlocks":
        return CovarianceBlocks(self.s_r.copy(), self.s_rp.copy(),
                                self.s_p.copy(), self.tau)

    def symmetrize(self) -> None:
        self.s_r = 0.5 * (self.s_r + self.s_r.T)
        self.s_p = 0.5 * (self.s_p + self.s_p.T)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.assemble())[0])


def equilibrium_blocks(cfg: ChainConfig, temperature: float | None = None
                       ) -> CovarianceBlocks:
    t = cfg.t_minus if temperature is None else temperature
    n = cfg.n
    return CovarianceBlocks(s_r=t * np.eye(n), s_rp=np.zeros((n, n + 1)),
                            s_p=t * np.eye(n + 1), tau=0.0)


def local_gibbs_blocks(cfg: ChainConfig, temperature_profile) -> CovarianceBlocks:
    """Diagonal covariance of the product Gaussian with per-site temperatures."""
    prof = np.asarray(temperature_profile, dtype=float)
    if prof.shape[0] != cfg.n + 1:
        raise ValueError(f"profile must have length {cfg.n + 1}")
    if np.any(prof <= 0):
        raise ValueError("temperatures must be positive")
    s_p = np.diag(prof).astype(float)
    s_p[0, 0] = cfg.t_minus
    return CovarianceBlocks(s_r=np.diag(prof[1:]).astype(float),
                            s_rp=np.zeros((cfg.n, cfg.n + 1)), s_p=s_p, tau=0.0)


# ---------------------------------------------------------------------------
# matrix ODE right-hand side and RK4 evolution


def _rhs(gamma: float, s_r, s_rp, s_p, noise_diag):
    """O(n^2) right-hand side via shifted slices.

    noise_diag is the Sigma2 diagonal (T_-, E p_1^2, .., E p_n^2) already
    including the stage's S_p diagonal, or None when the noise is disabled.
    """
    s_pr = s_rp.T
    t1 = s_pr[1:, :] - s_pr[:-1, :]
    ds_r = t1 + t1.T

    ds_rp = s_p[1:, :] - s_p[:-1, :] - 2.0 * gamma * s_rp
    ds_rp[:, 0] += s_r[:, 0]
    ds_rp[:, 1:-1] += s_r[:, 1:] - s_r[:, :-1]
    ds_rp[:, -1] -= s_r[:, -1]

    t4 = np.empty_like(s_p)
    t4[0, :] = s_rp[0, :]
    t4[1:-1, :] = s_rp[1:, :] - s_rp[:-1, :]
    t4[-1, :] = -s_rp[-1, :]
    ds_p = t4 + t4.T - 4.0 * gamma * s_p
    if noise_diag is not None:
        idx = np.arange(s_p.shape[0])
        ds_p[idx, idx] += 4.0 * gamma * noise_diag
    return ds_r, ds_rp, ds_p


def _noise_diag(cfg: ChainConfig, s_p, pbar_sq):
    d = np.empty(cfg.n + 1)
    d[0] = cfg.t_minus
    d[1:] = np.diagonal(s_p)[1:]
    if pbar_sq is not None:
        d[1:] += pbar_sq[1:]
    return d


@dataclass
class CovariancePath:
    """Result of one covariance evolution: endpoints, time averages, snapshots."""

    cfg: ChainConfig
    t_macro: float
    s0: CovarianceBlocks
    s_final: CovarianceBlocks
    s_avg: CovarianceBlocks            # entries are (1/tau) int_0^tau S dtau
    pbar_sq_avg: np.ndarray            # (n+1,) time-averaged pbar_x^2
    snapshots: list = field(default_factory=list)
    dt: float = 0.0

    @property
    def tau_end(self) -> float:
        return self.cfg.n**2 * self.t_macro

    def p_sq_avg(self) -> np.ndarray:
        """Time-averaged raw second moment <p_x^2>_t, x = 0..n."""
        return np.diagonal(self.s_avg.s_p) + self.pbar_sq_avg


def evolve_covariance(cfg: ChainConfig, s0: CovarianceBlocks, pbar_path,
                      t_macro: float, dt: float, record_times=(),
                      noise: bool = True, psd_tol: float = 1e-9,
                      use_numba: bool | None = None) -> CovariancePath:
    """RK4 integration of the covariance ODE up to microscopic n^2 * t_macro.

    ``pbar_path`` is a callable tau -> p_bar vector (or None for a centered
    run).  PSD is checked at the endpoints and snapshots: relative violations
    below ``psd_tol`` are repaired by clipping negative eigenvalues, larger
    ones raise (the step is too coarse).  ``record_times`` snapshots land on
    the nearest integration step (the final time always lands exactly).
    """
    if s0.n != cfg.n:
        raise ValueError("initial blocks do not match config size")
    tau_end = cfg.n**2 * t_macro
    steps = max(1, int(np.ceil(tau_end / dt - 1e-12)))
    h = tau_end / steps

    s0 = s0.copy()
    _check_psd(s0, psd_tol, "initial covariance")

    record = sorted(float(t) for t in record_times)
    record_steps = {int(round(t * cfg.n**2 / h)): t for t in record}

    s_r = s0.s_r.astype(float).copy()
    s_rp = s0.s_rp.astype(float).copy()
    s_p = s0.s_p.astype(float).copy()

    gamma = cfg.gamma
    n1 = cfg.n + 1

    def pbar_sq_at(tau):
        if pbar_path is None:
            return None
        p = pbar_path(tau)
        return p * p

    acc_r = np.zeros_like(s_r)
    acc_rp = np.zeros_like(s_rp)
    acc_p = np.zeros_like(s_p)
    acc_pbar = np.zeros(n1)
    snapshots = []
    if 0 in record_steps:
        snapshots.append((record_steps[0],
                          CovarianceBlocks(s_r.copy(), s_rp.copy(), s_p.copy(), 0.0)))

    jit = _numba_step() if (use_numba if use_numba is not None else HAVE_NUMBA) else None

    tau = 0.0
    pb_sq_0 = pbar_sq_at(0.0)
    for k in range(steps):
        pb_sq_half = pbar_sq_at(tau + 0.5 * h)
        pb_sq_1 = pbar_sq_at(tau + h)

        w_old = (s_r, s_rp, s_p)
        pb0 = pb_sq_0 if pb_sq_0 is not None else np.zeros(n1)
        pbh = pb_sq_half if pb_sq_half is not None else np.zeros(n1)
        pb1 = pb_sq_1 if pb_sq_1 is not None else np.zeros(n1)
        if jit is not None:
            s_r, s_rp, s_p = jit(gamma, cfg.t_minus, s_r, s_rp, s_p,
                                 pb0, pbh, pb1, h, noise)
        else:
            s_r, s_rp, s_p = _rk4_step_numpy(cfg, s_r, s_rp, s_p,
                                             pb_sq_0, pb_sq_half, pb_sq_1,
                                             h, noise)

        # trapezoid accumulation of <S>_t and <pbar^2>_t
        acc_r += 0.5 * h * (w_old[0] + s_r)
        acc_rp += 0.5 * h * (w_old[1] + s_rp)
        acc_p += 0.5 * h * (w_old[2] + s_p)
        acc_pbar += 0.5 * h * (pb0 + pb1)

        tau += h
        pb_sq_0 = pb_sq_1
        if (k + 1) in record_steps:
            snap = CovarianceBlocks(s_r.copy(), s_rp.copy(), s_p.copy(), tau)
            _check_psd(snap, psd_tol, f"snapshot at step {k + 1}")
            snapshots.append((record_steps[k + 1], snap))

    s_final = CovarianceBlocks(s_r, s_rp, s_p, tau_end)
    _check_psd(s_final, psd_tol, "final covariance")
    s_avg = CovarianceBlocks(acc_r / tau_end, acc_rp / tau_end,
                             acc_p / tau_end, tau_end)
    return CovariancePath(cfg=cfg, t_macro=t_macro, s0=s0,
                          s_final=s_final, s_avg=s_avg,
                          pbar_sq_avg=acc_pbar / tau_end,
                          snapshots=snapshots, dt=h)


def _rk4_step_numpy(cfg, s_r, s_rp, s_p, pb0, pbh, pb1, h, noise):
    g = cfg.gamma

    def stage(sr, srp, sp, pb):
        nd = _noise_diag(cfg, sp, pb) if noise else None
        return _rhs(g, sr, srp, sp, nd)

    k1 = stage(s_r, s_rp, s_p, pb0)
    k2 = stage(s_r + 0.5 * h * k1[0], s_rp + 0.5 * h * k1[1],
               s_p + 0.5 * h * k1[2], pbh)
    k3 = stage(s_r + 0.5 * h * k2[0], s_rp + 0.5 * h * k2[1],
               s_p + 0.5 * h * k2[2], pbh)
    k4 = stage(s_r + h * k3[0], s_rp + h * k3[1], s_p + h * k3[2], pb1)
    s_r = s_r + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    s_rp = s_rp + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    s_p = s_p + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return s_r, s_rp, s_p


_NUMBA_STEP = None


def _numba_step():
    """Compile (once) a fused RK4 step; arithmetic mirrors the numpy path."""
    global _NUMBA_STEP
    if not HAVE_NUMBA:
        return None
    if _NUMBA_STEP is not None:
        return _NUMBA_STEP

    @numba.njit(cache=True, nogil=True)
    def rhs(gamma, t_minus, s_r, s_rp, s_p, pb_sq, noise):
        n = s_r.shape[0]
        ds_r = np.empty_like(s_r)
        ds_rp = np.empty_like(s_rp)
        ds_p = np.empty_like(s_p)
        for x in range(n):
            for y in range(n):
                a = s_rp[y, x + 1] - s_rp[y, x]
                b = s_rp[x, y + 1] - s_rp[x, y]
                ds_r[x, y] = a + b
        for x in range(n):
            for y in range(n + 1):
                v = s_p[x + 1, y] - s_p[x, y] - 2.0 * gamma * s_rp[x, y]
                if y == 0:
                    v += s_r[x, 0]
                elif y == n:
                    v -= s_r[x, n - 1]
                else:
                    v += s_r[x, y] - s_r[x, y - 1]
                ds_rp[x, y] = v
        for x in range(n + 1):
            for y in range(n + 1):
                if x == 0:
                    a = s_rp[0, y]
                elif x == n:
                    a = -s_rp[n - 1, y]
                else:
                    a = s_rp[x, y] - s_rp[x - 1, y]
                if y == 0:
                    b = s_rp[0, x]
                elif y == n:
                    b = -s_rp[n - 1, x]
                else:
                    b = s_rp[y, x] - s_rp[y - 1, x]
                ds_p[x, y] = a + b - 4.0 * gamma * s_p[x, y]
        if noise:
            ds_p[0, 0] += 4.0 * gamma * t_minus
            for y in range(1, n + 1):
                ds_p[y, y] += 4.0 * gamma * (s_p[y, y] + pb_sq[y])
        return ds_r, ds_rp, ds_p

    @numba.njit(cache=True, nogil=True)
    def step(gamma, t_minus, s_r, s_rp, s_p, pb0, pbh, pb1, h, noise):
        k1 = rhs(gamma, t_minus, s_r, s_rp, s_p, pb0, noise)
        k2 = rhs(gamma, t_minus, s_r + 0.5 * h * k1[0], s_rp + 0.5 * h * k1[1],
                 s_p + 0.5 * h * k1[2], pbh, noise)
        k3 = rhs(gamma, t_minus, s_r + 0.5 * h * k2[0], s_rp + 0.5 * h * k2[1],
                 s_p + 0.5 * h * k2[2], pbh, noise)
        k4 = rhs(gamma, t_minus, s_r + h * k3[0], s_rp + h * k3[1],
                 s_p + h * k3[2], pb1, noise)
        nr = s_r + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        nrp = s_rp + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        np_ = s_p + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        return nr, nrp, np_

    _NUMBA_STEP = step
    return step


def _check_psd(blocks: CovarianceBlocks, tol: float, label: str) -> None:
    full = blocks.assemble()
    evals = np.linalg.eigvalsh(full)
    scale = max(float(evals[-1]), 1e-300)
    if evals[0] < -tol * scale:
        raise FloatingPointError(
            f"{label}: covariance lost positivity (min eig {evals[0]:.3e}, "
            f"scale {scale:.3e}); reduce dt")
    if evals[0] < 0.0:
        # floating-point dust only: clip
        vecs = np.linalg.eigh(full)[1]
        clipped = vecs @ np.diag(np.clip(evals, 0.0, None)) @ vecs.T
        n = blocks.n
        blocks.s_r = clipped[:n, :n]
        blocks.s_rp = clipped[:n, n:]
        blocks.s_p = clipped[n:, n:]


# ---------------------------------------------------------------------------
# mode-space resolution of the time-averaged covariance


class ResolutionTables:
    """Closed-form kernels Theta_alpha, Xi_beta^(alpha) of the 4x4 mode solve.

    All functions take eigenvalue arrays (c, c') (broadcastable) and apply the
    (0,0) convention: Theta_p(0,0) = 1, Xi_p^(p)(0,0) = 1/(4 gamma), all other
    kernels vanish there.
    """

    ALPHAS = ("p", "r", "pr", "rp")

    def __init__(self, gamma: float):
        if gamma <= 0:
            raise ValueError("gamma must be > 0")
        self.gamma = gamma

    def theta(self, c, cp):
        """The symmetric denominator (c - c')^2 + 8 gamma^2 (c + c')."""
        return self._theta(np.asarray(c, dtype=float), np.asarray(cp, dtype=float))

    def _theta(self, c, cp):
        return (c - cp) ** 2 + 8.0 * self.gamma**2 * (c + cp)

    def _guard(self, c, cp, values, at_origin):
        th = self._theta(c, cp)
        origin = th == 0.0
        safe = np.where(origin, 1.0, th)
        out = values / safe
        return np.where(origin, at_origin, out)

    def Theta(self, alpha: str, c, cp):
        g = self.gamma
        c = np.asarray(c, dtype=float)
        cp = np.asarray(cp, dtype=float)
        if alpha == "p":
            return self._guard(c, cp, 8.0 * g**2 * (c + cp), 1.0)
        if alpha == "r":
            return self._guard(c, cp, 16.0 * g**2 * np.sqrt(c * cp), 0.0)
        if alpha == "pr":
            return self._guard(c, cp, 4.0 * g * np.sqrt(cp) * (c - cp), 0.0)
        if alpha == "rp":
            return self._guard(c, cp, 4.0 * g * np.sqrt(c) * (cp - c), 0.0)
        raise KeyError(alpha)

    def Xi(self, alpha: str, beta: str, c, cp):
        g = self.gamma
        c = np.asarray(c, dtype=float)
        cp = np.asarray(cp, dtype=float)
        sq, sqp, sqb = np.sqrt(c), np.sqrt(cp), np.sqrt(c * cp)
        table = {
            ("p", "p"): (2.0 * g * (c + cp), 1.0 / (4.0 * g)),
            ("p", "r"): (4.0 * g * sqb, 0.0),
            ("p", "pr"): (sqp * (cp - c), 0.0),
            ("p", "rp"): (sq * (c - cp), 0.0),
            ("r", "p"): (4.0 * g * sqb, 0.0),
            ("r", "r"): (2.0 * g * (8.0 * g**2 + c + cp), 0.0),
            ("r", "pr"): (-sq * (c - cp + 8.0 * g**2), 0.0),
            ("r", "rp"): (-sqp * (cp - c + 8.0 * g**2), 0.0),
            ("pr", "p"): (sqp * (c - cp), 0.0),
            ("pr", "r"): (sq * (c - cp + 8.0 * g**2), 0.0),
            ("pr", "pr"): (4.0 * g * cp, 0.0),
            ("pr", "rp"): (-4.0 * g * sqb, 0.0),
            ("rp", "p"): (sq * (cp - c), 0.0),
            ("rp", "r"): (sqp * (cp - c + 8.0 * g**2), 0.0),
            ("rp", "pr"): (-4.0 * g * sqb, 0.0),
            ("rp", "rp"): (4.0 * g * c, 0.0),
        }
        values, origin = table[(alpha, beta)]
        return self._guard(c, cp, values, origin)


def resolution_tables(gamma: float) -> ResolutionTables:
    return ResolutionTables(gamma)


def block_modes(basis: SpectralBasis, blocks: CovarianceBlocks) -> dict:
    """Fourier images of the four blocks, r-side zero-padded to index 0."""
    n = basis.n
    psi, phi = basis.psi, basis.phi
    out = {
        "p": psi @ blocks.s_p @ psi.T,
        "r": np.zeros((n + 1, n + 1)),
        "rp": np.zeros((n + 1, n + 1)),
    }
    out["r"][1:, 1:] = phi @ blocks.s_r @ phi.T
    out["rp"][1:, :] = phi @ blocks.s_rp @ psi.T
    out["pr"] = out["rp"].T
    return out


def build_f_hat(basis: SpectralBasis, p_sq: np.ndarray, t_minus: float) -> np.ndarray:
    """Mode image of the noise diagonal: F_{j,j'} = sum_y psi_j(y) psi_j'(y) d_y
    with d_0 = T_- and d_y = <p_y^2> for y >= 1."""
    d = np.asarray(p_sq, dtype=float).copy()
    d[0] = t_minus
    return (basis.psi * d[None, :]) @ basis.psi.T


@dataclass
class ResolvedCovariance:
    s_p: np.ndarray      # (n+1, n+1) mode image
    s_r: np.ndarray      # (n+1, n+1), r-rows/cols 0 are padding
    s_rp: np.ndarray
    s_pr: np.ndarray
    system_residual: float


def resolve_time_averaged(cfg: ChainConfig, f_hat: np.ndarray,
                          r_blocks: dict,
                          basis: SpectralBasis | None = None) -> ResolvedCovariance:
    """Mode-by-mode closed form for <S> given <F> and the R-blocks.

    ``r_blocks`` maps alpha in {p, r, rp, pr} to mode-space matrices (all
    (n+1)^2, r-side index 0 zero-padded).  Returns the four mode-space blocks
    of <S> and the residual of the underlying linear system.
    """
    n = cfg.n
    if basis is None:
        basis = build_basis(n)
    lam = basis.lam
    c = lam[:, None]
    cp = lam[None, :]
    tab = resolution_tables(cfg.gamma)

    out = {}
    for alpha in ResolutionTables.ALPHAS:
        s = tab.Theta(alpha, c, cp) * f_hat
        for beta in ResolutionTables.ALPHAS:
            s = s + tab.Xi(alpha, beta, c, cp) * r_blocks[beta]
        out[alpha] = s
    # r-side padding rows/columns are not part of the solution
    out["r"][0, :] = 0.0
    out["r"][:, 0] = 0.0
    out["rp"][0, :] = 0.0
    out["pr"][:, 0] = 0.0

    resid = _system_residual(cfg, basis, f_hat, r_blocks, out)
    return ResolvedCovariance(s_p=out["p"], s_r=out["r"], s_rp=out["rp"],
                              s_pr=out["pr"], system_residual=resid)


def _system_residual(cfg, basis, f_hat, r_blocks, s) -> float:
    """Max residual of the four mode-space block identities."""
    g = cfg.gamma
    sq = np.sqrt(basis.lam)
    a = sq[:, None]     # lambda_j^(1/2)
    b = sq[None, :]     # lambda_j'^(1/2)
    eq1 = b * s["rp"] + a * s["pr"] - r_blocks["r"]
    eq2 = -a * s["r"] + 2.0 * g * s["pr"] + b * s["p"] - r_blocks["pr"]
    eq3 = -b * s["r"] + 2.0 * g * s["rp"] + a * s["p"] - r_blocks["rp"]
    eq4 = (-a * s["rp"] - b * s["pr"] - 4.0 * g * f_hat + 4.0 * g * s["p"]
           - r_blocks["p"])
    # zero-padded r-mode rows/columns satisfy all four identities trivially
    return float(max(np.abs(eq1).max(), np.abs(eq2).max(),
                     np.abs(eq3).max(), np.abs(eq4).max()))


def lyapunov_residual(cfg: ChainConfig, s_avg: CovarianceBlocks,
                      p_sq_avg: np.ndarray, r_resid: CovarianceBlocks) -> float:
    """Frobenius norm of A<S> + <S>A^T - 4 gamma Sigma2 - R in site space."""
    from .spectral import drift_matrix

    a = drift_matrix(cfg.n, cfg.gamma)
    s = s_avg.assemble()
    rhs = np.zeros_like(s)
    d = np.asarray(p_sq_avg, dtype=float).copy()
    d[0] = cfg.t_minus
    idx = np.arange(cfg.n + 1)
    rhs[cfg.n + idx, cfg.n + idx] = 4.0 * cfg.gamma * d
    rhs += r_resid.assemble()
    return float(np.linalg.norm(a @ s + s @ a.T - rhs))


def r_matrix_from_path(path: CovariancePath) -> CovarianceBlocks:
    """R = (S(0) - S(n^2 t)) / (n^2 t), the time-boundary term of the average."""
    tau = path.tau_end
    return CovarianceBlocks(
        s_r=(path.s0.s_r - path.s_final.s_r) / tau,
        s_rp=(path.s0.s_rp - path.s_final.s_rp) / tau,
        s_p=(path.s0.s_p - path.s_final.s_p) / tau,
        tau=tau,
    )


# ---------------------------------------------------------------------------
# positive map Pi, stochastic matrix M


def pi_matrix(gamma: float, big_gamma: np.ndarray) -> np.ndarray:
    """The positive map Pi applied to a PSD block matrix of size (2n+2).

    Blocks are [[G_r, G_rp], [G_pr, G_p]], each (n+1) x (n+1); the transform
    uses the cosine basis on both sides.  Returns the symmetric matrix
    sum_{i=p,r} Theta_i Ghat_i - sum_{i=pr,rp} Theta_i Ghat_i.
    """
    big_gamma = np.asarray(big_gamma, dtype=float)
    if big_gamma.ndim != 2 or big_gamma.shape[0] != big_gamma.shape[1]:
        raise ValueError("Gamma must be square")
    if big_gamma.shape[0] % 2 != 0:
        raise ValueError("Gamma must have even size 2(n+1)")
    if not np.allclose(big_gamma, big_gamma.T, atol=1e-12):
        raise ValueError("Gamma must be symmetric")
    n1 = big_gamma.shape[0] // 2
    n = n1 - 1
    basis = build_basis(n)
    psi = basis.psi
    g_r = psi @ big_gamma[:n1, :n1] @ psi.T
    g_rp = psi @ big_gamma[:n1, n1:] @ psi.T
    g_pr = psi @ big_gamma[n1:, :n1] @ psi.T
    g_p = psi @ big_gamma[n1:, n1:] @ psi.T
    lam = basis.lam
    c = lam[:, None]
    cp = lam[None, :]
    tab = resolution_tables(gamma)
    pi = (tab.Theta("p", c, cp) * g_p + tab.Theta("r", c, cp) * g_r
          - tab.Theta("pr", c, cp) * g_pr - tab.Theta("rp", c, cp) * g_rp)
    return 0.5 * (pi + pi.T)


def m_matrix_diagnostic(cfg: ChainConfig) -> dict:
    """Build M_{x,y} = sum_{j,j'} Theta_p(l_j, l_j') psi_j(x)psi_j'(x)
    psi_j(y)psi_j'(y) and verify it is doubly stochastic and positive."""
    basis = build_basis(cfg.n)
    lam = basis.lam
    tab = resolution_tables(cfg.gamma)
    theta_p = tab.Theta("p", lam[:, None], lam[None, :])
    # P[j, (x,y)] = psi_j(x) psi_j(y)
    psi = basis.psi
    p = (psi[:, :, None] * psi[:, None, :]).reshape(cfg.n + 1, -1)
    m = np.einsum("ja,ja->a", p, theta_p @ p).reshape(cfg.n + 1, cfg.n + 1)
    row_sums = m.sum(axis=1)
    col_sums = m.sum(axis=0)
    return {
        "m": m,
        "row_sum_err": float(np.abs(row_sums - 1.0).max()),
        "col_sum_err": float(np.abs(col_sums - 1.0).max()),
        "min_entry": float(m.min()),
        "symmetric_err": float(np.abs(m - m.T).max()),
    }


# ---------------------------------------------------------------------------
# diagnostics on an evolved path


def fd_relation_check(cfg: ChainConfig, path: CovariancePath) -> dict:
    """Residual of the time-averaged current identity, per bond x = 0..n-1.

    <S_pr[x, x+1]>_t = (1/4g) grad(U)_x + V_x, where U collects the averaged
    thermal energy and nearest-neighbour covariances (with p_{-1} = p_0,
    <S_r[0,1]> = <S_r[n,n+1]> = 0) and V is the time-boundary term built from
    the endpoint covariances.
    """
    g = cfg.gamma
    n = cfg.n
    avg = path.s_avg
    tau = path.tau_end

    # <S^(p,r)_{x,x+1}>_t = E[p'_x r'_{x+1}] averaged, x = 0..n-1
    lhs = np.diagonal(avg.s_rp).copy()    # s_rp[x, x] = E[r'_{x+1} p'_x]

    u = np.zeros(n + 1)
    sp_d = np.diagonal(avg.s_p)
    sr_d = np.diagonal(avg.s_r)
    u += 0.5 * sp_d
    u[1:] += 0.5 * sr_d
    # + (1/2) <S_r[x, x+1]>, zero at x = 0 and x = n by convention
    u[1:n] += 0.5 * np.diagonal(avg.s_r, offset=1)
    # + (1/2) <S_p[x-1, x]>, with p_{-1} = p_0 at x = 0
    u[0] += 0.5 * avg.s_p[0, 0]
    u[1:] += 0.5 * np.diagonal(avg.s_p, offset=1)
    # + gamma <S_pr[x, x]> = gamma E[p'_x r'_x] = s_rp[x-1, x]
    u[1:] += g * np.diagonal(avg.s_rp, offset=1)

    grad_u = u[1:] - u[:-1]

    def v_vector(blocks: CovarianceBlocks) -> np.ndarray:
        srp = blocks.s_rp
        diag1 = np.diagonal(srp, offset=1)           # s_rp[x-1, x] = E[r'_x p'_x]
        v = 2.0 * np.diagonal(srp).copy()            # 2 E[r'_{x+1} p'_x]
        v += diag1                                   # E[p'_{x+1} r'_{x+1}]
        v[1:] += diag1[:-1]                          # E[p'_x r'_x], zero at x=0
        v /= 8.0 * g
        v += 0.25 * np.diagonal(blocks.s_r)          # r'_{x+1}^2 / 4
        return v

    v_term = (v_vector(path.s0) - v_vector(path.s_final)) / tau
    residual = lhs - grad_u / (4.0 * g) - v_term
    bulk = residual[1:n - 1] if n > 2 else residual
    return {
        "residual": residual,
        "max_abs": float(np.abs(residual).max()),
        "max_abs_bulk": float(np.abs(bulk).max()),
    }


def equipartition_diagnostic(path: CovariancePath) -> dict:
    """Per-site time-averaged kinetic/potential gap and thermal profile."""
    avg = path.s_avg
    gap = np.diagonal(avg.s_p)[1:] - np.diagonal(avg.s_r)
    thermal = 0.5 * np.diagonal(avg.s_p).copy()
    thermal[1:] += 0.5 * np.diagonal(avg.s_r)
    return {"gap": gap, "thermal": thermal}


def kinetic_flatness(path: CovariancePath) -> float:
    """sum_x (<p_x^2>_t - <p_{x+1}^2>_t)^2 over the averaged path."""
    psq = path.p_sq_avg()
    return float(np.sum(np.diff(psq) ** 2))


def position_functional(blocks: CovarianceBlocks) -> np.ndarray:
    """E[(q'_x)^2] for x = 1..n, q'_x = sum_{y<=x} r'_y, from prefix sums."""
    c = np.cumsum(np.cumsum(blocks.s_r, axis=0), axis=1)
    return np.diagonal(c).copy()
