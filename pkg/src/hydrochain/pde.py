"""Finite-difference solvers for the limiting stretch/energy/temperature system.

On u in [0,1] the macroscopic fields obey

    dr/dt = (1/2 gamma) d_uu r,                  r(t,0) = 0,   r(t,1) = f_bar
    de/dt = (1/4 gamma) d_uu (e + r^2/2),        e(t,0) = T_-,
                                d_u e(t,1) = f_bar d_u r(t,1) + 4 gamma Wq
    dT/dt = (1/4 gamma) d_uu T + (1/2g)(d_u r)^2, T(t,0) = T_-,
                                d_u T(t,1) = 4 gamma Wq

with T = e - r^2/2 as a cross-solver identity.  Crank-Nicolson is the default
(order 2 in du and dt); the explicit scheme is available under its CFL bound.
Neumann conditions use a second-order ghost node; Dirichlet values are imposed
strongly.  The energy equation advances with the time-centered r-profile, so
one-way coupling stays second order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .chain import ChainConfig


@dataclass(frozen=True)
class GridSpec:
    """Spatial cells m (nodes 0..m), macroscopic time step, and scheme."""

    m: int
    dt_macro: float
    scheme: str = "crank_nicolson"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("need at least m = 2 cells (3 nodes)")
        if self.dt_macro <= 0:
            raise ValueError("dt_macro must be > 0")
        if self.scheme not in ("crank_nicolson", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    @property
    def du(self) -> float:
        return 1.0 / self.m

    def check_cfl(self, gamma: float) -> None:
        """Explicit stability: dt <= 0.9 du^2 / (2 D_max), D_max = 1/(2 gamma)."""
        if self.scheme != "explicit":
            return
        limit = 0.9 * gamma * self.du**2
        if self.dt_macro > limit:
            raise ValueError(
                f"explicit step {self.dt_macro} exceeds CFL limit {limit:.3e}")


@dataclass(frozen=True)
class MacroFields:
    r: np.ndarray
    e: np.ndarray
    temp: np.ndarray
    t: float


@dataclass(frozen=True)
class PdePath:
    """Nodal profiles at every time level of one solve."""

    times: np.ndarray       # (K+1,)
    profiles: np.ndarray    # (K+1, m+1)
    du: float

    @property
    def m(self) -> int:
        return self.profiles.shape[1] - 1

    def at_time(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} not on the stored grid")
        return self.profiles[k]

    def boundary_slope_right(self) -> np.ndarray:
        """One-sided second-order d_u at u = 1 for every level."""
        p = self.profiles
        return (3.0 * p[:, -1] - 4.0 * p[:, -2] + p[:, -3]) / (2.0 * self.du)

    def boundary_slope_left(self) -> np.ndarray:
        p = self.profiles
        return (-3.0 * p[:, 0] + 4.0 * p[:, 1] - p[:, 2]) / (2.0 * self.du)


def _steps_for(t_end: float, dt: float):
    steps = max(1, int(round(t_end / dt)))
    if abs(steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        steps = int(np.ceil(t_end / dt))
    return steps, t_end / steps


def _banded_from_tridiag(lower, diag, upper):
    m = diag.shape[0]
    ab = np.zeros((3, m))
    ab[0, 1:] = upper[:-1]
    ab[1, :] = diag
    ab[2, :-1] = lower[1:]
    return ab


def solve_stretch(r0: np.ndarray, cfg: ChainConfig, grid: GridSpec,
                  t_end: float) -> PdePath:
    """Heat equation for the stretch with r(t,0)=0, r(t,1)=f_bar."""
    grid.check_cfl(cfg.gamma)
    m = grid.m
    r0 = np.asarray(r0, dtype=float)
    if r0.shape[0] != m + 1:
        raise ValueError(f"r0 must have {m + 1} nodes")
    d = 1.0 / (2.0 * cfg.gamma)
    steps, dt = _steps_for(t_end, grid.dt_macro)
    mu = d * dt / grid.du**2

    out = np.empty((steps + 1, m + 1))
    r = r0.copy()
    r[0] = 0.0
    r[m] = cfg.f_bar
    out[0] = r

    if grid.scheme == "explicit":
        for k in range(steps):
            lap = r[:-2] - 2.0 * r[1:-1] + r[2:]
            r = r.copy()
            r[1:-1] += mu * lap
            out[k + 1] = r
        return PdePath(times=dt * np.arange(steps + 1), profiles=out, du=grid.du)

    # Crank-Nicolson with strongly imposed Dirichlet rows
    c = 0.5 * mu
    diag = np.full(m + 1, 1.0 + 2.0 * c)
    lower = np.full(m + 1, -c)
    upper = np.full(m + 1, -c)
    diag[0] = diag[m] = 1.0
    lower[m] = 0.0
    upper[0] = 0.0
    ab = _banded_from_tridiag(lower, diag, upper)
    for k in range(steps):
        rhs = r.copy()
        rhs[1:-1] += c * (r[:-2] - 2.0 * r[1:-1] + r[2:])
        rhs[0] = 0.0
        rhs[m] = cfg.f_bar
        r = solve_banded((1, 1), ab, rhs)
        out[k + 1] = r
    return PdePath(times=dt * np.arange(steps + 1), profiles=out, du=grid.du)


def _check_compatible(r_path: PdePath, grid: GridSpec, steps: int, dt: float):
    if r_path.m != grid.m:
        raise ValueError("r_path grid does not match")
    if r_path.times.shape[0] < steps + 1:
        raise ValueError("r_path does not cover the requested time range")
    if abs(r_path.times[1] - r_path.times[0] - dt) > 1e-12 * max(1.0, dt):
        raise ValueError("r_path time step does not match")


def solve_energy(e0: np.ndarray, r_path: PdePath, cfg: ChainConfig, wq: float,
                 grid: GridSpec, t_end: float) -> PdePath:
    """Energy equation de/dt = (1/4g) d_uu(e + r^2/2) with flux condition.

    The right-end Neumann condition is applied to w = e + r^2/2, whose slope
    at u=1 is 2 f_bar d_u r(t,1) + 4 gamma Wq, via a second-order ghost node.
    """
    m = grid.m
    e0 = np.asarray(e0, dtype=float)
    if e0.shape[0] != m + 1:
        raise ValueError(f"e0 must have {m + 1} nodes")
    de = 1.0 / (4.0 * cfg.gamma)
    steps, dt = _steps_for(t_end, grid.dt_macro)
    _check_compatible(r_path, grid, steps, dt)
    du = grid.du
    c = 0.5 * de * dt / du**2

    slopes = r_path.boundary_slope_right()
    gw = 2.0 * cfg.f_bar * slopes + 4.0 * cfg.gamma * wq
    s_all = 0.5 * r_path.profiles**2

    diag = np.full(m + 1, 1.0 + 2.0 * c)
    lower = np.full(m + 1, -c)
    upper = np.full(m + 1, -c)
    diag[0] = 1.0
    upper[0] = 0.0
    lower[m] = -2.0 * c       # ghost-node row at u = 1
    ab = _banded_from_tridiag(lower, diag, upper)

    out = np.empty((steps + 1, m + 1))
    e = e0.copy()
    e[0] = cfg.t_minus
    out[0] = e
    for k in range(steps):
        s_old, s_new = s_all[k], s_all[k + 1]
        rhs = e.copy()
        rhs[1:-1] += c * (e[:-2] - 2.0 * e[1:-1] + e[2:])
        rhs[1:-1] += c * (s_old[:-2] - 2.0 * s_old[1:-1] + s_old[2:]
                          + s_new[:-2] - 2.0 * s_new[1:-1] + s_new[2:])
        rhs[m] += c * (2.0 * e[m - 1] - 2.0 * e[m])
        rhs[m] += c * (2.0 * s_old[m - 1] - 2.0 * s_old[m]
                       + 2.0 * s_new[m - 1] - 2.0 * s_new[m])
        rhs[m] += 2.0 * c * du * (gw[k] + gw[k + 1])
        rhs[0] = cfg.t_minus
        e = solve_banded((1, 1), ab, rhs)
        out[k + 1] = e
    return PdePath(times=dt * np.arange(steps + 1), profiles=out, du=grid.du)


def _slope_profiles(r_path: PdePath) -> np.ndarray:
    """d_u r at every node and level: centered inside, one-sided at the ends."""
    p = r_path.profiles
    du = r_path.du
    s = np.empty_like(p)
    s[:, 1:-1] = (p[:, 2:] - p[:, :-2]) / (2.0 * du)
    s[:, 0] = (-3.0 * p[:, 0] + 4.0 * p[:, 1] - p[:, 2]) / (2.0 * du)
    s[:, -1] = (3.0 * p[:, -1] - 4.0 * p[:, -2] + p[:, -3]) / (2.0 * du)
    return s


def solve_temperature(t0: np.ndarray, r_path: PdePath, cfg: ChainConfig,
                      wq: float, grid: GridSpec, t_end: float) -> PdePath:
    """Temperature equation with source (1/2g)(d_u r)^2 and flux 4 gamma Wq."""
    m = grid.m
    t0 = np.asarray(t0, dtype=float)
    if t0.shape[0] != m + 1:
        raise ValueError(f"t0 must have {m + 1} nodes")
    de = 1.0 / (4.0 * cfg.gamma)
    steps, dt = _steps_for(t_end, grid.dt_macro)
    _check_compatible(r_path, grid, steps, dt)
    du = grid.du
    c = 0.5 * de * dt / du**2
    gt = 4.0 * cfg.gamma * wq

    src_all = _slope_profiles(r_path) ** 2 / (2.0 * cfg.gamma)

    diag = np.full(m + 1, 1.0 + 2.0 * c)
    lower = np.full(m + 1, -c)
    upper = np.full(m + 1, -c)
    diag[0] = 1.0
    upper[0] = 0.0
    lower[m] = -2.0 * c
    ab = _banded_from_tridiag(lower, diag, upper)

    out = np.empty((steps + 1, m + 1))
    temp = t0.copy()
    temp[0] = cfg.t_minus
    out[0] = temp
    for k in range(steps):
        src = 0.5 * (src_all[k] + src_all[k + 1])
        rhs = temp.copy()
        rhs[1:-1] += c * (temp[:-2] - 2.0 * temp[1:-1] + temp[2:])
        rhs[1:-1] += dt * src[1:-1]
        rhs[m] += c * (2.0 * temp[m - 1] - 2.0 * temp[m]) + 4.0 * c * du * gt
        rhs[m] += dt * src[m]
        rhs[0] = cfg.t_minus
        temp = solve_banded((1, 1), ab, rhs)
        out[k + 1] = temp
    return PdePath(times=dt * np.arange(steps + 1), profiles=out, du=grid.du)


def fields_at(r_path: PdePath, e_path: PdePath, t_path: PdePath, t: float,
              cfg: ChainConfig, tol: float = 1e-6) -> MacroFields:
    """Assemble the three profiles at one time and check their invariants:
    e - r^2/2 = temp within ``tol`` and the Dirichlet boundary values."""
    r = r_path.at_time(t)
    e = e_path.at_time(t)
    temp = t_path.at_time(t)
    gap = np.abs(e - 0.5 * r**2 - temp).max()
    if gap > tol:
        raise ValueError(f"e - r^2/2 vs T mismatch {gap:.3e} exceeds {tol:.1e}")
    for value, want, label in ((r[0], 0.0, "r(t,0)"),
                               (r[-1], cfg.f_bar, "r(t,1)"),
                               (e[0], cfg.t_minus, "e(t,0)"),
                               (temp[0], cfg.t_minus, "T(t,0)")):
        if abs(value - want) > 1e-10:
            raise ValueError(f"boundary value {label} = {value} != {want}")
    return MacroFields(r=r, e=e, temp=temp, t=t)


def stationary_temperature(cfg: ChainConfig, wq: float, u: np.ndarray) -> np.ndarray:
    """T_inf(u) = T_- + (4 gamma Wq + 2 f_bar^2) u - f_bar^2 u^2."""
    u = np.asarray(u, dtype=float)
    return cfg.t_minus + (4.0 * cfg.gamma * wq + 2.0 * cfg.f_bar**2) * u \
        - cfg.f_bar**2 * u**2


def _midpoint_time_integral(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Cumulative int_0^{t_k} by the midpoint-in-time (CN-consistent) rule."""
    dt = np.diff(times)
    mids = 0.5 * (values[1:] + values[:-1])
    out = np.zeros_like(values)
    out[1:] = np.cumsum(dt * mids)
    return out


def energy_balance_audit(e_path: PdePath, r_path: PdePath, cfg: ChainConfig,
                         wq: float) -> dict:
    """Conservation audit of the energy solve.

    Checks, per time level, int (e(t)-e(0)) du = J_0(t) + W(t) with
    J_0 = -(1/4g) int d_u e(s,0) ds (inflow from the bath; r(s,0) = 0 kills
    the r^2 part there) and W the boundary work, plus the agreement of the
    two equivalent boundary-work expressions (e-form vs T-form).
    """
    if e_path.profiles.shape != r_path.profiles.shape:
        raise ValueError("paths must share the time/space grid")
    du = e_path.du
    times = e_path.times
    total = np.trapezoid(e_path.profiles, dx=du, axis=1)

    d4g = 1.0 / (4.0 * cfg.gamma)
    j0 = -d4g * _midpoint_time_integral(times, e_path.boundary_slope_left())

    dr1 = r_path.boundary_slope_right()
    work = (cfg.f_bar / (2.0 * cfg.gamma)) * _midpoint_time_integral(times, dr1) \
        + wq * times
    resid = (total - total[0]) - (j0 + work)

    de1 = e_path.boundary_slope_right()
    w14 = d4g * _midpoint_time_integral(times, de1 + cfg.f_bar * dr1)
    temp = e_path.profiles - 0.5 * r_path.profiles**2
    t_path = PdePath(times=times, profiles=temp, du=du)
    dt1 = t_path.boundary_slope_right()
    w16 = d4g * _midpoint_time_integral(times, dt1 + 2.0 * cfg.f_bar * dr1)

    return {
        "times": times,
        "residual": resid,
        "work": work,
        "work_form_14": w14,
        "work_form_16": w16,
        "max_abs_residual": float(np.abs(resid).max()),
        "max_form_gap": float(np.abs(w14 - w16).max()),
    }


def heat_series_oracle(cfg: ChainConfig, u: np.ndarray, t: float,
                       n_terms: int = 20000) -> np.ndarray:
    """Separation-of-variables solution for r0 = 0, boundary values (0, f_bar).

    r(t,u) = f_bar u + sum_k (2 f_bar (-1)^k / (k pi)) e^{-k^2 pi^2 t/(2 gamma)}
    sin(k pi u).  Independent of the finite-difference path; used as the
    reference in grid-convergence tests.
    """
    u = np.asarray(u, dtype=float)
    d = 1.0 / (2.0 * cfg.gamma)
    k = np.arange(1, n_terms + 1)
    coeff = 2.0 * cfg.f_bar * (-1.0) ** k / (k * np.pi)
    decay = np.exp(-(k * np.pi) ** 2 * d * t)
    keep = decay > 1e-18
    if not np.any(keep):
        return cfg.f_bar * u
    k, coeff, decay = k[keep], coeff[keep], decay[keep]
    series = (coeff * decay)[None, :] * np.sin(np.pi * np.outer(u, k))
    return cfg.f_bar * u + series.sum(axis=1)
