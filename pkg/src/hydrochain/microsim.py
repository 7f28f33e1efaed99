"""Stochastic integrator and ensemble runner for the microscopic chain.

One step of size h is a Strang split around the bath variable:

  (a) exact Ornstein-Uhlenbeck half step on p_0:
      p_0 <- e^{-gamma h} p_0 + sqrt(T_- (1 - e^{-2 gamma h})) xi
  (b) velocity-Verlet (kick-drift-kick) of the Hamiltonian flow, with the
      boundary force evaluated at the midpoint time tau + h/2
  (c) independent sign flips of p_1..p_n with probability
      (1 - e^{-2 gamma h})/2 each - the exact odd-event probability of a
      rate-gamma Poisson clock over h, so the per-step sign law is unbiased
      for any h
  (d) a second OU half step on p_0.

Only p_0 carries friction; the bulk damping of the averages comes from the
flips alone.  The work integral accumulates F(tau + h/2) * p_n * h with the
half-kicked momentum (midpoint rule); the bath heat is bookkept exactly as
the kinetic-energy change of p_0 across the OU substeps.

Reproducibility: trajectory k of a run with seed s draws from a dedicated
counter-based Philox stream keyed by (s, k).  Within each recording segment,
randomness is consumed in draw blocks of at most 256 steps, each block in the
fixed order: all OU-pre normals, all flip uniforms (step-major), all OU-post
normals.  The vectorized ensemble path and ``run_trajectory`` therefore
consume identical streams, and results do not depend on chunking or thread
counts.  Statistics are reduced one trajectory at a time in ascending index
order (streaming Welford for means/variances, compensated Kahan sums for raw
second moments), so the reduction is bit-reproducible and chunk-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainConfig, ChainState, forcing_value

DRAW_BLOCK = 256
CHUNK_TRAJECTORIES = 512


@dataclass(frozen=True)
class SimParams:
    dt: float
    t_macro_end: float
    record_times: tuple
    ensemble_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (0 < self.dt <= 0.1):
            raise ValueError("dt must lie in (0, 0.1]")
        if self.t_macro_end <= 0:
            raise ValueError("t_macro_end must be > 0")
        rt = tuple(float(t) for t in self.record_times)
        if any(t < 0 or t > self.t_macro_end + 1e-12 for t in rt):
            raise ValueError("record_times must lie in [0, t_macro_end]")
        if list(rt) != sorted(rt):
            raise ValueError("record_times must be sorted")
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        object.__setattr__(self, "record_times", rt)


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one trajectory: Philox keyed by (seed, index)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF), np.uint64(index)],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _ou_coeffs(cfg: ChainConfig, h: float):
    decay = np.exp(-cfg.gamma * h)                       # e^{-2 gamma (h/2)}
    noise = np.sqrt(cfg.t_minus * (1.0 - np.exp(-2.0 * cfg.gamma * h)))
    return decay, noise


def _flip_probability(cfg: ChainConfig, h: float) -> float:
    return 0.5 * (1.0 - np.exp(-2.0 * cfg.gamma * h))


def _grad_rows(r: np.ndarray) -> np.ndarray:
    """(grad r) for each row of an (E, n) array -> (E, n+1)."""
    e, n = r.shape
    out = np.empty((e, n + 1))
    out[:, 0] = r[:, 0]
    out[:, 1:n] = r[:, 1:] - r[:, :-1]
    out[:, n] = -r[:, -1]
    return out


def step(cfg: ChainConfig, state: ChainState, dt: float, rng,
         enable_verlet: bool = True, enable_flip: bool = True,
         enable_ou: bool = True) -> ChainState:
    """One splitting step.  Draw order: OU normal, n flip uniforms, OU normal
    (draws are skipped together with their disabled substep)."""
    r = state.r.copy()
    p = state.p.copy()
    tau = state.tau
    if enable_ou:
        decay, noise = _ou_coeffs(cfg, dt)
        p[0] = decay * p[0] + noise * rng.standard_normal()
    if enable_verlet:
        f_mid = forcing_value(cfg, tau + 0.5 * dt)
        kick = np.empty_like(p)
        kick[0] = r[0]
        kick[1:-1] = r[1:] - r[:-1]
        kick[-1] = -r[-1]
        p += 0.5 * dt * kick
        p[-1] += 0.5 * dt * f_mid
        r += dt * (p[1:] - p[:-1])
        kick[0] = r[0]
        kick[1:-1] = r[1:] - r[:-1]
        kick[-1] = -r[-1]
        p += 0.5 * dt * kick
        p[-1] += 0.5 * dt * f_mid
    if enable_flip:
        u = rng.random(cfg.n)
        signs = np.where(u < _flip_probability(cfg, dt), -1.0, 1.0)
        p[1:] *= signs
    if enable_ou:
        decay, noise = _ou_coeffs(cfg, dt)
        p[0] = decay * p[0] + noise * rng.standard_normal()
    return ChainState(r=r, p=p, tau=tau + dt)


@dataclass
class TrajectoryFrames:
    """States of one trajectory at the requested macroscopic times."""

    macro_times: np.ndarray      # (T,)
    r: np.ndarray                # (T, n)
    p: np.ndarray                # (T, n+1)
    work: np.ndarray             # (T,)  W_n(t) = accumulated/(n)
    heat: np.ndarray             # (T,)  bath energy input (raw, not /n)

    def state(self, k: int, n2: float = None) -> ChainState:
        return ChainState(r=self.r[k].copy(), p=self.p[k].copy(),
                          tau=float(self.macro_times[k]) * (n2 or 1.0))


def _segment_steps(tau0: float, tau1: float, dt: float):
    """Full steps of size dt, then one shortened step to land exactly."""
    span = tau1 - tau0
    if span <= 1e-14:
        return []
    n_full = int(np.floor(span / dt + 1e-9))
    rem = span - n_full * dt
    steps = [dt] * n_full
    if rem > 1e-12 * max(1.0, dt):
        steps.append(rem)
    elif not steps:
        steps.append(span)
    return steps


def _advance_segment(cfg, r, p, tau0, step_sizes, gens, work_acc, heat_acc):
    """Advance an (E, .)-shaped block through one recording segment."""
    e = r.shape[0]
    n = cfg.n
    pos = 0
    tau = tau0
    while pos < len(step_sizes):
        block = step_sizes[pos:pos + DRAW_BLOCK]
        nb = len(block)
        xi_pre = np.empty((nb, e))
        uni = np.empty((nb, e, n))
        xi_post = np.empty((nb, e))
        for k, g in enumerate(gens):
            xi_pre[:, k] = g.standard_normal(nb)
            uni[:, k, :] = g.random((nb, n))
            xi_post[:, k] = g.standard_normal(nb)
        for b, h in enumerate(block):
            decay, noise = _ou_coeffs(cfg, h)
            q_flip = _flip_probability(cfg, h)
            p0_in = p[:, 0].copy()
            p[:, 0] = decay * p[:, 0] + noise * xi_pre[b]
            heat_acc += 0.5 * (p[:, 0] ** 2 - p0_in**2)

            f_mid = forcing_value(cfg, tau + 0.5 * h)
            p += 0.5 * h * _grad_rows(r)
            p[:, n] += 0.5 * h * f_mid
            work_acc += f_mid * p[:, n] * h
            r += h * (p[:, 1:] - p[:, :-1])
            p += 0.5 * h * _grad_rows(r)
            p[:, n] += 0.5 * h * f_mid

            flips = uni[b] < q_flip
            p[:, 1:] = np.where(flips, -p[:, 1:], p[:, 1:])

            p0_in = p[:, 0].copy()
            p[:, 0] = decay * p[:, 0] + noise * xi_post[b]
            heat_acc += 0.5 * (p[:, 0] ** 2 - p0_in**2)
            tau += h
        pos += nb
    return tau


def run_trajectory(cfg: ChainConfig, init: ChainState, params: SimParams,
                   trajectory_index: int = 0) -> TrajectoryFrames:
    """Integrate one trajectory, recording at the exact instants n^2 * t."""
    gen = trajectory_rng(params.seed, trajectory_index)
    record = params.record_times
    n2 = cfg.n**2
    r = init.r[None, :].astype(float).copy()
    p = init.p[None, :].astype(float).copy()
    work = np.zeros(1)
    heat = np.zeros(1)

    times, rs, ps, ws, hs = [], [], [], [], []
    tau = init.tau
    for t_rec in record:
        tau = _advance_segment(cfg, r, p, tau, _segment_steps(tau, n2 * t_rec, params.dt),
                               [gen], work, heat)
        times.append(t_rec)
        rs.append(r[0].copy())
        ps.append(p[0].copy())
        ws.append(work[0] / cfg.n)
        hs.append(heat[0])
    return TrajectoryFrames(macro_times=np.array(times), r=np.array(rs),
                            p=np.array(ps), work=np.array(ws), heat=np.array(hs))


@dataclass
class EnsembleStats:
    """Monte-Carlo estimates over independent trajectories, per record time."""

    record_times: np.ndarray
    mean_r: np.ndarray           # (T, n)
    mean_p: np.ndarray           # (T, n+1)
    mean_energy: np.ndarray      # (T, n+1)
    mean_p_sq: np.ndarray        # (T, n+1)
    work: np.ndarray             # (T,)   mean W_n(t)
    heat: np.ndarray             # (T,)   mean raw bath input
    balance: np.ndarray          # (T,)   mean of H(t)-H(0)-heat-n*W_n
    stderr_r: np.ndarray
    stderr_p: np.ndarray
    stderr_energy: np.ndarray
    stderr_p_sq: np.ndarray
    stderr_work: np.ndarray
    stderr_heat: np.ndarray
    stderr_balance: np.ndarray
    ensemble_size: int = 0
    second_moments: object = None      # CovarianceBlocks at the last record time

    def energy_flags(self) -> np.ndarray:
        """Sites where the energy estimate dips below -3 stderr (never, for
        raw averages of nonnegative samples; kept as a sanity flag)."""
        return self.mean_energy < -3.0 * self.stderr_energy


class _Kahan:
    """Compensated accumulator for arrays added in a fixed order."""

    def __init__(self, shape):
        self.total = np.zeros(shape)
        self.comp = np.zeros(shape)

    def add(self, value):
        y = value - self.comp
        t = self.total + y
        self.comp = (t - self.total) - y
        self.total = t


class _Welford:
    """Streaming mean/variance, updated one trajectory at a time.

    Order-deterministic and independent of chunk boundaries; identical inputs
    give exactly zero variance.
    """

    def __init__(self, shape):
        self.count = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def add(self, value):
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def stderr_of_mean(self) -> np.ndarray:
        return np.sqrt(self.m2 / self.count) / np.sqrt(self.count)


def run_ensemble(cfg: ChainConfig, init_sampler, params: SimParams,
                 second_moments: bool = False) -> EnsembleStats:
    """Independent trajectories with per-trajectory streams.

    ``init_sampler(rng) -> ChainState`` draws each initial condition from the
    trajectory's own stream (before any stepping); pass a closure over
    ``sample_local_gibbs`` or a constant-state lambda.  Statistics are reduced
    in ascending trajectory order with compensated summation, so results are
    independent of chunking and scheduling.
    """
    if params.ensemble_size < 2:
        raise ValueError("ensemble_size must be >= 2 for stderr estimates")
    n = cfg.n
    n2 = cfg.n**2
    record = params.record_times
    n_rec = len(record)
    width = n + 3 * (n + 1) + 3          # r, p, energy, p^2, work, heat, balance
    acc = _Welford((n_rec, width))
    e_total = params.ensemble_size
    last_sum = _Kahan((2 * n + 1, 2 * n + 1)) if second_moments else None

    for start in range(0, e_total, CHUNK_TRAJECTORIES):
        count = min(CHUNK_TRAJECTORIES, e_total - start)
        gens = [trajectory_rng(params.seed, start + k) for k in range(count)]
        r = np.empty((count, n))
        p = np.empty((count, n + 1))
        for k, g in enumerate(gens):
            st = init_sampler(g)
            r[k] = st.r
            p[k] = st.p
        work = np.zeros(count)
        heat = np.zeros(count)
        h0 = _total_energy_rows(r, p)

        obs = np.empty((n_rec, count, width))
        tau = 0.0
        for i, t_rec in enumerate(record):
            tau = _advance_segment(cfg, r, p, tau,
                                   _segment_steps(tau, n2 * t_rec, params.dt),
                                   gens, work, heat)
            energy = _site_energy_rows(r, p)
            ht = _total_energy_rows(r, p)
            obs[i, :, :n] = r
            obs[i, :, n:2 * n + 1] = p
            obs[i, :, 2 * n + 1:3 * n + 2] = energy
            obs[i, :, 3 * n + 2:4 * n + 3] = p**2
            obs[i, :, 4 * n + 3] = work / cfg.n
            obs[i, :, 4 * n + 4] = heat
            obs[i, :, 4 * n + 5] = ht - h0 - heat - work
        for k in range(count):
            acc.add(obs[:, k, :])
        if second_moments:
            z = np.concatenate([r, p], axis=1)
            for k in range(count):
                last_sum.add(np.outer(z[k], z[k]))

    mean = acc.mean
    stderr = acc.stderr_of_mean()

    second = None
    if second_moments:
        from .covariance import CovarianceBlocks

        mu = np.concatenate([mean[-1, :n], mean[-1, n:2 * n + 1]])
        smat = last_sum.total / e_total - np.outer(mu, mu)
        smat = 0.5 * (smat + smat.T)
        second = CovarianceBlocks(s_r=smat[:n, :n], s_rp=smat[:n, n:],
                                  s_p=smat[n:, n:], tau=n2 * record[-1])

    def split(a):
        return (a[:, :n], a[:, n:2 * n + 1], a[:, 2 * n + 1:3 * n + 2],
                a[:, 3 * n + 2:4 * n + 3], a[:, 4 * n + 3], a[:, 4 * n + 4],
                a[:, 4 * n + 5])

    m_r, m_p, m_e, m_p2, m_w, m_h, m_b = split(mean)
    s_r, s_p, s_e, s_p2, s_w, s_h, s_b = split(stderr)
    return EnsembleStats(
        record_times=np.array(record), mean_r=m_r, mean_p=m_p, mean_energy=m_e,
        mean_p_sq=m_p2, work=m_w, heat=m_h, balance=m_b,
        stderr_r=s_r, stderr_p=s_p, stderr_energy=s_e, stderr_p_sq=s_p2,
        stderr_work=s_w, stderr_heat=s_h, stderr_balance=s_b,
        ensemble_size=e_total, second_moments=second,
    )


def _site_energy_rows(r, p):
    e = 0.5 * p**2
    e[:, 1:] += 0.5 * r**2
    return e


def _total_energy_rows(r, p):
    return 0.5 * (p**2).sum(axis=1) + 0.5 * (r**2).sum(axis=1)


def time_average(frames: TrajectoryFrames, f) -> float:
    """(1/t) int f ds over macroscopic time by the trapezoidal rule."""
    times = frames.macro_times
    if times.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    vals = np.array([f(ChainState(r=frames.r[k], p=frames.p[k],
                                  tau=float(times[k])))
                     for k in range(times.shape[0])], dtype=float)
    span = times[-1] - times[0]
    return float(np.trapezoid(vals, x=times) / span)
