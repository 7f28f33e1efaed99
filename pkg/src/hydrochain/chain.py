"""Physical model of the open harmonic chain with velocity-flip noise.

State is (r_1..r_n, p_0..p_n): inter-particle stretches and momenta, with the
conventions r_0 = 0 and r_{n+1} = 0 never stored.  Site 0 is thermostatted at
temperature ``t_minus`` by an Ornstein-Uhlenbeck bath of strength 2*gamma;
sites 1..n flip their momentum sign at rate gamma; site n is driven by the
periodic force

    F_n(tau) = f_bar + n^{-1/2} * 2 * sum_{l>=1} Re( Fhat(l) e^{i l omega tau} ),

omega = 2*pi/theta.  Only the modes l >= 1 are stored; negative modes are the
conjugates, so the force is real by construction.

Per-site energies, boundary/bulk energy currents, the quadratic observables
entering the current's gradient decomposition, and Gibbs / local-Gibbs
initial samplers live here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ForcingMode:
    ell: int
    re: float
    im: float

    def __post_init__(self):
        if self.ell < 1:
            raise ValueError(f"forcing mode index must be >= 1, got {self.ell}")

    @property
    def amplitude(self) -> complex:
        return complex(self.re, self.im)


@dataclass(frozen=True)
class ChainConfig:
    """Physical parameters: size, noise strength, bath, and boundary forcing."""

    n: int
    gamma: float
    t_minus: float
    f_bar: float = 0.0
    theta: float = 2.0 * np.pi
    forcing_modes: tuple[ForcingMode, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.t_minus <= 0:
            raise ValueError(f"t_minus must be > 0, got {self.t_minus}")
        if self.theta <= 0:
            raise ValueError(f"theta must be > 0, got {self.theta}")
        seen = set()
        for m in self.forcing_modes:
            if m.ell in seen:
                raise ValueError(f"duplicate forcing mode ell={m.ell}")
            seen.add(m.ell)

    @property
    def omega(self) -> float:
        return 2.0 * np.pi / self.theta

    def with_n(self, n: int) -> "ChainConfig":
        """Same physics on a chain of a different size."""
        return ChainConfig(n=n, gamma=self.gamma, t_minus=self.t_minus,
                           f_bar=self.f_bar, theta=self.theta,
                           forcing_modes=self.forcing_modes)

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "gamma": self.gamma,
            "t_minus": self.t_minus,
            "f_bar": self.f_bar,
            "theta": self.theta,
            "forcing_modes": [
                {"ell": m.ell, "re": m.re, "im": m.im} for m in self.forcing_modes
            ],
        }
        return json.dumps(doc, sort_keys=True)

    @staticmethod
    def from_dict(doc: dict) -> "ChainConfig":
        allowed = {"n", "gamma", "t_minus", "f_bar", "theta", "forcing_modes"}
        unknown = set(doc) - allowed
        if unknown:
            raise ValueError(f"unknown ChainConfig keys: {sorted(unknown)}")
        modes = []
        for m in doc.get("forcing_modes", []):
            extra = set(m) - {"ell", "re", "im"}
            if extra:
                raise ValueError(f"unknown forcing mode keys: {sorted(extra)}")
            modes.append(ForcingMode(ell=int(m["ell"]), re=float(m["re"]),
                                     im=float(m["im"])))
        return ChainConfig(
            n=int(doc["n"]),
            gamma=float(doc["gamma"]),
            t_minus=float(doc["t_minus"]),
            f_bar=float(doc.get("f_bar", 0.0)),
            theta=float(doc.get("theta", 2.0 * np.pi)),
            forcing_modes=tuple(modes),
        )

    @staticmethod
    def from_json(text: str) -> "ChainConfig":
        return ChainConfig.from_dict(json.loads(text))


@dataclass(frozen=True)
class ChainState:
    """Microscopic configuration at microscopic time tau."""

    r: np.ndarray     # (n,)
    p: np.ndarray     # (n+1,)
    tau: float = 0.0

    def __post_init__(self):
        if self.p.shape[0] != self.r.shape[0] + 1:
            raise ValueError("p must have one more entry than r")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def n(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class ObservableFrame:
    """Per-site energies, currents and current-decomposition observables."""

    site_energy: np.ndarray    # (n+1,)
    currents: np.ndarray       # (n+2,), bath through forced end
    u_e: np.ndarray            # (n+1,)
    v_e: np.ndarray            # (n,)

    def __post_init__(self):
        if np.any(self.site_energy < 0):
            raise ValueError("site energies must be nonnegative")


def observable_frame(cfg: "ChainConfig", state: "ChainState",
                     tau: float, r_right: float = 0.0) -> ObservableFrame:
    u_e, v_e = fd_observables(cfg, state, r_right=r_right)
    return ObservableFrame(site_energy=site_energy(state),
                           currents=currents(cfg, state, tau),
                           u_e=u_e, v_e=v_e)


def forcing_value(cfg: ChainConfig, tau) -> float | np.ndarray:
    """Boundary force at microscopic time tau (vectorized over tau)."""
    tau = np.asarray(tau, dtype=float)
    out = np.full(tau.shape, cfg.f_bar)
    if cfg.forcing_modes:
        scale = 2.0 / np.sqrt(cfg.n)
        for m in cfg.forcing_modes:
            out = out + scale * (
                m.re * np.cos(m.ell * cfg.omega * tau)
                - m.im * np.sin(m.ell * cfg.omega * tau)
            )
    if out.ndim == 0:
        return float(out)
    return out


def site_energy(state: ChainState) -> np.ndarray:
    """Per-site energy p_x^2/2 + r_x^2/2 with r_0 = 0, length n+1."""
    e = 0.5 * state.p**2
    e[1:] += 0.5 * state.r**2
    return e


def total_energy(state: ChainState) -> float:
    return float(np.sum(site_energy(state)))


def currents(cfg: ChainConfig, state: ChainState, tau: float) -> np.ndarray:
    """Energy currents j_{-1,0}, j_{0,1}, ..., j_{n,n+1}; length n+2.

    Bulk: j_{x,x+1} = -p_x r_{x+1}.  Bath: j_{-1,0} = 2*gamma*(T_- - p_0^2).
    Forced end: j_{n,n+1} = -F_n(tau) p_n.
    """
    n = state.n
    out = np.empty(n + 2)
    out[0] = 2.0 * cfg.gamma * (cfg.t_minus - state.p[0] ** 2)
    out[1:n + 1] = -state.p[:n] * state.r
    out[n + 1] = -forcing_value(cfg, tau) * state.p[n]
    return out


def fd_observables(cfg: ChainConfig, state: ChainState, r_right: float = 0.0):
    """Quadratic observables (U^e, V^e) of the current decomposition.

    U^e_x = E_x + (r_x r_{x+1} + p_{x-1} p_x)/2 + gamma p_x r_x for x = 0..n,
    with r_0 = 0, p_{-1} = p_0 and r_{n+1} = ``r_right`` (0 for centered
    fields, the instantaneous force for the raw forced identity).
    V^e_x = (2 r_{x+1} p_x + p_{x+1} r_{x+1} + p_x r_x)/(8 gamma)
            + r_{x+1}^2/4 for x = 0..n-1.
    """
    n = state.n
    r_ext = np.zeros(n + 2)           # r_0 .. r_{n+1}
    r_ext[1:n + 1] = state.r
    r_ext[n + 1] = r_right
    p = state.p

    u_e = site_energy(state)
    u_e += 0.5 * r_ext[:n + 1] * r_ext[1:]
    u_e[0] += 0.5 * p[0] * p[0]       # p_{-1} = p_0 convention
    u_e[1:] += 0.5 * p[:-1] * p[1:]
    u_e += cfg.gamma * p * r_ext[:n + 1]

    g8 = 8.0 * cfg.gamma
    v_e = (2.0 * r_ext[1:n + 1] * p[:n] + p[1:] * r_ext[1:n + 1]
           + p[:n] * r_ext[:n]) / g8 + 0.25 * r_ext[1:n + 1] ** 2
    return u_e, v_e


def sample_local_gibbs(cfg: ChainConfig, temperature_profile, rng) -> ChainState:
    """Draw (r, p) from the product Gaussian with per-site temperatures.

    ``temperature_profile`` has length n+1; entry x >= 1 is the temperature of
    the (r_x, p_x) pair, entry 0 is ignored because p_0 always sits at the
    bath temperature t_minus.  Draw order (fixed for reproducibility):
    p_0..p_n first, then r_1..r_n.
    """
    prof = np.asarray(temperature_profile, dtype=float)
    if prof.shape[0] != cfg.n + 1:
        raise ValueError(f"temperature profile must have length {cfg.n + 1}")
    if np.any(prof <= 0):
        raise ValueError("temperature profile must be strictly positive")
    sd_p = np.sqrt(prof)
    sd_p[0] = np.sqrt(cfg.t_minus)
    p = sd_p * rng.standard_normal(cfg.n + 1)
    r = np.sqrt(prof[1:]) * rng.standard_normal(cfg.n)
    return ChainState(r=r, p=p, tau=0.0)


def sample_gibbs(cfg: ChainConfig, temperature: float, rng) -> ChainState:
    """Constant-temperature product Gaussian (p_0 still at t_minus)."""
    prof = np.full(cfg.n + 1, float(temperature))
    return sample_local_gibbs(cfg, prof, rng)
