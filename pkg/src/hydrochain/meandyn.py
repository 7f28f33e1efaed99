"""Deterministic solvers for the ensemble-averaged chain dynamics.

The averages obey the linear system (microscopic time tau)

    d r_bar_x / dtau = p_bar_x - p_bar_{x-1},
    d p_bar_x / dtau = (grad r_bar)_x - 2 gamma p_bar_x + delta_{x,n} F_n(tau),

solved in closed form in the sine/cosine mode bases: each mode j relaxes with
the complex rates lambda_{j,±}, and the forcing contributes resonant terms
with denominators lambda_j - (l*omega)^2 + 2i*l*omega*gamma.  An independent
classical RK4 integrator of the same system serves as the oracle for every
sign and branch choice.

Boundary functionals (the momentum at the forced end, its time integral, and
the work (1/n) * int F_n p_bar_n dtau) are evaluated exactly by expanding
p_bar_n(tau) as a finite sum of c * tau^m * exp(a*tau) terms and integrating
term by term, which avoids quadrature of the fast force oscillation entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainConfig, forcing_value
from .spectral import (
    SpectralBasis,
    build_basis,
    div,
    forward_p,
    forward_r,
    grad,
    inverse_p,
    inverse_r,
    mode_rates,
    stable_quotient,
)

# Modes with |lambda_plus - lambda_minus| below this are treated as critically
# damped (the tau*exp branch); continuity across it is covered by tests.
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class MeanState:
    r_bar: np.ndarray    # (n,)
    p_bar: np.ndarray    # (n+1,)
    tau: float = 0.0

    @property
    def n(self) -> int:
        return self.r_bar.shape[0]


def zero_mean(n: int) -> MeanState:
    return MeanState(r_bar=np.zeros(n), p_bar=np.zeros(n + 1), tau=0.0)


def mechanical_energy_profile(mean: MeanState) -> np.ndarray:
    """Per-site (p_bar^2 + r_bar^2)/2 with the r_0 = 0 convention; length n+1."""
    prof = 0.5 * mean.p_bar**2
    prof[1:] += 0.5 * mean.r_bar**2
    return prof


def _signed_modes(cfg: ChainConfig):
    """(l*omega, Fhat(l)/sqrt(n)) over all nonzero l, negatives by conjugacy."""
    out = []
    scale = 1.0 / np.sqrt(cfg.n)
    for m in cfg.forcing_modes:
        amp = m.amplitude * scale
        w = m.ell * cfg.omega
        out.append((w, amp))
        out.append((-w, np.conj(amp)))
    return out


class MeanEvolution:
    """Closed-form evaluator of (r_bar, p_bar)(tau) for one config + init."""

    def __init__(self, cfg: ChainConfig, init: MeanState,
                 basis: SpectralBasis | None = None):
        if init.n != cfg.n:
            raise ValueError("init size does not match config")
        if init.tau != 0.0:
            raise ValueError("closed form starts from tau = 0")
        self.cfg = cfg
        self.basis = basis if basis is not None else build_basis(cfg.n)
        self.rates = mode_rates(self.basis, cfg.gamma)
        self.p0_modes = forward_p(self.basis, init.p_bar).astype(complex)
        self.r0_modes = np.zeros(cfg.n + 1, dtype=complex)
        self.r0_modes[1:] = forward_r(self.basis, init.r_bar)
        self.psi_n = self.basis.psi[:, cfg.n]          # psi_j(n), j = 0..n
        self.sqrt_lam = np.sqrt(self.basis.lam)
        self.modes = _signed_modes(cfg)

    # -- mode-space pieces -------------------------------------------------

    def _homogeneous(self, tau: float):
        """(z_modes, y_modes) of the force-free flow at time tau."""
        r = self.rates
        q = stable_quotient(r, np.arange(self.cfg.n + 1), tau)
        e_plus = np.exp(-r.lambda_plus * tau)
        e_minus = np.exp(-r.lambda_minus * tau)
        z = self.p0_modes * (e_plus - r.lambda_minus * q) + self.r0_modes * self.sqrt_lam * q
        y = -self.p0_modes * self.sqrt_lam * q + self.r0_modes * (e_minus + r.lambda_minus * q)
        return z, y

    def _forced_p_weights(self, tau: float):
        """Weights w so the forced p_bar part is sum_j psi_j(n) w_j psi_j(x).

        Returns (w_mean, w_osc, w_relax): the f_bar term, the e^{i l w tau}
        resonant term, and the transient force term, kept separate so the
        boundary decomposition can report them individually.
        """
        r = self.rates
        lam = self.basis.lam
        q = stable_quotient(r, np.arange(self.cfg.n + 1), tau)
        e_minus = np.exp(-r.lambda_minus * tau)
        w_mean = self.cfg.f_bar * q
        w_osc = np.zeros_like(q)
        w_relax = np.zeros_like(q)
        for w, amp in self.modes:
            denom = lam - w**2 + 2j * w * self.cfg.gamma
            w_osc = w_osc + amp * 1j * w * (np.exp(1j * w * tau) - e_minus) / denom
            w_relax = w_relax + amp * r.lambda_plus * q / (1j * w + r.lambda_plus)
        return w_mean, w_osc, w_relax

    def _forced_r_weights(self, tau: float):
        """Weights v so the forced r_bar part is sum_{j>=1} psi_j(n) v_j phi_j(x)."""
        r = self.rates
        n = self.cfg.n
        lam = self.basis.lam[1:]
        sq = self.sqrt_lam[1:]
        lm = r.lambda_minus[1:]
        lp = r.lambda_plus[1:]
        q = stable_quotient(r, np.arange(1, n + 1), tau)
        e_minus = np.exp(-lm * tau)
        v = self.cfg.f_bar * ((e_minus - 1.0) / sq
                              + np.sqrt(lm) / np.sqrt(lp) * q)
        for w, amp in self.modes:
            denom = lam - w**2 + 2j * w * self.cfg.gamma
            v = v + amp * sq * (e_minus - np.exp(1j * w * tau)) / denom
            v = v + amp * sq * q / (1j * w + lp)
        return v

    # -- public evaluations --------------------------------------------------

    def state_at_tau(self, tau: float) -> MeanState:
        z, y = self._homogeneous(tau)
        w_mean, w_osc, w_relax = self._forced_p_weights(tau)
        p_modes = z + self.psi_n * (w_mean + w_osc + w_relax)
        r_modes = y[1:] + self.psi_n[1:] * self._forced_r_weights(tau)
        p_bar = inverse_p(self.basis, p_modes)
        r_bar = inverse_r(self.basis, r_modes)
        resid = max(np.abs(p_bar.imag).max(), np.abs(r_bar.imag).max())
        if resid > 1e-10:
            raise FloatingPointError(f"imaginary residue {resid:.3e} in mean fields")
        return MeanState(r_bar=r_bar.real, p_bar=p_bar.real, tau=tau)

    def p_bar_at_tau(self, tau: float) -> np.ndarray:
        """p_bar(tau) alone (used as the covariance solver's mean input)."""
        z, _ = self._homogeneous(tau)
        w_mean, w_osc, w_relax = self._forced_p_weights(tau)
        p_modes = z + self.psi_n * (w_mean + w_osc + w_relax)
        return inverse_p(self.basis, p_modes).real

    def boundary_momentum_terms(self, t_macro: float):
        """The four components of p_bar_n(n^2 t): free, mean-force, resonant,
        and force-transient parts."""
        tau = self.cfg.n**2 * t_macro
        z, _ = self._homogeneous(tau)
        w_mean, w_osc, w_relax = self._forced_p_weights(tau)
        p0 = complex(np.dot(self.psi_n, z))
        pf = complex(np.dot(self.psi_n**2, w_mean))
        pfl = complex(np.dot(self.psi_n**2, w_osc))
        pdp = complex(np.dot(self.psi_n**2, w_relax))
        return p0.real, pf.real, pfl.real, pdp.real

    # -- exact exponential-sum boundary integrals ----------------------------

    def _p_n_expsum(self) -> "ExpSum":
        """p_bar_n(tau) as a finite sum of c * tau^m * exp(a tau)."""
        cfg = self.cfg
        r = self.rates
        lam = self.basis.lam
        coeffs, rates_, powers = [], [], []

        def add(c, a, m=0):
            if c != 0:
                coeffs.append(c)
                rates_.append(a)
                powers.append(m)

        for j in range(cfg.n + 1):
            psi = self.psi_n[j]
            lm, lp, dl = r.lambda_minus[j], r.lambda_plus[j], r.delta_lambda[j]
            p0, r0 = self.p0_modes[j], self.r0_modes[j]
            fbar = cfg.f_bar * psi**2
            if abs(dl) < DEGENERACY_TOL:
                g = cfg.gamma
                # critically damped: q_j(tau) = tau e^{-gamma tau}
                add(psi * p0, -g)
                add(psi * g * (r0 - p0), -g, 1)
                add(fbar, -g, 1)
                for w, amp in self.modes:
                    denom = lam[j] - w**2 + 2j * w * g
                    c_fl = amp * 1j * w * psi**2 / denom
                    add(c_fl, 1j * w)
                    add(-c_fl, -g)
                    add(amp * psi**2 * g / (1j * w + g), -g, 1)
            else:
                # z_j = e^{-lp tau} [p0 (1 + lm/dl) - r0 sqrt(lam)/dl]
                #     + e^{-lm tau} [-p0 lm/dl + r0 sqrt(lam)/dl]
                sq = self.sqrt_lam[j]
                add(psi * (p0 * (1.0 + lm / dl) - r0 * sq / dl), -lp)
                add(psi * (-p0 * lm / dl + r0 * sq / dl), -lm)
                add(fbar / dl, -lm)
                add(-fbar / dl, -lp)
                for w, amp in self.modes:
                    denom = lam[j] - w**2 + 2j * w * cfg.gamma
                    c_fl = amp * 1j * w * psi**2 / denom
                    add(c_fl, 1j * w)
                    add(-c_fl, -lm)
                    c_dp = amp * psi**2 * lp / (dl * (1j * w + lp))
                    add(c_dp, -lm)
                    add(-c_dp, -lp)
        return ExpSum(np.array(coeffs, dtype=complex),
                      np.array(rates_, dtype=complex),
                      np.array(powers, dtype=int))

    def _force_expsum(self) -> "ExpSum":
        terms = [(complex(self.cfg.f_bar), 0.0j, 0)]
        terms += [(amp, 1j * w, 0) for w, amp in self.modes]
        c, a, m = zip(*terms)
        return ExpSum(np.array(c, dtype=complex), np.array(a, dtype=complex),
                      np.array(m, dtype=int))

    def work(self, t_macro: float) -> float:
        """W_n(t) = (1/n) int_0^{n^2 t} F_n(tau) p_bar_n(tau) dtau, exactly."""
        tau_end = self.cfg.n**2 * t_macro
        prod = self._force_expsum().multiply(self._p_n_expsum())
        val = prod.integral(tau_end) / self.cfg.n
        return float(val.real)

    def integral_p_n(self, t_macro: float) -> float:
        """int_0^t p_bar_n(n^2 s) ds = n^{-2} int_0^{n^2 t} p_bar_n(tau) dtau."""
        tau_end = self.cfg.n**2 * t_macro
        return float(self._p_n_expsum().integral(tau_end).real) / self.cfg.n**2

    def time_avg_r_n(self, t_macro: float) -> float:
        """(1/t) int_0^t r_bar_n(n^2 s) ds, exactly."""
        cfg = self.cfg
        r = self.rates
        coeffs, rates_, powers = [], [], []

        def add(c, a, m=0):
            if c != 0:
                coeffs.append(c)
                rates_.append(a)
                powers.append(m)

        phi_n = np.zeros(cfg.n + 1)
        phi_n[1:] = self.basis.phi[:, cfg.n - 1]       # phi_j(n)
        for j in range(1, cfg.n + 1):
            w_edge = self.psi_n[j] * phi_n[j]
            lm, lp, dl = r.lambda_minus[j], r.lambda_plus[j], r.delta_lambda[j]
            sq = self.sqrt_lam[j]
            p0, r0 = self.p0_modes[j], self.r0_modes[j]
            if abs(dl) < DEGENERACY_TOL:
                g = cfg.gamma
                add(phi_n[j] * r0, -g)
                add(phi_n[j] * g * (r0 - p0), -g, 1)
                add(w_edge * cfg.f_bar * (-1.0 / sq), 0.0j)
                add(w_edge * cfg.f_bar / sq, -g)
                add(w_edge * cfg.f_bar, -g, 1)
                for w, amp in self.modes:
                    denom = self.basis.lam[j] - w**2 + 2j * w * g
                    add(w_edge * amp * sq / denom, -g)
                    add(-w_edge * amp * sq / denom, 1j * w)
                    add(w_edge * amp * sq / (1j * w + g), -g, 1)
            else:
                # y_j = e^{-lm tau}[-p0 sqrt(lam)/dl + r0 (1 + lm/dl)]
                #     + e^{-lp tau}[ p0 sqrt(lam)/dl - r0 lm/dl]
                add(phi_n[j] * (-p0 * sq / dl + r0 * (1.0 + lm / dl)), -lm)
                add(phi_n[j] * (p0 * sq / dl - r0 * lm / dl), -lp)
                fbar = w_edge * cfg.f_bar
                add(-fbar / sq, 0.0j)
                add(fbar / sq, -lm)
                srat = np.sqrt(lm) / np.sqrt(lp)
                add(fbar * srat / dl, -lm)
                add(-fbar * srat / dl, -lp)
                for w, amp in self.modes:
                    denom = self.basis.lam[j] - w**2 + 2j * w * cfg.gamma
                    add(w_edge * amp * sq / denom, -lm)
                    add(-w_edge * amp * sq / denom, 1j * w)
                    c_dp = w_edge * amp * sq / (dl * (1j * w + lp))
                    add(c_dp, -lm)
                    add(-c_dp, -lp)
        es = ExpSum(np.array(coeffs, dtype=complex),
                    np.array(rates_, dtype=complex), np.array(powers, dtype=int))
        tau_end = cfg.n**2 * t_macro
        return float(es.integral(tau_end).real) / tau_end


class ExpSum:
    """Finite sum  f(tau) = sum_k c_k tau^{m_k} exp(a_k tau),  m_k in {0, 1, 2}."""

    def __init__(self, coeff: np.ndarray, rate: np.ndarray, power: np.ndarray):
        self.coeff = coeff
        self.rate = rate
        self.power = power

    def value(self, tau: float) -> complex:
        return complex(np.sum(self.coeff * tau**self.power * np.exp(self.rate * tau)))

    def multiply(self, other: "ExpSum") -> "ExpSum":
        c = np.outer(self.coeff, other.coeff).ravel()
        a = np.add.outer(self.rate, other.rate).ravel()
        m = np.add.outer(self.power, other.power).ravel()
        return ExpSum(c, a, m)

    def integral(self, t_end: float) -> complex:
        """int_0^{t_end} f(tau) dtau, exact per term."""
        z = self.rate * t_end
        small = np.abs(z) < 1e-8
        ez = np.exp(z)
        with np.errstate(divide="ignore", invalid="ignore"):
            i0 = (ez - 1.0) / self.rate
            i1 = (t_end * ez) / self.rate - (ez - 1.0) / self.rate**2
            i2 = (t_end**2 * ez) / self.rate - 2.0 * i1 / self.rate
        # series fallbacks: T*phi0(z), T^2*phi1(z), T^3*phi2(z)
        s0 = t_end * (1.0 + z / 2.0 + z**2 / 6.0 + z**3 / 24.0)
        s1 = t_end**2 * (0.5 + z / 3.0 + z**2 / 8.0 + z**3 / 30.0)
        s2 = t_end**3 * (1.0 / 3.0 + z / 4.0 + z**2 / 10.0 + z**3 / 36.0)
        i0 = np.where(small, s0, i0)
        i1 = np.where(small, s1, i1)
        i2 = np.where(small, s2, i2)
        pieces = np.choose(self.power, [i0, i1, i2])
        return complex(np.sum(self.coeff * pieces))


def closed_form_mean(cfg: ChainConfig, init: MeanState, t_macro: float,
                     basis: SpectralBasis | None = None) -> MeanState:
    """Averaged state at macroscopic time t (microscopic tau = n^2 t)."""
    ev = MeanEvolution(cfg, init, basis=basis)
    return ev.state_at_tau(cfg.n**2 * t_macro)


def boundary_momentum_terms(cfg: ChainConfig, init: MeanState, t_macro: float):
    """Split p_bar_n(n^2 t) into free / mean-force / resonant / transient parts."""
    return MeanEvolution(cfg, init).boundary_momentum_terms(t_macro)


def mean_rhs(cfg: ChainConfig, r_bar: np.ndarray, p_bar: np.ndarray, tau: float):
    """Right-hand side of the averaged system at microscopic time tau."""
    dr = div(p_bar)
    dp = grad(r_bar) - 2.0 * cfg.gamma * p_bar
    dp[cfg.n] += forcing_value(cfg, tau)
    return dr, dp


def rk4_mean_oracle(cfg: ChainConfig, init: MeanState, t_macro: float,
                    dt: float = 0.02) -> MeanState:
    """Classical fourth-order integration of the averaged system.

    Independent of the closed form: works directly on the site equations in
    microscopic time up to n^2 * t_macro.
    """
    if dt > 0.05:
        raise ValueError("oracle step must be <= 0.05")
    tau_end = cfg.n**2 * t_macro
    steps = max(1, int(np.ceil(tau_end / dt)))
    h = tau_end / steps
    r = init.r_bar.astype(float).copy()
    p = init.p_bar.astype(float).copy()
    tau = init.tau
    for _ in range(steps):
        k1r, k1p = mean_rhs(cfg, r, p, tau)
        k2r, k2p = mean_rhs(cfg, r + 0.5 * h * k1r, p + 0.5 * h * k1p, tau + 0.5 * h)
        k3r, k3p = mean_rhs(cfg, r + 0.5 * h * k2r, p + 0.5 * h * k2p, tau + 0.5 * h)
        k4r, k4p = mean_rhs(cfg, r + h * k3r, p + h * k3p, tau + h)
        r += (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
        p += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p)
        tau += h
    return MeanState(r_bar=r, p_bar=p, tau=tau)
