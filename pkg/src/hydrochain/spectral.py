"""Discrete trigonometric bases and mode analysis for the open chain.

Two orthonormal systems diagonalize the discrete Laplacians that drive the
averaged dynamics:

    psi_j(x) = sqrt((2 - delta_{0j})/(n+1)) * cos(pi*j*(2x+1)/(2(n+1))),  x,j = 0..n
    phi_j(x) = sqrt(2/(n+1)) * sin(pi*j*x/(n+1)),                         x,j = 1..n

with eigenvalues lambda_j = 4 sin^2(j*pi/(2(n+1))).  The gradient/divergence
pair (grad, div) satisfies grad phi_j = sqrt(lambda_j) psi_j and
div psi_j = -sqrt(lambda_j) phi_j, so Delta_D = div∘grad and
Delta_N = grad∘div are diagonal in these bases.

Each mode relaxes with complex rates

    lambda_{j,±} = gamma ± sqrt(gamma^2 - lambda_j)

(principal square root, Re >= 0).  The quotient

    q_j(t) = exp(-lambda_{j,-} t) * (1 - exp(-dlambda_j t)) / dlambda_j

appears in every closed-form solution and is numerically delicate when
dlambda_j*t is small; ``stable_quotient`` evaluates it with a series branch
near the degenerate point gamma^2 = lambda_j.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Below this value of |dlambda_j|*t the direct quotient loses ~4 digits to
# cancellation; the phi-series branch is exact to machine precision there.
QUOTIENT_SWITCH = 1e-4


@dataclass(frozen=True)
class SpectralBasis:
    """Orthonormal cosine (psi) and sine (phi) systems for size n."""

    n: int
    psi: np.ndarray     # (n+1, n+1), psi[j, x]
    phi: np.ndarray     # (n, n),     phi[j, x] for j,x = 1..n (0-based storage)
    lam: np.ndarray     # (n+1,) eigenvalues, lam[0] = 0, increasing


@dataclass(frozen=True)
class ModeRates:
    """Complex relaxation rates of the damped mode equations, j = 0..n."""

    gamma: float
    lam: np.ndarray            # (n+1,) real
    lambda_minus: np.ndarray   # (n+1,) complex
    lambda_plus: np.ndarray    # (n+1,) complex
    delta_lambda: np.ndarray   # (n+1,) complex, lambda_plus - lambda_minus


def build_basis(n: int) -> SpectralBasis:
    """Materialize the psi/phi matrices and eigenvalues for chain size n."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    j = np.arange(n + 1)
    x = np.arange(n + 1)
    norm = np.sqrt((2.0 - (j == 0)) / (n + 1.0))
    psi = norm[:, None] * np.cos(np.pi * np.outer(j, 2 * x + 1) / (2.0 * (n + 1)))
    jd = np.arange(1, n + 1)
    xd = np.arange(1, n + 1)
    phi = np.sqrt(2.0 / (n + 1)) * np.sin(np.pi * np.outer(jd, xd) / (n + 1.0))
    lam = 4.0 * np.sin(np.pi * j / (2.0 * (n + 1))) ** 2
    return SpectralBasis(n=n, psi=psi, phi=phi, lam=lam)


def grad(g: np.ndarray) -> np.ndarray:
    """Forward difference R^n -> R^{n+1} with the g_0 = g_{n+1} = 0 convention."""
    g = np.asarray(g)
    n = g.shape[0]
    out = np.empty(n + 1, dtype=g.dtype)
    out[0] = g[0]
    out[1:n] = g[1:] - g[:-1]
    out[n] = -g[-1]
    return out


def div(f: np.ndarray) -> np.ndarray:
    """Backward difference R^{n+1} -> R^n, (div f)_x = f_x - f_{x-1}."""
    f = np.asarray(f)
    if f.shape[0] < 2:
        raise ValueError("div needs a vector of length n+1 >= 2")
    return f[1:] - f[:-1]


def grad_matrix(n: int) -> np.ndarray:
    """Dense (n+1) x n matrix of grad."""
    m = np.zeros((n + 1, n))
    for x in range(n + 1):
        if x >= 1:
            m[x, x - 1] = -1.0
        if x <= n - 1:
            m[x, x] = 1.0
    return m


def div_matrix(n: int) -> np.ndarray:
    """Dense n x (n+1) matrix of div."""
    m = np.zeros((n, n + 1))
    for x in range(n):
        m[x, x] = -1.0
        m[x, x + 1] = 1.0
    return m


def drift_matrix(n: int, gamma: float) -> np.ndarray:
    """Block matrix A = [[0, -div], [-grad, 2*gamma*I]] of the averaged flow.

    The averages obey d/dt (r, p) = -A (r, p) + forcing.
    """
    a = np.zeros((2 * n + 1, 2 * n + 1))
    a[:n, n:] = -div_matrix(n)
    a[n:, :n] = -grad_matrix(n)
    a[n:, n:] += 2.0 * gamma * np.eye(n + 1)
    return a


def mode_rates(basis: SpectralBasis, gamma: float) -> ModeRates:
    """Complex rates lambda_{j,±} = gamma ± sqrt(gamma^2 - lambda_j)."""
    if gamma <= 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    disc = np.asarray(gamma**2 - basis.lam, dtype=complex)
    root = np.sqrt(disc)  # principal branch: Re >= 0
    lam_minus = gamma - root
    lam_plus = gamma + root
    return ModeRates(
        gamma=gamma,
        lam=basis.lam.copy(),
        lambda_minus=lam_minus,
        lambda_plus=lam_plus,
        delta_lambda=lam_plus - lam_minus,
    )


def _phi_series(z: np.ndarray) -> np.ndarray:
    """(e^z - 1)/z by Taylor series, accurate to <1e-16 for |z| <= 1e-3."""
    return 1.0 + z / 2.0 * (1.0 + z / 3.0 * (1.0 + z / 4.0))


def stable_quotient(rates: ModeRates, j, t):
    """q_j(t) = e^{-lambda_{j,-} t} (1 - e^{-dlambda_j t}) / dlambda_j.

    Vectorized over j and/or t.  Uses the direct formula when
    |dlambda_j|*t >= QUOTIENT_SWITCH and the series form
    t * e^{-lambda_{j,-} t} * phi(-dlambda_j t), phi(z) = (e^z-1)/z, otherwise.
    The two branches agree to ~1e-12 at the switch.
    """
    j = np.asarray(j)
    t = np.asarray(t, dtype=float)
    lm = rates.lambda_minus[j]
    dl = rates.delta_lambda[j]
    z = dl * t
    small = np.abs(z) < QUOTIENT_SWITCH
    decay = np.exp(-lm * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = decay * (1.0 - np.exp(-z)) / dl
    series = t * decay * _phi_series(-z)
    out = np.where(small, series, direct)
    if out.ndim == 0:
        return complex(out)
    return out


def forward_p(basis: SpectralBasis, g: np.ndarray) -> np.ndarray:
    """Cosine-mode coefficients of a momentum-type vector (length n+1)."""
    g = np.asarray(g)
    if g.shape[-1] != basis.n + 1:
        raise ValueError(f"expected length {basis.n + 1}, got {g.shape[-1]}")
    return g @ basis.psi.T


def inverse_p(basis: SpectralBasis, gt: np.ndarray) -> np.ndarray:
    g = np.asarray(gt)
    if g.shape[-1] != basis.n + 1:
        raise ValueError(f"expected length {basis.n + 1}, got {g.shape[-1]}")
    return g @ basis.psi


def forward_r(basis: SpectralBasis, f: np.ndarray) -> np.ndarray:
    """Sine-mode coefficients of a stretch-type vector (length n)."""
    f = np.asarray(f)
    if f.shape[-1] != basis.n:
        raise ValueError(f"expected length {basis.n}, got {f.shape[-1]}")
    return f @ basis.phi.T


def inverse_r(basis: SpectralBasis, ft: np.ndarray) -> np.ndarray:
    f = np.asarray(ft)
    if f.shape[-1] != basis.n:
        raise ValueError(f"expected length {basis.n}, got {f.shape[-1]}")
    return f @ basis.phi


def key_lemma_check(rates: ModeRates, n: int, gamma: float) -> dict:
    """Verify the proof-derived mode-rate inequalities for all j.

    Checks, for j = 1..n:
      |lambda_{j,-}| <= lambda_j / gamma
      Re lambda_{j,-} >= lambda_j * gamma / (gamma + sqrt(gamma^2+4))^2
      2 (j/n)^2 <= lambda_j <= pi^2 (j/n)^2
    and reports the empirical range of Re(lambda_{j,-}) / (j/n)^2.
    Violations are reported in the dict, never raised.
    """
    j = np.arange(1, n + 1)
    lam = rates.lam[1:]
    lm = rates.lambda_minus[1:]
    cap = gamma + np.sqrt(gamma**2 + 4.0)
    tol = 1e-12

    abs_ok = np.abs(lm) <= lam / gamma + tol
    re_lower = lam * gamma / cap**2
    re_ok = lm.real >= re_lower - tol
    ratio = (j / n) ** 2
    lam_ok = (lam >= 2.0 * ratio - tol) & (lam <= np.pi**2 * ratio + tol)

    scaled = lm.real / ratio
    violations = []
    for name, ok in (("abs_upper", abs_ok), ("re_lower", re_ok), ("lam_window", lam_ok)):
        bad = np.flatnonzero(~ok)
        for b in bad:
            violations.append({"check": name, "j": int(j[b])})
    return {
        "n": n,
        "gamma": gamma,
        "all_hold": not violations,
        "violations": violations,
        "scaled_re_min": float(scaled.min()),
        "scaled_re_max": float(scaled.max()),
    }
