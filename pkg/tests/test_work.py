import numpy as np
import pytest

from hydrochain import pde
from hydrochain import work as wk
from hydrochain.chain import ChainConfig, ForcingMode


def random_cfg(rng, n=8):
    n_modes = int(rng.integers(1, 4))
    modes = tuple(ForcingMode(k + 1, float(rng.normal()), float(rng.normal()))
                  for k in range(n_modes))
    return ChainConfig(n=n, gamma=float(rng.uniform(0.3, 3.0)), t_minus=1.0,
                       theta=float(rng.uniform(1.0, 8.0)), forcing_modes=modes)


class TestWq:
    def test_no_modes(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=2.0)
        assert wk.wq_closed_form(cfg) == 0.0
        assert wk.wq_quadrature_oracle(cfg) == 0.0

    def test_matches_quadrature_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            cfg = random_cfg(rng)
            a = wk.wq_closed_form(cfg)
            b = wk.wq_quadrature_oracle(cfg)
            assert abs(a - b) <= 1e-8
            assert a >= 0.0

    def test_resonant_mode_stable(self):
        # l*omega exactly 2: quadrature still converges under panel doubling
        cfg = ChainConfig(n=8, gamma=0.5, t_minus=1.0, theta=np.pi,
                          forcing_modes=(ForcingMode(1, 1.0, 0.0),))
        a = wk.wq_quadrature_oracle(cfg, n_quad=64)
        b = wk.wq_quadrature_oracle(cfg, n_quad=128)
        assert abs(a - b) <= 1e-8
        assert abs(a - wk.wq_closed_form(cfg)) <= 1e-8

    def test_small_gamma_limit(self):
        cfg = ChainConfig(n=8, gamma=1e-3, t_minus=1.0, theta=2 * np.pi,
                          forcing_modes=(ForcingMode(1, 1.0, 0.0),))
        limit = sum(abs(m.amplitude) ** 2 * np.sqrt(4 - (m.ell * cfg.omega) ** 2)
                    for m in cfg.forcing_modes if m.ell * cfg.omega < 2)
        assert abs(wk.wq_closed_form(cfg) - limit) <= 1e-2

    def test_amplitude_scaling(self):
        base = ChainConfig(n=8, gamma=0.7, t_minus=1.0, theta=3.0,
                           forcing_modes=(ForcingMode(1, 0.3, 0.4),
                                          ForcingMode(2, -0.2, 0.1)))
        s = 2.5
        scaled = ChainConfig(n=8, gamma=0.7, t_minus=1.0, theta=3.0,
                             forcing_modes=tuple(
                                 ForcingMode(m.ell, s * m.re, s * m.im)
                                 for m in base.forcing_modes))
        assert abs(wk.wq_closed_form(scaled) - s**2 * wk.wq_closed_form(base)) <= 1e-12

    def test_monotone_in_gamma_low_frequency(self):
        vals = []
        for gamma in (0.2, 0.5, 1.0, 2.0, 4.0):
            cfg = ChainConfig(n=8, gamma=gamma, t_minus=1.0, theta=2 * np.pi,
                              forcing_modes=(ForcingMode(1, 1.0, 0.0),))
            vals.append(wk.wq_closed_form(cfg))
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_branch_check(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            assert wk.wq_branch_check(random_cfg(rng))

    def test_quadrature_guard(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0)
        with pytest.raises(ValueError):
            wk.wq_quadrature_oracle(cfg, n_quad=16)


class TestMacroscopicWork:
    def test_zero_force(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=0.0)
        grid = pde.GridSpec(m=64, dt_macro=1e-3)
        path = pde.solve_stretch(np.zeros(65), cfg, grid, 0.5)
        assert abs(wk.macroscopic_work(path, cfg, 0.5)) <= 1e-14

    def test_steady_state_slope(self):
        # r = f_bar*u stationary: W(t) = (f_bar^2/2g + Wq) t
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=1.5,
                          theta=2 * np.pi, forcing_modes=(ForcingMode(1, 1.0, 0.0),))
        grid = pde.GridSpec(m=128, dt_macro=5e-4)
        u = np.linspace(0, 1, 129)
        path = pde.solve_stretch(cfg.f_bar * u, cfg, grid, 1.0)
        wq = wk.wq_closed_form(cfg)
        for t in (0.5, 1.0):
            want = (cfg.f_bar**2 / (2 * cfg.gamma) + wq) * t
            assert abs(wk.macroscopic_work(path, cfg, t, wq=wq) - want) <= 1e-6

    def test_rate_increases_toward_steady_slope(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=1.0)
        grid = pde.GridSpec(m=256, dt_macro=2e-4)
        path = pde.solve_stretch(np.zeros(257), cfg, grid, 4.0)
        rates = [wk.macroscopic_work(path, cfg, t, wq=0.0) / t
                 for t in (1.0, 2.0, 4.0)]
        steady = cfg.f_bar**2 / (2 * cfg.gamma)
        assert rates[0] > rates[1] > rates[2] > steady

    def test_coarse_path_rejected(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0)
        bad = pde.PdePath(times=np.array([0.0, 0.1]),
                          profiles=np.zeros((2, 2)), du=1.0)
        with pytest.raises(ValueError):
            wk.macroscopic_work(bad, cfg, 0.1)


class TestConvergenceStudy:
    def test_zero_force_all_zero(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=0.0)
        rows = wk.work_convergence_study(cfg, [8, 16], t=0.5,
                                         grid=pde.GridSpec(m=64, dt_macro=1e-3))
        for row in rows:
            assert row.w_n == 0.0 and row.w_limit == 0.0

    def test_errors_decrease(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=1.0,
                          theta=2 * np.pi, forcing_modes=(ForcingMode(1, 1.0, 0.0),))
        rows = wk.work_convergence_study(cfg, [16, 32, 64], t=1.0,
                                         grid=pde.GridSpec(m=256, dt_macro=2e-4))
        errs = [r.abs_err for r in rows]
        assert errs[0] > errs[1] > errs[2]

    def test_mechanical_only(self):
        # no fluctuating modes: W_n converges to the pure PDE boundary term
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=1.0)
        rows = wk.work_convergence_study(cfg, [32, 64], t=1.0,
                                         grid=pde.GridSpec(m=256, dt_macro=2e-4))
        assert wk.wq_closed_form(cfg) == 0.0
        assert rows[-1].abs_err <= 0.02 * abs(rows[-1].w_limit)


class TestWorkReport:
    def test_tables_consistent(self):
        cfg = ChainConfig(n=8, gamma=1.0, t_minus=1.0, f_bar=1.0,
                          theta=2 * np.pi,
                          forcing_modes=(ForcingMode(1, 0.5, 0.0),))
        report = wk.work_report(cfg, [16, 32], [0.5, 1.0],
                                grid=pde.GridSpec(m=128, dt_macro=5e-4))
        assert report.wq >= 0.0
        for (t, mech), (t2, total) in zip(report.w_mech, report.w_total):
            assert t == t2
            assert abs(total - (mech + report.wq * t)) <= 1e-12
        assert len(report.micro_estimates) == 4
        rows = wk.work_convergence_study(
            cfg, [16, 32], t=1.0, grid=pde.GridSpec(m=128, dt_macro=5e-4))
        by_n = {r.n: r for r in report.micro_estimates if r.t == 1.0}
        for row in rows:
            assert abs(by_n[row.n].w_n - row.w_n) <= 1e-12

    def test_negative_wq_rejected(self):
        with pytest.raises(ValueError):
            wk.WorkReport(wq=-1.0, w_mech=[], w_total=[], micro_estimates=[])
