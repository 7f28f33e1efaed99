import numpy as np
import pytest
from scipy.linalg import expm

from hydrochain import covariance as cov
from hydrochain import meandyn as md
from hydrochain import oracles as orc
from hydrochain.chain import ChainConfig
from hydrochain.spectral import build_basis, drift_matrix


def make_cfg(n=6, gamma=1.0, t_minus=1.0, **kw):
    return ChainConfig(n=n, gamma=gamma, t_minus=t_minus, **kw)


def random_blocks(n, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    m = rng.standard_normal((2 * n + 1, 2 * n + 1))
    s = scale * (m @ m.T) / (2 * n + 1)
    return cov.CovarianceBlocks(s_r=s[:n, :n], s_rp=s[:n, n:], s_p=s[n:, n:])


class TestEvolution:
    def test_equilibrium_fixed_point(self):
        cfg = make_cfg()
        eq = cov.equilibrium_blocks(cfg)
        d = cov._noise_diag(cfg, eq.s_p, None)
        ds = cov._rhs(cfg.gamma, eq.s_r, eq.s_rp, eq.s_p, d)
        assert max(np.abs(x).max() for x in ds) <= 1e-10

    def test_rhs_matches_dense(self):
        cfg = make_cfg(n=4, gamma=1.1, t_minus=0.8)
        blocks = random_blocks(4, seed=2)
        d = cov._noise_diag(cfg, blocks.s_p, None)
        ds = cov._rhs(cfg.gamma, blocks.s_r, blocks.s_rp, blocks.s_p, d)
        a = drift_matrix(4, cfg.gamma)
        s = blocks.assemble()
        want = -a @ s - s @ a.T
        idx = np.arange(5)
        want[4 + idx, 4 + idx] += 4 * cfg.gamma * d
        assert np.abs(ds[0] - want[:4, :4]).max() <= 1e-13
        assert np.abs(ds[1] - want[:4, 4:]).max() <= 1e-13
        assert np.abs(ds[2] - want[4:, 4:]).max() <= 1e-13

    def test_zero_noise_matches_exponential(self):
        cfg = make_cfg(n=4, gamma=1.1, t_minus=0.8)
        blocks = random_blocks(4, seed=2)
        t_macro = 1.0 / 16
        path = cov.evolve_covariance(cfg, blocks, None, t_macro, 0.002,
                                     noise=False, use_numba=False,
                                     psd_tol=np.inf)
        a = drift_matrix(4, cfg.gamma)
        e = expm(-a * cfg.n**2 * t_macro)
        want = e @ blocks.assemble() @ e.T
        assert np.abs(path.s_final.assemble() - want).max() <= 1e-9

    def test_noisy_matches_expm_oracle(self):
        cfg = make_cfg(n=4, gamma=1.1, t_minus=0.8)
        blocks = random_blocks(4, seed=2)
        path = cov.evolve_covariance(cfg, blocks, None, 0.05, 0.001,
                                     use_numba=False, psd_tol=np.inf)
        ref = orc.covariance_expm_evolution(cfg, blocks, cfg.n**2 * 0.05)
        assert np.abs(path.s_final.assemble() - ref.assemble()).max() <= 1e-10

    def test_rk4_richardson_order(self):
        cfg = make_cfg(n=5)
        blocks = cov.local_gibbs_blocks(cfg, 1 + 0.5 * np.arange(6) / 5)
        ref = orc.covariance_expm_evolution(cfg, blocks, cfg.n**2 * 0.04)
        e1 = cov.evolve_covariance(cfg, blocks, None, 0.04, 0.04,
                                   use_numba=False)
        e2 = cov.evolve_covariance(cfg, blocks, None, 0.04, 0.02,
                                   use_numba=False)
        r1 = np.abs(e1.s_final.assemble() - ref.assemble()).max()
        r2 = np.abs(e2.s_final.assemble() - ref.assemble()).max()
        assert 10.0 <= r1 / r2 <= 25.0

    @pytest.mark.skipif(not cov.HAVE_NUMBA, reason="numba not installed")
    def test_numba_matches_numpy(self):
        cfg = make_cfg(n=7, gamma=0.7)
        blocks = cov.local_gibbs_blocks(cfg, 1 + np.arange(8) / 7)
        ev = md.MeanEvolution(cfg, md.MeanState(
            r_bar=0.3 * np.sin(np.arange(1, 8)), p_bar=np.zeros(8)))
        a = cov.evolve_covariance(cfg, blocks, ev.p_bar_at_tau, 0.05, 0.01,
                                  use_numba=False)
        b = cov.evolve_covariance(cfg, blocks, ev.p_bar_at_tau, 0.05, 0.01,
                                  use_numba=True)
        assert np.array_equal(a.s_final.assemble(), b.s_final.assemble())
        assert np.array_equal(a.s_avg.assemble(), b.s_avg.assemble())

    def test_psd_preserved_and_symmetric(self):
        cfg = make_cfg(n=6, f_bar=1.0)
        blocks = cov.local_gibbs_blocks(cfg, 1 + 0.5 * np.arange(7) / 6)
        ev = md.MeanEvolution(cfg, md.zero_mean(6))
        path = cov.evolve_covariance(cfg, blocks, ev.p_bar_at_tau, 0.2, 0.02,
                                     record_times=(0.1, 0.2))
        for _, snap in path.snapshots:
            full = snap.assemble()
            assert np.abs(full - full.T).max() <= 1e-12
            assert snap.min_eigenvalue() >= -1e-9 * np.abs(full).max()

    def test_unstable_step_raises(self):
        cfg = make_cfg(n=6)
        blocks = cov.equilibrium_blocks(cfg)
        blocks.s_p[3, 3] += 1.0   # push off equilibrium so the mode rings
        with pytest.raises(FloatingPointError):
            cov.evolve_covariance(cfg, blocks, None, 1.0, 1.4, use_numba=False)


class TestResolutionTables:
    def test_theta_positivity(self):
        tab = cov.resolution_tables(0.9)
        c = np.linspace(0.0, 4.0, 33)
        th = tab.theta(c[:, None], c[None, :])
        th[0, 0] = 1.0
        assert np.all(th > 0)

    def test_special_values_on_diagonal(self):
        g = 1.3
        tab = cov.resolution_tables(g)
        for c in (0.5, 2.0, 3.7):
            assert abs(tab.Theta("p", c, c) - 1.0) <= 1e-14
            assert tab.Theta("pr", c, c) == 0.0
            assert tab.Theta("rp", c, c) == 0.0
            assert 0.0 <= tab.Theta("r", c, c) <= 1.0 + 1e-15
            assert abs(tab.Xi("p", "p", c, c) - 1 / (4 * g)) <= 1e-14
            assert abs(tab.Xi("p", "r", c, c) - 1 / (4 * g)) <= 1e-14
            assert tab.Xi("p", "pr", c, c) == 0.0
            assert tab.Xi("p", "rp", c, c) == 0.0

    def test_origin_conventions(self):
        g = 0.8
        tab = cov.resolution_tables(g)
        assert tab.Theta("p", 0.0, 0.0) == 1.0
        assert tab.Theta("r", 0.0, 0.0) == 0.0
        assert tab.Xi("p", "p", 0.0, 0.0) == 1 / (4 * g)
        for alpha in ("r", "pr", "rp"):
            assert tab.Theta(alpha, 0.0, 0.0) == 0.0
            for beta in cov.ResolutionTables.ALPHAS:
                assert tab.Xi(alpha, beta, 0.0, 0.0) == 0.0

    def test_symmetry_relations(self):
        tab = cov.resolution_tables(1.1)
        c, cp = 0.7, 2.3
        assert abs(tab.Theta("rp", c, cp) - tab.Theta("pr", cp, c)) <= 1e-14
        assert abs(tab.Xi("rp", "rp", c, cp) - tab.Xi("pr", "pr", cp, c)) <= 1e-14


class TestResolve:
    def _random_instance(self, n, seed):
        rng = np.random.default_rng(seed)
        cfg = make_cfg(n=n, gamma=float(rng.uniform(0.3, 3)),
                       t_minus=float(rng.uniform(0.5, 2)))
        dim = 2 * n + 1
        m1 = rng.standard_normal((dim, dim))
        m2 = rng.standard_normal((dim, dim))
        r = (m1 @ m1.T - m2 @ m2.T) / 7.0
        r_site = cov.CovarianceBlocks(r[:n, :n], r[:n, n:], r[n:, n:])
        p_sq = rng.uniform(0.5, 2.0, n + 1)
        return cfg, r_site, p_sq

    def test_zero_inputs(self):
        cfg = make_cfg(n=5)
        zeros = {k: np.zeros((6, 6)) for k in cov.ResolutionTables.ALPHAS}
        res = cov.resolve_time_averaged(cfg, np.zeros((6, 6)), zeros)
        assert np.all(res.s_p == 0.0) and np.all(res.s_r == 0.0)
        assert res.system_residual == 0.0

    def test_equilibrium_identity(self):
        cfg = make_cfg(n=6, t_minus=0.7)
        basis = build_basis(6)
        f_hat = cov.build_f_hat(basis, np.full(7, 0.7), 0.7)
        zeros = {k: np.zeros((7, 7)) for k in cov.ResolutionTables.ALPHAS}
        res = cov.resolve_time_averaged(cfg, f_hat, zeros, basis=basis)
        assert np.abs(res.s_p - 0.7 * np.eye(7)).max() <= 1e-10
        want_r = np.zeros((7, 7))
        want_r[1:, 1:] = 0.7 * np.eye(6)
        assert np.abs(res.s_r - want_r).max() <= 1e-10
        assert np.abs(res.s_rp).max() <= 1e-12

    @pytest.mark.parametrize("n", [4, 8, 16])
    def test_matches_kronecker_oracle(self, n):
        for trial in range(5):
            cfg, r_site, p_sq = self._random_instance(n, seed=100 * n + trial)
            s_dense = orc.lyapunov_dense_solve(cfg, p_sq, r_site)
            basis = build_basis(n)
            f_hat = cov.build_f_hat(basis, p_sq, cfg.t_minus)
            r_modes = cov.block_modes(basis, r_site)
            res = cov.resolve_time_averaged(cfg, f_hat, r_modes, basis=basis)
            want = cov.block_modes(basis, s_dense)
            scale = max(1.0, np.abs(want["p"]).max())
            assert np.abs(res.s_p - want["p"]).max() <= 1e-9 * scale
            assert np.abs(res.s_r - want["r"]).max() <= 1e-9 * scale
            assert np.abs(res.s_rp - want["rp"]).max() <= 1e-9 * scale
            assert res.system_residual <= 1e-10 * max(1.0, np.abs(f_hat).max(),
                                                      np.abs(r_modes["p"]).max())


class TestLyapunovResidual:
    def test_exact_solution_small_residual(self):
        cfg = make_cfg(n=5, gamma=0.9)
        rng = np.random.default_rng(3)
        dim = 11
        m1 = rng.standard_normal((dim, dim))
        r = (m1 @ m1.T - np.eye(dim)) / 9.0
        r_site = cov.CovarianceBlocks(r[:5, :5], r[:5, 5:], r[5:, 5:])
        p_sq = rng.uniform(0.5, 2.0, 6)
        s = orc.lyapunov_dense_solve(cfg, p_sq, r_site)
        assert cov.lyapunov_residual(cfg, s, p_sq, r_site) <= 1e-10

    def test_equilibrium(self):
        cfg = make_cfg(n=5)
        eq = cov.equilibrium_blocks(cfg)
        zero_r = cov.CovarianceBlocks(np.zeros((5, 5)), np.zeros((5, 6)),
                                      np.zeros((6, 6)))
        resid = cov.lyapunov_residual(cfg, eq, np.full(6, cfg.t_minus), zero_r)
        assert resid <= 1e-12

    def test_perturbation_linearity(self):
        cfg = make_cfg(n=4)
        eq = cov.equilibrium_blocks(cfg)
        zero_r = cov.CovarianceBlocks(np.zeros((4, 4)), np.zeros((4, 5)),
                                      np.zeros((5, 5)))
        vals = []
        for eps in (1e-4, 2e-4):
            pert = eq.copy()
            pert.s_r[1, 2] += eps
            pert.s_r[2, 1] += eps
            vals.append(cov.lyapunov_residual(cfg, pert, np.full(5, 1.0), zero_r))
        assert abs(vals[1] / vals[0] - 2.0) <= 1e-6


class TestPiMatrix:
    def test_zero(self):
        assert np.all(cov.pi_matrix(1.0, np.zeros((8, 8))) == 0.0)

    def test_identity(self):
        n = 12
        pi = cov.pi_matrix(1.0, np.eye(2 * (n + 1)))
        assert np.linalg.eigvalsh(pi)[0] >= -1e-10
        assert np.trace(pi) <= 2 * (2 * n + 2)

    def test_random_psd(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            n = int(rng.choice([3, 8, 12]))
            gamma = float(rng.uniform(0.3, 3))
            m = rng.standard_normal((2 * (n + 1), 2 * (n + 1)))
            big = m @ m.T
            pi = cov.pi_matrix(gamma, big)
            evals = np.linalg.eigvalsh(pi)
            assert evals[0] >= -1e-10 * max(1.0, evals[-1])
            assert np.trace(pi) <= 2 * np.trace(big) + 1e-10
            assert np.abs(pi - pi.T).max() <= 1e-12

    def test_rejects_asymmetric(self):
        bad = np.zeros((6, 6))
        bad[0, 1] = 1.0
        with pytest.raises(ValueError):
            cov.pi_matrix(1.0, bad)


class TestMMatrix:
    def test_row_sums_small(self):
        d = cov.m_matrix_diagnostic(make_cfg(n=2))
        assert d["row_sum_err"] <= 1e-10
        assert d["col_sum_err"] <= 1e-10

    def test_positivity_and_symmetry(self):
        d = cov.m_matrix_diagnostic(make_cfg(n=16))
        assert d["min_entry"] > 0.0
        assert d["symmetric_err"] <= 1e-12


class TestFdRelation:
    def test_equilibrium_residual_zero(self):
        cfg = make_cfg(n=8)
        eq = cov.equilibrium_blocks(cfg)
        path = cov.evolve_covariance(cfg, eq, None, 0.05, 0.01,
                                     use_numba=False)
        chk = cov.fd_relation_check(cfg, path)
        assert chk["max_abs"] <= 1e-12

    def test_residual_quarters_with_dt(self):
        cfg = make_cfg(n=6, gamma=0.9)
        s0 = cov.local_gibbs_blocks(cfg, 1 + 0.5 * np.arange(7) / 6)
        r1 = cov.fd_relation_check(
            cfg, cov.evolve_covariance(cfg, s0, None, 0.25, 0.004,
                                       use_numba=False))["max_abs"]
        r2 = cov.fd_relation_check(
            cfg, cov.evolve_covariance(cfg, s0, None, 0.25, 0.002,
                                       use_numba=False))["max_abs"]
        assert 3.0 <= r1 / r2 <= 5.0


class TestDiagnostics:
    def test_equipartition_equilibrium(self):
        cfg = make_cfg(n=8, t_minus=1.4)
        eq = cov.equilibrium_blocks(cfg)
        path = cov.evolve_covariance(cfg, eq, None, 0.05, 0.01,
                                     use_numba=False)
        d = cov.equipartition_diagnostic(path)
        assert np.abs(d["gap"]).max() <= 1e-12
        want = np.full(9, 1.4)
        want[0] = 0.7      # boundary site has no stretch
        assert np.abs(d["thermal"] - want).max() <= 1e-12

    def test_position_functional_matches_bruteforce(self):
        blocks = random_blocks(6, seed=5)
        got = cov.position_functional(blocks)
        for x in range(1, 7):
            want = blocks.s_r[:x, :x].sum()
            assert abs(got[x - 1] - want) <= 1e-12

    def test_position_functional_decays(self):
        # local Gibbs inits: n^{-3} sum_x E[(q'_x)^2](n^2 t) decreases in n
        vals = []
        for n in (8, 16, 32):
            cfg = make_cfg(n=n)
            s0 = cov.local_gibbs_blocks(cfg, np.full(n + 1, 1.0))
            path = cov.evolve_covariance(cfg, s0, None, 0.1, 0.02,
                                         use_numba=cov.HAVE_NUMBA)
            vals.append(cov.position_functional(path.s_final).sum() / n**3)
        assert vals[0] > vals[1] > vals[2]

    def test_kinetic_flatness_from_path(self):
        cfg = make_cfg(n=6)
        eq = cov.equilibrium_blocks(cfg)
        path = cov.evolve_covariance(cfg, eq, None, 0.05, 0.01,
                                     use_numba=False)
        assert cov.kinetic_flatness(path) <= 1e-20


class TestEnsembleCrossCheck:
    def test_covariance_ode_matches_micro_second_moments(self):
        # stochastic second moments agree with the deterministic covariance
        # ODE within Monte-Carlo error
        from hydrochain import microsim as ms
        from hydrochain.chain import sample_local_gibbs

        cfg = make_cfg(n=6, gamma=1.0, f_bar=1.0)
        prof = 1.0 + 0.5 * np.arange(7) / 6
        params = ms.SimParams(dt=0.01, t_macro_end=0.1, record_times=(0.1,),
                              ensemble_size=4000, seed=77)

        stats = ms.run_ensemble(cfg, lambda g: sample_local_gibbs(cfg, prof, g),
                                params, second_moments=True)
        ev = md.MeanEvolution(cfg, md.zero_mean(6))
        path = cov.evolve_covariance(cfg, cov.local_gibbs_blocks(cfg, prof),
                                     ev.p_bar_at_tau, 0.1, 0.005,
                                     use_numba=False)
        got = stats.second_moments.assemble()
        want = path.s_final.assemble()
        # diagonal entries fluctuate with stderr ~ sqrt(2) T / sqrt(E)
        tol = 6 * np.sqrt(2.0) * prof.max() / np.sqrt(params.ensemble_size)
        assert np.abs(np.diagonal(got) - np.diagonal(want)).max() <= tol
