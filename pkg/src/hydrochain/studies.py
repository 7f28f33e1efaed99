"""Experiment studies: single-solver runs and cross-solver convergence suites.

Site-to-continuum embedding: stretch sites x = 1..n sit at u = x/(n+1) (the
exact discrete steady state is f_bar * x/(n+1)); momentum/energy sites
x = 0..n sit at u = x/n.  Weighted L2 errors use a bulk test weight, default
sin(pi u)^2, and are normalized by the weighted norm of the reference field.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import covariance as cov
from . import meandyn as md
from . import microsim as ms
from . import output as out
from . import pde
from . import work as wk
from .chain import ChainConfig, ChainState, sample_gibbs, sample_local_gibbs
from .exprs import compile_profile


def _map_jobs(fn, items, threads: int):
    """Run independent pure jobs, optionally on a bounded pool; results are
    returned in input order so scheduling cannot change any output."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def stretch_sites(n: int) -> np.ndarray:
    return np.arange(1, n + 1) / (n + 1.0)


def energy_sites(n: int) -> np.ndarray:
    return np.arange(0, n + 1) / float(n)


def weighted_l2_error(u, values, reference, weight) -> float:
    w = weight(u)
    num = np.sqrt(np.sum(w * (values - reference) ** 2) / u.shape[0])
    den = np.sqrt(np.sum(w * reference**2) / u.shape[0])
    return float(num / max(den, 1e-300))


@dataclass
class InitSpec:
    kind: str = "gibbs"
    temperature: float | None = None
    profile: str | None = None
    r: list | None = None
    p: list | None = None
    mean_r: str | None = None
    mean_p: str | None = None

    @staticmethod
    def from_dict(doc: dict) -> "InitSpec":
        return InitSpec(kind=doc.get("kind", "gibbs"),
                        temperature=doc.get("temperature"),
                        profile=doc.get("profile"),
                        r=doc.get("r"), p=doc.get("p"),
                        mean_r=doc.get("mean_r"), mean_p=doc.get("mean_p"))

    def temperature_profile(self, cfg: ChainConfig) -> np.ndarray:
        x = energy_sites(cfg.n)
        if self.kind == "local_gibbs" and self.profile:
            return compile_profile(self.profile)(x)
        t = self.temperature if self.temperature is not None else cfg.t_minus
        return np.full(cfg.n + 1, float(t))

    def mean_state(self, cfg: ChainConfig) -> md.MeanState:
        r = np.zeros(cfg.n)
        p = np.zeros(cfg.n + 1)
        if self.mean_r:
            r = compile_profile(self.mean_r)(stretch_sites(cfg.n))
        if self.mean_p:
            p = compile_profile(self.mean_p)(energy_sites(cfg.n))
        return md.MeanState(r_bar=r, p_bar=p)

    def sampler(self, cfg: ChainConfig):
        if self.kind == "explicit":
            r = np.asarray(self.r, dtype=float)
            p = np.asarray(self.p, dtype=float)
            if r.shape[0] != cfg.n or p.shape[0] != cfg.n + 1:
                raise ValueError("explicit init arrays have wrong length")
            return lambda rng: ChainState(r=r.copy(), p=p.copy())
        mean = self.mean_state(cfg)
        if self.kind == "local_gibbs":
            prof = self.temperature_profile(cfg)

            def draw(rng):
                st = sample_local_gibbs(cfg, prof, rng)
                return ChainState(r=st.r + mean.r_bar, p=st.p + mean.p_bar)

            return draw
        temp = self.temperature if self.temperature is not None else cfg.t_minus

        def draw(rng):
            st = sample_gibbs(cfg, temp, rng)
            return ChainState(r=st.r + mean.r_bar, p=st.p + mean.p_bar)

        return draw

    def covariance_blocks(self, cfg: ChainConfig) -> cov.CovarianceBlocks:
        return cov.local_gibbs_blocks(cfg, self.temperature_profile(cfg))


# ---------------------------------------------------------------------------
# single-solver studies


def run_wq(cfg: ChainConfig, out_dir: Path, spec: dict) -> dict:
    wq = wk.wq_closed_form(cfg)
    doc = {"wq": wq, "branch_check": wk.wq_branch_check(cfg),
           "quadrature": wk.wq_quadrature_oracle(cfg) if cfg.forcing_modes else 0.0}
    out.write_json(out_dir / "wq.json", doc)
    out.write_manifest(out_dir, spec, {"wq.json": []})
    return doc


def run_mean(cfg: ChainConfig, init: InitSpec, record_times, out_dir: Path,
             spec: dict) -> None:
    ev = md.MeanEvolution(cfg, init.mean_state(cfg))
    cols = ["time", "u", "r_bar", "p_bar", "emech"]
    rows = []
    us = energy_sites(cfg.n)
    for t in record_times:
        state = ev.state_at_tau(cfg.n**2 * t)
        mech = md.mechanical_energy_profile(state)
        for x in range(cfg.n + 1):
            r_val = state.r_bar[x - 1] if x >= 1 else 0.0
            rows.append((t, us[x], r_val, state.p_bar[x], mech[x]))
    out.write_csv(out_dir / "mean.csv", cols, rows)
    out.write_manifest(out_dir, spec, {"mean.csv": cols})


def run_micro(cfg: ChainConfig, init: InitSpec, params: ms.SimParams,
              out_dir: Path, spec: dict) -> ms.EnsembleStats:
    stats = ms.run_ensemble(cfg, init.sampler(cfg), params)
    cols = ["time", "u", "mean_r", "mean_p", "mean_energy", "mean_p_sq",
            "stderr_r", "stderr_p", "stderr_energy", "stderr_p_sq"]
    us = energy_sites(cfg.n)
    rows = []
    for i, t in enumerate(stats.record_times):
        for x in range(cfg.n + 1):
            r_val = stats.mean_r[i, x - 1] if x >= 1 else 0.0
            r_err = stats.stderr_r[i, x - 1] if x >= 1 else 0.0
            rows.append((t, us[x], r_val, stats.mean_p[i, x],
                         stats.mean_energy[i, x], stats.mean_p_sq[i, x],
                         r_err, stats.stderr_p[i, x], stats.stderr_energy[i, x],
                         stats.stderr_p_sq[i, x]))
    out.write_csv(out_dir / "micro.csv", cols, rows)
    summary = {
        "work": stats.work.tolist(),
        "heat": stats.heat.tolist(),
        "balance": stats.balance.tolist(),
        "stderr_balance": stats.stderr_balance.tolist(),
        "record_times": stats.record_times.tolist(),
        "ensemble_size": stats.ensemble_size,
    }
    out.write_json(out_dir / "micro_summary.json", summary)
    out.write_manifest(out_dir, spec,
                       {"micro.csv": cols, "micro_summary.json": []},
                       extra={"study": "micro", "dt": params.dt})
    return stats


def run_pde_study(cfg: ChainConfig, grid: pde.GridSpec, init: InitSpec,
                  t_end: float, record_times, out_dir: Path, spec: dict) -> None:
    u = np.linspace(0.0, 1.0, grid.m + 1)
    r0 = compile_profile(init.mean_r)(u) if init.mean_r else np.zeros(grid.m + 1)
    prof = (compile_profile(init.profile)(u) if init.profile
            else np.full(grid.m + 1, cfg.t_minus))
    wq = wk.wq_closed_form(cfg)
    r_path = pde.solve_stretch(r0, cfg, grid, t_end)
    e0 = prof + 0.5 * r_path.profiles[0] ** 2
    e_path = pde.solve_energy(e0, r_path, cfg, wq, grid, t_end)
    t_path = pde.solve_temperature(prof, r_path, cfg, wq, grid, t_end)
    cols = ["t", "u", "r", "e", "T"]
    rows = []
    for t in record_times:
        r_prof = r_path.at_time(t)
        e_prof = e_path.at_time(t)
        tt = t_path.at_time(t)
        for i in range(grid.m + 1):
            rows.append((t, u[i], r_prof[i], e_prof[i], tt[i]))
    out.write_csv(out_dir / "pde.csv", cols, rows)
    audit = pde.energy_balance_audit(e_path, r_path, cfg, wq)
    out.write_json(out_dir / "pde_audit.json", {
        "max_abs_residual": audit["max_abs_residual"],
        "max_form_gap": audit["max_form_gap"],
        "wq": wq,
    })
    out.write_manifest(out_dir, spec, {"pde.csv": cols, "pde_audit.json": []})


def run_covariance_study(cfg: ChainConfig, init: InitSpec, t_end: float,
                         dt_ode: float, out_dir: Path, spec: dict) -> dict:
    s0 = init.covariance_blocks(cfg)
    mean = init.mean_state(cfg)
    drives = (cfg.f_bar != 0.0 or cfg.forcing_modes
              or np.any(mean.r_bar) or np.any(mean.p_bar))
    pbar = md.MeanEvolution(cfg, mean).p_bar_at_tau if drives else None
    path = cov.evolve_covariance(cfg, s0, pbar, t_end, dt_ode)
    fd = cov.fd_relation_check(cfg, path)
    eqp = cov.equipartition_diagnostic(path)
    us = energy_sites(cfg.n)
    cols = ["u", "p_sq_avg", "r_sq_avg", "thermal", "gap", "fd_residual"]
    psq = np.diagonal(path.s_avg.s_p)
    rsq = np.concatenate([[0.0], np.diagonal(path.s_avg.s_r)])
    gap = np.concatenate([[np.nan], eqp["gap"]])
    fd_full = np.concatenate([fd["residual"], [np.nan]])
    rows = [(us[x], psq[x], rsq[x], eqp["thermal"][x], gap[x], fd_full[x])
            for x in range(cfg.n + 1)]
    out.write_csv(out_dir / "covariance.csv", cols, rows)
    report = {
        "fd_max_abs": fd["max_abs"],
        "fd_max_abs_bulk": fd["max_abs_bulk"],
        "min_eigenvalue_final": path.s_final.min_eigenvalue(),
        "trace_final": float(np.trace(path.s_final.assemble())),
        "kinetic_flatness": cov.kinetic_flatness(path),
        "t_end": t_end,
        "dt_ode": dt_ode,
    }
    out.write_json(out_dir / "covariance_report.json", report)
    out.write_manifest(out_dir, spec, {"covariance.csv": cols,
                                       "covariance_report.json": []})
    return report


# ---------------------------------------------------------------------------
# convergence suites


def converge_profiles(cfg: ChainConfig, n_values, record_times, init: InitSpec,
                      grid: pde.GridSpec, out_dir: Path, spec: dict,
                      weight_expr: str = "sin(pi*u)^2",
                      dt_ode: float = 0.1, threads: int = 1) -> list[dict]:
    """Mean + covariance profiles along an n-family against the PDE fields.

    Independent n-jobs may run on a bounded thread pool; every job is pure
    and deterministic, so scheduling never changes the outputs.
    """
    weight = compile_profile(weight_expr)
    r0_fn = compile_profile(init.mean_r) if init.mean_r else compile_profile("0*u")
    t_fn = (compile_profile(init.profile) if init.profile
            else compile_profile(f"0*u + {cfg.t_minus}"))
    t_end = max(record_times)

    u = np.linspace(0.0, 1.0, grid.m + 1)
    wq = wk.wq_closed_form(cfg)
    r_path = pde.solve_stretch(r0_fn(u), cfg, grid, t_end)
    # thermal reference through the conservative energy form (robust to
    # corner-incompatible r0, where the squared-gradient source is singular)
    e0 = t_fn(u) + 0.5 * r_path.profiles[0] ** 2
    e_path = pde.solve_energy(e0, r_path, cfg, wq, grid, t_end)

    prof_cols = ["time", "u", "field", "value"]
    pde_rows = []
    for t in record_times:
        r_prof = r_path.at_time(t)
        e_prof = e_path.at_time(t)
        t_prof = e_prof - 0.5 * r_prof**2
        for i in range(grid.m + 1):
            pde_rows.append((t, u[i], "stretch", r_prof[i]))
            pde_rows.append((t, u[i], "energy_thermal", t_prof[i]))
            pde_rows.append((t, u[i], "energy_total", e_prof[i]))
    out.write_csv(out_dir / "profiles_pde.csv", prof_cols, pde_rows)

    files = {"profiles_pde.csv": prof_cols}

    def one_chain(n: int):
        cfg_n = cfg.with_n(n)
        sites_r = stretch_sites(n)
        sites_e = energy_sites(n)
        mean_init = md.MeanState(r_bar=r0_fn(sites_r), p_bar=np.zeros(n + 1))
        ev = md.MeanEvolution(cfg_n, mean_init)
        s0 = cov.local_gibbs_blocks(cfg_n, t_fn(sites_e))
        path = cov.evolve_covariance(cfg_n, s0, ev.p_bar_at_tau, t_end, dt_ode,
                                     record_times=record_times)
        snaps = dict(path.snapshots)
        rows = []
        entries = []
        for t in record_times:
            state = ev.state_at_tau(n**2 * t)
            mech = md.mechanical_energy_profile(state)
            blocks = snaps[t] if t in snaps else path.s_final
            thermal = 0.5 * np.diagonal(blocks.s_p).copy()
            thermal[1:] += 0.5 * np.diagonal(blocks.s_r)
            total = mech + thermal
            for x in range(1, n + 1):
                rows.append((t, sites_r[x - 1], "stretch", state.r_bar[x - 1]))
            for x in range(n + 1):
                rows.append((t, sites_e[x], "energy_thermal", thermal[x]))
                rows.append((t, sites_e[x], "energy_total", total[x]))

            r_ref = np.interp(sites_r, u, r_path.at_time(t))
            e_ref = np.interp(sites_e, u, e_path.at_time(t))
            t_ref = e_ref - 0.5 * np.interp(sites_e, u, r_path.at_time(t)) ** 2
            entries.append({
                "n": n, "time": t,
                "err_stretch": weighted_l2_error(sites_r, state.r_bar, r_ref, weight),
                "err_thermal": weighted_l2_error(sites_e, thermal, t_ref, weight),
                "err_energy": weighted_l2_error(sites_e, total, e_ref, weight),
            })
        return rows, entries

    ns = sorted(n_values)
    results = _map_jobs(one_chain, ns, threads)
    summary = []
    for n, (rows, entries) in zip(ns, results):
        summary.extend(entries)
        name = f"profiles_n{n}.csv"
        out.write_csv(out_dir / name, prof_cols, rows)
        files[name] = prof_cols

    sum_cols = ["n", "time", "err_stretch", "err_energy", "err_thermal"]
    out.write_csv(out_dir / "summary.csv", sum_cols,
                  [(s["n"], s["time"], s["err_stretch"], s["err_energy"],
                    s["err_thermal"]) for s in summary])
    files["summary.csv"] = sum_cols
    out.write_manifest(out_dir, spec, files, extra={"study": "converge_profiles"})
    return summary


def converge_work(cfg: ChainConfig, n_values, times, out_dir: Path, spec: dict,
                  r0_expr: str | None = None,
                  grid: pde.GridSpec | None = None) -> list[dict]:
    if grid is None:
        grid = pde.GridSpec(m=512, dt_macro=1e-4)
    r0_fn = compile_profile(r0_expr) if r0_expr else compile_profile("0*u")
    t_end = max(times)
    u = np.linspace(0.0, 1.0, grid.m + 1)
    r_path = pde.solve_stretch(r0_fn(u), cfg, grid, t_end)
    wq = wk.wq_closed_form(cfg)

    rows = []
    for n in sorted(n_values):
        cfg_n = cfg.with_n(n)
        sites = stretch_sites(n)
        ev = md.MeanEvolution(cfg_n, md.MeanState(r_bar=r0_fn(sites),
                                                  p_bar=np.zeros(n + 1)))
        for t in times:
            w_n = ev.work(t)
            w_lim = wk.macroscopic_work(r_path, cfg_n, t, wq=wq)
            rows.append({"n": n, "t": t, "w_n": w_n, "w_limit": w_lim,
                         "abs_err": abs(w_n - w_lim)})
    cols = ["n", "t", "w_n", "w_limit", "abs_err"]
    out.write_csv(out_dir / "work.csv", cols,
                  [(r["n"], r["t"], r["w_n"], r["w_limit"], r["abs_err"])
                   for r in rows])
    out.write_json(out_dir / "wq.json",
                   {"wq": wq, "branch_check": wk.wq_branch_check(cfg)})
    out.write_manifest(out_dir, spec, {"work.csv": cols, "wq.json": []},
                       extra={"study": "converge_work"})
    return rows


def equipartition_study(cfg: ChainConfig, n_values, t: float, init: InitSpec,
                        out_dir: Path, spec: dict, dt_ode: float = 0.1,
                        weight_expr: str = "sin(pi*u)^2",
                        threads: int = 1) -> list[dict]:
    weight = compile_profile(weight_expr)
    t_fn = (compile_profile(init.profile) if init.profile
            else compile_profile(f"0*u + {cfg.t_minus}"))

    def one_chain(n: int):
        cfg_n = cfg.with_n(n)
        sites = energy_sites(n)
        s0 = cov.local_gibbs_blocks(cfg_n, t_fn(sites))
        mean_init = md.zero_mean(n)
        drives = cfg_n.f_bar != 0.0 or cfg_n.forcing_modes
        pbar = md.MeanEvolution(cfg_n, mean_init).p_bar_at_tau if drives else None
        path = cov.evolve_covariance(cfg_n, s0, pbar, t, dt_ode)
        eqp = cov.equipartition_diagnostic(path)
        w = weight(sites[1:])
        gap = float(abs(np.sum(w * eqp["gap"]) / n))
        return {"n": n, "t": t, "weighted_gap": gap,
                "kinetic_flatness": cov.kinetic_flatness(path)}

    rows = _map_jobs(one_chain, sorted(n_values), threads)
    cols = ["n", "t", "weighted_gap", "kinetic_flatness"]
    out.write_csv(out_dir / "equipartition.csv", cols,
                  [(r["n"], r["t"], r["weighted_gap"], r["kinetic_flatness"])
                   for r in rows])
    out.write_manifest(out_dir, spec, {"equipartition.csv": cols},
                       extra={"study": "equipartition"})
    return rows
