"""`hydro` command line: validate & run experiment specs, expose oracles.

    hydro validate --spec experiment.json
    hydro run --spec experiment.json [--threads K] [--seed S]
    hydro oracle <name> [options]

Exit codes: 0 success, 2 validation failure (a JSON error list goes to
stdout), 1 runtime failure.  All times in specs are macroscopic.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator

from . import covariance as cov
from . import meandyn as md
from . import microsim as ms
from . import oracles as orc
from . import output as out
from . import pde
from . import studies
from . import work as wk
from .chain import ChainConfig

STUDIES = ("micro", "mean", "covariance", "pde", "converge_profiles",
           "converge_work", "equipartition", "wq")

SPEC_SCHEMA = {
    "type": "object",
    "required": ["chain", "study", "output_dir"],
    "additionalProperties": False,
    "properties": {
        "chain": {
            "type": "object",
            "required": ["n", "gamma", "t_minus"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1},
                "gamma": {"type": "number", "exclusiveMinimum": 0},
                "t_minus": {"type": "number", "exclusiveMinimum": 0},
                "f_bar": {"type": "number"},
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "forcing_modes": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["ell", "re", "im"],
                        "additionalProperties": False,
                        "properties": {
                            "ell": {"type": "integer", "minimum": 1},
                            "re": {"type": "number"},
                            "im": {"type": "number"},
                        },
                    },
                },
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["gibbs", "local_gibbs", "explicit"]},
                "temperature": {"type": "number", "exclusiveMinimum": 0},
                "profile": {"type": "string"},
                "r": {"type": "array", "items": {"type": "number"}},
                "p": {"type": "array", "items": {"type": "number"}},
                "mean_r": {"type": "string"},
                "mean_p": {"type": "string"},
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dt": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.1},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "record_times": {"type": "array",
                                 "items": {"type": "number", "minimum": 0}},
                "ensemble_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "m": {"type": "integer", "minimum": 2},
                "dt_macro": {"type": "number", "exclusiveMinimum": 0},
                "scheme": {"enum": ["crank_nicolson", "explicit"]},
            },
        },
        "study": {"enum": list(STUDIES)},
        "study_params": {"type": "object"},
        "output_dir": {"type": "string"},
    },
}

_STUDY_NEEDS = {
    "micro": ("sim",),
    "mean": ("sim",),
    "covariance": ("sim", "init"),
    "pde": ("grid", "sim"),
    "converge_profiles": ("grid", "sim"),
    "converge_work": (),
    "equipartition": ("sim",),
    "wq": (),
}


def validate_spec(doc: dict) -> list[dict]:
    validator = Draft202012Validator(SPEC_SCHEMA)
    errors = [{"path": "/".join(str(p) for p in e.absolute_path),
               "message": e.message}
              for e in validator.iter_errors(doc)]
    if errors:
        return errors
    study = doc["study"]
    for section in _STUDY_NEEDS[study]:
        if section not in doc:
            errors.append({"path": section,
                           "message": f"study {study!r} requires section "
                                      f"{section!r}"})
    sp = doc.get("study_params", {})
    if study in ("converge_profiles", "converge_work", "equipartition"):
        if "n_values" not in sp:
            errors.append({"path": "study_params/n_values",
                           "message": f"study {study!r} requires n_values"})
    return errors


def _load_spec(path: str) -> dict:
    return json.loads(Path(path).read_text())


def _sim_params(doc: dict, seed_override=None) -> ms.SimParams:
    sim = doc.get("sim", {})
    t_end = float(sim.get("t_end", 1.0))
    record = tuple(sim.get("record_times", [t_end]))
    return ms.SimParams(dt=float(sim.get("dt", 0.02)), t_macro_end=t_end,
                        record_times=record,
                        ensemble_size=int(sim.get("ensemble_size", 100)),
                        seed=int(seed_override if seed_override is not None
                                 else sim.get("seed", 0)))


def run_spec(doc: dict, threads: int = 1, seed_override=None) -> int:
    cfg = ChainConfig.from_dict(doc["chain"])
    init = studies.InitSpec.from_dict(doc.get("init", {}))
    out_dir = Path(doc["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    study = doc["study"]
    sp = doc.get("study_params", {})
    grid_doc = doc.get("grid", {})
    grid = pde.GridSpec(m=int(grid_doc.get("m", 256)),
                        dt_macro=float(grid_doc.get("dt_macro", 1e-4)),
                        scheme=grid_doc.get("scheme", "crank_nicolson"))

    if study == "wq":
        studies.run_wq(cfg, out_dir, doc)
    elif study == "mean":
        params = _sim_params(doc, seed_override)
        studies.run_mean(cfg, init, params.record_times, out_dir, doc)
    elif study == "micro":
        params = _sim_params(doc, seed_override)
        studies.run_micro(cfg, init, params, out_dir, doc)
    elif study == "pde":
        params = _sim_params(doc, seed_override)
        studies.run_pde_study(cfg, grid, init, params.t_macro_end,
                              params.record_times, out_dir, doc)
    elif study == "covariance":
        params = _sim_params(doc, seed_override)
        studies.run_covariance_study(cfg, init, params.t_macro_end,
                                     float(sp.get("dt_ode", 0.05)),
                                     out_dir, doc)
    elif study == "converge_profiles":
        params = _sim_params(doc, seed_override)
        studies.converge_profiles(
            cfg, [int(v) for v in sp["n_values"]], list(params.record_times),
            init, grid, out_dir, doc,
            weight_expr=sp.get("weight", "sin(pi*u)^2"),
            dt_ode=float(sp.get("dt_ode", 0.1)), threads=threads)
    elif study == "converge_work":
        studies.converge_work(
            cfg, [int(v) for v in sp["n_values"]],
            [float(t) for t in sp.get("times", [0.25, 0.5, 0.75, 1.0])],
            out_dir, doc, r0_expr=sp.get("r0"),
            grid=grid if "grid" in doc else None)
    elif study == "equipartition":
        params = _sim_params(doc, seed_override)
        studies.equipartition_study(
            cfg, [int(v) for v in sp["n_values"]], params.t_macro_end, init,
            out_dir, doc, dt_ode=float(sp.get("dt_ode", 0.1)),
            weight_expr=sp.get("weight", "sin(pi*u)^2"), threads=threads)
    else:  # pragma: no cover - guarded by validation
        raise ValueError(f"unknown study {study!r}")
    return 0


def run_many(specs: list[dict], threads: int = 1) -> None:
    """Run independent spec documents across a bounded worker pool."""
    if threads <= 1 or len(specs) <= 1:
        for doc in specs:
            run_spec(doc)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run_spec, specs))


# ---------------------------------------------------------------------------
# oracle subcommands


def _oracle_lyapunov(args) -> None:
    rng = np.random.default_rng(args.seed)
    n = args.n
    cfg = ChainConfig(n=n, gamma=args.gamma, t_minus=args.t_minus)
    dim = 2 * n + 1
    m1 = rng.standard_normal((dim, dim))
    m2 = rng.standard_normal((dim, dim))
    r_site = cov.CovarianceBlocks(*(lambda R: (R[:n, :n], R[:n, n:], R[n:, n:]))(
        (m1 @ m1.T - m2 @ m2.T) / 7.0))
    p_sq = rng.uniform(0.5, 2.0, n + 1)
    s = orc.lyapunov_dense_solve(cfg, p_sq, r_site)
    doc = {"n": n, "gamma": args.gamma, "t_minus": args.t_minus,
           "seed": args.seed, "p_sq": p_sq.tolist(),
           "s_r": s.s_r.tolist(), "s_rp": s.s_rp.tolist(),
           "s_p": s.s_p.tolist()}
    out.write_json(Path(args.output), doc)


def _oracle_wq(args) -> None:
    cfg = ChainConfig.from_json(Path(args.config).read_text())
    out.write_json(Path(args.output),
                   {"wq_quadrature": wk.wq_quadrature_oracle(cfg)})


def _oracle_heat_series(args) -> None:
    cfg = ChainConfig(n=8, gamma=args.gamma, t_minus=1.0, f_bar=args.f_bar)
    u = np.linspace(0.0, 1.0, args.m + 1)
    prof = pde.heat_series_oracle(cfg, u, args.t)
    out.write_json(Path(args.output),
                   {"m": args.m, "t": args.t, "r": prof.tolist()})


def _oracle_oscillator(args) -> None:
    val = orc.damped_mode_oracle(args.gamma, args.lam, args.z0, args.dz0, args.tau)
    out.write_json(Path(args.output), {"z": val})


def _oracle_quotient(args) -> None:
    q = orc.quotient_hp(args.gamma, args.lam, args.tau)
    out.write_json(Path(args.output), {"re": q.real, "im": q.imag})


def _oracle_key_lemma(args) -> None:
    from .spectral import build_basis, key_lemma_check, mode_rates

    reports = []
    for n in args.n:
        basis = build_basis(n)
        for gamma in args.gamma:
            reports.append(key_lemma_check(mode_rates(basis, gamma), n, gamma))
    out.write_json(Path(args.output), {"reports": reports})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hydro", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="validate an experiment spec")
    p_val.add_argument("--spec", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec")
    p_run.add_argument("--spec", required=True)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None)

    p_or = sub.add_parser("oracle", help="reference computations")
    or_sub = p_or.add_subparsers(dest="oracle", required=True)

    o_ly = or_sub.add_parser("lyapunov")
    o_ly.add_argument("--n", type=int, required=True)
    o_ly.add_argument("--seed", type=int, default=1)
    o_ly.add_argument("--gamma", type=float, default=1.0)
    o_ly.add_argument("--t-minus", type=float, default=1.0)
    o_ly.add_argument("--output", default="lyapunov_oracle.json")
    o_ly.set_defaults(func=_oracle_lyapunov)

    o_wq = or_sub.add_parser("wq-quadrature")
    o_wq.add_argument("--config", required=True,
                      help="path to a ChainConfig JSON document")
    o_wq.add_argument("--output", default="wq_oracle.json")
    o_wq.set_defaults(func=_oracle_wq)

    o_hs = or_sub.add_parser("heat-series")
    o_hs.add_argument("--m", type=int, default=512)
    o_hs.add_argument("--t", type=float, default=0.3)
    o_hs.add_argument("--gamma", type=float, default=1.0)
    o_hs.add_argument("--f-bar", type=float, default=1.0)
    o_hs.add_argument("--output", default="heat_series_oracle.json")
    o_hs.set_defaults(func=_oracle_heat_series)

    o_do = or_sub.add_parser("damped-oscillator")
    o_do.add_argument("--gamma", type=float, required=True)
    o_do.add_argument("--lam", type=float, required=True)
    o_do.add_argument("--z0", type=float, default=1.0)
    o_do.add_argument("--dz0", type=float, default=0.0)
    o_do.add_argument("--tau", type=float, required=True)
    o_do.add_argument("--output", default="oscillator_oracle.json")
    o_do.set_defaults(func=_oracle_oscillator)

    o_q = or_sub.add_parser("quotient-hp")
    o_q.add_argument("--gamma", type=float, required=True)
    o_q.add_argument("--lam", type=float, required=True)
    o_q.add_argument("--tau", type=float, required=True)
    o_q.add_argument("--output", default="quotient_oracle.json")
    o_q.set_defaults(func=_oracle_quotient)

    o_kl = or_sub.add_parser("key-lemma")
    o_kl.add_argument("--n", type=int, nargs="+", default=[16, 128, 512])
    o_kl.add_argument("--gamma", type=float, nargs="+", default=[0.3, 1.0, 3.0])
    o_kl.add_argument("--output", default="key_lemma.json")
    o_kl.set_defaults(func=_oracle_key_lemma)

    args = parser.parse_args(argv)

    if args.command == "validate":
        doc = _load_spec(args.spec)
        errors = validate_spec(doc)
        if errors:
            print(json.dumps({"errors": errors}, indent=2))
            return 2
        print(json.dumps({"errors": []}))
        return 0

    if args.command == "run":
        doc = _load_spec(args.spec)
        errors = validate_spec(doc)
        if errors:
            print(json.dumps({"errors": errors}, indent=2))
            return 2
        try:
            return run_spec(doc, threads=args.threads,
                            seed_override=args.seed)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            print(f"error: {exc}", file=sys.stderr)
            return 1

    if args.command == "oracle":
        try:
            args.func(args)
        except Exception as exc:  # noqa: BLE001 - CLI boundary
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return 0

    return 1  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
