"""Figure builders: profile overlays, work convergence, gap decay, bounds."""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .jobs import PlotJob, SchemaError, load_csv  # noqa: E402

FIELD_LABELS = {
    "stretch": "stretch r",
    "energy_total": "total energy e",
    "energy_thermal": "thermal energy T",
}


def _fmt_time(t: float) -> str:
    return f"{t:g}".replace(".", "p")


def plot_profiles(job: PlotJob) -> list[Path]:
    """One overlay figure per record time: every n plus the PDE curve."""
    manifest = job.manifest()
    n_files = sorted(
        (int(m.group(1)), name)
        for name in manifest.get("files", [])
        for m in [re.match(r"profiles_n(\d+)\.csv$", name)] if m)
    if not n_files:
        raise SchemaError("no profiles_n*.csv files in the manifest")
    pde_cols = load_csv(job, "profiles_pde.csv")
    chains = [(n, load_csv(job, name)) for n, name in n_files]

    times = sorted(set(pde_cols["time"].tolist()))
    fields = [f for f in FIELD_LABELS
              if f in set(pde_cols["field"].tolist())]
    produced = []
    for t in times:
        fig, axes = plt.subplots(1, len(fields),
                                 figsize=(4.2 * len(fields), 3.4))
        axes = np.atleast_1d(axes)
        for ax, field in zip(axes, fields):
            sel = (pde_cols["time"] == t) & (pde_cols["field"] == field)
            ax.plot(pde_cols["u"][sel], pde_cols["value"][sel], "k-",
                    lw=2, label="PDE")
            for n, cols in chains:
                sel_n = (cols["time"] == t) & (cols["field"] == field)
                ax.plot(cols["u"][sel_n], cols["value"][sel_n], "--",
                        lw=1, label=f"n={n}")
            ax.set_xlabel("u")
            ax.set_title(f"{FIELD_LABELS[field]}, t={t:g}")
        axes[0].legend(fontsize=8)
        fig.tight_layout()
        path = job.output_dir / f"profiles_t{_fmt_time(t)}.{job.format}"
        fig.savefig(path)
        plt.close(fig)
        produced.append(path)
    return produced


def plot_work(job: PlotJob) -> list[Path]:
    """W_n(t) curves, plus a log-log error-vs-n panel when several n exist."""
    cols = load_csv(job, "work.csv")
    ns = sorted(set(int(v) for v in cols["n"]))
    multi = len(ns) >= 2
    fig, axes = plt.subplots(1, 2 if multi else 1,
                             figsize=(8.5 if multi else 4.5, 3.4))
    axes = np.atleast_1d(axes)

    ax = axes[0]
    for n in ns:
        sel = cols["n"] == n
        order = np.argsort(cols["t"][sel])
        ax.plot(cols["t"][sel][order], cols["w_n"][sel][order], "o-",
                ms=3, label=f"n={n}")
    sel = cols["n"] == ns[-1]
    order = np.argsort(cols["t"][sel])
    ax.plot(cols["t"][sel][order], cols["w_limit"][sel][order], "k--",
            label="limit W(t)")
    ax.set_xlabel("t")
    ax.set_ylabel("work")
    ax.legend(fontsize=8)

    if multi:
        t_max = cols["t"].max()
        errs = np.array([
            float(cols["abs_err"][(cols["n"] == n) & (cols["t"] == t_max)][0])
            for n in ns])
        ax2 = axes[1]
        if np.all(errs > 0):
            ax2.loglog(ns, errs, "o-")
            slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
            ax2.set_title(f"|W_n - W| at t={t_max:g}, slope {slope:.2f}")
        else:
            ax2.plot(ns, errs, "o-")
            ax2.set_title(f"|W_n - W| at t={t_max:g} (zeros, linear axes)")
        ax2.set_xlabel("n")
        ax2.set_ylabel("abs err")
    fig.tight_layout()
    path = job.output_dir / f"work_convergence.{job.format}"
    fig.savefig(path)
    plt.close(fig)
    return [path]


def plot_equipartition(job: PlotJob) -> list[Path]:
    """Weighted equipartition gap and kinetic flatness against n."""
    cols = load_csv(job, "equipartition.csv")
    order = np.argsort(cols["n"])
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    ax.loglog(cols["n"][order], cols["weighted_gap"][order], "o-",
              label="weighted gap")
    ax.loglog(cols["n"][order], cols["kinetic_flatness"][order], "s-",
              label="kinetic flatness")
    ax.set_xlabel("n")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = job.output_dir / f"equipartition_decay.{job.format}"
    fig.savefig(path)
    plt.close(fig)
    return [path]


def plot_bounds(job: PlotJob) -> list[Path]:
    """Scaled mode-rate range from a key-lemma report file."""
    import json

    path = job.input_dir / "key_lemma.json"
    if not path.exists():
        raise SchemaError("no key_lemma.json in the input directory")
    reports = json.loads(path.read_text())["reports"]
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    gammas = sorted(set(r["gamma"] for r in reports))
    for gamma in gammas:
        rows = sorted((r["n"], r) for r in reports if r["gamma"] == gamma)
        ns = [n for n, _ in rows]
        ax.fill_between(ns, [r["scaled_re_min"] for _, r in rows],
                        [r["scaled_re_max"] for _, r in rows], alpha=0.3,
                        label=f"gamma={gamma:g}")
    ax.set_xscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("Re rate / (j/n)^2 range")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = job.output_dir / f"mode_rate_bounds.{job.format}"
    fig.savefig(out)
    plt.close(fig)
    return [out]


BUILDERS = {
    "profiles": plot_profiles,
    "work": plot_work,
    "equipartition": plot_equipartition,
    "bounds": plot_bounds,
}


def run_job(job: PlotJob) -> list[Path]:
    produced = []
    for kind in job.figures:
        produced.extend(BUILDERS[kind](job))
    return produced
