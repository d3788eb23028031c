"""Figures rendered next to the report tables.

One PNG per plottable report, named ``<scenario>_<report>.png``. The Agg
backend and a fixed style keep output independent of the user's matplotlib
setup; the ``Software`` PNG tag is dropped so reruns are byte-identical.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .reports import Report, ReportBundle  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
}


def _num(v) -> float:
    return float("nan") if v is None else float(v)


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_estimates(rep: Report, title: str):
    """Point estimates with 95% intervals, one marker per estimator, slopes only."""
    rows = [r for r in rep.rows if r["term"] != "intercept"]
    groups = []
    for r in rows:
        key = (r["estimator"], r.get("panel"), r["form"])
        if key not in groups:
            groups.append(key)
    terms = []
    for r in rows:
        if r["term"] not in terms:
            terms.append(r["term"])
    fig, ax = plt.subplots()
    width = 0.8 / max(len(groups), 1)
    for g, key in enumerate(groups):
        sel = [r for r in rows if (r["estimator"], r.get("panel"), r["form"]) == key]
        y = np.array([terms.index(r["term"]) for r in sel]) + (g - (len(groups) - 1) / 2) * width
        est = np.array([_num(r["estimate"]) for r in sel])
        lo = np.array([_num(r["ci_lo"]) for r in sel])
        hi = np.array([_num(r["ci_hi"]) for r in sel])
        err = np.where(np.isfinite(lo), np.vstack([est - lo, hi - est]), 0.0)
        label = key[0] if key[1] is None else f"{key[0]} ({key[1]})"
        ax.errorbar(est, y, xerr=err, fmt="o", capsize=3, label=label)
    ax.set_yticks(range(len(terms)), terms)
    ax.axvline(0.0, color="0.5", lw=0.8)
    ax.set_xlabel("estimate (95% CI)")
    ax.set_title(title)
    ax.legend(loc="best")
    return fig


def plot_bias_vs_lambda(rep: Report, title: str):
    lam = np.array(rep.column("lambda"))
    fig, ax = plt.subplots()
    grid = np.linspace(0.0, 1.0, 101)
    beta1 = rep.meta.get("beta1", 1.0)
    ax.plot(grid, (2 * grid - 7 / 4) * beta1, color="0.3", label="closed form")
    ax.plot(lam, rep.column("matrix_bias"), "s", mfc="none", label="analytic")
    ax.errorbar(lam, rep.column("mc_bias"), yerr=5 * np.array(rep.column("mc_se")), fmt=".", capsize=3,
                label="Monte Carlo (5 se)")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.axhline(-beta1, color="0.5", lw=0.8, ls=":")
    for x in (3 / 8, 7 / 8):
        ax.axvline(x, color="0.6", lw=0.8, ls="--")
    ax.set_xlabel("purchase probability on device 1")
    ax.set_ylabel("bias of slope")
    ax.set_title(title)
    ax.legend(loc="best")
    return fig


def plot_sweep(rep: Report, title: str):
    fig, ax = plt.subplots()
    terms = [t for t in dict.fromkeys(rep.column("term")) if t != "intercept"]
    for t in terms:
        sel = rep.where(term=t)
        ax.plot([r["r"] for r in sel], [r["abs_bias"] for r in sel], "o-", label=t)
    ax.set_xlabel("fragmented fraction r")
    ax.set_ylabel("|bias|")
    ax.set_title(title)
    ax.legend(loc="best")
    return fig


def plot_montecarlo(rep: Report, title: str):
    z = np.array([_num(v) for v in rep.column("z_score")])
    thr = rep.meta.get("z_threshold", 5.0)
    fig, ax = plt.subplots()
    ax.plot(np.arange(z.size), z, "o", ms=3)
    for s in (-thr, thr):
        ax.axhline(s, color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("slope term")
    ax.set_ylabel("z-score")
    ax.set_title(title)
    return fig


def plot_replications(rep: Report, title: str):
    fig, ax = plt.subplots()
    ax.hist(rep.column("debiased_slope"), bins=30, alpha=0.7, label="debiased")
    ax.hist(rep.column("matched_slope"), bins=30, alpha=0.7, label="matched")
    ax.set_xlabel("slope")
    ax.set_ylabel("replications")
    ax.set_title(title)
    ax.legend(loc="best")
    return fig


def plot_coverage(rep: Report, title: str):
    fig, ax = plt.subplots()
    terms = [t for t in dict.fromkeys(rep.column("term"))]
    for i, t in enumerate(terms):
        sel = rep.where(term=t)
        x = np.array([r["true_estimate"] for r in sel])
        lo = np.array([r["aggregated_ci_lo"] for r in sel])
        hi = np.array([r["aggregated_ci_hi"] for r in sel])
        ax.plot(x, hi - x, ".", label=f"{t} upper gap")
        ax.plot(x, lo - x, ".", color=f"C{i}", alpha=0.5)
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_xlabel("true-data estimate")
    ax.set_ylabel("aggregated CI bound minus true estimate")
    ax.set_title(title)
    ax.legend(loc="best")
    return fig


def plot_correlation(rep: Report, title: str):
    covs = list(dict.fromkeys(rep.column("covariate")))
    fig, axes = plt.subplots(1, len(covs), figsize=(3.0 * len(covs), 3.0), squeeze=False)
    for ax, c in zip(axes[0], covs):
        sel = rep.where(covariate=c)
        cols = sorted(k for k in sel[0] if k.startswith("exposure_d"))
        C = np.array([[_num(r[k]) for k in cols] for r in sel])
        im = ax.imshow(C, cmap="viridis")
        for (i, j), v in np.ndenumerate(C):
            ax.text(j, i, f"{v:.2f}", ha="center", va="center", color="w", fontsize=7)
        ax.set_title(f"{title}: {c}")
        ax.set_xlabel("exposure device")
        ax.set_ylabel("outcome device")
        ax.grid(False)
        fig.colorbar(im, ax=ax, shrink=0.8)
    return fig


PLOTTERS = {
    "estimates": plot_estimates,
    "aggregate": plot_estimates,
    "debias": plot_estimates,
    "bias_vs_lambda": plot_bias_vs_lambda,
    "sweep": plot_sweep,
    "montecarlo": plot_montecarlo,
    "replications": plot_replications,
    "coverage": plot_coverage,
    "correlation": plot_correlation,
    "diagnose": plot_correlation,
}


def render_bundle(bundle: ReportBundle, out) -> list[Path]:
    """Render every plottable, nonempty report of ``bundle`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    with plt.style.context("default"), matplotlib.rc_context(STYLE):
        for name in sorted(bundle.reports):
            rep = bundle.reports[name]
            if name not in PLOTTERS or not rep.rows:
                continue
            fig = PLOTTERS[name](rep, f"{bundle.scenario} {name}")
            written.append(_save(fig, out / f"{bundle.scenario}_{name}.png"))
    return written
