"""Matplotlib figures written next to the CSV reports."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CLASS_COLORS = {"CCC": "tab:green", "NCCC": "tab:red", "AMBIGUOUS": "tab:orange"}

_RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(nrows=1, ncols=1, width=6.4, height=None):
    golden = (np.sqrt(5.0) - 1.0) / 2.0
    height = height or width * golden * nrows / ncols
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(nrows, ncols, figsize=(width, height), squeeze=False)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def _mean_band(ax, values):
    v = values[np.isfinite(values)]
    if v.size:
        mu, sd = float(np.mean(v)), float(np.std(v))
        ax.axhline(mu, color="red", lw=1.2, label="mean")
        ax.axhline(mu + sd, color="black", ls=":", lw=1.0, label="mean ± std")
        ax.axhline(mu - sd, color="black", ls=":", lw=1.0)


def plot_samples(report, path):
    """Objective, loss ratio and violation term of every random draw, coloured by tap."""
    fig, ax = _figure(3, 1, height=7.0)
    x = np.arange(report.samples)
    for a, values, label in zip(ax[:, 0], (report.f_values, report.j_values, report.gamma_values),
                                ("F", "J", "Γ")):
        sc = a.scatter(x, values, c=report.taps, s=4, cmap="viridis")
        _mean_band(a, values)
        a.set_ylabel(label)
    ax[0, 0].set_title(f"configuration {report.n_conf}: η = {report.eta:.4g}")
    ax[0, 0].legend(loc="upper right")
    ax[-1, 0].set_xlabel("sample")
    fig.colorbar(sc, ax=ax[:, 0].tolist(), label="N_tap", shrink=0.6)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_screening(reports, path):
    """Mean objective and eta per configuration, coloured by class."""
    fig, ax = _figure(2, 1, height=5.5)
    idx = np.array(sorted(reports))
    mean = np.array([reports[i].mean for i in idx])
    eta = np.array([reports[i].eta for i in idx])
    colors = [CLASS_COLORS.get(reports[i].klass, "grey") for i in idx]
    ax[0, 0].scatter(idx, mean, c=colors, s=6)
    ax[0, 0].set_yscale("log")
    ax[0, 0].axhline(1.0, color="black", lw=0.8, ls="--")
    ax[0, 0].set_ylabel("mean F")
    ax[1, 0].scatter(idx, eta, c=colors, s=6)
    ax[1, 0].set_ylabel("η = σ/μ")
    ax[1, 0].set_xlabel("N_conf")
    for name, col in CLASS_COLORS.items():
        ax[0, 0].scatter([], [], c=col, s=10, label=name)
    ax[0, 0].legend(loc="best")
    _save(fig, path)


def plot_history(reports, path):
    """Best fitness per generation of every seeded run."""
    fig, ax = _figure(2, 1, height=5.5)
    for rep in reports:
        h = rep["history"]
        gen = [r["generation"] for r in h]
        ax[0, 0].plot(gen, [r["best_f"] for r in h], lw=0.9, label=f"seed {rep['seed']}")
        ax[1, 0].plot(gen, [r["best_ploss_w"] / 1000.0 for r in h], lw=0.9)
    ax[0, 0].set_yscale("log")
    ax[0, 0].set_ylabel("best F")
    ax[1, 0].set_ylabel("P_loss of best [kW]")
    ax[1, 0].set_xlabel("generation")
    if len(reports) <= 12:
        ax[0, 0].legend(ncol=2, loc="upper right")
    _save(fig, path)


def plot_penalties(path, kappa_v=100.0, kappa_i=100.0):
    from .objective import penalty_i, penalty_v

    fig, ax = _figure(1, 2, width=7.0, height=2.8)
    x = np.linspace(0.7, 1.3, 400)
    ax[0, 0].plot(x, penalty_v(x, kappa_v))
    ax[0, 0].set_xlabel("V / V_nom")
    ax[0, 0].set_ylabel("G_V")
    y = np.linspace(0.0, 1.6, 400)
    ax[0, 1].plot(y, penalty_i(y, kappa_i))
    ax[0, 1].set_xlabel("I / I_max")
    ax[0, 1].set_ylabel("G_I")
    _save(fig, path)
