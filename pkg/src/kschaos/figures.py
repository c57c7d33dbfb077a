"""Matplotlib renderings written next to each command's delimited output.

Figures are byte-deterministic: fixed backend, fixed dpi, no metadata chunk.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 130
_SAVE = {"dpi": DPI, "metadata": {"Software": None}}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, **_SAVE)
    plt.close(fig)
    return path


def norm_scaling_figure(rows: list[dict], path) -> Path:
    """log-log norm-vs-time lines, one per p, with fitted slopes."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    by_p: dict[float, list[tuple[float, float]]] = {}
    for r in rows:
        by_p.setdefault(r["p"], []).append((r["t"], r["norm"]))
    for p, pts in sorted(by_p.items()):
        pts.sort()
        t = np.array([a for a, _ in pts])
        v = np.array([b for _, b in pts])
        ax.loglog(t, v, "o-", label=f"p={p:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("kernel L^p norm")
    ax.legend()
    ax.set_title("norm scaling: slope must be -(1 - 1/(2p))")
    fig.tight_layout()
    return _save(fig, path)


def trajectories_figure(times: np.ndarray, positions: np.ndarray, path, max_paths: int = 64) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for row in positions[:max_paths]:
        ax.plot(times, row, lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("position")
    ax.set_title(f"particle paths (showing {min(len(positions), max_paths)} of {len(positions)})")
    fig.tight_layout()
    return _save(fig, path)


def pde_figure(nodes: np.ndarray, snapshots, mass_rows: list[dict], path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    idx = np.linspace(0, len(snapshots) - 1, min(6, len(snapshots))).astype(int)
    for i in idx:
        ax1.plot(nodes, snapshots[i].rho.values, lw=0.9, label=f"t={snapshots[i].time:g}")
    ax1.set_xlabel("x")
    ax1.set_ylabel("density")
    ax1.legend(fontsize=7)
    ts = [r["t"] for r in mass_rows]
    ax2.plot(ts, [r["mass_error"] for r in mass_rows], label="|mass - 1|")
    ax2.plot(ts, [r["boundary_density"] for r in mass_rows], label="boundary density")
    ax2.set_yscale("log")
    ax2.set_xlabel("t")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def chaos_figure(report, path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 4.0))
    n = np.asarray(report.n_values, dtype=float)
    for j, t in enumerate(report.times):
        ax1.errorbar(n, report.w1_mean[:, j], yerr=2 * report.w1_se[:, j],
                     fmt="o-", capsize=3, label=f"t={t:g} (slope {report.slopes[j]:.2f})")
    ax1.set_xscale("log")
    ax1.set_yscale("log")
    ax1.set_xlabel("N")
    ax1.set_ylabel("W1(empirical, PDE)")
    ax1.legend(fontsize=8)
    if report.l2_rows:
        ts = [r["t"] for r in report.l2_rows]
        ax2.plot(ts, [r["value"] for r in report.l2_rows], "o-")
        ax2.set_xlabel("t")
        ax2.set_ylabel("t^{1/4} ||rho_t||_2")
    fig.tight_layout()
    return _save(fig, path)


def l2_decay_figure(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ts = [r["t"] for r in rows]
    ax.plot(ts, [r["value"] for r in rows], "o-", label="t^{1/4} ||rho||_2")
    ax.plot(ts, [r["value_half_bw"] for r in rows], "s--", lw=0.8, label="half bandwidth")
    ax.set_xscale("log")
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return _save(fig, path)


def window_scaling_figure(rows: list[dict], slope: float, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    w = np.array([r["window"] for r in rows])
    e = np.array([r["estimate"] for r in rows])
    se = np.array([r["std_error"] for r in rows])
    ax.errorbar(w, e, yerr=2 * se, fmt="o", capsize=3)
    ax.loglog(w, e[0] * (w / w[0]) ** slope, "--", label=f"fit slope {slope:.3f}")
    ax.set_xlabel("window length")
    ax.set_ylabel("window integral of E F")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def estimates_figure(rows: list[dict], xkey: str, path, logx: bool = True) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    x = np.array([r[xkey] for r in rows], dtype=float)
    e = np.array([r["estimate"] for r in rows])
    se = np.array([r["std_error"] for r in rows])
    ax.errorbar(x, e, yerr=2 * se, fmt="o-", capsize=3)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xkey)
    ax.set_ylabel("estimate")
    fig.tight_layout()
    return _save(fig, path)


def girsanov_figure(result: dict, log_weights: np.ndarray, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    ax.hist(log_weights, bins=60)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("log weight")
    ax.set_title(f"mean Z = {result['mean']:.4f} +/- {result['std_error']:.4f} (target 1)")
    fig.tight_layout()
    return _save(fig, path)


def bench_figure(rows: list[dict], path) -> Path:
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    n = np.array([r["n_particles"] for r in rows], dtype=float)
    ax.loglog(n, [r["seconds_cutoff_on"] for r in rows], "o-", label="cutoff on")
    ax.loglog(n, [r["seconds_cutoff_off"] for r in rows], "s--", label="cutoff off")
    ax.set_xlabel("N")
    ax.set_ylabel("seconds per run")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
