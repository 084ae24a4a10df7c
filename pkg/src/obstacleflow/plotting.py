"""Matplotlib figures for run and study reports (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_run(problem, traj, path) -> Path:
    """Blob paths over the obstacles and their approximating curves."""
    fig, ax = plt.subplots(figsize=(6, 6))
    for ob in problem.scenario.obstacles:
        s = ob.samples
        ax.plot(s[:, 0], s[:, 1], "k.", ms=1)
    if problem.domain is not None:
        for cv in problem.domain.curves:
            p = np.vstack([cv.points, cv.points[:1]])
            ax.plot(p[:, 0], p[:, 1], "k-", lw=1)
    pos = np.array([s.positions for s in traj.snapshots])
    gam = traj.snapshots[0].strengths
    if pos.size:
        for j in range(pos.shape[1]):
            ax.plot(pos[:, j, 0], pos[:, j, 1], "-", lw=0.6, color="tab:red" if gam[j] > 0 else "tab:blue")
        ax.scatter(pos[-1, :, 0], pos[-1, :, 1], s=6, c=np.sign(gam), cmap="coolwarm", zorder=3)
    ax.set_aspect("equal")
    ax.set_title(f"{problem.scenario.name}: t = {traj.final.time:g}")
    return _save(fig, path)


def plot_diagnostics(records, path) -> Path:
    """Relative drift of the conserved quantities against time."""
    t = np.array([r.time for r in records])
    fig, ax = plt.subplots(figsize=(7, 4))

    def rel(v):
        v = np.asarray(v, float)
        return np.abs(v - v[0]) / (abs(v[0]) if v[0] != 0 else 1.0)

    ax.plot(t, rel([r.l1_mass for r in records]) + 1e-18, label="L1 mass")
    if records[0].lq:
        ax.plot(t, rel([r.lq.get(2, np.nan) for r in records]) + 1e-18, label="L2 norm")
    for i in range(len(records[0].circulations)):
        ax.plot(t, rel([r.circulations[i] for r in records]) + 1e-18, label=f"circulation {i + 1}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("relative drift")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_study(report: dict, path) -> Path:
    """Study values against refinement level on log axes."""
    lv = np.asarray(report["levels"], float)
    val = np.abs(np.asarray(report["values"], float))
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(lv, val, "o-")
    if "reference" in report:
        ax.loglog(lv, report["reference"], "k--", lw=0.8, label="reference")
        ax.legend(fontsize=8)
    ax.set_xlabel("level")
    ax.set_ylabel(report.get("quantity", "value"))
    ax.set_title(report["study"])
    return _save(fig, path)
