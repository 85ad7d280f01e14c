"""Optional figures next to the delimited outputs (enabled by ``figures = true``)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def statistics_figure(report, path) -> Path | None:
    """Bar chart of scored statistics against their thresholds (one-sided rules only)."""
    scored = [s for s in report.statistics if s.rule in ("<=", "<", ">=", ">")
              and not isinstance(s.value, bool) and np.isfinite(float(s.value))]
    if not scored:
        return None
    fig, ax = plt.subplots(figsize=(7, 0.35 * len(scored) + 1.2))
    y = np.arange(len(scored))
    vals = [float(s.value) for s in scored]
    thr = [float(s.threshold) for s in scored]
    colors = ["tab:green" if s.passed else "tab:red" for s in scored]
    ax.barh(y, vals, color=colors, alpha=0.7)
    ax.scatter(thr, y, marker="|", s=200, color="k", label="threshold")
    ax.set_yticks(y, [s.name for s in scored], fontsize=8)
    ax.set_xscale("symlog", linthresh=1e-3)
    ax.legend(loc="lower right", fontsize=8)
    ax.set_title(report.experiment)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def ecdf_figure(rows, path, title="") -> Path:
    """Step plot of ``(series, x, ecdf)`` rows, one line per series."""
    fig, ax = plt.subplots(figsize=(6, 4))
    series = {}
    for name, x, p in rows:
        series.setdefault(name, ([], []))
        series[name][0].append(float(x))
        series[name][1].append(float(p))
    for name, (x, p) in series.items():
        ax.step(x, p, where="post", label=name)
    ax.set_ylabel("ECDF")
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def curve_figure(header, rows, path, title="") -> Path:
    """Columns 2.. of ``rows`` against column 1 (blank cells skipped)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.array([float(r[0]) for r in rows])
    for k in range(1, len(header)):
        col = [r[k] for r in rows]
        if all(c == "" for c in col):
            continue
        ax.plot(x, [float(c) if c != "" else np.nan for c in col], label=header[k])
    ax.set_xlabel(header[0])
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return Path(path)


def render_figures(report, out_dir) -> list:
    """Write PNG figures for ``report`` into ``out_dir``; returns the paths."""
    out = Path(out_dir)
    written = []
    p = statistics_figure(report, out / "statistics.png")
    if p is not None:
        written.append(p)
    for name, (header, rows) in report.artifacts.items():
        if not rows:
            continue
        target = out / f"{name}.png"
        if tuple(header) == ("series", "x", "ecdf"):
            written.append(ecdf_figure(rows, target, name))
        else:
            written.append(curve_figure(header, rows, target, name))
    return written
