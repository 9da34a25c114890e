"""PNG figures for a report (optional; needs the ``figures`` extra)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _margins(report) -> tuple[list[str], np.ndarray]:
    """log10 of how far each check clears its threshold (positive means it passes)."""
    names, vals = [], []
    for c in report.checks:
        m = max(abs(float(c.measured)), 1e-300)
        t = float(c.threshold)
        ratio = t / m if c.comparison == "<" else m / t
        names.append(c.name)
        vals.append(np.log10(ratio) if np.isfinite(ratio) else -1.0)
    return names, np.array(vals)


def render(report, outdir) -> list[Path]:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    names, vals = _margins(report)
    fig, ax = plt.subplots(figsize=(7, 0.3 * len(names) + 1.2))
    ax.barh(names, vals, color=["tab:green" if v > 0 else "tab:red" for v in vals])
    ax.axvline(0.0, color="k", lw=0.8)
    ax.invert_yaxis()
    ax.set_xlabel("decades of margin below (or above) threshold")
    ax.set_title(f"{report.kind}, seed {report.seed}")
    fig.tight_layout()
    p = out / f"{report.kind}_checks.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    paths.append(p)

    if report.series:
        fig, ax = plt.subplots(figsize=(5, 4))
        for pair in sorted({r["pair"] for r in report.series}):
            rows = [r for r in report.series if r["pair"] == pair]
            th = [r["theta"] for r in rows]
            ax.loglog(th, [r["residual"] for r in rows], "o-", label=f"pair {pair} residual")
            ax.loglog(th, [r["quad_error"] for r in rows], "x--", label=f"pair {pair} quadrature")
        th = np.array(sorted({r["theta"] for r in report.series}))
        ref = report.series[0]["residual"] * (th / report.series[0]["theta"]) ** 2
        ax.loglog(th, ref, "k:", label="theta^2")
        ax.set_xlabel("theta")
        ax.legend(fontsize=7)
        fig.tight_layout()
        p = out / f"{report.kind}_expansion.png"
        fig.savefig(p, dpi=120)
        plt.close(fig)
        paths.append(p)
    return paths
