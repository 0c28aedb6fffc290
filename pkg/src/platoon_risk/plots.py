"""PNG figures rendered next to the delimited result files."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .report import ResultBundle  # noqa: E402


def _risk_series(rows):
    j = np.array([r.j for r in rows])
    vals = np.array([float(r.risk) for r in rows])
    return j, vals


def variance_figure(bundle: ResultBundle, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.6))
    diag = np.diag(bundle.sigma)
    ax.plot(np.arange(1, diag.size + 1), diag, "k-", label="unconditional")
    for i, rows in bundle.conditional.items():
        ax.plot([r.j for r in rows], [r.sigma_tilde_sq for r in rows], ".-", ms=3, label=f"given pair {i} collided")
    ax.set_xlabel("pair j")
    ax.set_ylabel("distance variance")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def risk_figure(bundle: ResultBundle, path: Path) -> Path:
    """Risk profiles on a symlog axis; infinite risks are drawn as triangles at the top."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    series = [("single", bundle.single)] + [(f"cascade, pair {i} collided", rows) for i, rows in bundle.cascade.items()]
    finite_max = max(
        [float(r.risk) for _, rows in series for r in rows if math.isfinite(float(r.risk))] or [1.0]
    )
    ceiling = max(finite_max, 1e-3) * 2.0
    for label, rows in series:
        j, vals = _risk_series(rows)
        inf = np.isinf(vals)
        line, = ax.plot(j[~inf], vals[~inf], ".-", ms=3, label=label)
        if inf.any():
            ax.plot(j[inf], np.full(inf.sum(), ceiling), "^", color=line.get_color())
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.set_xlabel("pair j")
    ax.set_ylabel("value-at-risk")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_figures(bundle: ResultBundle, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if bundle.sigma is not None:
        written.append(variance_figure(bundle, out_dir / "variance.png"))
    if bundle.single:
        written.append(risk_figure(bundle, out_dir / "risk.png"))
    return written
