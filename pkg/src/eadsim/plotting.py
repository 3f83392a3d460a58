"""Static SVG figures for curves and Wigner functions.

Figures are written with matplotlib's Agg/SVG backend with a fixed hash salt
and no date stamp, so re-running a scenario yields the same file.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .eads import NO_CLONING_LIMIT  # noqa: E402
from .phasespace import WignerGrid, w0_location, w0_metric  # noqa: E402

_STYLE = {
    "suppressed": dict(color="tab:green", ls="-", marker="*"),
    "unsuppressed": dict(color="tab:red", ls="-", marker="o"),
    "suppressed_ideal_ancilla": dict(color="yellowgreen", ls="--", marker=None),
    "trajectory": dict(color="tab:blue", ls=":", marker="s"),
}
_MAX_HEATMAP = 121


def _save(fig, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "eadsim", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_curves(curves, path, qualify: bool = False, title: str = "") -> None:
    """Fidelity and W0 against step number, with the no-cloning and W0 = 0 lines."""
    fig, (ax_f, ax_w) = plt.subplots(1, 2, figsize=(9, 3.6))
    for curve in curves:
        style = dict(_STYLE.get(curve.variant, {}))
        label = f"{curve.input_kind}: {curve.variant}" if qualify else curve.variant
        if qualify:
            style.pop("color", None)
        ax_f.plot(curve.steps, curve.F, label=label, **style)
        ax_w.plot(curve.steps, curve.W0, label=label, **style)
    ax_f.axhline(NO_CLONING_LIMIT, color="gray", ls="--", lw=1, label="no-cloning limit")
    ax_w.axhline(0.0, color="gray", ls="--", lw=1)
    ax_f.set_xlabel("N")
    ax_f.set_ylabel("F")
    ax_w.set_xlabel("N")
    ax_w.set_ylabel("W0")
    ax_f.legend(fontsize=7)
    if title:
        fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def plot_wigner(w: WignerGrid, path, title: str = "") -> None:
    """Heat map of W with the W0 value in the title and its location marked."""
    step = max(1, int(np.ceil(w.x.size / _MAX_HEATMAP)))
    x, p, vals = w.x[::step], w.p[::step], w.values[::step, ::step]
    lim = float(np.abs(vals).max()) or 1.0
    fig, ax = plt.subplots(figsize=(4.2, 3.6))
    mesh = ax.imshow(vals.T, origin="lower", extent=(x[0], x[-1], p[0], p[-1]),
                     cmap="RdBu_r", vmin=-lim, vmax=lim, interpolation="nearest")
    fig.colorbar(mesh, ax=ax, label="W(x, p)")
    x0, p0 = w0_location(w)
    ax.plot([x0], [p0], marker="x", color="k", ms=6)
    ax.set_xlabel("x")
    ax.set_ylabel("p")
    ax.set_title(f"{title}  W0 = {w0_metric(w):.4f}".strip(), fontsize=9)
    fig.tight_layout()
    _save(fig, path)
