"""Figure rendering for optomfb sweep outputs.

Color code follows the source material: blue = lossless, red = lossy,
green = the 2/3 secure-teleportation threshold, brown = the 1/3 two-way
steerability threshold, thin black = the optimal-fidelity bound.  Unstable
grid points arrive as empty CSV cells and are drawn as blanks.  All overlay
curves are recomputed from the sidecar metadata, never hard-coded.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import SweepData, derived_parameters  # noqa: E402

_STYLE = {
    "figure.dpi": 110,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "svg.hashsalt": "optomfb-figures",
}

LOSSY_COLOR = "tab:red"
LOSSLESS_COLOR = "tab:blue"
THRESHOLD_COLOR = "tab:green"
STEERING_COLOR = "#8B4513"
BOUND_COLOR = "black"

TWO_THIRDS = 2.0 / 3.0
ONE_THIRD = 1.0 / 3.0


def _canonicalize_svg_ids(text: str) -> str:
    """Replace renderer-generated element ids with sequential ones.

    The ids embed per-process hashes, which would make byte-identical inputs
    produce differing SVG bytes; everything else in the file is deterministic.
    """
    import re

    mapping = {}

    def repl(match):
        old = match.group(1)
        if old not in mapping:
            mapping[old] = f"id{len(mapping):04d}"
        return match.group(0).replace(old, mapping[old])

    text = re.sub(r'id="([^"]+)"', repl, text)
    for old, new in mapping.items():
        text = text.replace(f"url(#{old})", f"url(#{new})")
        text = text.replace(f'xlink:href="#{old}"', f'xlink:href="#{new}"')
    return text


def save_figure(fig, out_base: Path) -> list[Path]:
    """Write SVG + PNG next to each other, without volatile metadata."""
    out_base = Path(out_base)
    out_base.parent.mkdir(parents=True, exist_ok=True)
    paths = []
    for ext, meta in (("svg", {"Date": None}), ("png", {"Software": None})):
        path = out_base.with_suffix(f".{ext}")
        fig.savefig(path, metadata=meta)
        if ext == "svg":
            path.write_text(_canonicalize_svg_ids(path.read_text()))
        paths.append(path)
    plt.close(fig)
    return paths


def _series_style(data: SweepData):
    color = LOSSY_COLOR if data.has_loss else LOSSLESS_COLOR
    label = f"{data.label} ({'with loss' if data.has_loss else 'no loss'})"
    return color, label


def _gain_axis(data: SweepData) -> bool:
    return data.param_names and data.param_names[0].endswith("g_cd")


def cancellation_curve(meta_derived: dict, gains: np.ndarray) -> np.ndarray:
    """Reflectivity satisfying g_cd * r = G_b / (sqrt(sigma) * omega_m)."""
    g_b = float(meta_derived["G_b"])
    sigma = float(meta_derived["sigma"])
    omega_m = float(meta_derived.get("omega_m") or 1.0)
    with np.errstate(divide="ignore"):
        return g_b / (math.sqrt(sigma) * omega_m * np.asarray(gains, dtype=float))


def render_contour2d(data: SweepData, metrics=("E_N", "F")):
    """Filled contours of two metrics over a 2-D sweep grid.

    Returns (figure, overlays); the only overlay is the heating-cancellation
    dashed curve, drawn when the axes are the feedback gain and reflectivity.
    """
    if len(data.param_names) != 2:
        raise ValueError("contour2d needs a two-axis sweep")
    overlays = {}
    x = data.axis_values(0)
    y = data.axis_values(1)
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 3.4),
                                 constrained_layout=True)
        for ax, name in zip(np.atleast_1d(axes), metrics):
            z = data.grid(name)
            finite = np.isfinite(z)
            if finite.any():
                levels = np.linspace(float(z[finite].min()), float(z[finite].max()), 21) \
                    if np.ptp(z[finite]) > 0 else 20
                cs = ax.contourf(x, y, np.ma.masked_invalid(z).T, levels=levels,
                                 cmap="viridis")
                fig.colorbar(cs, ax=ax, shrink=0.9)
            axes_are_gain_r = (data.param_names[0].endswith("g_cd")
                               and data.param_names[1].endswith(".r"))
            if axes_are_gain_r and data.meta:
                r_curve = cancellation_curve(derived_parameters(data), x)
                inside = (r_curve >= y.min()) & (r_curve <= y.max())
                ax.plot(x[inside], r_curve[inside], "--", color="white", lw=1.2,
                        label="heating cancellation")
                overlays["cancellation_curve"] = (x[inside], r_curve[inside])
            ax.set_xlabel(data.param_names[0])
            ax.set_ylabel(data.param_names[1])
            ax.set_title(name)
    return fig, overlays


def render_curves(datasets: list[SweepData], metrics=("E_N", "F")):
    """Metric-vs-parameter line plots with thresholds, bounds and baselines.

    One colored series per dataset (blue/red by loss); when the swept axis is
    the feedback gain, a dashed horizontal line marks the open-loop value.
    The fidelity panel carries the 2/3 threshold and the thin black bound.
    """
    overlays = {"threshold": TWO_THIRDS}
    with plt.rc_context(_STYLE):
        fig, axes = plt.subplots(1, len(metrics), figsize=(4.2 * len(metrics), 3.2),
                                 constrained_layout=True)
        for ax, name in zip(np.atleast_1d(axes), metrics):
            for data in datasets:
                if data.n_rows == 0:
                    continue
                color, label = _series_style(data)
                xs = data.params[:, 0]
                ys = data.metrics[name]
                ax.plot(xs, ys, color=color, lw=1.4, label=label)
                if _gain_axis(data) and np.isfinite(ys[0]):
                    ax.axhline(ys[0], color=color, ls="--", lw=0.9, alpha=0.8)
                if name == "F":
                    ax.plot(xs, data.metrics["F_bound"], color=BOUND_COLOR, lw=0.6)
                    overlays.setdefault("bound_curves", []).append(
                        (xs, data.metrics["F_bound"]))
            if name == "F":
                ax.axhline(TWO_THIRDS, color=THRESHOLD_COLOR, lw=1.2)
            if datasets and datasets[0].param_names:
                ax.set_xlabel(datasets[0].param_names[0])
            ax.set_ylabel(name)
            if any(d.n_rows for d in datasets):
                ax.legend(fontsize=7)
    return fig, overlays


def render_threshold_curves(datasets: list[SweepData]):
    """Smallest partial-transpose symplectic eigenvalue vs the sweep axis,
    with the 1/3 two-way-steerability threshold."""
    overlays = {"threshold": ONE_THIRD}
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(4.6, 3.2), constrained_layout=True)
        for data in datasets:
            if data.n_rows == 0:
                continue
            color, label = _series_style(data)
            xs = data.params[:, 0]
            ax.plot(xs, data.metrics["nu"], color=color, lw=1.4, label=label)
            if _gain_axis(data) and np.isfinite(data.metrics["nu"][0]):
                ax.axhline(data.metrics["nu"][0], color=color, ls="--", lw=0.9,
                           alpha=0.8)
        ax.axhline(ONE_THIRD, color=STEERING_COLOR, lw=1.2)
        if datasets and datasets[0].param_names:
            ax.set_xlabel(datasets[0].param_names[0])
        ax.set_ylabel("nu")
        if any(d.n_rows for d in datasets):
            ax.legend(fontsize=7)
    return fig, overlays
