"""Command-line rendering: one command per figure kind.

Each command takes the sweep CSV(s) with their JSON sidecars and writes an
SVG + PNG pair.  A schema mismatch exits non-zero with the column diagnostic.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .io import SchemaError, read_sweep
from .render import (render_contour2d, render_curves, render_threshold_curves,
                     save_figure)


def _load_all(csvs, metas):
    if metas and len(metas) != len(csvs):
        raise click.UsageError("give one --meta per --csv (or none)")
    out = []
    for i, path in enumerate(csvs):
        meta = metas[i] if metas else _sidecar_for(path)
        out.append(read_sweep(path, meta))
    return out


def _sidecar_for(csv_path):
    """<name>.meta.json next to <name>.csv, when present."""
    path = str(csv_path)
    if not path.endswith(".csv"):
        return None
    candidate = Path(path[: -len(".csv")] + ".meta.json")
    return candidate if candidate.exists() else None


@click.group()
def main():
    """Render optomfb sweep CSVs into figure files (SVG + PNG)."""


def _run(renderer, csvs, metas, out):
    try:
        datasets = _load_all(csvs, metas)
        fig, _ = renderer(datasets)
        paths = save_figure(fig, Path(out))
    except SchemaError as exc:
        click.echo(f"schema error: {exc}", err=True)
        sys.exit(2)
    for p in paths:
        click.echo(str(p))


@main.command()
@click.option("--csv", "csvs", multiple=True, required=True)
@click.option("--meta", "metas", multiple=True)
@click.option("--out", required=True, help="Output basename (without extension).")
def contour2d(csvs, metas, out):
    """Two-axis sweep as filled contours with the cancellation overlay."""
    if len(csvs) != 1:
        raise click.UsageError("contour2d takes exactly one --csv")
    _run(lambda ds: render_contour2d(ds[0]), csvs, metas, out)


@main.command()
@click.option("--csv", "csvs", multiple=True, required=True,
              help="One or more sweeps (e.g. with-loss and no-loss runs).")
@click.option("--meta", "metas", multiple=True)
@click.option("--out", required=True)
def curves(csvs, metas, out):
    """Entanglement and fidelity gain curves with thresholds and bounds."""
    _run(render_curves, csvs, metas, out)


@main.command("threshold-curves")
@click.option("--csv", "csvs", multiple=True, required=True)
@click.option("--meta", "metas", multiple=True)
@click.option("--out", required=True)
def threshold_curves(csvs, metas, out):
    """Two-way steerability certificate (nu) against the 1/3 threshold."""
    _run(render_threshold_curves, csvs, metas, out)


if __name__ == "__main__":
    main()
