"""Command-line front end: simulate | sweep | optimize | validate | print-config.

Exit codes: 0 success, 2 configuration error, 3 unstable operating point,
4 numerical failure (quadrature stall, singular response), 1 validation
failures.  Result files are written atomically (temp + rename).
"""

from __future__ import annotations

import copy
import datetime
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

import click
import yaml

from . import __version__
from . import config as cfg
from .errors import (ConfigError, EigenFailureError, NoStableRegionError,
                     SingularMatrixError, ToleranceNotMetError,
                     UnstableModelError)
from .gaussian import transmissivity
from .experiments import (ResultTable, optimize_gain, run_sweep,
                          simulate_point, sweep_points)
from .validate import validate_suite

EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_NUMERICAL = 4

_NUMERICAL_ERRORS = (ToleranceNotMetError, SingularMatrixError, EigenFailureError)


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fingerprint(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, default=float)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _load(config_path: str, loss_base: str | None) -> cfg.RunConfig:
    try:
        run = cfg.load_config(config_path)
        if loss_base is not None and run.loss is not None:
            raw = copy.deepcopy(run.raw)
            raw["loss"]["base"] = loss_base
            run = cfg.parse_config(raw)
        return run
    except ConfigError as exc:
        click.echo(f"configuration error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)


def _metadata(config: cfg.RunConfig, started: str, extra: dict) -> dict:
    meta = {
        "tool": "optomfb",
        "version": __version__,
        "started_at": started,
        "finished_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config.raw,
        "fingerprint": _fingerprint(config.raw),
        "derived": {
            "eta": config.loss.eta() if config.loss else None,
            "eta_base10": (transmissivity(config.loss.alpha_db_per_km,
                                          config.loss.length_km,
                                          config.loss.eta0, "10")
                           if config.loss else None),
            "G_b": config.system.G_b,
            "sigma": config.feedback.sigma,
            "omega_m": config.system.omega_m,
            "n_th": config.system.n_th,
        },
    }
    meta.update(extra)
    return meta


@click.group()
@click.version_option(__version__)
def main():
    """Filtered-output entanglement of a feedback-controlled optomechanical
    cavity: simulation, sweeps, gain optimization and validation."""


@main.command()
@click.option("--config", "config_path", required=True,
              help="YAML config file or preset name (fig2, fig3, ...).")
@click.option("--out", "out_dir", default=None, help="Directory for CM dumps.")
@click.option("--dump-cm", is_flag=True, help="Write the covariance matrices to JSON.")
@click.option("--loss-base", type=click.Choice(["e", "10"]), default=None,
              help="Override the attenuation base of the loss model.")
def simulate(config_path, out_dir, dump_cm, loss_base):
    """Evaluate all metrics at the configured operating point (JSON on stdout)."""
    config = _load(config_path, loss_base)
    try:
        out = simulate_point(config)
    except UnstableModelError as exc:
        click.echo(f"unstable: {exc}", err=True)
        sys.exit(EXIT_UNSTABLE)
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    m = out.metrics
    payload = {
        "E_N": m.E_N, "F": m.F, "F_bound": m.F_bound, "nu": m.nu,
        "E_BA": m.E_BA, "E_AB": m.E_AB, "two_way": m.two_way,
        "stable_margin": m.stable_margin, "quad_err": out.quad_err,
        "eta": out.eta,
    }
    click.echo(json.dumps(payload, indent=2))
    if dump_cm:
        directory = Path(out_dir or config.output_dir)
        path = directory / f"{config.label}.cm.json"
        _atomic_write_text(path, json.dumps({
            "cm_full": out.cm_full.tolist(),
            "cm_ab": out.cm_ab.tolist(),
            "cm_ab_lossless": out.cm_ab_lossless.tolist(),
        }, indent=2))
        click.echo(f"covariance matrices written to {path}", err=True)


def _worker_count(workers: int | None) -> int:
    if workers is not None:
        return max(1, workers)
    env = os.environ.get("OPTOMFB_WORKERS")
    return max(1, int(env)) if env else 1


@main.command()
@click.option("--config", "config_path", required=True)
@click.option("--out", "out_dir", default=None, help="Output directory.")
@click.option("--workers", type=int, default=None,
              help="Parallel workers (or set OPTOMFB_WORKERS).")
@click.option("--resume", is_flag=True, help="Continue an interrupted sweep.")
@click.option("--loss-base", type=click.Choice(["e", "10"]), default=None)
def sweep(config_path, out_dir, workers, resume, loss_base):
    """Run the configured parameter sweep; writes CSV + JSON sidecar."""
    config = _load(config_path, loss_base)
    if not config.sweep_axes:
        click.echo("configuration error: sweep: no sweep section", err=True)
        sys.exit(EXIT_CONFIG)
    directory = Path(out_dir or config.output_dir)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{config.label}.csv"
    meta_path = directory / f"{config.label}.meta.json"
    partial_path = directory / f"{config.label}.partial.csv"
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()

    checkpoint_path = directory / f"{config.label}.partial.meta.json"
    table = ResultTable(axes=config.sweep_axes, rows=[], base_label=config.label)
    n_total = len(sweep_points(config.sweep_axes))
    fingerprint = _fingerprint(config.raw)
    skip = 0
    mode = "w"
    if resume and partial_path.exists():
        checkpoint_ok = False
        if checkpoint_path.exists():
            checkpoint = json.loads(checkpoint_path.read_text())
            checkpoint_ok = checkpoint.get("fingerprint") == fingerprint
        with open(partial_path) as fh:
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
        header_ok = bool(lines) and lines[0].split(",") == table.header()
        if checkpoint_ok and header_ok:
            skip = len(lines) - 1
            mode = "a"
            click.echo(f"resuming after {skip}/{n_total} completed points", err=True)
        else:
            click.echo("partial file does not match this sweep; restarting", err=True)
    if mode == "w":
        _atomic_write_text(checkpoint_path, json.dumps(
            {"fingerprint": fingerprint, "started_at": started, "n_points": n_total}))
    import csv as _csv
    with open(partial_path, mode, newline="") as fh:
        writer = _csv.writer(fh)
        if mode == "w":
            writer.writerow(table.header())

        def on_row(row):
            writer.writerow(next(iter(ResultTable(axes=config.sweep_axes,
                                                  rows=[row]).csv_rows())))
            fh.flush()

        run_sweep(config, workers=_worker_count(workers), skip=skip, on_row=on_row)
    os.replace(partial_path, csv_path)
    checkpoint_path.unlink(missing_ok=True)
    with open(csv_path) as fh:
        n_unstable = sum(1 for line in fh.read().splitlines()[1:]
                         if line.split(",")[len(config.sweep_axes) + 7 + 1] == "false")
    meta = _metadata(config, started, {
        "kind": "sweep",
        "axes": [{"name": ax.name, "values": list(ax.values)} for ax in config.sweep_axes],
        "columns": table.header(),
        "n_points": n_total,
        "n_unstable_or_failed": n_unstable,
        "csv": csv_path.name,
    })
    _atomic_write_text(meta_path, json.dumps(meta, indent=2))
    click.echo(f"wrote {csv_path} ({n_total} rows, {n_unstable} unstable/failed) "
               f"and {meta_path}", err=True)


@main.command()
@click.option("--config", "config_path", required=True)
@click.option("--out", "out_dir", default=None)
@click.option("--objective", type=click.Choice(["E_N", "F"]), default="E_N")
@click.option("--bounds", nargs=2, type=float, default=(0.0, 0.12),
              help="Feedback-gain search interval.")
@click.option("--loss-base", type=click.Choice(["e", "10"]), default=None)
def optimize(config_path, out_dir, objective, bounds, loss_base):
    """Maximize a metric over the feedback gain (JSON on stdout)."""
    config = _load(config_path, loss_base)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        result = optimize_gain(config, tuple(bounds), objective)
    except NoStableRegionError as exc:
        click.echo(f"unstable: {exc}", err=True)
        sys.exit(EXIT_UNSTABLE)
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(EXIT_NUMERICAL)
    payload = {
        "objective": result.objective,
        "g_opt": result.g_opt,
        "value": result.value,
        "bracket": list(result.bracket),
        "n_evaluations": len(result.history),
        "history": [[g, v] for g, v in result.history],
    }
    click.echo(json.dumps(payload, indent=2))
    if out_dir is not None:
        path = Path(out_dir) / f"{config.label}.optimum.json"
        _atomic_write_text(path, json.dumps(
            _metadata(config, started, {"kind": "optimize", "result": payload}),
            indent=2))
        click.echo(f"optimum written to {path}", err=True)


@main.command()
@click.option("--config", "config_path", default=None,
              help="Optional config; defaults to the reference operating point.")
@click.option("--out", "out_dir", default=None, help="Directory for the report file.")
def validate(config_path, out_dir):
    """Run the invariant/oracle validation suite; exit 1 on failures."""
    config = _load(config_path, None) if config_path else None
    report = validate_suite(config)
    text = report.format()
    click.echo(text)
    if out_dir is not None:
        label = config.label if config else "default"
        _atomic_write_text(Path(out_dir) / f"{label}.validate.txt", text + "\n")
    sys.exit(0 if report.ok else 1)


@main.command("print-config")
@click.option("--config", "config_path", default=None,
              help="Config or preset to resolve; omit to list presets.")
def print_config(config_path):
    """Echo the fully resolved configuration as YAML."""
    if config_path is None:
        click.echo("shipped presets:")
        for name in cfg.PRESET_NAMES:
            click.echo(f"  {name}")
        return
    config = _load(config_path, None)
    click.echo(yaml.safe_dump(config.raw, sort_keys=False))


if __name__ == "__main__":
    main()
