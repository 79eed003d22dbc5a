"""Simulation pipeline, parameter sweeps, gain optimization and oracles."""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import config as cfg
from .errors import (ConfigError, NoStableRegionError, OptomfbError,
                     UnstableModelError)
from .gaussian import MetricsRecord, apply_loss, evaluate_metrics, reduce_bipartite
from .model import LinearModel, StabilityReport, build_model, is_stable
from .params import FeedbackScheme
from .spectra import integrate_covariance, white_diffusion

#: fixed CSV column order after the parameter columns (external contract)
METRIC_COLUMNS = ("E_N", "F", "F_bound", "nu", "E_BA", "E_AB",
                  "two_way", "stable", "margin", "quad_err")


@dataclass
class SimulationOutput:
    metrics: MetricsRecord
    cm_full: np.ndarray
    cm_ab: np.ndarray
    cm_ab_lossless: np.ndarray
    stability: StabilityReport
    quad_err: float
    eta: float | None


def simulate_point(config: cfg.RunConfig) -> SimulationOutput:
    """Full pipeline at one parameter point.

    build drift -> stability check -> spectral integration -> bipartite
    reduction -> optional loss channel -> metrics.
    """
    model = build_model(config.system, config.feedback)
    report = is_stable(model)
    if not report.stable:
        raise UnstableModelError(
            f"drift is unstable at this point (margin {report.margin:.3e})")
    result = integrate_covariance(model, config.filters, config.quadrature,
                                  check_stability=False)
    v_ab = reduce_bipartite(result.cm, (2, 4))
    eta = None
    v_out = v_ab
    if config.loss is not None:
        eta = config.loss.eta()
        v_out = apply_loss(v_ab, eta)
    metrics = evaluate_metrics(v_out, stable_margin=report.margin)
    return SimulationOutput(metrics=metrics, cm_full=result.cm, cm_ab=v_out,
                            cm_ab_lossless=v_ab, stability=report,
                            quad_err=result.error, eta=eta)


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    values: tuple[float, ...]
    metrics: MetricsRecord | None
    stable: bool
    margin: float | None
    quad_err: float | None
    error: str | None
    wall_time: float


@dataclass
class ResultTable:
    axes: tuple[cfg.SweepAxis, ...]
    rows: list[SweepRow]
    base_label: str = "run"

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)

    def header(self) -> list[str]:
        return list(self.param_names) + list(METRIC_COLUMNS)

    def csv_rows(self):
        def fmt(x):
            if x is None:
                return ""
            if isinstance(x, bool):
                return "true" if x else "false"
            return repr(float(x))

        for row in self.rows:
            m = row.metrics
            yield ([fmt(v) for v in row.values]
                   + [fmt(m.E_N) if m else "", fmt(m.F) if m else "",
                      fmt(m.F_bound) if m else "", fmt(m.nu) if m else "",
                      fmt(m.E_BA) if m else "", fmt(m.E_AB) if m else "",
                      fmt(m.two_way) if m else "", fmt(row.stable),
                      fmt(row.margin), fmt(row.quad_err)])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.header())
            writer.writerows(self.csv_rows())

    def metric_array(self, name: str) -> np.ndarray:
        """Metric values in grid order, NaN at unstable/failed points."""
        vals = [getattr(r.metrics, name) if r.metrics else math.nan for r in self.rows]
        shape = tuple(len(ax.values) for ax in self.axes) or (1,)
        return np.array(vals, dtype=float).reshape(shape)


def sweep_points(axes: tuple[cfg.SweepAxis, ...]):
    """Grid points in deterministic row-major order (first axis outermost)."""
    if not axes:
        return [()]
    return list(itertools.product(*(ax.values for ax in axes)))


def _evaluate_sweep_point(args) -> SweepRow:
    raw, names, values = args
    t0 = time.perf_counter()
    try:
        config = cfg.parse_config(raw)
        model = build_model(config.system, config.feedback)
        report = is_stable(model)
        if not report.stable:
            return SweepRow(values=values, metrics=None, stable=False,
                            margin=report.margin, quad_err=None,
                            error="unstable", wall_time=time.perf_counter() - t0)
        out = simulate_point(config)
        return SweepRow(values=values, metrics=out.metrics, stable=True,
                        margin=out.stability.margin, quad_err=out.quad_err,
                        error=None, wall_time=time.perf_counter() - t0)
    except OptomfbError as exc:
        return SweepRow(values=values, metrics=None, stable=False, margin=None,
                        quad_err=None, error=str(exc),
                        wall_time=time.perf_counter() - t0)


def _point_task(config: cfg.RunConfig, names, values):
    raw = copy.deepcopy(config.raw)
    raw.pop("sweep", None)
    for name, value in zip(names, values):
        cfg.set_by_path(raw, name, float(value))
    return (raw, names, values)


def run_sweep(config: cfg.RunConfig, *, workers: int = 1, progress=None,
              skip: int = 0, on_row=None) -> ResultTable:
    """Evaluate the configured sweep grid point by point.

    Per-point failures (instability, quadrature stalls) are recorded in the
    row and never abort the sweep.  Rows are assembled in grid order
    regardless of worker completion order, so the result is deterministic.
    ``skip`` drops the first points (resume support); ``on_row`` is called
    with each finished row in order.
    """
    axes = config.sweep_axes
    if not axes:
        raise ConfigError("configuration has no sweep section", "sweep")
    names = tuple(ax.name for ax in axes)
    points = sweep_points(axes)[skip:]
    tasks = [_point_task(config, names, values) for values in points]

    rows: list[SweepRow] = []
    if workers <= 1:
        iterator = map(_evaluate_sweep_point, tasks)
    else:
        pool = concurrent.futures.ProcessPoolExecutor(max_workers=workers)
        iterator = pool.map(_evaluate_sweep_point, tasks, chunksize=4)
    for i, row in enumerate(iterator):
        rows.append(row)
        if on_row is not None:
            on_row(row)
        if progress is not None:
            progress(i + 1, len(tasks))
    if workers > 1:
        pool.shutdown()
    return ResultTable(axes=axes, rows=rows, base_label=config.label)


# ---------------------------------------------------------------------------
# gain optimization
# ---------------------------------------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OptimizeResult:
    g_opt: float
    value: float
    objective: str
    bracket: tuple[float, float]
    history: list[tuple[float, float]] = field(default_factory=list)


def optimize_gain(config: cfg.RunConfig, bounds: tuple[float, float] = (0.0, 0.12),
                  objective: str = "E_N", *, coarse: int = 64,
                  xtol: float = 1e-4) -> OptimizeResult:
    """Maximize a metric over the feedback gain.

    A coarse scan brackets the maximum on the stable part of ``bounds``;
    golden-section refinement then narrows the bracket below ``xtol``.  The
    objective passes through the adaptive integrator, so derivative-free
    search is the reliable choice.
    """
    history: list[tuple[float, float]] = []

    def f(g: float) -> float:
        try:
            out = simulate_point(cfg.with_override(config, "feedback.g_cd", float(g)))
        except OptomfbError:
            return -math.inf
        value = getattr(out.metrics, objective)
        history.append((float(g), float(value)))
        return value

    grid = np.linspace(bounds[0], bounds[1], coarse)
    coarse_vals = np.array([f(g) for g in grid])
    if not np.any(np.isfinite(coarse_vals)):
        raise NoStableRegionError(
            f"no stable point in gain bounds [{bounds[0]}, {bounds[1]}]")
    k = int(np.nanargmax(np.where(np.isfinite(coarse_vals), coarse_vals, -np.inf)))
    lo = grid[max(0, k - 1)]
    hi = grid[min(len(grid) - 1, k + 1)]
    bracket = (float(lo), float(hi))

    # golden-section ascent on [lo, hi]
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > xtol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
    g_opt = x1 if f1 >= f2 else x2
    v_opt = max(f1, f2)
    if not math.isfinite(v_opt):
        raise NoStableRegionError("golden-section bracket collapsed onto an "
                                  "unstable region")
    return OptimizeResult(g_opt=float(g_opt), value=float(v_opt),
                          objective=objective, bracket=bracket, history=history)


# ---------------------------------------------------------------------------
# Lyapunov oracle
# ---------------------------------------------------------------------------

def solve_lyapunov_kron(A: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Solve A V + V A^T = -D by the vectorized Kronecker linear system."""
    n = A.shape[0]
    K = np.kron(np.eye(n), A) + np.kron(A, np.eye(n))
    v = np.linalg.solve(K, -np.asarray(D, dtype=float).flatten(order="F"))
    V = v.reshape((n, n), order="F")
    return 0.5 * (V + V.T)


def lyapunov_oracle(model: LinearModel) -> np.ndarray:
    """Stationary intracavity CM from A V + V A^T = -D by a direct vectorized
    linear solve.

    Valid only without feedback, where every noise is white; this is the
    independent cross-check of the frequency-domain integration.
    """
    if model.feedback.scheme is not FeedbackScheme.NONE and model.feedback.g_cd != 0.0:
        raise ConfigError("Lyapunov oracle requires feedback off (white noise)",
                          "feedback.g_cd")
    report = is_stable(model)
    if not report.stable:
        raise UnstableModelError(
            f"no stationary state: margin {report.margin:.3e}")
    return solve_lyapunov_kron(model.drift, white_diffusion(model))
