"""Reading and validating optomfb sweep outputs (CSV + JSON sidecar)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

#: fixed metric columns of the sweep CSV contract, in order
METRIC_COLUMNS = ("E_N", "F", "F_bound", "nu", "E_BA", "E_AB",
                  "two_way", "stable", "margin", "quad_err")


class SchemaError(Exception):
    """CSV does not conform to the sweep-output contract."""


@dataclass
class SweepData:
    """One sweep result: parameter columns plus the metric table."""

    path: str
    param_names: tuple[str, ...]
    params: np.ndarray            # (n, n_params)
    metrics: dict[str, np.ndarray]
    meta: dict | None = None

    @property
    def n_rows(self) -> int:
        return self.params.shape[0]

    @property
    def label(self) -> str:
        if self.meta:
            cfg = self.meta.get("config", {})
            out = cfg.get("output") or {}
            if out.get("label"):
                return str(out["label"])
        return Path(self.path).stem

    @property
    def has_loss(self) -> bool:
        return bool(self.meta and (self.meta.get("config") or {}).get("loss"))

    def axis_values(self, index: int = 0) -> np.ndarray:
        return np.unique(self.params[:, index])

    def grid(self, name: str) -> np.ndarray:
        """Metric reshaped onto the sweep grid (1- or 2-D, NaN where null)."""
        shape = tuple(len(self.axis_values(i)) for i in range(len(self.param_names)))
        return self.metrics[name].reshape(shape)


def _parse_cell(value: str) -> float:
    if value == "":
        return math.nan
    if value == "true":
        return 1.0
    if value == "false":
        return 0.0
    return float(value)


def read_sweep(csv_path, meta_path=None) -> SweepData:
    """Load a sweep CSV (and optional sidecar), validating the column contract.

    Raises
    ------
    SchemaError
        With the offending column names when the header does not end with the
        documented metric columns.
    """
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{csv_path}: empty file, no header") from None
        rows = [row for row in reader if row]

    n_metrics = len(METRIC_COLUMNS)
    if len(header) <= n_metrics or tuple(header[-n_metrics:]) != METRIC_COLUMNS:
        raise SchemaError(
            f"{csv_path}: header {header} does not end with the metric columns "
            f"{list(METRIC_COLUMNS)}")
    param_names = tuple(header[:-n_metrics])

    params = np.array([[float(r[i]) for i in range(len(param_names))] for r in rows],
                      dtype=float).reshape(len(rows), len(param_names))
    metrics = {}
    for j, name in enumerate(METRIC_COLUMNS):
        col = len(param_names) + j
        metrics[name] = np.array([_parse_cell(r[col]) for r in rows])

    meta = None
    if meta_path is not None:
        with open(meta_path) as fh:
            meta = json.load(fh)
    return SweepData(path=str(csv_path), param_names=param_names, params=params,
                     metrics=metrics, meta=meta)


def derived_parameters(data: SweepData) -> dict:
    """Overlay inputs (G_b, sigma, omega_m, eta) from the sidecar metadata."""
    if not data.meta or "derived" not in data.meta:
        raise SchemaError(f"{data.path}: overlays need the sidecar metadata "
                          "(run with its .meta.json)")
    return data.meta["derived"]
