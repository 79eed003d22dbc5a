"""Figure rendering for optomfb sweep outputs (strictly a CSV consumer)."""

from .io import METRIC_COLUMNS, SchemaError, SweepData, read_sweep
from .render import (cancellation_curve, render_contour2d, render_curves,
                     render_threshold_curves, save_figure)

__version__ = "0.1.0"
