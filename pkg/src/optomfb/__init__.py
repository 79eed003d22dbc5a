"""Stationary Gaussian dynamics of a driven optomechanical cavity with
measurement-based cold-damping feedback: filtered output entanglement,
teleportation fidelity and steering."""

from .config import LossConfig, RunConfig, load_config, parse_config
from .errors import (ConfigError, EigenFailureError, NoStableRegionError,
                     NonConvergenceError, NonPhysicalError,
                     NonPositiveGammaError, OptomfbError, SingularBlockError,
                     SingularMatrixError, ToleranceNotMetError,
                     UnstableModelError)
from .experiments import (OptimizeResult, ResultTable, SimulationOutput,
                          lyapunov_oracle, optimize_gain, run_sweep,
                          simulate_point)
from .gaussian import (MetricsRecord, apply_loss, evaluate_metrics,
                       fidelity_upper_bound, log_negativity,
                       physicality_margin, pt_symplectic_min,
                       reduce_bipartite, steering, teleport_fidelity,
                       transmissivity, two_mode_squeezed, two_way_steerable)
from .model import (LinearModel, StabilityReport, apply_feedback_two_mode,
                    build_drift_three_mode, build_drift_two_mode, build_model,
                    effective_damping, effective_damping_resonant,
                    heating_cancellation_gain, is_stable,
                    resonant_damping_terms, three_mode_gain_closed_forms)
from .params import (DriveParams, FeedbackScheme, FeedbackSpec, SteadyState,
                     SystemParams, solve_steady_state, thermal_occupation)
from .spectra import (CovarianceResult, FilterSpec, QuadratureConfig,
                      filter_response, integrate_covariance,
                      integrate_intracavity_covariance, noise_blocks,
                      output_spectral_covariance, response_matrix)
from .validate import ValidationReport, validate_suite

__version__ = "0.1.0"
