"""Physical parameter containers for the two- and three-mode optomechanical system.

All rates, detunings and couplings are expressed in units of the mechanical
frequency omega_m (omega_m = 1 internally).  SI ingestion happens once, at
construction time, via :func:`thermal_occupation` and the config layer.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import constants

from .errors import ConfigError, NonConvergenceError

MODE_LABELS = ("a", "b", "c")


def thermal_occupation(omega_m_rad_s: float, temperature_k: float) -> float:
    """Mean thermal phonon number 1/(exp(hbar*w/kB*T) - 1) of the resonator.

    ``omega_m_rad_s`` is the angular mechanical frequency in rad/s.
    """
    if temperature_k <= 0.0:
        return 0.0
    x = constants.hbar * omega_m_rad_s / (constants.k * temperature_k)
    return 1.0 / math.expm1(x)


class FeedbackScheme(enum.Enum):
    """Topology of the cold-damping feedback loop."""

    NONE = "none"
    MODE_B_HOMODYNE = "mode_b_homodyne"
    THIRD_MODE = "third_mode"


@dataclass(frozen=True)
class FeedbackSpec:
    """Feedback loop: gain, beam-splitter reflectivity and detector efficiency.

    ``r`` and ``t = sqrt(1 - r^2)`` are the reflection/transmission
    coefficients of the beam splitter on the mode-B output (mode-B homodyne
    scheme only; the third-mode scheme homodynes the full mode-C output).
    """

    scheme: FeedbackScheme = FeedbackScheme.NONE
    g_cd: float = 0.0
    r: float = 0.0
    sigma: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0):
            raise ConfigError("beam-splitter reflectivity r must lie in [0, 1]", "feedback.r")
        if not (0.0 < self.sigma <= 1.0):
            raise ConfigError("detector efficiency sigma must lie in (0, 1]", "feedback.sigma")
        if not math.isfinite(self.g_cd):
            raise ConfigError("feedback gain must be finite", "feedback.g_cd")

    @property
    def t(self) -> float:
        """Beam-splitter transmission coefficient."""
        return math.sqrt(max(0.0, 1.0 - self.r * self.r))

    @property
    def effective_gain(self) -> float:
        """Drift-level gain sqrt(sigma)*r*g_cd of the mode-B homodyne loop."""
        return math.sqrt(self.sigma) * self.r * self.g_cd

    def with_gain(self, g_cd: float) -> "FeedbackSpec":
        return FeedbackSpec(self.scheme, g_cd, self.r, self.sigma)


@dataclass(frozen=True)
class SystemParams:
    """Effective (linearized) parameters of the optomechanical system.

    Per optical mode j: amplitude decay kappa_j, effective detuning Delta_j
    and dressed coupling G_j.  Mode c is optional and only used by the
    third-mode feedback scheme.
    """

    gamma_m: float
    n_th: float
    kappa_a: float
    Delta_a: float
    G_a: float
    kappa_b: float
    Delta_b: float
    G_b: float
    kappa_c: float | None = None
    Delta_c: float | None = None
    G_c: float | None = None
    omega_m: float = 1.0

    def __post_init__(self):
        if self.gamma_m <= 0.0:
            raise ConfigError("gamma_m must be > 0", "system.gamma_m")
        if self.n_th < 0.0:
            raise ConfigError("n_th must be >= 0", "system.n_th")
        if self.omega_m <= 0.0:
            raise ConfigError("omega_m must be > 0", "system.omega_m")
        for label in ("a", "b"):
            if getattr(self, f"kappa_{label}") <= 0.0:
                raise ConfigError("kappa must be > 0", f"system.modes.{label}.kappa")
        c_fields = (self.kappa_c, self.Delta_c, self.G_c)
        if any(v is not None for v in c_fields) and any(v is None for v in c_fields):
            raise ConfigError("mode c requires kappa, Delta and G together", "system.modes.c")
        if self.kappa_c is not None and self.kappa_c <= 0.0:
            raise ConfigError("kappa must be > 0", "system.modes.c.kappa")
        for v in (self.gamma_m, self.n_th, self.kappa_a, self.Delta_a, self.G_a,
                  self.kappa_b, self.Delta_b, self.G_b):
            if not math.isfinite(v):
                raise ConfigError("all rates must be finite", "system")

    @property
    def has_mode_c(self) -> bool:
        return self.kappa_c is not None

    @property
    def n_modes(self) -> int:
        return 3 if self.has_mode_c else 2

    def mode(self, label: str) -> tuple[float, float, float]:
        """(kappa, Delta, G) of the requested optical mode."""
        if label not in MODE_LABELS[: self.n_modes]:
            raise KeyError(f"no optical mode {label!r}")
        return (getattr(self, f"kappa_{label}"),
                getattr(self, f"Delta_{label}"),
                getattr(self, f"G_{label}"))

    @property
    def thermal_diffusion(self) -> float:
        """White-noise momentum diffusion rate gamma_m*(2 n_th + 1)."""
        return self.gamma_m * (2.0 * self.n_th + 1.0)


@dataclass(frozen=True)
class DriveParams:
    """Bare drive parameters per optical mode: amplitude E, detuning delta,
    single-photon coupling g (all in omega_m units)."""

    E: tuple[float, ...]
    delta: tuple[float, ...]
    g: tuple[float, ...]

    def __post_init__(self):
        n = len(self.E)
        if not (len(self.delta) == len(self.g) == n):
            raise ConfigError("drive arrays must have equal length", "drive")
        if any(e < 0.0 for e in self.E):
            raise ConfigError("drive amplitudes must be >= 0", "drive.E")

    @property
    def n_modes(self) -> int:
        return len(self.E)


@dataclass(frozen=True)
class SteadyState:
    """Classical working point of the driven cavity.

    ``A`` holds the complex intracavity amplitudes, ``q`` the static
    mechanical displacement (p is identically zero), ``Delta`` the effective
    detunings delta_j - g_j*q and ``G`` the dressed couplings g_j*|A_j|*sqrt(2).
    """

    A: tuple[complex, ...]
    q: float
    Delta: tuple[float, ...]
    G: tuple[float, ...]
    iterations: int
    p: float = 0.0


def solve_steady_state(drive: DriveParams, kappa: tuple[float, ...],
                       omega_m: float = 1.0, *, tol: float = 1e-12,
                       max_iter: int = 10_000, damping: float = 0.5) -> SteadyState:
    """Solve the coupled fixed-point equations of the classical steady state.

    A_j = E_j/(kappa_j + i*Delta_j),  Delta_j = delta_j - g_j*q,
    q = sum_j g_j|A_j|^2 / omega_m,

    by damped fixed-point iteration on q.  The detuning shift is applied
    per mode (each mode's frequency is pulled by its own coupling).

    Raises
    ------
    NonConvergenceError
        If |dq| has not dropped below ``tol`` after ``max_iter`` iterations,
        which typically signals bistability of the chosen drive.
    """
    if len(kappa) != drive.n_modes:
        raise ConfigError("kappa must match the number of driven modes", "drive")
    E = np.asarray(drive.E, dtype=float)
    delta = np.asarray(drive.delta, dtype=float)
    g = np.asarray(drive.g, dtype=float)
    kap = np.asarray(kappa, dtype=float)

    q = 0.0
    for it in range(1, max_iter + 1):
        Delta = delta - g * q
        A = E / (kap + 1j * Delta)
        q_new = float(np.sum(g * np.abs(A) ** 2) / omega_m)
        dq = q_new - q
        q = q + damping * dq
        if abs(dq) < tol:
            Delta = delta - g * q
            A = E / (kap + 1j * Delta)
            G = g * np.abs(A) * math.sqrt(2.0)
            return SteadyState(A=tuple(A), q=q, Delta=tuple(Delta),
                               G=tuple(G), iterations=it)
    raise NonConvergenceError(
        f"steady-state iteration did not converge after {max_iter} iterations "
        f"(last |dq| = {abs(dq):.3e}); drive may be bistable")


def steady_state_residuals(state: SteadyState, drive: DriveParams,
                           kappa: tuple[float, ...], omega_m: float = 1.0) -> tuple[float, float, float]:
    """Max residuals of the three fixed-point equations at ``state``."""
    E = np.asarray(drive.E, dtype=float)
    delta = np.asarray(drive.delta, dtype=float)
    g = np.asarray(drive.g, dtype=float)
    kap = np.asarray(kappa, dtype=float)
    A = np.asarray(state.A)
    Delta = np.asarray(state.Delta)
    res_A = float(np.max(np.abs(A - E / (kap + 1j * Delta))) if len(A) else 0.0)
    res_q = abs(state.q - float(np.sum(g * np.abs(A) ** 2) / omega_m))
    res_D = float(np.max(np.abs(Delta - (delta - g * state.q))) if len(A) else 0.0)
    return res_A, res_q, res_D


def system_from_steady_state(state: SteadyState, kappa: tuple[float, ...],
                             gamma_m: float, n_th: float,
                             omega_m: float = 1.0) -> SystemParams:
    """Assemble effective SystemParams from a solved working point."""
    n = len(state.A)
    if n not in (2, 3):
        raise ConfigError("effective parameters require two or three optical modes", "drive")
    kw = {}
    for i, label in enumerate(MODE_LABELS[:n]):
        kw[f"kappa_{label}"] = kappa[i]
        kw[f"Delta_{label}"] = state.Delta[i]
        kw[f"G_{label}"] = state.G[i]
    return SystemParams(gamma_m=gamma_m, n_th=n_th, omega_m=omega_m, **kw)
