"""Two-mode Gaussian state metrics from 4x4 quadrature covariance matrices.

Convention: vacuum covariance is I/2 (quadratures X = (a+a^+)/sqrt(2)).
Block layout of a bipartite CM:

    V = [[A, C], [C^T, B]]

with 2x2 blocks for Alice (mode A), Bob (mode B) and their correlations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (NonPhysicalError, NonPositiveGammaError, SingularBlockError)

Z = np.diag([1.0, -1.0])

#: smallest partial-transpose symplectic eigenvalue (doubled) certifying
#: two-way steerability, hence secure teleportation above 2/3
TWO_WAY_THRESHOLD = 1.0 / 3.0


def symplectic_form(n_modes: int) -> np.ndarray:
    """Direct sum of n [[0, 1], [-1, 0]] blocks."""
    j = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n_modes), j)


def blocks(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(A, B, C) blocks of a 4x4 bipartite covariance matrix."""
    V = np.asarray(V, dtype=float)
    return V[:2, :2], V[2:, 2:], V[:2, 2:]


def reduce_bipartite(V_full: np.ndarray, mode_indices: tuple[int, int] = (2, 4)) -> np.ndarray:
    """4x4 sub-covariance of two modes of a larger CM.

    ``mode_indices`` are the row offsets of the (X, Y) pairs to keep; the
    default picks the two optical output modes of the 6- or 8-dim state.
    """
    i, j = mode_indices
    idx = [i, i + 1, j, j + 1]
    V = np.asarray(V_full, dtype=float)[np.ix_(idx, idx)]
    return 0.5 * (V + V.T)


def physicality_margin(V: np.ndarray) -> float:
    """Smallest eigenvalue of V + (i/2)*Omega; >= 0 for a physical state."""
    n = V.shape[0] // 2
    herm = V + 0.5j * symplectic_form(n)
    return float(np.min(np.linalg.eigvalsh(herm)))


def assert_physical(V: np.ndarray, tol: float = 1e-9) -> None:
    m = physicality_margin(V)
    if m < -tol:
        raise NonPhysicalError(f"covariance violates the uncertainty bound by {-m:.3e}")


def pt_symplectic_min(V: np.ndarray) -> float:
    """Smallest symplectic eigenvalue of the partially transposed CM.

    nu_-^2 = (Dt - sqrt(Dt^2 - 4 det V))/2 with Dt = det A + det B - 2 det C,
    evaluated in the rationalized form 2 det V / (Dt + sqrt(...)) to avoid
    the cancellation that otherwise erodes strongly squeezed states.
    """
    A, B, C = blocks(V)
    dt = np.linalg.det(A) + np.linalg.det(B) - 2.0 * np.linalg.det(C)
    det_v = np.linalg.det(np.asarray(V, dtype=float))
    disc = dt * dt - 4.0 * det_v
    if disc < 0.0:
        if disc < -1e-12 * max(dt * dt, 1.0):
            raise NonPhysicalError(
                f"partial-transpose discriminant negative ({disc:.3e}); CM not physical")
        disc = 0.0
    denom = dt + math.sqrt(disc)
    if denom <= 0.0 or det_v <= 0.0:
        raise NonPhysicalError(
            f"nu_-^2 not positive (det V = {det_v:.3e}); CM not physical")
    return math.sqrt(2.0 * det_v / denom)


def log_negativity(V: np.ndarray) -> float:
    """E_N = max(0, -ln(2 nu_-))."""
    return max(0.0, -math.log(2.0 * pt_symplectic_min(V)))


def transmissivity(alpha_db_per_km: float, length_km: float, eta0: float = 1.0,
                   base: str = "e") -> float:
    """Channel transmissivity eta0 * b^(-alpha*l/10).

    ``base="e"`` follows the loss model used for the operating points here;
    ``base="10"`` is the conventional dB reading.  Both are clipped to [0, 1].
    """
    if base == "e":
        eta = eta0 * math.exp(-alpha_db_per_km * length_km / 10.0)
    elif base == "10":
        eta = eta0 * 10.0 ** (-alpha_db_per_km * length_km / 10.0)
    else:
        raise ValueError(f"loss base must be 'e' or '10', got {base!r}")
    return min(1.0, max(0.0, eta))


def apply_loss(V: np.ndarray, eta: float) -> np.ndarray:
    """Beam-splitter loss on both modes: V -> eta*V + (1-eta)/2 * I."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("transmissivity must lie in [0, 1]")
    V = np.asarray(V, dtype=float)
    return eta * V + 0.5 * (1.0 - eta) * np.eye(V.shape[0])


def teleport_fidelity(V: np.ndarray, V_in: np.ndarray | None = None, *,
                      literal_det_form: bool = False) -> float:
    """Fidelity of teleporting a Gaussian state through the channel V.

    F = 1/sqrt(det Gamma) with Gamma = 2 V_in + B + Z A Z + Z C + C^T Z.
    The square-root form is the one that gives F = 1/2 for an uncorrelated
    vacuum channel and saturates the optimal bound on symmetric two-mode
    squeezed channels; ``literal_det_form`` exposes 1/det(Gamma) for
    comparison.
    """
    if V_in is None:
        V_in = 0.5 * np.eye(2)
    A, B, C = blocks(V)
    gamma = 2.0 * np.asarray(V_in, dtype=float) + B + Z @ A @ Z + Z @ C + C.T @ Z
    det_g = float(np.linalg.det(gamma))
    if det_g <= 0.0:
        raise NonPositiveGammaError(f"teleportation kernel has det = {det_g:.3e} <= 0")
    if literal_det_form:
        return 1.0 / det_g
    return 1.0 / math.sqrt(det_g)


def fidelity_upper_bound(E_N: float) -> float:
    """Optimal coherent-state teleportation fidelity 1/(1 + exp(-E_N))."""
    if E_N < 0.0:
        raise ValueError("log-negativity must be >= 0")
    return 1.0 / (1.0 + math.exp(-E_N))


def steering(V: np.ndarray, direction: str = "B|A") -> float:
    """Gaussian steering of one mode by measurements on the other.

    E_{B|A} = max(0, -ln(2 sqrt(det Y))) with Y = B - C^T A^-1 C, the Schur
    complement of the measured (steering) party; direction "A|B" swaps the
    roles.  The factor 2 normalizes det Y = 1/4 (vacuum) to zero steering.
    """
    A, B, C = blocks(V)
    if direction == "B|A":
        cond, rest, cross = A, B, C
    elif direction == "A|B":
        cond, rest, cross = B, A, C.T
    else:
        raise ValueError("direction must be 'B|A' or 'A|B'")
    det_cond = float(np.linalg.det(cond))
    if abs(det_cond) < 1e-300:
        raise SingularBlockError("conditioning block is singular")
    schur = rest - cross.T @ np.linalg.inv(cond) @ cross
    det_s = float(np.linalg.det(schur))
    if det_s <= 0.0:
        raise NonPhysicalError(f"Schur complement has det = {det_s:.3e} <= 0")
    return max(0.0, -math.log(2.0 * math.sqrt(det_s)))


def two_way_steerable(V: np.ndarray) -> bool:
    """Certificate 2 nu_- < 1/3 for steering in both directions."""
    return 2.0 * pt_symplectic_min(V) < TWO_WAY_THRESHOLD


@dataclass(frozen=True)
class MetricsRecord:
    """All scalar figures of merit of one evaluated two-mode state."""

    E_N: float
    nu: float
    F: float
    F_bound: float
    E_BA: float
    E_AB: float
    two_way: bool
    stable_margin: float


def evaluate_metrics(V: np.ndarray, stable_margin: float = float("nan")) -> MetricsRecord:
    """MetricsRecord of a (possibly lossy) bipartite output state."""
    nu_minus = pt_symplectic_min(V)
    e_n = max(0.0, -math.log(2.0 * nu_minus))
    return MetricsRecord(
        E_N=e_n,
        nu=2.0 * nu_minus,
        F=teleport_fidelity(V),
        F_bound=fidelity_upper_bound(e_n),
        E_BA=steering(V, "B|A"),
        E_AB=steering(V, "A|B"),
        two_way=2.0 * nu_minus < TWO_WAY_THRESHOLD,
        stable_margin=stable_margin,
    )


def two_mode_squeezed(s: float, correlation_sign: float = -1.0) -> np.ndarray:
    """Covariance of a two-mode squeezed vacuum with squeezing parameter s.

    The default correlation sign gives x-difference/p-sum squeezing (the
    EPR-correlated convention that contracts the teleportation kernel).
    """
    c, q = 0.5 * math.cosh(2.0 * s), 0.5 * math.sinh(2.0 * s)
    V = np.zeros((4, 4))
    V[:2, :2] = c * np.eye(2)
    V[2:, 2:] = c * np.eye(2)
    V[:2, 2:] = correlation_sign * q * Z
    V[2:, :2] = correlation_sign * q * Z
    return V
