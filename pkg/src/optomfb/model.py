"""Drift matrices, stability tests and effective mechanical damping.

State ordering is fixed throughout the package:

    (dq, dp, dX_a, dY_a, dX_b, dY_b[, dX_c, dY_c])

with quadratures dX = (dA + dA^+)/sqrt(2), dY = (dA - dA^+)/(i*sqrt(2)), so
every vacuum quadrature has variance 1/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EigenFailureError
from .params import FeedbackScheme, FeedbackSpec, SystemParams

STABILITY_EPS = 1e-9
MARGINAL_BAND = 1e-7


@dataclass(frozen=True)
class LinearModel:
    """Linear fluctuation dynamics dR/dt = drift @ R + noise.

    The noise correlators are frequency dependent under feedback and are
    evaluated by :mod:`optomfb.spectra`; only the drift is stored here.
    """

    drift: np.ndarray
    params: SystemParams
    feedback: FeedbackSpec

    @property
    def dim(self) -> int:
        return self.drift.shape[0]

    def mode_indices(self, label: str) -> tuple[int, int]:
        """(X, Y) row indices of an optical mode in the state vector."""
        offset = {"a": 2, "b": 4, "c": 6}[label]
        if offset + 1 >= self.dim:
            raise KeyError(f"mode {label!r} not present in a {self.dim}-dim model")
        return offset, offset + 1


def _cavity_block(kappa: float, Delta: float) -> np.ndarray:
    return np.array([[-kappa, Delta], [-Delta, -kappa]])


def build_drift_two_mode(params: SystemParams) -> LinearModel:
    """6x6 drift of the two-mode system without feedback.

    Row 2 (dp) couples to the optical amplitude quadratures through G_j and
    each G_j feeds back into the corresponding phase-quadrature row.
    """
    w = params.omega_m
    A = np.zeros((6, 6))
    A[0, 1] = w
    A[1, 0] = -w
    A[1, 1] = -params.gamma_m
    for label in ("a", "b"):
        kappa, Delta, G = params.mode(label)
        i, j = {"a": (2, 3), "b": (4, 5)}[label]
        A[i:j + 1, i:j + 1] = _cavity_block(kappa, Delta)
        A[1, i] = G      # G_j dX_j in the dp equation
        A[j, 0] = G      # G_j dq in the dY_j equation
    return LinearModel(drift=A, params=params,
                       feedback=FeedbackSpec(FeedbackScheme.NONE))


def feedback_drift_correction(params: SystemParams, fb: FeedbackSpec) -> np.ndarray:
    """Drift correction of the mode-B homodyne loop.

    Eliminating the frequency factor of the derivative feedback force through
    the mode-B phase-quadrature equation leaves non-zero elements (1-indexed)
    (2,1) = -Gcd*G_b, (2,5) = Gcd*Delta_b, (2,6) = Gcd*kappa_b, with
    Gcd = sqrt(sigma)*r*g_cd.  Affine in g_cd.  (The q-column placement of
    the first element mirrors the third-mode loop and is what reproduces the
    closed-loop dynamics of the physical feedback force; see the mechanical
    susceptibility in :func:`effective_damping`.)
    """
    F = np.zeros((6, 6))
    gcd_eff = fb.effective_gain
    F[1, 0] = -gcd_eff * params.G_b
    F[1, 4] = gcd_eff * params.Delta_b
    F[1, 5] = gcd_eff * params.kappa_b
    return F


def apply_feedback_two_mode(model: LinearModel, fb: FeedbackSpec) -> LinearModel:
    """Add the mode-B homodyne cold-damping force to a two-mode model."""
    if fb.scheme is not FeedbackScheme.MODE_B_HOMODYNE:
        raise ConfigError("apply_feedback_two_mode requires the mode_b_homodyne scheme",
                          "feedback.scheme")
    if model.dim != 6:
        raise ConfigError("mode-B homodyne feedback applies to the two-mode model",
                          "feedback.scheme")
    drift = model.drift + feedback_drift_correction(model.params, fb)
    return LinearModel(drift=drift, params=model.params, feedback=fb)


def build_drift_three_mode(params: SystemParams, fb: FeedbackSpec) -> LinearModel:
    """8x8 drift with mode C homodyned and fed back onto the mechanics.

    The feedback force enters the dp row as (2,1) -= g_cd*G_c,
    (2,7) += g_cd*Delta_c and (2,8) = g_cd*kappa_c.  The (1,2) element is
    +omega_m, consistent with dq/dt = omega_m*p.
    """
    if not params.has_mode_c:
        raise ConfigError("three-mode drift requires mode c parameters", "system.modes.c")
    if fb.scheme not in (FeedbackScheme.THIRD_MODE, FeedbackScheme.NONE):
        raise ConfigError("build_drift_three_mode supports the third_mode scheme",
                          "feedback.scheme")
    g_cd = fb.g_cd if fb.scheme is FeedbackScheme.THIRD_MODE else 0.0
    w = params.omega_m
    A = np.zeros((8, 8))
    A[0, 1] = w
    A[1, 0] = -w - g_cd * params.G_c
    A[1, 1] = -params.gamma_m
    for label, (i, j) in {"a": (2, 3), "b": (4, 5), "c": (6, 7)}.items():
        kappa, Delta, G = params.mode(label)
        A[i:j + 1, i:j + 1] = _cavity_block(kappa, Delta)
        A[1, i] = G
        A[j, 0] = G
    A[1, 6] = params.G_c + g_cd * params.Delta_c
    A[1, 7] = g_cd * params.kappa_c
    return LinearModel(drift=A, params=params, feedback=fb)


def build_model(params: SystemParams, fb: FeedbackSpec) -> LinearModel:
    """Build the drift for the configured feedback scheme."""
    if fb.scheme is FeedbackScheme.THIRD_MODE:
        return build_drift_three_mode(params, fb)
    if params.has_mode_c:
        if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE:
            raise ConfigError("mode-B homodyne feedback is a two-mode scheme; "
                              "drop mode c or use third_mode", "feedback.scheme")
        # mode C present but not used for feedback: plain 8x8 dynamics
        return build_drift_three_mode(params, FeedbackSpec(FeedbackScheme.NONE))
    base = build_drift_two_mode(params)
    if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE:
        return apply_feedback_two_mode(base, fb)
    return LinearModel(drift=base.drift, params=params, feedback=fb)


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    stable: bool
    margin: float
    marginal: bool
    routh_hurwitz: bool | None

    @property
    def agrees(self) -> bool | None:
        """Whether the polynomial criterion matches the eigenvalue verdict."""
        if self.routh_hurwitz is None:
            return None
        return self.routh_hurwitz == self.stable


def characteristic_polynomial(A: np.ndarray) -> np.ndarray:
    """Coefficients of det(lambda*I - A), monic, by the Faddeev-LeVerrier
    recursion (no eigendecomposition, so it is independent of the
    eigenvalue-based stability test)."""
    n = A.shape[0]
    coeffs = np.empty(n + 1)
    coeffs[0] = 1.0
    M = np.zeros_like(A)
    c = 1.0
    for k in range(1, n + 1):
        M = A @ M + c * np.eye(n)
        c = -np.trace(A @ M) / k
        coeffs[k] = c
    return coeffs


def routh_hurwitz_stable(coeffs: np.ndarray, pivot_tol: float = 1e-12) -> bool | None:
    """Routh table verdict for a monic polynomial (descending coefficients).

    Returns None when a pivot falls below ``pivot_tol`` relative to the
    coefficient scale, i.e. the table is degenerate (marginal case).
    """
    c = np.asarray(coeffs, dtype=float)
    n = len(c) - 1
    if n == 0:
        return True
    scale = np.max(np.abs(c))
    if scale == 0.0:
        return None
    width = (n + 2) // 2
    rows = np.zeros((n + 1, width + 1))
    rows[0, : len(c[0::2])] = c[0::2]
    rows[1, : len(c[1::2])] = c[1::2]
    for i in range(2, n + 1):
        pivot = rows[i - 1, 0]
        if abs(pivot) < pivot_tol * scale:
            return None
        for j in range(width):
            rows[i, j] = (pivot * rows[i - 2, j + 1]
                          - rows[i - 2, 0] * rows[i - 1, j + 1]) / pivot
    first_col = rows[: n + 1, 0]
    if np.any(np.abs(first_col) < pivot_tol * scale):
        return None
    return bool(np.all(first_col > 0.0))


def is_stable(model: LinearModel, eps: float = STABILITY_EPS) -> StabilityReport:
    """Eigenvalue stability of the drift with a Routh-Hurwitz cross-check.

    margin = -max Re(lambda); stable iff margin > eps.  Verdicts within
    ``MARGINAL_BAND`` of the boundary are flagged marginal.
    """
    try:
        eigvals = np.linalg.eigvals(model.drift)
    except np.linalg.LinAlgError as exc:
        raise EigenFailureError(f"eigenvalue solver failed: {exc}") from exc
    margin = float(-np.max(eigvals.real))
    rh = routh_hurwitz_stable(characteristic_polynomial(model.drift))
    return StabilityReport(stable=margin > eps, margin=margin,
                           marginal=abs(margin) < MARGINAL_BAND,
                           routh_hurwitz=rh)


# ---------------------------------------------------------------------------
# effective mechanical damping and heating cancellation
# ---------------------------------------------------------------------------

def _backaction_term(G: float, Delta: float, kappa: float, omega: float, Q_m: float) -> float:
    denom = (kappa ** 2 + (omega - Delta) ** 2) * (kappa ** 2 + (omega + Delta) ** 2)
    return 2.0 * G ** 2 * Delta * Q_m * kappa / denom


def _feedback_term_coefficient(G: float, Delta: float, kappa: float,
                               omega: float, Q_m: float) -> float:
    """Feedback contribution to gamma_eff/gamma_m per unit drift-level gain."""
    denom = (kappa ** 2 + (omega - Delta) ** 2) * (kappa ** 2 + (omega + Delta) ** 2)
    return (Delta ** 2 + omega ** 2 + kappa ** 2) * kappa * G * Q_m / denom


def effective_damping(params: SystemParams, fb: FeedbackSpec, omega: float) -> float:
    """Frequency-dependent effective mechanical damping gamma_eff(omega).

    Sums the radiation-pressure backaction of every optical mode and, when
    feedback is on, the cold-damping contribution of the measured mode
    (mode B via sqrt(sigma)*r*g_cd, or mode C via g_cd).
    """
    Q_m = params.omega_m / params.gamma_m
    labels = ("a", "b", "c") if params.has_mode_c else ("a", "b")
    total = 1.0
    for label in labels:
        kappa, Delta, G = params.mode(label)
        total += _backaction_term(G, Delta, kappa, omega, Q_m)
    if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE:
        kappa, Delta, G = params.mode("b")
        total += fb.effective_gain * _feedback_term_coefficient(G, Delta, kappa, omega, Q_m)
    elif fb.scheme is FeedbackScheme.THIRD_MODE:
        kappa, Delta, G = params.mode("c")
        total += fb.g_cd * _feedback_term_coefficient(G, Delta, kappa, omega, Q_m)
    return params.gamma_m * total


def resonant_damping_terms(params: SystemParams, fb: FeedbackSpec) -> dict[str, float]:
    """Resolved-sideband decomposition of gamma_eff(omega_m).

    Valid for Delta_a = -Delta_b (= -Delta_c) = omega_m and kappa << omega_m.
    The feedback is folded into the term of the measured mode, so the mode-B
    entry vanishes identically at the heating-cancellation gain.
    """
    w = params.omega_m
    terms = {"bare": params.gamma_m,
             "mode_a": params.G_a ** 2 / (2.0 * params.kappa_a)}
    if fb.scheme is FeedbackScheme.THIRD_MODE:
        terms["mode_b"] = -params.G_b ** 2 / params.kappa_b
        terms["mode_c"] = -params.G_c ** 2 / (2.0 * params.kappa_c)
        terms["feedback"] = params.G_c * w * fb.g_cd / (2.0 * params.kappa_c)
    else:
        gain = fb.effective_gain if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE else 0.0
        terms["mode_b"] = -params.G_b * (params.G_b - w * gain) / (2.0 * params.kappa_b)
        if params.has_mode_c:
            terms["mode_c"] = -params.G_c ** 2 / (2.0 * params.kappa_c)
    return terms


def effective_damping_resonant(params: SystemParams, fb: FeedbackSpec) -> float:
    """gamma_eff(omega_m) in the resolved-sideband approximation."""
    return sum(resonant_damping_terms(params, fb).values())


def heating_cancellation_gain(params: SystemParams, fb: FeedbackSpec) -> float:
    """Feedback gain at which cold damping cancels the heating backaction.

    Mode-B homodyne scheme: g_cd = G_b/(sqrt(sigma)*r*omega_m), the gain that
    zeroes the mode-B term of the resonant damping decomposition.

    Third-mode scheme: the gain that zeroes the net negative (heating)
    backaction terms of the full gamma_eff formula at omega = omega_m.
    """
    if fb.scheme is FeedbackScheme.THIRD_MODE:
        if params.G_c is None or params.G_c <= 0.0:
            raise ZeroDivisionError("heating cancellation requires G_c > 0")
        Q_m = params.omega_m / params.gamma_m
        w = params.omega_m
        negative = 0.0
        for label in ("a", "b", "c"):
            kappa, Delta, G = params.mode(label)
            term = _backaction_term(G, Delta, kappa, w, Q_m)
            if term < 0.0:
                negative += term
        kappa, Delta, G = params.mode("c")
        coeff = _feedback_term_coefficient(G, Delta, kappa, w, Q_m)
        return -negative / coeff
    if fb.r <= 0.0 or fb.sigma <= 0.0:
        raise ZeroDivisionError("heating cancellation requires r > 0 and sigma > 0")
    return params.G_b / (math.sqrt(fb.sigma) * fb.r * params.omega_m)


def three_mode_gain_closed_forms(params: SystemParams) -> dict[str, float]:
    """Closed-form candidates for the third-mode cancellation gain.

    The three algebraic reductions circulating for this quantity disagree at
    O(1); they are reported side by side for comparison with the numerically
    zeroed value of :func:`heating_cancellation_gain`.
    """
    if not params.has_mode_c:
        raise ConfigError("closed forms require mode c", "system.modes.c")
    kb, kc = params.kappa_b, params.kappa_c
    Gb, Gc = params.G_b, params.G_c
    w = params.omega_m
    num = kc * Gb ** 2 + kb * Gc ** 2
    return {
        "kappa_b_normalized": num / (kb * w * Gc),
        "kappa_c_normalized": num / (kc * w * Gc),
        "resonant_sum_cancelling": (2.0 * kc * Gb ** 2 + kb * Gc ** 2) / (kb * w * Gc),
    }
