"""Frequency-domain covariance of the filtered cavity output modes.

The stationary fluctuations obey R(w) = -M(w) N(w) with M(w) = (iw*I + A)^-1.
The output fields follow from the input-output relation, pass through the
mode-B beam splitter (homodyne scheme), and are projected onto Lorentzian
temporal modes h_j.  The equal-time covariance of the filtered quadratures is
the full-axis frequency integral of the symmetrized two-frequency correlator
evaluated on the stationary diagonal w' = -w.

All noise correlator blocks are assembled here; every optical vacuum input
has quadrature variance 1/2, and the mechanical force noise is white with
diffusion gamma_m*(2 n_th + 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SingularMatrixError, UnstableModelError
from .model import LinearModel, is_stable
from .params import FeedbackScheme
from .quadrature import integrate_adaptive, integrate_half_line_tail

# "physical": every correlator derived from the closed-loop Langevin system
# (validated against an independent finite-bandwidth Lyapunov oracle).
# "printed": the circulating element list for the same blocks, which drops
# the homodyne-chain attenuation on the feedback/input cross terms and
# double-counts the beam-splitter port correlator; kept for comparison only.
VARIANTS = ("physical", "printed")


@dataclass(frozen=True)
class FilterSpec:
    """Causal Lorentzian output filter: center Omega, inverse bandwidth tau."""

    Omega: float
    tau: float

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ConfigError("filter inverse bandwidth tau must be > 0", "filters.tau")


@dataclass(frozen=True)
class QuadratureConfig:
    """Controls of the spectral integration.

    ``window`` sets the half-width (in units of 1/tau) of the breakpoint
    cluster seeded around each filter center; the adaptive rule refines from
    there and an inverse-frequency substitution handles the Lorentzian tails
    exactly, so the reported error estimate covers the whole axis.
    """

    rtol: float = 1e-6
    atol: float = 0.0
    window: float = 200.0
    max_panels: int = 4096

    def __post_init__(self):
        if self.rtol <= 0.0 and self.atol <= 0.0:
            raise ConfigError("quadrature needs a positive tolerance", "quadrature.rtol")
        if self.max_panels < 8:
            raise ConfigError("max_panels too small", "quadrature.max_panels")


@dataclass
class SpectralCovariance:
    """Integrand of the covariance integral at a single frequency."""

    omega: float
    raw: np.ndarray          # complex, before dropping the odd part
    symmetrized: np.ndarray  # real symmetric part actually integrated
    asym_residual: float     # transpose asymmetry relative to the scale


@dataclass
class CovarianceResult:
    cm: np.ndarray
    error: float
    n_eval: int
    asym_residual: float


def filter_response(filt: FilterSpec, omega):
    """Unit-L2-norm Lorentzian frequency response sqrt(tau/pi)/(1+i*tau*(Omega-w))."""
    omega = np.asarray(omega, dtype=float)
    return math.sqrt(filt.tau / math.pi) / (1.0 + 1j * filt.tau * (filt.Omega - omega))


def _has_active_feedback(model: LinearModel) -> bool:
    return (model.feedback.scheme is not FeedbackScheme.NONE
            and model.feedback.g_cd != 0.0)


def response_matrix(model: LinearModel, omega: float) -> np.ndarray:
    """Resolvent M(w) = (iw*I + A)^-1 of the drift."""
    a = 1j * omega * np.eye(model.dim) + model.drift
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"iw*I + A is singular at omega={omega}") from exc


def _response_batch(drift: np.ndarray, omegas: np.ndarray) -> np.ndarray:
    dim = drift.shape[0]
    a = 1j * omegas[:, None, None] * np.eye(dim)[None] + drift[None]
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("drift response singular inside the integration "
                                  "domain (marginally stable model?)") from exc


# ---------------------------------------------------------------------------
# noise correlator blocks
# ---------------------------------------------------------------------------

def _white_diffusion_diag(model: LinearModel) -> np.ndarray:
    """Diagonal of the white part of the noise correlator."""
    p = model.params
    d = [0.0, p.thermal_diffusion, p.kappa_a, p.kappa_a, p.kappa_b, p.kappa_b]
    if model.dim == 8:
        d += [p.kappa_c, p.kappa_c]
    return np.array(d)


def white_diffusion(model: LinearModel) -> np.ndarray:
    """Feedback-off diffusion matrix (valid only for g_cd = 0)."""
    return np.diag(_white_diffusion_diag(model))


@dataclass
class NoiseBlocks:
    """Two-frequency correlator blocks entering the output covariance."""

    D_fb: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray | None
    D4: np.ndarray | None


def noise_blocks(model: LinearModel, omega: float, omega_prime: float,
                 variant: str = "physical") -> NoiseBlocks:
    """Assemble the correlator blocks at frequencies (w, w').

    The feedback-loop noise adds frequency-dependent elements to the white
    diffusion: the (p, p) self term, the (p, Y) cross terms with the
    monitored quadrature (attenuated by the homodyne chain sqrt(sigma)*r),
    a matching (p, Y) element of the input-output cross block D2, and the
    open beam-splitter port correlator D4.  The ``printed`` variant
    reproduces the circulating element list instead (diagnostic only; it is
    not consistent with the closed-loop dynamics).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    fb = model.feedback
    p = model.params
    dim = model.dim
    D_fb = np.diag(_white_diffusion_diag(model)).astype(complex)
    D1 = np.zeros((dim, dim))
    D2 = np.zeros((dim, dim), dtype=complex)
    D1[2:6, 2:6] = 0.5 * np.eye(4)
    for i, kap in ((2, p.kappa_a), (3, p.kappa_a), (4, p.kappa_b), (5, p.kappa_b)):
        D2[i, i] = math.sqrt(kap / 2.0)
    D3 = None
    D4 = None

    if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE:
        g, s, r, kb = fb.g_cd, fb.sigma, fb.r, p.kappa_b
        chain = 1.0 if variant == "printed" else math.sqrt(s) * r
        D_fb[1, 1] += (g ** 2 * s * r ** 2 * kb
                       * (1.0 + 1j * omega / (2.0 * kb))
                       * (1.0 + 1j * omega_prime / (2.0 * kb))
                       - omega * omega_prime * g ** 2 / (4.0 * kb) * (1.0 - r ** 2 * s))
        D_fb[1, 5] += -chain * g * kb * (1.0 + 1j * omega / (2.0 * kb))
        D_fb[5, 1] += -chain * g * kb * (1.0 + 1j * omega_prime / (2.0 * kb))
        if variant == "physical":
            D2[1, 5] = -0.5 * math.sqrt(s) * r * g * math.sqrt(2.0 * kb) \
                * (1.0 + 1j * omega / (2.0 * kb))
        D3 = np.zeros((dim, dim))
        D3[4, 4] = D3[5, 5] = 0.5
        D4 = np.zeros((dim, dim), dtype=complex)
        if variant == "physical":
            D4[1, 5] = 0.5j * omega * math.sqrt(s) * g * fb.t / math.sqrt(2.0 * kb)
        else:
            D4[1, 5] = -1j * omega * math.sqrt(s) * g * fb.t / math.sqrt(2.0 * kb)
    elif fb.scheme is FeedbackScheme.THIRD_MODE:
        g, kc = fb.g_cd, p.kappa_c
        D_fb[1, 1] += (g ** 2 * kc * (1.0 + 1j * omega / (2.0 * kc))
                       * (1.0 + 1j * omega_prime / (2.0 * kc)))
        D_fb[1, 7] += -g * kc * (1.0 + 1j * omega / (2.0 * kc))
        D_fb[7, 1] += -g * kc * (1.0 + 1j * omega_prime / (2.0 * kc))
    return NoiseBlocks(D_fb=D_fb, D1=D1, D2=D2, D3=D3, D4=D4)


# ---------------------------------------------------------------------------
# batched integrand
# ---------------------------------------------------------------------------

def _filter_transform_batch(model: LinearModel, filters: tuple[FilterSpec, FilterSpec],
                            omegas: np.ndarray) -> np.ndarray:
    """Frequency image of the real filter matrix T(t).

    The real/imaginary parts of the causal kernels map to
    Re h -> (h(w) + h*(-w))/2 and Im h -> (h(w) - h*(-w))/(2i); mechanical
    (and mode-C) rows carry delta-function filters, i.e. identity blocks.
    """
    n = len(omegas)
    T = np.zeros((n, model.dim, model.dim), dtype=complex)
    T[:, 0, 0] = T[:, 1, 1] = 1.0
    for filt, i in zip(filters, (2, 4)):
        h = filter_response(filt, omegas)
        hmc = np.conj(filter_response(filt, -omegas))
        re = 0.5 * (h + hmc)
        im = (h - hmc) / 2j
        T[:, i, i] = re
        T[:, i, i + 1] = -im
        T[:, i + 1, i] = im
        T[:, i + 1, i + 1] = re
    if model.dim == 8:
        T[:, 6, 6] = T[:, 7, 7] = 1.0
    return T


def _dfb_batch(model: LinearModel, omegas: np.ndarray, variant: str) -> np.ndarray:
    """D_fb(w, -w) for a batch of frequencies."""
    fb = model.feedback
    p = model.params
    n = len(omegas)
    dfb = np.zeros((n, model.dim, model.dim), dtype=complex)
    idx = np.arange(model.dim)
    dfb[:, idx, idx] = _white_diffusion_diag(model)[None, :]
    if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE and fb.g_cd != 0.0:
        g, s, r, kb = fb.g_cd, fb.sigma, fb.r, p.kappa_b
        chain = 1.0 if variant == "printed" else math.sqrt(s) * r
        dfb[:, 1, 1] += (g ** 2 * s * r ** 2 * kb * (1.0 + (omegas / (2.0 * kb)) ** 2)
                         + omegas ** 2 * g ** 2 / (4.0 * kb) * (1.0 - r ** 2 * s))
        dfb[:, 1, 5] += -chain * g * kb * (1.0 + 1j * omegas / (2.0 * kb))
        dfb[:, 5, 1] += -chain * g * kb * (1.0 - 1j * omegas / (2.0 * kb))
    elif fb.scheme is FeedbackScheme.THIRD_MODE and fb.g_cd != 0.0:
        g, kc = fb.g_cd, p.kappa_c
        dfb[:, 1, 1] += g ** 2 * kc * (1.0 + (omegas / (2.0 * kc)) ** 2)
        dfb[:, 1, 7] += -g * kc * (1.0 + 1j * omegas / (2.0 * kc))
        dfb[:, 7, 1] += -g * kc * (1.0 - 1j * omegas / (2.0 * kc))
    return dfb


class _OutputIntegrand:
    """Batched evaluator of the symmetrized output-covariance integrand.

    Evaluating at +w and -w in one resolvent call, the two-term frequency
    symmetrization reduces to taking the real part of
    T(w) C(w,-w) T(-w)^T, whose imaginary part is tracked as a residual.
    """

    def __init__(self, model: LinearModel, filters: tuple[FilterSpec, FilterSpec],
                 variant: str = "physical", io_sign: float | None = None):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.model = model
        self.filters = filters
        self.variant = variant
        self._max_imag_abs = 0.0
        self._max_real_abs = 0.0
        # Derivative feedback feeds white noise scaled by w into the momentum,
        # so the stationary (p, p) variance is cutoff dependent (a finite loop
        # bandwidth, out of scope here, would regularize it).  Every filtered
        # entry converges; the divergent diagonal entry is masked.
        self.mask_pp = _has_active_feedback(model)

        p = model.params
        fb = model.feedback
        dim = model.dim
        self.P = np.array([1.0, 1.0,
                           math.sqrt(2 * p.kappa_a), math.sqrt(2 * p.kappa_a),
                           math.sqrt(2 * p.kappa_b), math.sqrt(2 * p.kappa_b)]
                          + ([1.0, 1.0] if dim == 8 else []))
        d1 = np.zeros(dim)
        d1[2:6] = 0.5
        self.D1 = np.diag(d1)
        d2 = np.zeros(dim)
        d2[2] = d2[3] = math.sqrt(p.kappa_a / 2.0)
        d2[4] = d2[5] = math.sqrt(p.kappa_b / 2.0)
        self.d2 = d2
        # relative sign of the input-output cross terms PM(w)D2 + D2M(-w)P;
        # +1 preserves vacuum outputs (the printed three-mode expression
        # subtracts them instead, which does not)
        self.io_sign = 1.0 if io_sign is None else io_sign
        if fb.scheme is FeedbackScheme.MODE_B_HOMODYNE:
            self.tt = np.array([1.0, 1.0, 1.0, 1.0, fb.t, fb.t])
            d3term = np.zeros(dim)
            d3term[4] = d3term[5] = 0.5 * fb.r ** 2
            self.D3_term = np.diag(d3term)
        else:
            self.tt = np.ones(dim)
            self.D3_term = np.zeros((dim, dim))

    def __call__(self, omegas: np.ndarray) -> np.ndarray:
        w = np.asarray(omegas, dtype=float)
        n = len(w)
        M2 = _response_batch(self.model.drift, np.concatenate([w, -w]))
        Mw, Mmw = M2[:n], M2[n:]
        X = self._two_frequency_block(w, Mw, Mmw)
        Tw = _filter_transform_batch(self.model, self.filters, w)
        out = Tw @ X @ np.conj(Tw).transpose(0, 2, 1)
        if self.mask_pp:
            out[:, 1, 1] = 0.0
        # the odd (imaginary) part cancels exactly in the two-term frequency
        # symmetrization; what must vanish numerically is the transpose
        # asymmetry of the even part
        re = out.real
        self._max_real_abs = max(self._max_real_abs, float(np.max(np.abs(re))))
        self._max_imag_abs = max(self._max_imag_abs,
                                 float(np.max(np.abs(re - re.transpose(0, 2, 1)))))
        return re

    @property
    def asym_residual(self) -> float:
        """Largest transpose asymmetry relative to the integrand scale."""
        return self._max_imag_abs / max(self._max_real_abs, 1e-300)

    def _two_frequency_block(self, w, Mw, Mmw):
        """C(w, -w): output correlator before the temporal-mode projection."""
        P = self.P
        p = self.model.params
        fb = self.model.feedback
        PMw = P[None, :, None] * Mw
        MmwTP = Mmw.transpose(0, 2, 1) * P[None, None, :]
        dfb = _dfb_batch(self.model, w, self.variant)
        core = PMw @ dfb @ MmwTP
        cross_io = PMw * self.d2[None, None, :] + self.d2[None, :, None] * MmwTP
        homodyne_on = (fb.scheme is FeedbackScheme.MODE_B_HOMODYNE and fb.g_cd != 0.0)
        if homodyne_on and self.variant == "physical":
            # feedback noise is correlated with the bare mode-B input, adding
            # a (p, Y_b) element to the input-output cross correlator
            kb = p.kappa_b
            e_w = (-0.5 * math.sqrt(fb.sigma) * fb.r * fb.g_cd * math.sqrt(2.0 * kb)
                   * (1.0 + 1j * w / (2.0 * kb)))
            cross_io[:, :, 5] += Mw[:, :, 1] * P[None, :] * e_w[:, None]
            cross_io[:, 5, :] += Mmw[:, :, 1] * P[None, :] * np.conj(e_w)[:, None]
        inner = core + self.D1[None] + self.io_sign * cross_io
        inner = self.tt[None, :, None] * inner * self.tt[None, None, :]
        inner = inner + self.D3_term[None]
        if homodyne_on:
            kb = p.kappa_b
            if self.variant == "physical":
                d4 = 0.5j * w * math.sqrt(fb.sigma) * fb.g_cd * fb.t / math.sqrt(2.0 * kb)
                sign = 1.0
            else:
                d4 = -1j * w * math.sqrt(fb.sigma) * fb.g_cd * fb.t / math.sqrt(2.0 * kb)
                sign = -1.0
            colv = (self.tt * P)[None, :] * Mw[:, :, 1] * (d4 * fb.r)[:, None]
            rowv = (self.tt * P)[None, :] * Mmw[:, :, 1] * (np.conj(d4) * fb.r)[:, None]
            F = np.zeros_like(inner)
            F[:, :, 5] += colv
            F[:, 5, :] += rowv
            inner = inner + sign * F
        return inner


def output_spectral_covariance(model: LinearModel, filters: tuple[FilterSpec, FilterSpec],
                               omega: float, **kwargs) -> SpectralCovariance:
    """Covariance integrand at a single frequency (diagnostic entry point)."""
    integrand = _OutputIntegrand(model, filters, **kwargs)
    w = np.array([float(omega)])
    n = 1
    M2 = _response_batch(model.drift, np.concatenate([w, -w]))
    X = integrand._two_frequency_block(w, M2[:n], M2[n:])
    Tw = _filter_transform_batch(model, filters, w)
    raw = (Tw @ X @ np.conj(Tw).transpose(0, 2, 1))[0]
    sym = raw.real
    scale = max(np.max(np.abs(sym)), 1e-300)
    return SpectralCovariance(omega=float(omega), raw=raw, symmetrized=sym,
                              asym_residual=float(np.max(np.abs(sym - sym.T)) / scale))


# ---------------------------------------------------------------------------
# full-axis integration
# ---------------------------------------------------------------------------

def _breakpoints(model: LinearModel, filters, quad: QuadratureConfig) -> tuple[np.ndarray, float]:
    """Panel seeds on the positive half axis and the finite-domain edge L.

    Clusters of edges are laid geometrically around each filter center at
    multiples of 1/tau and around each drift resonance at multiples of its
    linewidth; the integrand is even, so only w >= 0 is needed.
    """
    pts = {0.0}
    centers = []
    if filters is not None:
        for f in filters:
            centers.append((abs(f.Omega), 1.0 / f.tau))
    eig = np.linalg.eigvals(model.drift)
    for lam in eig:
        if abs(lam.imag) > 1e-12:
            centers.append((abs(lam.imag), max(abs(lam.real), 1e-6)))
    w_max = max([c for c, _ in centers], default=1.0)
    L = 5.0 * max(w_max, 1.0)
    if filters is not None:
        tau_min = min(f.tau for f in filters)
        L = max(L, max(abs(f.Omega) for f in filters) + 2.0 * quad.window / tau_min)
    for c, s in centers:
        pts.add(c)
        for m in (1.0, 3.0, 10.0, 30.0, 100.0, quad.window):
            for sgn in (-1.0, 1.0):
                pts.add(c + sgn * m * s)
    return np.array(sorted(p for p in pts if 0.0 <= p < L)), L


def integrate_covariance(model: LinearModel, filters: tuple[FilterSpec, FilterSpec],
                         quad: QuadratureConfig | None = None, *,
                         check_stability: bool = True, **kwargs) -> CovarianceResult:
    """Stationary covariance matrix of the filtered output quadratures.

    Integrates the symmetrized spectral covariance over the full frequency
    axis (half axis doubled, by evenness; tails via an inverse-frequency
    substitution) and returns the exactly symmetrized real matrix.

    Raises
    ------
    UnstableModelError
        If the drift has an eigenvalue with non-negative real part.
    ToleranceNotMetError
        If adaptive refinement stalls above the requested tolerance.
    """
    quad = quad or QuadratureConfig()
    if check_stability:
        rep = is_stable(model)
        if not rep.stable:
            raise UnstableModelError(
                f"cannot integrate an unstable model (margin {rep.margin:.3e})")
    integrand = _OutputIntegrand(model, filters, **kwargs)
    bps, L = _breakpoints(model, filters, quad)
    main = integrate_adaptive(integrand, 0.0, L, breakpoints=bps,
                              rtol=quad.rtol, atol=quad.atol,
                              max_panels=quad.max_panels)
    tail = integrate_half_line_tail(integrand, L, rtol=max(quad.rtol, 1e-8),
                                    atol=0.25 * quad.rtol * float(np.max(np.abs(main.value))))
    cm = 2.0 * (main.value + tail.value)
    cm = 0.5 * (cm + cm.T)
    if integrand.mask_pp:
        cm[1, 1] = math.nan
    return CovarianceResult(cm=cm, error=2.0 * (main.error + tail.error),
                            n_eval=main.n_eval + tail.n_eval,
                            asym_residual=integrand.asym_residual)


def integrate_intracavity_covariance(model: LinearModel,
                                     quad: QuadratureConfig | None = None, *,
                                     check_stability: bool = True) -> CovarianceResult:
    """Stationary intracavity covariance from the frequency-domain response.

    V = (1/2pi) * Int dw Re[M(w) D_fb(w,-w) M(-w)^T]; for white noise this
    equals the Lyapunov steady state and serves as the cross-method check.
    """
    quad = quad or QuadratureConfig()
    if check_stability:
        rep = is_stable(model)
        if not rep.stable:
            raise UnstableModelError(
                f"cannot integrate an unstable model (margin {rep.margin:.3e})")

    mask_pp = _has_active_feedback(model)

    def f(omegas):
        w = np.asarray(omegas, dtype=float)
        n = len(w)
        M2 = _response_batch(model.drift, np.concatenate([w, -w]))
        Mw, Mmw = M2[:n], M2[n:]
        dfb = _dfb_batch(model, w, "physical")
        out = (Mw @ dfb @ Mmw.transpose(0, 2, 1)).real
        if mask_pp:
            out[:, 1, 1] = 0.0
        return out

    bps, L = _breakpoints(model, None, quad)
    main = integrate_adaptive(f, 0.0, L, breakpoints=bps, rtol=quad.rtol,
                              atol=quad.atol, max_panels=quad.max_panels)
    tail = integrate_half_line_tail(f, L, rtol=max(quad.rtol, 1e-8),
                                    atol=0.25 * quad.rtol * float(np.max(np.abs(main.value))))
    cm = (main.value + tail.value) / math.pi
    cm = 0.5 * (cm + cm.T)
    if mask_pp:
        cm[1, 1] = math.nan
    return CovarianceResult(cm=cm, error=(main.error + tail.error) / math.pi,
                            n_eval=main.n_eval + tail.n_eval, asym_residual=0.0)
