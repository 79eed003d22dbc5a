"""Self-contained validation suite: invariants, analytic limits and oracles.

Each check returns pass/fail/skip plus a residual; checks that codify the
documented discrepancies between the circulating correlator element lists and the
closed-loop dynamics report status ``xfail`` (expected to fail, non-blocking)
so that the exit status of ``optomfb validate`` flags only new breakage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import config as cfg
from .errors import OptomfbError, UnstableModelError
from .experiments import lyapunov_oracle, solve_lyapunov_kron
from .gaussian import (apply_loss, evaluate_metrics, fidelity_upper_bound,
                       log_negativity, physicality_margin, pt_symplectic_min,
                       reduce_bipartite, steering, teleport_fidelity,
                       two_mode_squeezed)
from .model import (build_drift_two_mode, build_model, effective_damping,
                    feedback_drift_correction, heating_cancellation_gain,
                    is_stable, resonant_damping_terms)
from .params import (DriveParams, FeedbackScheme, FeedbackSpec, SystemParams,
                     solve_steady_state, steady_state_residuals)
from .spectra import (FilterSpec, QuadratureConfig, integrate_covariance,
                      integrate_intracavity_covariance, _OutputIntegrand)

_TWO_WAY = 1.0 / 3.0


@dataclass
class CheckResult:
    name: str
    status: str          # pass | fail | skip | xfail
    detail: str = ""
    residual: float | None = None


@dataclass
class ValidationReport:
    checks: list[CheckResult]

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.checks if c.status == "fail")

    @property
    def ok(self) -> bool:
        return self.n_failed == 0

    def format(self) -> str:
        width = max(len(c.name) for c in self.checks) + 2
        lines = []
        for c in self.checks:
            res = "" if c.residual is None else f"  residual={c.residual:.3e}"
            detail = f"  ({c.detail})" if c.detail else ""
            lines.append(f"{c.name:<{width}} {c.status.upper():5s}{res}{detail}")
        lines.append(f"-- {len(self.checks)} checks, "
                     f"{sum(c.status == 'pass' for c in self.checks)} passed, "
                     f"{self.n_failed} failed, "
                     f"{sum(c.status == 'skip' for c in self.checks)} skipped, "
                     f"{sum(c.status == 'xfail' for c in self.checks)} expected-fail")
        return "\n".join(lines)


def _check(name, fn, *, xfail=False):
    try:
        ok, detail, residual = fn()
    except UnstableModelError as exc:
        return CheckResult(name, "skip", f"unstable: {exc}")
    except OptomfbError as exc:
        return CheckResult(name, "fail" if not xfail else "xfail", str(exc))
    if ok:
        return CheckResult(name, "pass", detail, residual)
    return CheckResult(name, "xfail" if xfail else "fail", detail, residual)


def _default_system() -> SystemParams:
    return SystemParams(gamma_m=1.5e-5, n_th=833.0,
                        kappa_a=0.01, Delta_a=1.0, G_a=0.065,
                        kappa_b=0.01, Delta_b=-1.0, G_b=0.04)


def _two_mode_restriction(system: SystemParams) -> SystemParams:
    if not system.has_mode_c:
        return system
    return SystemParams(gamma_m=system.gamma_m, n_th=system.n_th,
                        omega_m=system.omega_m,
                        kappa_a=system.kappa_a, Delta_a=system.Delta_a,
                        G_a=system.G_a, kappa_b=system.kappa_b,
                        Delta_b=system.Delta_b, G_b=system.G_b)


def _default_filters() -> tuple[FilterSpec, FilterSpec]:
    return (FilterSpec(Omega=1.0, tau=2000.0), FilterSpec(Omega=-1.0, tau=2000.0))


def validate_suite(config: cfg.RunConfig | None = None, *,
                   n_stability_draws: int = 1000,
                   n_lyapunov_draws: int = 12) -> ValidationReport:
    """Run every invariant and example check against a configuration.

    Stability-dependent checks are skipped (not failed) when the base
    configuration is unstable.
    """
    if config is not None:
        system = config.system
        feedback = config.feedback
        filters = config.filters
        quad = config.quadrature
    else:
        system = _default_system()
        feedback = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE,
                                g_cd=0.047, r=0.56, sigma=0.92)
        filters = _default_filters()
        quad = QuadratureConfig()
    checks: list[CheckResult] = []

    # -- model ---------------------------------------------------------------
    def drift_elements():
        m = build_drift_two_mode(system)
        A = m.drift
        w = system.omega_m
        expected = np.zeros((6, 6))
        expected[0, 1] = w
        expected[1, 0] = -w
        expected[1, 1] = -system.gamma_m
        for lb, (i, j) in {"a": (2, 3), "b": (4, 5)}.items():
            kap, de, g = system.mode(lb)
            expected[i, i] = expected[j, j] = -kap
            expected[i, j] = de
            expected[j, i] = -de
            expected[1, i] = g
            expected[j, 0] = g
        res = float(np.max(np.abs(A - expected)))
        return res == 0.0, "all listed entries reproduced, unlisted exactly zero", res
    checks.append(_check("model.drift_element_list", drift_elements))

    def feedback_affine():
        fb1 = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.031, r=0.56, sigma=0.92)
        fb2 = fb1.with_gain(2.0 * fb1.g_cd)
        F1 = feedback_drift_correction(system, fb1)
        F2 = feedback_drift_correction(system, fb2)
        res = float(np.max(np.abs(F2 - 2.0 * F1)))
        dg = 0.01  # affine: the difference quotient is step-size independent
        fd = (feedback_drift_correction(system, fb1.with_gain(fb1.g_cd + dg))
              - F1) / dg
        res = max(res, float(np.max(np.abs(fd - F1 / fb1.g_cd))))
        return res < 1e-12, "drift correction affine in the gain", res
    checks.append(_check("model.feedback_affine", feedback_affine))

    def stability_agreement():
        rng = np.random.default_rng(20240811)
        n_checked = disagree = 0
        while n_checked < n_stability_draws:
            kap_a, kap_b, ga, gb, gm = 10.0 ** rng.uniform(-4, 0, 5)
            de_a, de_b = rng.uniform(-2, 2, 2)
            p = SystemParams(gamma_m=gm, n_th=10.0, kappa_a=kap_a, Delta_a=de_a,
                             G_a=ga, kappa_b=kap_b, Delta_b=de_b, G_b=gb)
            if rng.uniform() < 0.5:
                fb = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE,
                                  g_cd=10.0 ** rng.uniform(-4, 0),
                                  r=rng.uniform(0, 1), sigma=rng.uniform(0.5, 1))
            else:
                fb = FeedbackSpec(FeedbackScheme.NONE)
            rep = is_stable(build_model(p, fb))
            if abs(rep.margin) < 1e-7 or rep.routh_hurwitz is None:
                continue
            n_checked += 1
            if rep.routh_hurwitz != rep.stable:
                disagree += 1
        return disagree == 0, f"{n_checked} draws outside the marginal band", float(disagree)
    checks.append(_check("model.stability_rh_agreement", stability_agreement))

    def steady_state():
        drive = DriveParams(E=(1e3, 8e2), delta=(1.0, -1.0), g=(1e-5, 1e-5))
        kap = (system.kappa_a, system.kappa_b)
        st = solve_steady_state(drive, kap, system.omega_m)
        res = max(steady_state_residuals(st, drive, kap, system.omega_m))
        return res < 1e-10, "fixed-point residuals", res
    checks.append(_check("model.steady_state_residuals", steady_state))

    two_mode = _two_mode_restriction(system)

    def cancellation_algebra():
        fb = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.0, r=0.56, sigma=0.92)
        gain = heating_cancellation_gain(two_mode, fb)
        terms = resonant_damping_terms(two_mode, fb.with_gain(gain))
        res = abs(terms["mode_b"])
        full = effective_damping(two_mode, fb.with_gain(gain), two_mode.omega_m)
        red = sum(terms.values())
        rel = abs(full - red) / red
        ok = res < 1e-10 and rel < 1e-3
        return ok, f"resonant mode-B term zero; full-vs-reduced rel diff {rel:.2e}", res
    checks.append(_check("model.heating_cancellation", cancellation_algebra))

    def margin_scan():
        fb = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.0, r=0.56, sigma=0.92)
        gain = heating_cancellation_gain(two_mode, fb)
        if gain == 0.0:
            return True, "no heating term to cancel at G_b = 0", 0.0
        gs = np.linspace(0.0, 0.12, 121)
        margins = [is_stable(build_model(two_mode, fb.with_gain(g))).margin for g in gs]
        g_max = float(gs[int(np.argmax(margins))])
        rel = abs(g_max - gain) / gain
        return rel <= 0.10, (f"margin argmax {g_max:.4f} vs cancellation gain "
                             f"{gain:.4f}; spectral abscissa is polariton-pinned"), rel
    checks.append(_check("model.margin_max_near_cancellation", margin_scan, xfail=True))

    # -- spectra ---------------------------------------------------------------
    def vacuum_limit():
        p = SystemParams(gamma_m=system.gamma_m, n_th=0.0,
                         kappa_a=system.kappa_a, Delta_a=system.Delta_a, G_a=0.0,
                         kappa_b=system.kappa_b, Delta_b=system.Delta_b, G_b=0.0)
        m = build_model(p, FeedbackSpec(FeedbackScheme.NONE))
        res = integrate_covariance(m, filters, quad)
        dev = float(np.max(np.abs(reduce_bipartite(res.cm, (2, 4)) - 0.5 * np.eye(4))))
        return dev < 1e-6, "filtered vacuum equals I/2", dev
    checks.append(_check("spectra.vacuum_limit", vacuum_limit))

    def diverted_output():
        fb = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.02, r=1.0, sigma=0.92)
        m = build_model(two_mode, fb)
        res = integrate_covariance(m, filters, quad)
        V = reduce_bipartite(res.cm, (2, 4))
        dev = max(float(np.max(np.abs(V[2:, 2:] - 0.5 * np.eye(2)))),
                  float(np.max(np.abs(V[:2, 2:]))))
        return dev < 1e-6, "fully reflected mode B leaves beam-splitter vacuum", dev
    checks.append(_check("spectra.diverted_output_r1", diverted_output))

    def lyapunov_equivalence():
        rng = np.random.default_rng(7)
        worst = 0.0
        n_done = 0
        while n_done < n_lyapunov_draws:
            p = SystemParams(gamma_m=10 ** rng.uniform(-4, -1), n_th=rng.uniform(0, 100),
                             kappa_a=10 ** rng.uniform(-3, 0), Delta_a=rng.uniform(-2, 2),
                             G_a=10 ** rng.uniform(-3, -0.5),
                             kappa_b=10 ** rng.uniform(-3, 0), Delta_b=rng.uniform(-2, 2),
                             G_b=10 ** rng.uniform(-3, -0.5))
            m = build_model(p, FeedbackSpec(FeedbackScheme.NONE))
            if is_stable(m).margin < 1e-3:
                continue
            n_done += 1
            V1 = integrate_intracavity_covariance(m, quad).cm
            V2 = lyapunov_oracle(m)
            worst = max(worst, float(np.linalg.norm(V1 - V2) / np.linalg.norm(V2)))
        return worst < 1e-4, f"{n_done} stable draws", worst
    checks.append(_check("spectra.lyapunov_equivalence", lyapunov_equivalence))

    def integrand_symmetry():
        m = build_model(system, feedback)
        res = integrate_covariance(m, filters, quad)
        return res.asym_residual < 1e-8, "transpose asymmetry of the symmetrized integrand", \
            res.asym_residual
    checks.append(_check("spectra.integrand_symmetry", integrand_symmetry))

    def physicality():
        m = build_model(system, feedback)
        res = integrate_covariance(m, filters, quad)
        margin = physicality_margin(reduce_bipartite(res.cm, (2, 4)))
        return margin > -1e-9, "V + i/2 Omega >= 0", float(margin)
    checks.append(_check("spectra.physicality", physicality))

    def quadrature_robustness():
        m = build_model(system, feedback)
        r1 = integrate_covariance(m, filters, QuadratureConfig(rtol=quad.rtol))
        r2 = integrate_covariance(m, filters, QuadratureConfig(rtol=0.5 * quad.rtol))
        change = float(np.nanmax(np.abs(r1.cm - r2.cm)))
        return change <= r1.error, "halving rtol moves entries less than the estimate", change
    checks.append(_check("spectra.quadrature_robustness", quadrature_robustness))

    def peak_dominance():
        m = build_model(system, feedback)
        intg = _OutputIntegrand(m, filters)
        from .quadrature import integrate_adaptive
        tau = min(f.tau for f in filters)
        win = 100.0 / tau
        total = integrate_covariance(m, filters, quad).cm
        parts = []
        for f in filters:
            c = abs(f.Omega)
            part = integrate_adaptive(intg, c - win, c + win,
                                      breakpoints=[c], rtol=1e-8)
            parts.append(part.value)
        windowed = 2.0 * sum(parts)
        opt = slice(2, 6)
        tot_o = total[opt, opt]
        win_o = windowed[opt, opt]
        mask = np.abs(tot_o) > 1e-9
        frac = float(np.min(np.abs(win_o[mask]) / np.abs(tot_o[mask])))
        return frac >= 0.99, "fraction of optical-block mass inside the filter windows", frac
    checks.append(_check("spectra.filter_peak_dominance", peak_dominance))

    def printed_variant_deviation():
        m = build_model(system, feedback)
        v_phys = integrate_covariance(m, filters, quad).cm
        v_printed = integrate_covariance(m, filters, quad, variant="printed").cm
        dev = float(np.nanmax(np.abs(v_phys - v_printed)))
        pm = physicality_margin(reduce_bipartite(v_printed, (2, 4)))
        return pm > -1e-9, (f"printed-variant element list deviates by {dev:.2e} and "
                            f"violates physicality by {min(pm, 0):.2e}"), float(pm)
    checks.append(_check("spectra.printed_variant_physicality", printed_variant_deviation,
                         xfail=True))

    # -- gaussian ----------------------------------------------------------------
    def tmsv():
        worst = 0.0
        for s in (0.3, 1.0, 2.0):
            V = two_mode_squeezed(s)
            worst = max(worst, abs(pt_symplectic_min(V) - 0.5 * math.exp(-2 * s)))
            worst = max(worst, abs(log_negativity(V) - 2 * s))
            worst = max(worst, abs(steering(V, "B|A") - math.log(math.cosh(2 * s))))
            f = teleport_fidelity(V)
            worst = max(worst, abs(f - 1.0 / (1.0 + math.exp(-2 * s))))
            worst = max(worst, abs(f - fidelity_upper_bound(log_negativity(V))))
        return worst < 1e-9, "two-mode squeezed closed forms", worst
    checks.append(_check("gaussian.tmsv_analytics", tmsv))

    def threshold_algebra():
        e = math.log(2.0)
        res = abs(fidelity_upper_bound(e) - 2.0 / 3.0)
        ok = res < 1e-12
        ok = ok and fidelity_upper_bound(e + 1e-9) > 2.0 / 3.0
        ok = ok and fidelity_upper_bound(e - 1e-9) < 2.0 / 3.0
        return ok, "bound crosses 2/3 exactly at ln 2", res
    checks.append(_check("gaussian.threshold_algebra", threshold_algebra))

    def loss_monotonicity():
        V = two_mode_squeezed(1.0)
        ens = [log_negativity(apply_loss(V, eta)) for eta in np.linspace(1, 0, 11)]
        diffs = np.diff(ens)
        ok = bool(np.all(diffs <= 1e-12))
        return ok, "E_N non-increasing as transmission drops", float(np.max(diffs))
    checks.append(_check("gaussian.loss_monotonicity", loss_monotonicity))

    def metrics_consistency():
        m = build_model(system, feedback)
        res = integrate_covariance(m, filters, quad)
        V = reduce_bipartite(res.cm, (2, 4))
        worst = 0.0
        for eta in (1.0, 0.891):
            rec = evaluate_metrics(apply_loss(V, eta))
            worst = max(worst, rec.F - rec.F_bound)
            if rec.two_way and not (rec.E_BA > 1e-9 and rec.E_AB > 1e-9):
                return False, "two-way certificate without positive steering", None
        return worst <= 1e-9, "F <= F_bound and certificate consistency", worst
    checks.append(_check("gaussian.bound_dominance", metrics_consistency))

    # -- experiments ---------------------------------------------------------------
    def lyapunov_scalar():
        V = solve_lyapunov_kron(np.array([[-0.3]]), np.array([[0.3]]))
        return abs(V[0, 0] - 0.5) < 1e-12, "vacuum-bath cavity variance 1/2", \
            abs(V[0, 0] - 0.5)
    checks.append(_check("experiments.lyapunov_scalar", lyapunov_scalar))

    if feedback.scheme is FeedbackScheme.THIRD_MODE and system.has_mode_c:
        benefit_base = FeedbackSpec(FeedbackScheme.THIRD_MODE)
        benefit_gains = np.linspace(0.0, 0.2, 9)
        benefit_system = system
    else:
        benefit_base = FeedbackSpec(FeedbackScheme.MODE_B_HOMODYNE, g_cd=0.0,
                                    r=feedback.r or 0.56, sigma=feedback.sigma)
        benefit_gains = np.linspace(0.0, 0.12, 9)
        benefit_system = two_mode

    def _gain_curve(metric):
        out = []
        for g in benefit_gains:
            m = build_model(benefit_system, benefit_base.with_gain(float(g)))
            if not is_stable(m).stable:
                out.append(np.nan)
                continue
            V = reduce_bipartite(integrate_covariance(m, filters, quad,
                                                      check_stability=False).cm, (2, 4))
            out.append(metric(V))
        if not np.isfinite(out[0]):
            raise UnstableModelError("open-loop baseline is unstable")
        return np.array(out)

    def feedback_benefit():
        ens = _gain_curve(log_negativity)
        if ens[0] < 1e-9:
            return True, "no baseline entanglement at these parameters", 0.0
        gain_ratio = float(np.nanmax(ens) / ens[0])
        return gain_ratio >= 1.05, f"max E_N / baseline = {gain_ratio:.3f}", gain_ratio
    checks.append(_check("experiments.feedback_benefit", feedback_benefit))

    def lossy_steering_window():
        eta = 0.9 * math.exp(-0.01)
        nus = _gain_curve(lambda V: 2.0 * pt_symplectic_min(apply_loss(V, eta)))
        window = np.isfinite(nus) & (nus < _TWO_WAY)
        ok = bool(window.any()) and not window[0]
        return ok, (f"min lossy nu = {np.nanmin(nus):.4f} vs 1/3; lossless window "
                    "exists, the lossy one does not at these parameters"), \
            float(np.nanmin(nus))
    checks.append(_check("experiments.lossy_steering_window", lossy_steering_window,
                         xfail=True))

    return ValidationReport(checks=checks)
