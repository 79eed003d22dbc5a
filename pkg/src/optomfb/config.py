"""Run configuration: strict YAML parsing, SI ingestion and shipped presets.

A configuration is a nested mapping with sections ``system``, ``feedback``,
``filters`` and optional ``loss``, ``quadrature``, ``sweep``, ``output``.
Unknown keys are rejected with the dotted path of the offender.  Rates may be
given as plain numbers (omega_m units) or as strings with a frequency suffix
("100 kHz"), resolved against ``system.omega_m_hz``.
"""

from __future__ import annotations

import copy
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .gaussian import transmissivity
from .params import (DriveParams, FeedbackScheme, FeedbackSpec, SystemParams,
                     solve_steady_state, system_from_steady_state,
                     thermal_occupation)
from .spectra import FilterSpec, QuadratureConfig

PRESET_NAMES = ("fig2", "fig3", "fig3-noloss", "fig4", "fig4-noloss",
                "fig5", "fig5-noloss")

_FREQ_UNITS = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_TIME_UNITS = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9}


@dataclass(frozen=True)
class LossConfig:
    alpha_db_per_km: float
    length_km: float
    eta0: float
    base: str = "e"

    def eta(self) -> float:
        return transmissivity(self.alpha_db_per_km, self.length_km,
                              self.eta0, self.base)


@dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams
    feedback: FeedbackSpec
    filters: tuple[FilterSpec, FilterSpec]
    loss: LossConfig | None
    quadrature: QuadratureConfig
    sweep_axes: tuple[SweepAxis, ...]
    output_dir: str
    label: str
    raw: dict = field(compare=False, repr=False, default_factory=dict)


def _check_keys(mapping, allowed, path):
    if not isinstance(mapping, dict):
        raise ConfigError(f"expected a mapping, got {type(mapping).__name__}", path)
    unknown = set(mapping) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", path)


def _number(value, path, *, omega_m_hz=None, kind="rate"):
    """A plain number (omega_m units) or a suffixed SI string."""
    if isinstance(value, bool):
        raise ConfigError("expected a number", path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        m = re.fullmatch(r"\s*([-+0-9.eE]+)\s*([a-zA-Z]+)\s*", value)
        if not m:
            raise ConfigError(f"cannot parse quantity {value!r}", path)
        mag, unit = float(m.group(1)), m.group(2).lower()
        if omega_m_hz is None:
            raise ConfigError("SI values require system.omega_m_hz", path)
        if kind == "rate" and unit in _FREQ_UNITS:
            return mag * _FREQ_UNITS[unit] / omega_m_hz
        if kind == "time" and unit in _TIME_UNITS:
            return mag * _TIME_UNITS[unit] * 2.0 * math.pi * omega_m_hz
        raise ConfigError(f"unsupported unit {unit!r} for a {kind}", path)
    raise ConfigError("expected a number or an SI string", path)


def _parse_system(section) -> tuple[SystemParams, DriveParams | None]:
    _check_keys(section, {"omega_m", "omega_m_hz", "gamma_m", "n_th",
                          "temperature_k", "modes"}, "system")
    omega_m_hz = section.get("omega_m_hz")
    if omega_m_hz is not None:
        omega_m_hz = float(omega_m_hz)
    omega_m = float(section.get("omega_m", 1.0))

    if "n_th" in section and "temperature_k" in section:
        raise ConfigError("give n_th or temperature_k, not both", "system.n_th")
    if "temperature_k" in section:
        if omega_m_hz is None:
            raise ConfigError("temperature_k requires omega_m_hz", "system.temperature_k")
        n_th = thermal_occupation(2.0 * math.pi * omega_m_hz, float(section["temperature_k"]))
    elif "n_th" in section:
        n_th = float(section["n_th"])
    else:
        raise ConfigError("missing n_th or temperature_k", "system")
    gamma_m = _number(section.get("gamma_m"), "system.gamma_m", omega_m_hz=omega_m_hz)

    modes = section.get("modes")
    if not isinstance(modes, dict) or "a" not in modes or "b" not in modes:
        raise ConfigError("system.modes must define at least modes a and b", "system.modes")
    _check_keys(modes, {"a", "b", "c"}, "system.modes")

    effective_form = all({"Delta", "G"} <= set(m) for m in modes.values())
    drive_form = all({"E", "delta", "g"} <= set(m) for m in modes.values())
    if effective_form == drive_form:
        raise ConfigError("modes must all use either the effective form "
                          "{kappa, Delta, G} or the drive form {kappa, E, delta, g}",
                          "system.modes")

    labels = [lb for lb in ("a", "b", "c") if lb in modes]
    kappa = []
    for lb in labels:
        path = f"system.modes.{lb}"
        allowed = {"kappa", "Delta", "G"} if effective_form else {"kappa", "E", "delta", "g"}
        _check_keys(modes[lb], allowed, path)
        if "kappa" not in modes[lb]:
            raise ConfigError("missing kappa", path + ".kappa")
        kappa.append(_number(modes[lb]["kappa"], path + ".kappa", omega_m_hz=omega_m_hz))

    if effective_form:
        kw = {}
        for i, lb in enumerate(labels):
            path = f"system.modes.{lb}"
            kw[f"kappa_{lb}"] = kappa[i]
            kw[f"Delta_{lb}"] = _number(modes[lb]["Delta"], path + ".Delta", omega_m_hz=omega_m_hz)
            kw[f"G_{lb}"] = _number(modes[lb]["G"], path + ".G", omega_m_hz=omega_m_hz)
        return SystemParams(gamma_m=gamma_m, n_th=n_th, omega_m=omega_m, **kw), None

    drive = DriveParams(
        E=tuple(_number(modes[lb]["E"], f"system.modes.{lb}.E", omega_m_hz=omega_m_hz)
                for lb in labels),
        delta=tuple(_number(modes[lb]["delta"], f"system.modes.{lb}.delta",
                            omega_m_hz=omega_m_hz) for lb in labels),
        g=tuple(_number(modes[lb]["g"], f"system.modes.{lb}.g", omega_m_hz=omega_m_hz)
                for lb in labels),
    )
    state = solve_steady_state(drive, tuple(kappa), omega_m)
    return system_from_steady_state(state, tuple(kappa), gamma_m, n_th, omega_m), drive


def _parse_feedback(section) -> FeedbackSpec:
    if section is None:
        return FeedbackSpec(FeedbackScheme.NONE)
    _check_keys(section, {"scheme", "g_cd", "r", "sigma"}, "feedback")
    scheme_name = section.get("scheme", "none")
    try:
        scheme = FeedbackScheme(scheme_name)
    except ValueError:
        raise ConfigError(f"unknown scheme {scheme_name!r} "
                          f"(choose from {[s.value for s in FeedbackScheme]})",
                          "feedback.scheme") from None
    return FeedbackSpec(scheme=scheme,
                        g_cd=float(section.get("g_cd", 0.0)),
                        r=float(section.get("r", 0.0)),
                        sigma=float(section.get("sigma", 1.0)))


def _parse_filters(section, omega_m_hz) -> tuple[FilterSpec, FilterSpec]:
    _check_keys(section, {"a", "b"}, "filters")
    out = []
    for lb in ("a", "b"):
        if lb not in section:
            raise ConfigError(f"missing filter for mode {lb}", f"filters.{lb}")
        _check_keys(section[lb], {"Omega", "tau"}, f"filters.{lb}")
        out.append(FilterSpec(
            Omega=_number(section[lb].get("Omega"), f"filters.{lb}.Omega",
                          omega_m_hz=omega_m_hz),
            tau=_number(section[lb].get("tau"), f"filters.{lb}.tau",
                        omega_m_hz=omega_m_hz, kind="time")))
    return tuple(out)


def _parse_loss(section) -> LossConfig | None:
    if section is None:
        return None
    _check_keys(section, {"alpha_db_per_km", "length_km", "eta0", "base"}, "loss")
    base = str(section.get("base", "e"))
    if base not in ("e", "10"):
        raise ConfigError("base must be 'e' or '10'", "loss.base")
    return LossConfig(alpha_db_per_km=float(section.get("alpha_db_per_km", 0.0)),
                      length_km=float(section.get("length_km", 0.0)),
                      eta0=float(section.get("eta0", 1.0)),
                      base=base)


def _parse_quadrature(section) -> QuadratureConfig:
    if section is None:
        return QuadratureConfig()
    _check_keys(section, {"rtol", "atol", "window", "max_panels"}, "quadrature")
    return QuadratureConfig(rtol=float(section.get("rtol", 1e-6)),
                            atol=float(section.get("atol", 0.0)),
                            window=float(section.get("window", 200.0)),
                            max_panels=int(section.get("max_panels", 4096)))


def _axis_values(spec, path) -> tuple[float, ...]:
    if "values" in spec:
        values = tuple(float(v) for v in spec["values"])
    else:
        for key in ("start", "stop", "num"):
            if key not in spec:
                raise ConfigError(f"grid needs {key}", f"{path}.{key}")
        scale = spec.get("scale", "linear")
        if scale == "linear":
            values = tuple(np.linspace(float(spec["start"]), float(spec["stop"]),
                                       int(spec["num"])))
        elif scale == "log":
            values = tuple(np.geomspace(float(spec["start"]), float(spec["stop"]),
                                        int(spec["num"])))
        else:
            raise ConfigError(f"unknown scale {scale!r}", f"{path}.scale")
    if len(values) == 0:
        raise ConfigError("empty grid", path)
    diffs = np.diff(values)
    if len(values) > 1 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ConfigError("grid must be strictly monotone", path)
    return values


def _parse_sweep(section, raw) -> tuple[SweepAxis, ...]:
    if section is None:
        return ()
    _check_keys(section, {"axes"}, "sweep")
    axes = section.get("axes")
    if not isinstance(axes, list) or not 1 <= len(axes) <= 2:
        raise ConfigError("sweep.axes must list one or two axes", "sweep.axes")
    parsed = []
    for i, axis in enumerate(axes):
        path = f"sweep.axes[{i}]"
        _check_keys(axis, {"name", "values", "start", "stop", "num", "scale"}, path)
        name = axis.get("name")
        if not name:
            raise ConfigError("axis needs a name", path + ".name")
        probe = copy.deepcopy(raw)
        try:
            set_by_path(probe, name, 0.0)
        except KeyError:
            raise ConfigError(f"axis name {name!r} does not resolve to a parameter",
                              path + ".name") from None
        parsed.append(SweepAxis(name=name, values=_axis_values(axis, path)))
    return tuple(parsed)


def set_by_path(raw: dict, dotted: str, value) -> None:
    """Assign into a nested mapping by dotted path, e.g. 'feedback.g_cd'.

    The leaf must already exist (axes can only move existing parameters).
    """
    parts = dotted.split(".")
    node = raw
    for p in parts[:-1]:
        if not isinstance(node, dict) or p not in node:
            raise KeyError(dotted)
        node = node[p]
    if not isinstance(node, dict) or parts[-1] not in node:
        raise KeyError(dotted)
    node[parts[-1]] = value


def parse_config(raw: dict) -> RunConfig:
    """Validate a raw mapping and build the typed run configuration."""
    _check_keys(raw, {"system", "feedback", "filters", "loss", "quadrature",
                      "sweep", "output"}, "<root>")
    for key in ("system", "filters"):
        if key not in raw:
            raise ConfigError("missing section", key)
    system, _ = _parse_system(raw["system"])
    omega_m_hz = raw["system"].get("omega_m_hz")
    feedback = _parse_feedback(raw.get("feedback"))
    if feedback.scheme is FeedbackScheme.THIRD_MODE and not system.has_mode_c:
        raise ConfigError("third_mode feedback requires system.modes.c", "feedback.scheme")
    if feedback.scheme is FeedbackScheme.MODE_B_HOMODYNE and system.has_mode_c:
        raise ConfigError("mode_b_homodyne is a two-mode scheme; drop system.modes.c "
                          "or use third_mode", "feedback.scheme")
    filters = _parse_filters(raw["filters"], omega_m_hz)
    output = raw.get("output") or {}
    _check_keys(output, {"dir", "label"}, "output")
    return RunConfig(system=system,
                     feedback=feedback,
                     filters=filters,
                     loss=_parse_loss(raw.get("loss")),
                     quadrature=_parse_quadrature(raw.get("quadrature")),
                     sweep_axes=_parse_sweep(raw.get("sweep"), raw),
                     output_dir=str(output.get("dir", "results")),
                     label=str(output.get("label", "run")),
                     raw=copy.deepcopy(raw))


def preset_path(name: str):
    return resources.files("optomfb").joinpath(f"presets/{name}.cfg")


def load_config(source: str | Path) -> RunConfig:
    """Load a config from a YAML file path or a shipped preset name."""
    path = Path(source)
    if not path.exists() and str(source) in PRESET_NAMES:
        text = preset_path(str(source)).read_text()
    elif path.exists():
        text = path.read_text()
    else:
        raise ConfigError(f"config {source!r} is neither a file nor one of the "
                          f"presets {list(PRESET_NAMES)}")
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a mapping")
    return parse_config(raw)


def with_override(config: RunConfig, dotted: str, value) -> RunConfig:
    """New RunConfig with one parameter replaced (used by sweeps/optimizers)."""
    raw = copy.deepcopy(config.raw)
    set_by_path(raw, dotted, value)
    raw.pop("sweep", None)
    return parse_config(raw)


def without_loss(config: RunConfig) -> RunConfig:
    raw = copy.deepcopy(config.raw)
    raw.pop("loss", None)
    return parse_config(raw)
