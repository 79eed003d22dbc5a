import copy
import json
import math

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from optomfb import config as cfg
from optomfb.cli import main
from optomfb.errors import ConfigError
from optomfb.params import FeedbackScheme

VACUUM_RAW = {
    "system": {
        "n_th": 0.0,
        "gamma_m": 1.5e-5,
        "modes": {
            "a": {"kappa": 0.01, "Delta": 1.0, "G": 0.0},
            "b": {"kappa": 0.01, "Delta": -1.0, "G": 0.0},
        },
    },
    "feedback": {"scheme": "none"},
    "filters": {"a": {"Omega": 1.0, "tau": 2000.0}, "b": {"Omega": -1.0, "tau": 2000.0}},
}


def _write(tmp_path, raw, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(raw))
    return str(path)


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_parse_minimal_vacuum():
    c = cfg.parse_config(copy.deepcopy(VACUUM_RAW))
    assert c.system.G_a == 0.0
    assert c.feedback.scheme is FeedbackScheme.NONE
    assert c.loss is None
    assert c.quadrature.rtol == 1e-6
    assert c.sweep_axes == ()


def test_unknown_keys_rejected_with_path():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["modes"]["a"]["Kappa"] = 0.01
    with pytest.raises(ConfigError) as err:
        cfg.parse_config(raw)
    assert "system.modes.a" in str(err.value)


def test_negative_kappa_rejected_with_path():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["modes"]["b"]["kappa"] = -0.01
    with pytest.raises(ConfigError) as err:
        cfg.parse_config(raw)
    assert "kappa" in str(err.value)


def test_exactly_one_parameter_form():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["modes"]["a"] = {"kappa": 0.01, "Delta": 1.0, "G": 0.0,
                                   "E": 1.0, "delta": 1.0, "g": 1e-5}
    with pytest.raises(ConfigError):
        cfg.parse_config(raw)


def test_drive_form_resolves_steady_state():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["modes"] = {
        "a": {"kappa": 0.01, "E": 1000.0, "delta": 1.0, "g": 1e-5},
        "b": {"kappa": 0.01, "E": 800.0, "delta": -1.0, "g": 1e-5},
    }
    c = cfg.parse_config(raw)
    assert c.system.G_a > 0.0
    assert c.system.Delta_a < 1.0  # pulled by the static displacement


def test_temperature_ingestion():
    raw = copy.deepcopy(VACUUM_RAW)
    del raw["system"]["n_th"]
    raw["system"]["omega_m_hz"] = 1.0e7
    raw["system"]["temperature_k"] = 0.4
    c = cfg.parse_config(raw)
    assert c.system.n_th == pytest.approx(832.9648649173312, rel=1e-12)
    # n_th and temperature together are ambiguous
    raw["system"]["n_th"] = 100.0
    with pytest.raises(ConfigError):
        cfg.parse_config(raw)


def test_si_rate_strings():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["omega_m_hz"] = 1.0e7
    raw["system"]["modes"]["a"]["kappa"] = "100 kHz"   # / 10 MHz = 0.01
    raw["system"]["gamma_m"] = "150 Hz"                # 1.5e-5
    c = cfg.parse_config(raw)
    assert c.system.kappa_a == pytest.approx(0.01)
    assert c.system.gamma_m == pytest.approx(1.5e-5)
    # SI strings without omega_m_hz are rejected
    raw2 = copy.deepcopy(VACUUM_RAW)
    raw2["system"]["modes"]["a"]["kappa"] = "100 kHz"
    with pytest.raises(ConfigError):
        cfg.parse_config(raw2)


def test_third_mode_requires_mode_c():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["feedback"] = {"scheme": "third_mode", "g_cd": 0.1}
    with pytest.raises(ConfigError):
        cfg.parse_config(raw)


def test_sweep_axis_resolution():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["sweep"] = {"axes": [{"name": "feedback.nonexistent",
                              "start": 0, "stop": 1, "num": 3}]}
    with pytest.raises(ConfigError) as err:
        cfg.parse_config(raw)
    assert "does not resolve" in str(err.value)


def test_log_axis_and_monotonicity():
    raw = copy.deepcopy(VACUUM_RAW)
    raw["feedback"] = {"scheme": "mode_b_homodyne", "g_cd": 0.01, "r": 0.5}
    raw["sweep"] = {"axes": [{"name": "feedback.g_cd", "start": 1e-3,
                              "stop": 1e-1, "num": 5, "scale": "log"}]}
    c = cfg.parse_config(raw)
    vals = c.sweep_axes[0].values
    assert vals[0] == pytest.approx(1e-3) and vals[-1] == pytest.approx(1e-1)
    assert np.allclose(np.diff(np.log(vals)), np.log(vals[1] / vals[0]))


def test_config_roundtrip_through_echo():
    c1 = cfg.parse_config(copy.deepcopy(VACUUM_RAW))
    c2 = cfg.parse_config(copy.deepcopy(c1.raw))
    assert c1 == c2


def test_all_presets_parse():
    for name in cfg.PRESET_NAMES:
        c = cfg.load_config(name)
        assert c.label == name
        assert c.system.n_th == pytest.approx(832.9648649173312, rel=1e-9)
        if name.startswith("fig5"):
            assert c.system.has_mode_c
            assert c.feedback.scheme is FeedbackScheme.THIRD_MODE


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def test_cli_simulate_vacuum(tmp_path):
    path = _write(tmp_path, VACUUM_RAW)
    result = CliRunner().invoke(main, ["simulate", "--config", path])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert payload["E_N"] == pytest.approx(0.0, abs=1e-6)
    assert payload["F"] == pytest.approx(0.5, abs=1e-6)
    assert payload["two_way"] is False


def test_cli_simulate_feedback_beats_baseline(tmp_path):
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["n_th"] = 833.0
    raw["system"]["modes"]["a"]["G"] = 0.065
    raw["system"]["modes"]["b"]["G"] = 0.04
    raw["feedback"] = {"scheme": "mode_b_homodyne", "g_cd": 0.047,
                       "r": 0.56, "sigma": 0.92}
    on = json.loads(CliRunner().invoke(
        main, ["simulate", "--config", _write(tmp_path, raw, "on.yaml")]).output)
    raw["feedback"]["g_cd"] = 0.0
    off = json.loads(CliRunner().invoke(
        main, ["simulate", "--config", _write(tmp_path, raw, "off.yaml")]).output)
    assert on["E_N"] > off["E_N"]


def test_cli_exit_codes(tmp_path):
    # malformed config: negative kappa -> exit 2 with a field path
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["modes"]["a"]["kappa"] = -1.0
    res = CliRunner().invoke(main, ["simulate", "--config", _write(tmp_path, raw)])
    assert res.exit_code == 2
    assert "kappa" in res.output
    # unstable point -> exit 3
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["n_th"] = 833.0
    raw["system"]["modes"]["a"]["G"] = 0.065
    raw["system"]["modes"]["b"]["G"] = 0.2
    res = CliRunner().invoke(main, ["simulate", "--config",
                                    _write(tmp_path, raw, "unstable.yaml")])
    assert res.exit_code == 3


def test_cli_dump_cm(tmp_path):
    path = _write(tmp_path, VACUUM_RAW)
    res = CliRunner().invoke(main, ["simulate", "--config", path,
                                    "--out", str(tmp_path), "--dump-cm"])
    assert res.exit_code == 0
    dump = json.loads((tmp_path / "run.cm.json").read_text())
    cm = np.array(dump["cm_ab"])
    assert np.max(np.abs(cm - 0.5 * np.eye(4))) < 1e-6
    assert np.array(dump["cm_full"]).shape == (6, 6)


def test_cli_sweep_csv_and_sidecar(tmp_path):
    raw = copy.deepcopy(VACUUM_RAW)
    raw["feedback"] = {"scheme": "mode_b_homodyne", "g_cd": 0.0, "r": 0.5}
    raw["sweep"] = {"axes": [{"name": "feedback.g_cd",
                              "start": 0.0, "stop": 0.02, "num": 5}]}
    raw["output"] = {"dir": str(tmp_path), "label": "mini"}
    res = CliRunner().invoke(main, ["sweep", "--config", _write(tmp_path, raw)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "mini.csv").read_text().splitlines()
    assert len(lines) == 6
    assert lines[0].startswith("feedback.g_cd,E_N,F,F_bound,nu,E_BA,E_AB,"
                               "two_way,stable,margin,quad_err")
    meta = json.loads((tmp_path / "mini.meta.json").read_text())
    assert meta["n_points"] == 5
    assert meta["columns"][0] == "feedback.g_cd"
    # the config echo reparses to an identical RunConfig
    c1 = cfg.parse_config(copy.deepcopy(raw))
    c2 = cfg.parse_config(meta["config"])
    assert c1 == c2


def test_cli_sweep_resume(tmp_path):
    from optomfb.cli import _fingerprint

    raw = copy.deepcopy(VACUUM_RAW)
    raw["feedback"] = {"scheme": "mode_b_homodyne", "g_cd": 0.0, "r": 0.5}
    raw["sweep"] = {"axes": [{"name": "feedback.g_cd",
                              "start": 0.0, "stop": 0.02, "num": 4}]}
    raw["output"] = {"dir": str(tmp_path), "label": "resume"}
    path = _write(tmp_path, raw)
    full = CliRunner().invoke(main, ["sweep", "--config", path])
    assert full.exit_code == 0
    all_lines = (tmp_path / "resume.csv").read_text().splitlines()
    # fabricate an interrupted run: header + first row, plus its checkpoint
    (tmp_path / "resume.partial.csv").write_text("\n".join(all_lines[:2]) + "\n")
    config = cfg.parse_config(copy.deepcopy(raw))
    (tmp_path / "resume.partial.meta.json").write_text(
        json.dumps({"fingerprint": _fingerprint(config.raw)}))
    (tmp_path / "resume.csv").unlink()
    res = CliRunner().invoke(main, ["sweep", "--config", path, "--resume"])
    assert res.exit_code == 0
    assert "resuming after 1/4" in res.output
    resumed = (tmp_path / "resume.csv").read_text().splitlines()
    assert resumed == all_lines

    # a checkpoint from a different configuration forces a restart
    (tmp_path / "resume.partial.csv").write_text("\n".join(all_lines[:2]) + "\n")
    (tmp_path / "resume.partial.meta.json").write_text(
        json.dumps({"fingerprint": "deadbeef"}))
    res = CliRunner().invoke(main, ["sweep", "--config", path, "--resume"])
    assert res.exit_code == 0
    assert "restarting" in res.output


def test_cli_optimize(tmp_path):
    raw = copy.deepcopy(VACUUM_RAW)
    raw["system"]["n_th"] = 833.0
    raw["system"]["modes"]["a"]["G"] = 0.065
    raw["system"]["modes"]["b"]["G"] = 0.04
    raw["feedback"] = {"scheme": "mode_b_homodyne", "g_cd": 0.0,
                       "r": 0.56, "sigma": 0.92}
    res = CliRunner().invoke(main, ["optimize", "--config", _write(tmp_path, raw),
                                    "--bounds", "0.0", "0.08"])
    assert res.exit_code == 0, res.output
    payload = json.loads(res.output)
    assert 0.0 < payload["g_opt"] < 0.08
    assert payload["history"]
    assert payload["bracket"][0] <= payload["g_opt"] <= payload["bracket"][1]


def test_cli_print_config_lists_presets():
    res = CliRunner().invoke(main, ["print-config"])
    assert res.exit_code == 0
    for name in cfg.PRESET_NAMES:
        assert name in res.output


def test_cli_print_config_roundtrip(tmp_path):
    res = CliRunner().invoke(main, ["print-config", "--config", "fig3"])
    assert res.exit_code == 0
    raw = yaml.safe_load(res.output)
    assert cfg.parse_config(raw) == cfg.load_config("fig3")


def test_cli_loss_base_override(tmp_path):
    raw = copy.deepcopy(VACUUM_RAW)
    raw["loss"] = {"alpha_db_per_km": 0.005, "length_km": 20.0, "eta0": 0.9,
                   "base": "e"}
    path = _write(tmp_path, raw)
    out_e = json.loads(CliRunner().invoke(main, ["simulate", "--config", path]).output)
    out_10 = json.loads(CliRunner().invoke(
        main, ["simulate", "--config", path, "--loss-base", "10"]).output)
    assert out_e["eta"] == pytest.approx(0.9 * math.exp(-0.01))
    assert out_10["eta"] == pytest.approx(0.9 * 10 ** (-0.01))


def test_worker_count_env(monkeypatch):
    from optomfb.cli import _worker_count

    monkeypatch.delenv("OPTOMFB_WORKERS", raising=False)
    assert _worker_count(None) == 1
    assert _worker_count(3) == 3
    monkeypatch.setenv("OPTOMFB_WORKERS", "5")
    assert _worker_count(None) == 5
    assert _worker_count(2) == 2  # explicit flag wins
