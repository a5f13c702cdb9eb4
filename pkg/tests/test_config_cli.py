import json
import os

import numpy as np
import pytest

from corrnoise.cli import main as cli_main
from corrnoise.config import (ConfigError, load_config, parse_config,
                              preset_names, with_register_size)
from corrnoise.detect import (build_report, correlation_length,
                              detect_dephasing, detect_relaxation,
                              validate_report)
from corrnoise.runner import detect, run, sweep_n

SMALL_CONFIG = {
    "register": {"n": 2, "omega0": 1.0},
    "channels": [
        {"coupling": "transverse",
         "spectrum": {"kind": "ohmic", "strength": 1e-5, "cutoff": 10.0},
         "correlation": {"kind": "full"}},
        {"coupling": "longitudinal",
         "spectrum": {"kind": "white", "strength": 1e-3},
         "correlation": {"kind": "full"}},
    ],
    "initial_state": "plus_all",
    "t_max": 200.0, "dt_out": 10.0, "dt_rate": 0.5,
    "protocol": {"kind": "parity", "idle_times": [0, 100, 200], "shots": 0,
                 "seed": 3},
    "analysis": {"intensity": True, "partial_intensity": True,
                 "antidiagonals": True, "detection": True},
    "plots": False,
}


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def test_presets_load():
    names = preset_names()
    for want in ("fig1a", "fig1b", "fig1c", "fig2", "fig2d"):
        assert want in names
    fig1b = load_config("fig1b")
    assert fig1b.register.n == 5
    assert fig1b.register.is_uniform
    ch = fig1b.channels[0]
    assert ch.coupling == "transverse"
    assert ch.spectrum.kind == "ohmic"
    assert ch.spectrum.strength == 1e-5 and ch.spectrum.cutoff == 10.0
    assert ch.correlation.kind == "full"
    assert fig1b.initial_state == "inverted"

    fig2 = load_config("fig2")
    assert len(fig2.channels) == 2
    deph = fig2.channels[1]
    assert deph.coupling == "longitudinal"
    assert deph.spectrum.kind == "one_over_f"
    assert deph.spectrum.strength == 1e-9
    assert deph.spectrum.ir_cutoff == 1e-6
    assert fig2.register.frequencies == tuple(0.9925 + 0.0025 * a
                                              for a in range(1, 6))
    fig1c = load_config("fig1c")
    assert fig1c.channels[0].correlation.kind == "window"
    assert fig1c.channels[0].correlation.r == 3


def test_config_validation_errors():
    with pytest.raises(ConfigError, match="positive"):
        parse_config({"register": {"n": 2, "frequencies": [1.0, -1.0]},
                      "channels": [], "t_max": 1, "dt_out": 1, "dt_rate": 1})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"register": {"n": 1}, "channels": [], "t_max": 1,
                      "dt_out": 1, "dt_rate": 1, "typo_key": 1})
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"register": {"n": 1, "omega": 1.0}, "channels": [],
                      "t_max": 1, "dt_out": 1, "dt_rate": 1})
    with pytest.raises(ConfigError, match="multiple"):
        parse_config({"register": {"n": 1}, "channels": [], "t_max": 10,
                      "dt_out": 3, "dt_rate": 1})
    with pytest.raises(ConfigError, match="dt_out"):
        parse_config({"register": {"n": 1}, "channels": [], "t_max": 10,
                      "dt_out": 0.5, "dt_rate": 1})
    with pytest.raises(ConfigError, match="idle"):
        parse_config(dict(SMALL_CONFIG, protocol={"kind": "parity",
                                                  "idle_times": [0, 500]}))


def test_config_file_parse_error_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"register": {"n": 2,}\n}')
    with pytest.raises(ConfigError, match="line"):
        load_config(str(path))
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))


def test_config_digest_stable():
    a = parse_config(json.loads(json.dumps(SMALL_CONFIG)))
    b = parse_config(json.loads(json.dumps(SMALL_CONFIG)))
    assert a.digest() == b.digest()
    c = parse_config(dict(SMALL_CONFIG, seed=99))
    assert c.digest() != a.digest()


def test_with_register_size():
    cfg = load_config("sweep_white")
    cfg3 = with_register_size(cfg, 3)
    assert cfg3.register.n == 3
    assert cfg3.channels[0].correlation.n == 3


# --------------------------------------------------------------------------
# runner outputs
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = parse_config(json.loads(json.dumps(SMALL_CONFIG)), name="small")
    return run(cfg, out_dir=str(out)), str(out)


def test_run_writes_expected_files(small_run):
    result, out = small_run
    names = {os.path.basename(f) for f in result.files}
    assert {"intensity.csv", "antidiagonals.csv", "rho_k.csv", "report.json",
            "manifest.json", "parity_t0.csv", "parity_t1.csv",
            "parity_t2.csv"} <= names


def test_intensity_csv_schema(small_run):
    result, out = small_run
    with open(os.path.join(out, "intensity.csv")) as fh:
        header = fh.readline().strip().split(",")
    assert header == ["t", "W", "I_total", "I_local", "I_corr", "I_corr_1",
                      "I_corr_2", "Z_1", "Z_2", "min_eig"]


def test_antidiagonals_csv_schema(small_run):
    result, out = small_run
    with open(os.path.join(out, "antidiagonals.csv")) as fh:
        header = fh.readline().strip().split(",")
    assert header[0] == "t"
    assert "re_10" in header and "im_11" in header
    assert len(header) == 1 + 2 * 2  # two pairs for n = 2


def test_rho_k_csv_schema(small_run):
    result, out = small_run
    with open(os.path.join(out, "rho_k.csv")) as fh:
        header = fh.readline().strip().split(",")
    assert header == ["idle_t", "k", "Re", "Im", "abs"]


def test_report_schema_validates(small_run):
    result, out = small_run
    with open(os.path.join(out, "report.json")) as fh:
        report = json.load(fh)
    assert validate_report(report) == []
    assert report["dephasing_correlated"]["verdict"] == "correlated"


def test_rerun_is_byte_identical(small_run, tmp_path):
    result, out = small_run
    cfg = parse_config(json.loads(json.dumps(SMALL_CONFIG)), name="small")
    second = run(cfg, out_dir=str(tmp_path / "again"))
    for name in ("intensity.csv", "antidiagonals.csv", "rho_k.csv",
                 "report.json", "parity_t1.csv"):
        a = open(os.path.join(out, name), "rb").read()
        b = open(os.path.join(tmp_path / "again", name), "rb").read()
        assert a == b, name


def test_detect_from_directory(small_run):
    result, out = small_run
    report = detect(out)
    assert report["dephasing_correlated"]["verdict"] == "correlated"
    assert report["relaxation_correlated"]["verdict"] == "correlated"


def test_no_channel_run_zero_intensity(tmp_path):
    cfg = parse_config({
        "register": {"n": 1, "omega0": 1.0}, "channels": [],
        "initial_state": "inverted", "t_max": 10.0, "dt_out": 1.0,
        "dt_rate": 0.5, "plots": False,
    })
    result = run(cfg, out_dir=str(tmp_path / "empty"))
    assert np.max(np.abs(result.intensity.i_total)) == 0.0


def test_failed_run_removes_partial_outputs(tmp_path, monkeypatch):
    cfg = parse_config(json.loads(json.dumps(SMALL_CONFIG)), name="boom")
    out = tmp_path / "boom"
    import corrnoise.runner as runner_mod

    def explode(*a, **k):
        raise RuntimeError("injected failure")

    monkeypatch.setattr(runner_mod, "run_protocol", explode)
    with pytest.raises(RuntimeError, match="injected"):
        run(cfg, out_dir=str(out))
    leftover = [p for p in os.listdir(out) if not p.endswith(".tmp")]
    assert leftover == []


# --------------------------------------------------------------------------
# detection logic
# --------------------------------------------------------------------------

def test_detect_relaxation_verdicts():
    t = np.arange(20.0)
    strong = detect_relaxation(t, np.ones(20), 0.5 * np.ones(20), 0.05, 0.2)
    assert strong["verdict"] == "correlated"
    weak = detect_relaxation(t, np.ones(20), 1e-6 * np.ones(20), 0.05, 0.2)
    assert weak["verdict"] == "uncorrelated"
    edge = detect_relaxation(t, np.ones(20), 0.05 * np.ones(20), 0.05, 0.2)
    assert edge["verdict"] == "inconclusive"
    zero = detect_relaxation(t, np.zeros(20), np.zeros(20), 0.05, 0.2)
    assert zero["verdict"] == "inconclusive"


def test_correlation_length_logic():
    sig = np.linspace(0, 1, 50)
    partial = np.stack([0.5 * sig, sig, sig, sig + 1e-13])
    assert correlation_length(partial, 0.02) == 2
    full = np.stack([0.3 * sig, 0.6 * sig, 0.9 * sig, sig])
    assert correlation_length(full, 0.02) == ">=4"
    assert correlation_length(np.zeros((3, 10)), 0.02) is None


def test_detect_dephasing_logic():
    t = [0.0, 100.0]
    spread = detect_dephasing(t, [{1: 0.5, 3: 0.5}, {1: 0.45, 3: 0.1}], 0.1, 0.2)
    assert spread["verdict"] == "correlated"
    flat = detect_dephasing(t, [{1: 0.5, 3: 0.5}, {1: 0.25, 3: 0.2501}], 0.1, 0.2)
    assert flat["verdict"] == "uncorrelated"
    single = detect_dephasing([0.0], [{1: 0.5}], 0.1, 0.2)
    assert single["verdict"] == "inconclusive"


# --------------------------------------------------------------------------
# sweep
# --------------------------------------------------------------------------

def test_sweep_n_exponents():
    cfg = load_config("sweep_white")
    out = sweep_n(cfg, [2, 3, 4, 5])
    assert abs(out["exponent"] - 2.0) < 0.05
    # uncorrelated dephasing scales linearly in N
    from corrnoise.spectra import CorrelationMatrix, NoiseChannel
    from dataclasses import replace
    diag = tuple(
        NoiseChannel(coupling=c.coupling, spectrum=c.spectrum,
                     correlation=CorrelationMatrix(kind="diagonal", n=c.correlation.n))
        for c in cfg.channels)
    out_d = sweep_n(replace(cfg, channels=diag), [2, 3, 4, 5])
    assert abs(out_d["exponent"] - 1.0) < 0.05
    with pytest.raises(ValueError):
        sweep_n(cfg, [2, 3])


def test_sweep_block_window_matches_xi_sum_oracle():
    # spec's block window(2): decay rate of rho^(N) scales as sum_ab xi_ab;
    # the fitted exponent must match the arithmetic oracle
    from corrnoise.spectra import CorrelationMatrix, NoiseChannel
    from dataclasses import replace
    cfg = load_config("sweep_white")
    n_list = [2, 3, 4, 5]
    win = tuple(
        NoiseChannel(coupling=c.coupling, spectrum=c.spectrum,
                     correlation=CorrelationMatrix(kind="window", n=c.correlation.n, r=2))
        for c in cfg.channels)
    out = sweep_n(replace(cfg, channels=win), n_list)
    sums = [CorrelationMatrix(kind="window", n=n, r=2).xi_matrix().sum()
            for n in n_list]
    oracle_p = np.polyfit(np.log(n_list), np.log(sums), 1)[0]
    assert abs(out["exponent"] - oracle_p) < 0.05
    # a banded window of range 2 does land between linear and quadratic
    band = tuple(
        NoiseChannel(coupling=c.coupling, spectrum=c.spectrum,
                     correlation=CorrelationMatrix(kind="banded", n=c.correlation.n, r=2))
        for c in cfg.channels)
    out_b = sweep_n(replace(cfg, channels=band), n_list)
    assert 1.0 < out_b["exponent"] < 2.0


# --------------------------------------------------------------------------
# CLI surface
# --------------------------------------------------------------------------

def test_cli_run_and_detect(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(SMALL_CONFIG))
    out = tmp_path / "out"
    assert cli_main(["run", str(cfg_path), "--out", str(out)]) == 0
    assert (out / "intensity.csv").exists()
    assert cli_main(["detect", str(out)]) == 0


def test_cli_error_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"register": {"n": 1}, "channels": [],
                               "t_max": 1, "dt_out": 1, "dt_rate": 1,
                               "nonsense": True}))
    assert cli_main(["run", str(bad)]) == 1
    assert cli_main(["rates", str(bad), "--t", "0.5"]) == 1


def test_cli_rates(capsys):
    assert cli_main(["rates", "sweep_white", "--t", "10"]) == 0
    out = capsys.readouterr().out
    assert "gphi" in out and "channel 0" in out
