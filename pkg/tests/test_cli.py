"""End-to-end tests of the command line interface and the config layer.

Every command is exercised through main(argv) against temporary output
directories, and the reports are checked against the same quantities
computed directly with the library, so the CLI is tested as a thin shell
rather than re-deriving physics here.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from swwsim import (
    Dataset,
    pair_first_zero,
    pair_flux_density,
    read_columns_csv,
    thermal_scatter_flux_density,
    total_flux_model,
    write_columns_csv,
)
from swwsim.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, main
from swwsim.config import DEFAULT_CONFIG, ConfigError, load_config, resolve_config


def run_cli(args):
    return main([str(a) for a in args])


def read_report(out_dir):
    return json.loads((Path(out_dir) / "report.json").read_text())


# ---------------------------------------------------------------------------
# configuration resolution
# ---------------------------------------------------------------------------


def test_defaults_resolve_to_reference_device():
    cfg = load_config(None)
    assert cfg.resolved == DEFAULT_CONFIG

    wg = cfg.waveguide
    assert wg.length == pytest.approx(11.2e-3, rel=1e-15)
    assert wg.beta2 == pytest.approx(-1.5e-24, rel=1e-15)
    assert wg.gamma == 300.0
    assert wg.kappa == pytest.approx(3.5e-20, rel=1e-15)
    assert wg.temperature == 300.0

    assert cfg.pump.wavelength == pytest.approx(1539.8e-9, rel=1e-15)
    assert cfg.pump.power == pytest.approx(0.25e-3, rel=1e-15)
    assert cfg.pump.envelope is None

    assert cfg.guard == 10e9
    assert (cfg.stokes_band.detuning_min, cfg.stokes_band.detuning_max) == (
        -2.5e12,
        -0.4e12,
    )
    assert (cfg.anti_stokes_band.detuning_min, cfg.anti_stokes_band.detuning_max) == (
        0.4e12,
        2.5e12,
    )

    det = cfg.detectors
    assert det["stokes"].efficiency == 0.10
    assert det["anti_stokes"].efficiency == 0.15
    assert det["stokes"].dark_rate == 805.0
    assert det["anti_stokes"].dark_rate == 155.0
    # 100 kHz gates of 100 ns each give a 1 percent open fraction
    assert det["stokes"].duty == pytest.approx(0.01, rel=1e-12)

    assert cfg.raman is None
    assert cfg.simulation.seed == 12345
    assert cfg.simulation.trace_window == pytest.approx((-2.0e-9, 60.0e-9), rel=1e-15)
    assert cfg.sweep.powers[0] == pytest.approx(0.25e-3)
    assert len(cfg.sweep.temperatures) == 12


def test_partial_config_file_keeps_other_defaults(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"pump": {"power_mw": 1.25}}))
    cfg = load_config(path)
    assert cfg.pump.power == pytest.approx(1.25e-3)
    assert cfg.waveguide.length == pytest.approx(11.2e-3)

    # an empty file is the same as no file at all
    empty = tmp_path / "empty.json"
    empty.write_text("")
    assert load_config(empty).resolved == DEFAULT_CONFIG


def test_config_errors_carry_dotted_paths(tmp_path):
    with pytest.raises(ConfigError) as err:
        resolve_config({"waveguide": {"lenght_mm": 10.0}})
    assert err.value.path == "waveguide.lenght_mm"

    with pytest.raises(ConfigError) as err:
        resolve_config({"bands": {"stokes_thz": [-0.4, -2.5]}})
    assert err.value.path == "bands.stokes_thz"

    with pytest.raises(ConfigError) as err:
        resolve_config({"waveguide": {"length_mm": -1.0}})
    assert err.value.path == "waveguide.length_mm"

    with pytest.raises(ConfigError) as err:
        load_config(tmp_path / "missing.json")
    assert err.value.path == "<file>"

    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]")
    with pytest.raises(ConfigError) as err:
        load_config(bad)
    assert err.value.path == "<file>"


def test_dotted_overrides_are_json_typed():
    cfg = load_config(
        None,
        [
            "pump.power_mw=1.25",
            "simulation.seed=7",
            "pump.pulsed=true",
            "bands.stokes_thz=[-2.0, -0.5]",
        ],
    )
    assert cfg.pump.power == pytest.approx(1.25e-3)
    assert cfg.simulation.seed == 7
    assert cfg.pump.envelope is not None
    assert cfg.stokes_band.detuning_min == -2.0e12

    # values that are not valid JSON stay strings (paths and the like)
    with pytest.raises(ConfigError) as err:
        load_config(None, ["raman.enabled=true", "raman.table_csv=no/such.csv"])
    assert err.value.path == "raman.table_csv"

    with pytest.raises(ConfigError) as err:
        load_config(None, ["pump.nope=1"])
    assert err.value.path == "pump.nope"

    with pytest.raises(ConfigError):
        load_config(None, ["missing-equals-sign"])


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_bad_config_exits_with_config_code(tmp_path, capsys):
    rc = run_cli(
        ["spectrum", "--out", tmp_path / "o", "--set", "waveguide.length_mm=-5"]
    )
    assert rc == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err

    rc = run_cli(["montecarlo", "--out", tmp_path / "o2", "--seed", "-3"])
    assert rc == EXIT_CONFIG


def test_nonfinite_fit_data_exits_with_numeric_code(tmp_path, capsys):
    data = tmp_path / "data.csv"
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([1.0, np.nan, 3.0, 4.0])
    write_columns_csv(data, ("x", "y", "sigma"), (x, y, np.full(4, 0.1)))
    rc = run_cli(
        [
            "fit",
            "--out",
            tmp_path / "o",
            "--data",
            data,
            "--fit-model",
            "linear",
        ]
    )
    assert rc == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_unknown_fit_model_rejected_by_parser(tmp_path):
    with pytest.raises(SystemExit):
        run_cli(
            [
                "fit",
                "--out",
                tmp_path / "o",
                "--data",
                tmp_path / "x.csv",
                "--fit-model",
                "cubic",
            ]
        )


# ---------------------------------------------------------------------------
# spectrum command
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def spectrum_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("spectrum")
    assert run_cli(["spectrum", "--out", out]) == EXIT_OK
    return out


def test_spectrum_writes_resolved_config_and_report(spectrum_run):
    resolved = json.loads((spectrum_run / "config.resolved.json").read_text())
    assert resolved == DEFAULT_CONFIG

    report = read_report(spectrum_run)
    assert report["schema"] == "swwsim.report.v1"
    assert report["command"] == "spectrum"
    assert report["rng"]["seed"] == 12345
    assert report["rng"]["algorithm"] == "PCG64 (numpy.random.default_rng)"
    assert report["config"] == DEFAULT_CONFIG
    assert report["wall_clock_s"] >= 0.0

    for name in report["results"]["files"]:
        assert (spectrum_run / name).is_file()
    # raman disabled by default, so no raman series is written
    assert not any("raman" in name for name in report["results"]["files"])


def test_spectrum_total_is_sum_of_channels(spectrum_run):
    header = ("detuning_hz", "flux_density_per_hz", "sigma_per_hz")
    grid, thermal, _ = read_columns_csv(spectrum_run / "spectrum_thermal.csv", header)
    _, pair, _ = read_columns_csv(spectrum_run / "spectrum_pair.csv", header)
    _, total, _ = read_columns_csv(spectrum_run / "spectrum_total.csv", header)
    np.testing.assert_allclose(total, thermal + pair, rtol=1e-12)

    report = read_report(spectrum_run)
    assert report["results"]["grid_points"] == grid.size


def test_spectrum_stokes_side_brighter_than_mirrored_anti_stokes(spectrum_run):
    header = ("detuning_hz", "flux_density_per_hz", "sigma_per_hz")
    grid, total, _ = read_columns_csv(spectrum_run / "spectrum_total.csv", header)
    anti = (grid >= 0.5e12) & (grid <= 2.4e12)
    mirrored = np.interp(-grid[anti], grid, total)
    assert np.all(mirrored > total[anti])


def test_spectrum_detected_suppresses_pump_region(spectrum_run):
    header = ("detuning_hz", "flux_density_per_hz", "sigma_per_hz")
    grid, total, _ = read_columns_csv(spectrum_run / "spectrum_total.csv", header)
    _, detected, _ = read_columns_csv(
        spectrum_run / "spectrum_total_detected.csv", header
    )
    near_pump = np.abs(grid) <= 9e10
    assert np.count_nonzero(near_pump) > 10
    assert np.all(detected[near_pump] <= 1e-15 * total[near_pump])
    # in-band points survive with a finite transmission factor
    in_band = np.abs(grid) >= 0.5e12
    assert np.all(detected[in_band] > 0)


def test_spectrum_first_zero_matches_library(spectrum_run):
    report = read_report(spectrum_run)
    cfg = load_config(None)
    expected = pair_first_zero(cfg.waveguide, cfg.pump.power)
    assert report["results"]["first_pair_zero_hz"] == pytest.approx(
        expected, rel=1e-12
    )
    singles = report["results"]["predicted_singles_hz"]
    assert singles["stokes"] > 0 and singles["anti_stokes"] > 0


# ---------------------------------------------------------------------------
# power sweep command
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def power_sweep_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("psweep")
    assert run_cli(["power-sweep", "--out", out]) == EXIT_OK
    return out


def test_power_sweep_table_is_consistent(power_sweep_run):
    cols = read_columns_csv(
        power_sweep_run / "power_sweep.csv",
        (
            "power_w",
            "flux_linear_hz",
            "flux_quadratic_hz",
            "flux_total_hz",
            "detected_flux_hz",
            "click_rate_hz",
        ),
    )
    powers, lin, quad, total, detected, clicks = cols
    assert powers.size == 6
    np.testing.assert_allclose(total, lin + quad, rtol=1e-12)
    assert np.all(np.diff(total) > 0)
    assert np.all(detected < total)
    assert np.all(clicks > 0)

    cfg = load_config(None)
    parts = total_flux_model(
        float(powers[2]),
        cfg.waveguide,
        cfg.pump.wavelength,
        cfg.stokes_band,
        guard=cfg.guard,
    )
    assert lin[2] == pytest.approx(parts.linear, rel=1e-12)
    assert quad[2] == pytest.approx(parts.quadratic, rel=1e-12)


def test_power_sweep_decomposition_recovers_coefficients(power_sweep_run):
    report = read_report(power_sweep_run)
    fit = report["results"]["fit"]["params"]

    cfg = load_config(None)
    throughput = cfg.detection_chain("stokes").throughput()
    parts = total_flux_model(
        1e-3, cfg.waveguide, cfg.pump.wavelength, cfg.stokes_band, guard=cfg.guard
    )
    assert fit["b"] == pytest.approx(throughput * parts.linear / 1e-3, rel=0.01)
    assert fit["a"] == pytest.approx(throughput * parts.quadratic / 1e-6, rel=0.01)

    crossover = report["results"]["crossover_power_w"]
    assert crossover == pytest.approx(fit["b"] / fit["a"], rel=1e-12)


def test_power_sweep_kappa_and_linear_fraction(power_sweep_run):
    report = read_report(power_sweep_run)
    kappa = report["results"]["kappa"]
    assert kappa["configured_per_m_hz"] == pytest.approx(3.5e-20, rel=1e-12)
    assert kappa["ratio_to_configured"] == pytest.approx(1.0, abs=0.05)
    assert kappa["sigma_per_m_hz"] > 0
    comps = kappa["relative_components"]
    assert set(comps) == {"fit_b", "losses", "efficiency"}
    assert comps["efficiency"] == pytest.approx(0.10, rel=1e-12)

    fractions = report["results"]["linear_fraction"]
    lo, hi = fractions["0.00025"], fractions["0.0025"]
    assert 0 < hi < lo < 1


# ---------------------------------------------------------------------------
# temperature sweep command
# ---------------------------------------------------------------------------


def test_temp_sweep_is_linear_in_temperature(tmp_path):
    out = tmp_path / "tsweep"
    assert run_cli(["temp-sweep", "--out", out]) == EXIT_OK
    report = read_report(out)

    fit = report["results"]["fit"]
    assert fit["params"]["slope"] > 0
    assert fit["r_squared"] > 0.9999
    assert report["results"]["max_fractional_residual"] < 3e-3

    temps, thermal, pair, total = read_columns_csv(
        out / "temperature_sweep.csv",
        ("temperature_k", "flux_thermal_hz", "flux_pair_hz", "flux_total_hz"),
    )
    assert temps.size == 12
    assert np.all(np.diff(thermal) > 0)
    # pair generation does not know about temperature
    np.testing.assert_allclose(pair, pair[0], rtol=1e-9)


# ---------------------------------------------------------------------------
# monte carlo command
# ---------------------------------------------------------------------------


def test_montecarlo_artifacts_and_reproducibility(tmp_path):
    args = ["montecarlo", "--set", "simulation.duration_s=2.0", "--seed", "77"]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert run_cli(args + ["--out", out_a]) == EXIT_OK
    assert run_cli(args + ["--out", out_b]) == EXIT_OK

    report_a, report_b = read_report(out_a), read_report(out_b)
    assert report_a["rng"]["seed"] == 77
    assert report_a["config"]["simulation"]["seed"] == 77
    report_a.pop("wall_clock_s")
    report_b.pop("wall_clock_s")
    assert report_a == report_b

    for name in ("events.csv", "histogram.csv"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    counts = report_a["results"]["counts"]
    for channel in ("stokes", "anti_stokes"):
        assert set(counts[channel]) >= {"thermal", "pair", "dark"}
        assert counts[channel]["dark"] > 0

    coinc = report_a["results"]["coincidences"]
    assert math.isfinite(coinc["snr"]) and coinc["snr"] > 0
    assert coinc["snr_sigma"] > 0
    assert coinc["peak_counts"] >= 0
    assert coinc["predicted_accidentals_per_bin"] > 0


def test_montecarlo_expected_rates_echoed(tmp_path):
    out = tmp_path / "mc"
    assert (
        run_cli(["montecarlo", "--set", "simulation.duration_s=1.0", "--out", out])
        == EXIT_OK
    )
    report = read_report(out)
    rates = report["results"]["expected_rates"]
    for channel in ("stokes", "anti_stokes"):
        block = rates["channels"][channel]
        assert block["thermal_detected"] > 0
        assert block["pair_detected"] > 0
        assert block["dark"] > 0
    assert rates["pair_coincidence"] > 0


# ---------------------------------------------------------------------------
# timetrace command
# ---------------------------------------------------------------------------


def test_timetrace_requires_pulsed_pump(tmp_path, capsys):
    rc = run_cli(["timetrace", "--out", tmp_path / "o"])
    assert rc == EXIT_CONFIG
    assert "pump.pulsed" in capsys.readouterr().err


def test_timetrace_traces_and_edges(tmp_path):
    out = tmp_path / "trace"
    rc = run_cli(
        [
            "timetrace",
            "--out",
            out,
            "--set",
            "pump.pulsed=true",
            "--set",
            "simulation.duration_s=10.0",
            "--set",
            "simulation.include_carrier_trace=true",
        ]
    )
    assert rc == EXIT_OK
    report = read_report(out)
    results = report["results"]

    # 10 s of a 2 MHz pulse train
    assert results["n_pulses"] == 20_000_000

    for name in ("pump_monitor", "thermal", "pair", "carrier"):
        assert f"trace_{name}.csv" in results["files"]
        time, counts, expected = read_columns_csv(
            out / f"trace_{name}.csv",
            ("time_s", "counts", "expected"),
        )
        assert time[0] == pytest.approx(-2e-9 + 0.5e-10)
        assert np.all(expected >= 0)

    edges = results["edges"]
    # the linear channels follow the 450 ps optical edge to within a bin
    for name in ("pump_monitor", "thermal"):
        assert edges[name]["rise_s_expected"] == pytest.approx(450e-12, abs=100e-12)
        assert edges[name]["fall_s_expected"] == pytest.approx(450e-12, abs=100e-12)
    # free carriers respond on their own lifetime, not on the pump edge
    assert edges["carrier"]["rise_s_expected"] == pytest.approx(2.3e-9, abs=0.3e-9)
    assert edges["carrier"]["rise_s_expected"] > 3 * edges["thermal"]["rise_s_expected"]


# ---------------------------------------------------------------------------
# fit command
# ---------------------------------------------------------------------------


def fit_params(tmp_path, name, dataset, model):
    data_path = tmp_path / f"{name}.csv"
    dataset.to_csv(data_path)
    out = tmp_path / f"fit_{name}"
    rc = run_cli(
        ["fit", "--out", out, "--data", data_path, "--fit-model", model]
    )
    assert rc == EXIT_OK
    result = json.loads((out / "fit_result.json").read_text())
    report = read_report(out)
    assert report["results"]["model"] == model
    assert report["results"]["fit"] == result
    assert result["converged"]
    return result["params"]


def test_fit_command_power_model(tmp_path):
    x = np.linspace(0.25e-3, 2.5e-3, 8)
    y = 4.0e9 * x**2 + 1.0e5 * x
    sigma = np.full_like(x, 1e-3 * y.max())
    params = fit_params(tmp_path, "power", Dataset(x, y, sigma), "power")
    assert params["a"] == pytest.approx(4.0e9, rel=1e-3)
    assert params["b"] == pytest.approx(1.0e5, rel=1e-3)


def test_fit_command_linear_model(tmp_path):
    x = np.linspace(300.0, 575.0, 12)
    y = 12.5 * x + 40.0
    sigma = np.full_like(x, 1e-6 * np.abs(y).max())
    params = fit_params(tmp_path, "line", Dataset(x, y, sigma), "linear")
    assert params["slope"] == pytest.approx(12.5, rel=1e-9)
    assert params["intercept"] == pytest.approx(40.0, rel=1e-6)


def test_fit_command_thermal_model(tmp_path):
    cfg = load_config(None)
    wg, pump = cfg.waveguide, cfg.pump
    nus = np.linspace(0.4e12, 2.5e12, 40)
    dens = np.asarray(
        thermal_scatter_flux_density(nus, wg, pump.power, pump.wavelength)
    )
    sigma = 1e-3 * dens
    params = fit_params(tmp_path, "thermal", Dataset(nus, dens, sigma), "thermal")
    assert params["kappa"] == pytest.approx(wg.kappa, rel=1e-3)
    assert params["temperature"] == pytest.approx(wg.temperature, rel=1e-2)


def test_fit_command_sinc_model(tmp_path):
    cfg = load_config(None)
    wg = cfg.waveguide
    power = 1.25e-3
    nus = np.linspace(-4.0e12, 4.0e12, 161)
    dens = np.asarray(pair_flux_density(nus, wg, power))
    sigma = np.full_like(dens, 1e-4 * dens.max())
    params = fit_params(tmp_path, "sinc", Dataset(nus, dens, sigma), "sinc")
    assert params["amplitude"] == pytest.approx(wg.gamma * power * wg.length, rel=1e-3)
    assert params["beta2"] == pytest.approx(wg.beta2, rel=1e-2)
