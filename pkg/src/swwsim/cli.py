"""Command-line front end.

Every command reads one JSON config (missing fields fall back to the
built-in defaults), applies --set overrides, runs, and writes into --out:
the fully resolved config, a report.json, and the CSV artifacts of that
command.  Reports echo the resolved config and the RNG seed, so any number
in them can be regenerated from the report alone; wall-clock time is the
only nondeterministic field.

Exit codes: 0 success, 2 configuration rejected, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .core import (
    SpectrumSeries,
    integrate_band,
    pair_first_zero,
    pair_flux_density,
    raman_fiber_noise_density,
    thermal_scatter_flux_density,
    total_flux_model,
    wavelength_at_detuning,
    write_columns_csv,
)
from .events import (
    DetectionArm,
    TraceChannel,
    coincidence_histogram,
    expected_rates,
    generate_events,
    rise_fall_time,
    snr_estimate,
    time_resolved_flux,
)
from .fitting import (
    Dataset,
    FitError,
    extract_kappa,
    fit_bose_einstein,
    fit_linear_temperature,
    fit_power_decomposition,
    fit_sinc_spectrum,
)
from .instrument import chain_transmission, detected_rate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

REPORT_SCHEMA = "swwsim.report.v1"
RNG_ALGORITHM = "PCG64 (numpy.random.default_rng)"


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _write_json(path: Path, obj) -> None:
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _arms(cfg: RunConfig) -> dict[str, DetectionArm]:
    return {
        ch: DetectionArm(cfg.detectors[ch], cfg.arm_transmission(ch))
        for ch in ("stokes", "anti_stokes")
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, out: Path) -> dict:
    """Per-channel generated spectra, and the same spectra behind the full
    filter/loss/detector chain."""
    n = cfg.simulation.spectrum_points_per_band
    sb, ab = cfg.stokes_band, cfg.anti_stokes_band
    grid = np.unique(
        np.concatenate(
            [
                np.linspace(sb.detuning_min, sb.detuning_max, n),
                np.linspace(sb.detuning_max, -cfg.guard, 33),
                np.linspace(cfg.guard, ab.detuning_min, 33),
                np.linspace(ab.detuning_min, ab.detuning_max, n),
            ]
        )
    )
    wg, pump = cfg.waveguide, cfg.pump
    thermal = np.asarray(
        thermal_scatter_flux_density(grid, wg, pump.power, pump.wavelength)
    )
    pair = np.asarray(pair_flux_density(grid, wg, pump.power))
    raman = np.zeros_like(grid)
    if cfg.raman is not None:
        lo, hi = cfg.raman.support
        inside = (grid >= lo) & (grid <= hi)
        raman[inside] = np.asarray(
            raman_fiber_noise_density(grid[inside], cfg.raman, pump.power)
        )
    total = thermal + pair + raman

    # detection factor: filters at each point's wavelength, lumped losses,
    # then the efficiency and duty of the arm that side of the pump feeds
    lam = np.asarray(wavelength_at_detuning(grid, pump.wavelength))
    factor = np.asarray(
        chain_transmission(cfg.common_filters, cfg.output_budget(), lam)
    ).copy()
    for ch, mask in (("stokes", grid < 0), ("anti_stokes", grid >= 0)):
        det = cfg.detectors[ch]
        factor[mask] *= (
            np.asarray(chain_transmission(cfg.arm_filters[ch], None, lam[mask]))
            * det.efficiency
            * det.duty
        )

    files = []
    zeros = np.zeros_like(grid)
    channels = {"thermal": thermal, "pair": pair, "raman": raman, "total": total}
    for name, density in channels.items():
        if name == "raman" and cfg.raman is None:
            continue
        series = SpectrumSeries(grid, density, zeros)
        pre = out / f"spectrum_{name}.csv"
        series.to_csv(pre)
        post = out / f"spectrum_{name}_detected.csv"
        series.scaled(factor).to_csv(post)
        files += [pre.name, post.name]

    rates = expected_rates(
        wg,
        pump,
        sb,
        ab,
        _arms(cfg),
        raman_table=cfg.raman,
        guard=cfg.guard,
    )
    singles = {
        ch: rates["channels"][ch]["thermal_detected"]
        + rates["channels"][ch]["raman_detected"]
        + rates["channels"][ch]["pair_detected"]
        + rates["channels"][ch]["dark"]
        for ch in ("stokes", "anti_stokes")
    }
    return {
        "files": files,
        "grid_points": int(grid.size),
        "first_pair_zero_hz": pair_first_zero(wg, pump.power)
        if wg.beta2 != 0
        else None,
        "expected_rates": rates,
        "predicted_singles_hz": singles,
    }


def cmd_power_sweep(cfg: RunConfig, out: Path) -> dict:
    """Stokes-band flux versus pump power, its quadratic/linear split, and
    the scattering constant extracted back from the linear part."""
    wg, pump = cfg.waveguide, cfg.pump
    powers = np.asarray(cfg.sweep.powers)
    lin = np.empty_like(powers)
    quad = np.empty_like(powers)
    for i, p in enumerate(powers):
        parts = total_flux_model(p, wg, pump.wavelength, cfg.stokes_band, guard=cfg.guard)
        lin[i], quad[i] = parts.linear, parts.quadratic
    total = lin + quad
    throughput = cfg.detection_chain("stokes").throughput()
    detected_flux = throughput * total
    clicks = np.asarray(detected_rate(total * cfg.arm_transmission("stokes"),
                                      cfg.detectors["stokes"]))
    table = out / "power_sweep.csv"
    write_columns_csv(
        table,
        (
            "power_w",
            "flux_linear_hz",
            "flux_quadratic_hz",
            "flux_total_hz",
            "detected_flux_hz",
            "click_rate_hz",
        ),
        (powers, lin, quad, total, detected_flux, clicks),
    )

    sigma = np.full(powers.shape, max(float(detected_flux.max()), 1.0) * 1e-3)
    fit = fit_power_decomposition(Dataset(powers, detected_flux, sigma))
    estimate = extract_kappa(
        fit,
        wg,
        pump.wavelength,
        cfg.stokes_band,
        cfg.detection_chain("stokes"),
        guard=cfg.guard,
    )
    crossover = fit.params["b"] / fit.params["a"] if fit.params["a"] > 0 else None
    return {
        "files": [table.name],
        "fit": fit.to_dict(),
        "kappa": {
            "value_per_m_hz": estimate.kappa,
            "sigma_per_m_hz": estimate.sigma,
            "relative_components": estimate.relative_components,
            "configured_per_m_hz": wg.kappa,
            "ratio_to_configured": estimate.kappa / wg.kappa if wg.kappa else None,
        },
        "linear_fraction": {
            f"{p:.6g}": float(lin[i] / total[i]) if total[i] > 0 else None
            for i, p in enumerate(powers)
        },
        "crossover_power_w": crossover,
    }


def cmd_temp_sweep(cfg: RunConfig, out: Path) -> dict:
    """Anti-Stokes band flux versus waveguide temperature with a weighted
    linear fit, the classical-regime signature of the thermal noise."""
    wg, pump = cfg.waveguide, cfg.pump
    temps = np.asarray(cfg.sweep.temperatures)
    lin = np.empty_like(temps)
    quad = np.empty_like(temps)
    for i, t in enumerate(temps):
        parts = total_flux_model(
            pump.power,
            replace(wg, temperature=float(t)),
            pump.wavelength,
            cfg.anti_stokes_band,
            guard=cfg.guard,
        )
        lin[i], quad[i] = parts.linear, parts.quadratic
    total = lin + quad
    table = out / "temperature_sweep.csv"
    write_columns_csv(
        table,
        ("temperature_k", "flux_thermal_hz", "flux_pair_hz", "flux_total_hz"),
        (temps, lin, quad, total),
    )
    sigma = np.full(temps.shape, max(float(total.max()), 1.0) * 1e-3)
    fit = fit_linear_temperature(Dataset(temps, total, sigma))
    residuals = total - (fit.params["slope"] * temps + fit.params["intercept"])
    return {
        "files": [table.name],
        "fit": fit.to_dict(),
        "max_fractional_residual": float(
            np.max(np.abs(residuals)) / np.max(np.abs(total))
        ),
    }


def cmd_timetrace(cfg: RunConfig, out: Path) -> dict:
    """Time-resolved count traces locked to the pulsed pump: a pump monitor,
    the thermal sideband flux, the pair flux, and optionally a free-carrier
    channel with its slow edges."""
    if not cfg.pump.is_pulsed:
        raise ConfigError("pump.pulsed", "timetrace requires a pulsed pump")
    rates = expected_rates(
        cfg.waveguide,
        cfg.pump,
        cfg.stokes_band,
        cfg.anti_stokes_band,
        _arms(cfg),
        raman_table=cfg.raman,
        guard=cfg.guard,
    )
    # per-gate scanning resolves the pulse, so the duty cycle drops out of
    # the plateau rates here
    def plateau(origin: str) -> float:
        return sum(
            rates["channels"][ch][f"{origin}_detected"] / cfg.detectors[ch].duty
            for ch in ("stokes", "anti_stokes")
        )

    thermal_rate = plateau("thermal")
    channels = [
        TraceChannel(name="pump_monitor", kind="linear", peak_rate=thermal_rate),
        TraceChannel(name="thermal", kind="linear", peak_rate=thermal_rate),
        TraceChannel(name="pair", kind="quadratic", peak_rate=plateau("pair")),
    ]
    if cfg.raman is not None:
        channels.append(
            TraceChannel(name="raman", kind="linear", peak_rate=plateau("raman"))
        )
    if cfg.simulation.include_carrier_trace:
        channels.append(
            TraceChannel(
                name="carrier",
                kind="carrier",
                peak_rate=thermal_rate,
                carrier_lifetime=cfg.simulation.carrier_lifetime,
            )
        )
    traces = time_resolved_flux(
        cfg.pump,
        channels,
        cfg.simulation.trace_bin,
        cfg.simulation.duration,
        cfg.simulation.seed,
        window=cfg.simulation.trace_window,
    )
    files = []
    edges = {}
    for name, trace in traces.items():
        path = out / f"trace_{name}.csv"
        trace.to_csv(path)
        files.append(path.name)
        entry = {}
        for label, values in (("measured", trace.counts), ("expected", trace.expected)):
            try:
                entry[f"rise_s_{label}"] = rise_fall_time(
                    trace.time, values, edge="rise"
                )
                entry[f"fall_s_{label}"] = rise_fall_time(
                    trace.time, values, edge="fall"
                )
            except ValueError as exc:
                entry[f"edges_{label}_error"] = str(exc)
        edges[name] = entry
    return {
        "files": files,
        "n_pulses": int(next(iter(traces.values())).n_pulses),
        "edges": edges,
    }


def cmd_montecarlo(cfg: RunConfig, out: Path) -> dict:
    """Event-level simulation of a run: click record, coincidence histogram
    and the pair signal-to-accidentals metrics."""
    sim = cfg.simulation
    stream = generate_events(
        cfg.waveguide,
        cfg.pump,
        cfg.stokes_band,
        cfg.anti_stokes_band,
        _arms(cfg),
        sim.duration,
        sim.seed,
        raman_table=cfg.raman,
        guard=cfg.guard,
    )
    events_path = out / "events.csv"
    stream.to_csv(events_path)
    hist = coincidence_histogram(
        stream, sim.coincidence_bin, sim.coincidence_span, duration=sim.duration
    )
    hist_path = out / "histogram.csv"
    hist.to_csv(hist_path)
    metrics = snr_estimate(hist, exclude=sim.snr_exclude_bins)
    accidental = (
        hist.n_stokes / sim.duration
    ) * (hist.n_anti_stokes / sim.duration) * sim.coincidence_bin * sim.duration
    rates = expected_rates(
        cfg.waveguide,
        cfg.pump,
        cfg.stokes_band,
        cfg.anti_stokes_band,
        _arms(cfg),
        raman_table=cfg.raman,
        guard=cfg.guard,
    )
    return {
        "files": [events_path.name, hist_path.name],
        "counts": stream.counts(),
        "expected_rates": rates,
        "coincidences": {
            "snr": metrics.snr,
            "snr_sigma": metrics.snr_sigma,
            "car": metrics.car,
            "peak_counts": metrics.peak_counts,
            "offpeak_mean": metrics.offpeak_mean,
            "predicted_accidentals_per_bin": accidental,
        },
    }


def cmd_fit(cfg: RunConfig, out: Path, data_path: str, model: str) -> dict:
    """Fit a CSV dataset (columns x,y,sigma) with one of the bundled models
    in the context of the configured device."""
    data = Dataset.from_csv(data_path)
    wg, pump = cfg.waveguide, cfg.pump
    if model == "power":
        result = fit_power_decomposition(data)
    elif model == "thermal":
        result = fit_bose_einstein(data, wg, pump.wavelength, pump.power)
    elif model == "sinc":
        result = fit_sinc_spectrum(data, wg, pump.power)
    elif model == "linear":
        result = fit_linear_temperature(data)
    else:
        raise ConfigError("--fit-model", f"unknown model {model!r}")
    path = out / "fit_result.json"
    _write_json(path, result.to_dict())
    return {"files": [path.name], "model": model, "fit": result.to_dict()}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swwsim",
        description="Photon pair and thermal scattering noise simulator "
        "for silicon wire waveguides",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "spectrum": "generated and detected spectral densities per channel",
        "power-sweep": "flux vs pump power, quadratic/linear split, kappa",
        "temp-sweep": "anti-Stokes flux vs temperature with linear fit",
        "timetrace": "time-resolved traces locked to the pulsed pump",
        "montecarlo": "event-level run with coincidence histogram",
        "fit": "fit a CSV dataset with one of the bundled models",
    }
    for name, help_text in descriptions.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override RNG seed")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="PATH=VALUE",
            help="override a config field by dotted path",
        )
        if name == "fit":
            sp.add_argument("--data", required=True, help="CSV with columns x,y,sigma")
            sp.add_argument(
                "--fit-model",
                required=True,
                choices=("power", "thermal", "sinc", "linear"),
            )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    started = time.time()
    try:
        overrides = list(args.set)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "seed must be >= 0")
            overrides.append(f"simulation.seed={args.seed}")
        cfg = load_config(args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "config.resolved.json", cfg.resolved)
        if args.command == "spectrum":
            results = cmd_spectrum(cfg, out)
        elif args.command == "power-sweep":
            results = cmd_power_sweep(cfg, out)
        elif args.command == "temp-sweep":
            results = cmd_temp_sweep(cfg, out)
        elif args.command == "timetrace":
            results = cmd_timetrace(cfg, out)
        elif args.command == "montecarlo":
            results = cmd_montecarlo(cfg, out)
        else:
            results = cmd_fit(cfg, out, args.data, args.fit_model)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitError, np.linalg.LinAlgError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    report = {
        "schema": REPORT_SCHEMA,
        "command": args.command,
        "rng": {"algorithm": RNG_ALGORITHM, "seed": cfg.simulation.seed},
        "config": cfg.resolved,
        "results": results,
        "wall_clock_s": time.time() - started,
    }
    _write_json(out / "report.json", report)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
