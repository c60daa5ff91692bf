"""Run configuration: JSON in field units people actually quote (nm, THz,
mW, ns), resolved into strict-SI model objects.

A configuration file only needs the fields it wants to change; everything
else falls back to the defaults below, which reproduce the reference device
(11.2 mm wire, 1539.8 nm pump, the 0.4-2.5 THz analysis bands and the gated
InGaAs detector pair).  Unknown keys are rejected with their dotted path so
typos fail loudly.  Command-line overrides use the same dotted paths, e.g.
``--set pump.power_mw=1.25``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .core import (
    PumpConfig,
    SpectralBand,
    SquarePulse,
    TabulatedSpectrum,
    WaveguideParams,
)
from .instrument import DetectionChain, DetectorParams, FilterElement, LossBudget, LossEntry

__all__ = ["ConfigError", "RunConfig", "SimulationSettings", "SweepSettings",
           "DEFAULT_CONFIG", "load_config", "resolve_config"]


class ConfigError(ValueError):
    """Configuration rejection carrying the dotted path of the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


DEFAULT_CONFIG: dict = {
    "waveguide": {
        "length_mm": 11.2,
        "beta2_ps2_per_m": -1.5,
        "gamma_per_w_m": 300.0,
        "kappa_per_cm_thz": 3.5e-10,
        "temperature_k": 300.0,
        "propagation_loss_db": 2.5,
        "coupling_loss_in_db": 6.0,
        "coupling_loss_out_db": 6.0,
    },
    "pump": {
        "wavelength_nm": 1539.8,
        "power_mw": 0.25,
        "pulsed": False,
        "pulse_duration_ns": 50.0,
        "pulse_rep_rate_mhz": 2.0,
        "pulse_rise_fall_ps": 450.0,
    },
    "bands": {
        "stokes_thz": [-2.5, -0.4],
        "anti_stokes_thz": [0.4, 2.5],
        "guard_ghz": 10.0,
    },
    "filters": {
        "common": [
            {
                "kind": "bandblock",
                "center_nm": 1539.8,
                "width_nm": 1.6,
                "extinction_db": 150.0,
                "insertion_loss_db": 0.0,
            }
        ],
        "stokes": [
            {
                "kind": "demux",
                "center_nm": 1550.0,
                "width_nm": 16.0,
                "extinction_db": 150.0,
                "insertion_loss_db": 0.0,
            }
        ],
        "anti_stokes": [
            {
                "kind": "demux",
                "center_nm": 1530.0,
                "width_nm": 16.0,
                "extinction_db": 150.0,
                "insertion_loss_db": 0.0,
            }
        ],
    },
    "detectors": {
        "stokes": {
            "efficiency": 0.10,
            "dark_rate_hz": 805.0,
            "gate_rate_khz": 100.0,
            "gate_width_ns": 100.0,
            "dead_time_us": 0.0,
            "jitter_sigma_ps": 0.0,
        },
        "anti_stokes": {
            "efficiency": 0.15,
            "dark_rate_hz": 155.0,
            "gate_rate_khz": 100.0,
            "gate_width_ns": 100.0,
            "dead_time_us": 0.0,
            "jitter_sigma_ps": 0.0,
        },
    },
    "uncertainties": {
        "coupling_loss_out_db": 0.5,
        "propagation_loss_db": 0.5,
        "detector_efficiency_rel": 0.10,
    },
    "raman": {
        "enabled": False,
        "table_csv": "",
        "reference_power_mw": 1.25,
    },
    "simulation": {
        "duration_s": 1.0,
        "seed": 12345,
        "coincidence_bin_ns": 1.0,
        "coincidence_span_ns": 100.0,
        "snr_exclude_bins": 3,
        "trace_bin_ps": 100.0,
        "trace_window_ns": [-2.0, 60.0],
        "carrier_lifetime_ns": 1.0,
        "include_carrier_trace": False,
        "spectrum_points_per_band": 200,
    },
    "sweep": {
        "power_mw": [0.25, 0.7, 1.15, 1.6, 2.05, 2.5],
        "temperature_k": [
            300.0, 325.0, 350.0, 375.0, 400.0, 425.0,
            450.0, 475.0, 500.0, 525.0, 550.0, 575.0,
        ],
    },
}


def _merge(base: dict, user, path: str) -> dict:
    """Deep merge of a user mapping onto defaults; unknown keys rejected."""
    if not isinstance(user, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    out = {}
    for key, default_value in base.items():
        here = f"{path}.{key}" if path else key
        if key not in user:
            out[key] = copy.deepcopy(default_value)
        elif isinstance(default_value, dict):
            out[key] = _merge(default_value, user[key], here)
        elif (
            isinstance(default_value, list)
            and default_value
            and isinstance(default_value[0], dict)
        ):
            # filter lists: replace wholesale, each entry completed from the
            # first default entry's key set
            entries = user[key]
            if not isinstance(entries, list):
                raise ConfigError(here, "expected a JSON array")
            template = default_value[0]
            merged = []
            for i, entry in enumerate(entries):
                merged.append(_merge(template, entry, f"{here}[{i}]"))
            out[key] = merged
        else:
            out[key] = copy.deepcopy(user[key])
    for key in user:
        if key not in base:
            here = f"{path}.{key}" if path else key
            raise ConfigError(here, "unknown key")
    return out


def _set_path(tree: dict, dotted: str, raw_value: str) -> None:
    """Apply one dotted-path override; the path must already exist."""
    parts = dotted.split(".")
    node = tree
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(".".join(parts[: i + 1]), "unknown key in override")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(dotted, "unknown key in override")
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    node[leaf] = value


def _num(tree: dict, path: str, *, positive=False, nonnegative=False) -> float:
    node = tree
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(path, "expected a number")
    v = float(node)
    if positive and not v > 0:
        raise ConfigError(path, "must be > 0")
    if nonnegative and v < 0:
        raise ConfigError(path, "must be >= 0")
    return v


def _pair(tree: dict, path: str) -> tuple[float, float]:
    node = tree
    for part in path.split("."):
        node = node[part]
    if (
        not isinstance(node, list)
        or len(node) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in node)
    ):
        raise ConfigError(path, "expected [low, high] numbers")
    return float(node[0]), float(node[1])


@dataclass(frozen=True)
class SimulationSettings:
    duration: float
    seed: int
    coincidence_bin: float
    coincidence_span: float
    snr_exclude_bins: int
    trace_bin: float
    trace_window: tuple[float, float]
    carrier_lifetime: float
    include_carrier_trace: bool
    spectrum_points_per_band: int


@dataclass(frozen=True)
class SweepSettings:
    powers: tuple[float, ...]
    temperatures: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Validated configuration with everything resolved to SI objects.

    resolved is the fully merged configuration in file units; echoing it in
    reports makes every run reproducible from the report alone.
    """

    resolved: dict
    waveguide: WaveguideParams
    pump: PumpConfig
    stokes_band: SpectralBand
    anti_stokes_band: SpectralBand
    guard: float
    common_filters: tuple[FilterElement, ...]
    arm_filters: dict[str, tuple[FilterElement, ...]]
    detectors: dict[str, DetectorParams]
    raman: TabulatedSpectrum | None
    simulation: SimulationSettings
    sweep: SweepSettings

    def output_budget(self) -> LossBudget:
        """Losses between pair/noise generation and the detectors, with the
        configured dB uncertainties attached."""
        unc = self.resolved["uncertainties"]
        return LossBudget(
            (
                LossEntry(
                    "coupling_out",
                    self.waveguide.coupling_loss_out,
                    float(unc["coupling_loss_out_db"]),
                ),
                LossEntry(
                    "propagation",
                    self.waveguide.propagation_loss,
                    float(unc["propagation_loss_db"]),
                ),
            )
        )

    def detection_chain(self, channel: str) -> DetectionChain:
        det = self.detectors[channel]
        return DetectionChain(
            efficiency=det.efficiency,
            duty=det.duty,
            losses=self.output_budget(),
            efficiency_rel_sigma=float(
                self.resolved["uncertainties"]["detector_efficiency_rel"]
            ),
        )

    def arm_transmission(self, channel: str) -> float:
        """Wavelength-flat in-band transmission of one arm: lumped losses
        plus filter insertion losses (passbands are ideal in band)."""
        t = self.output_budget().transmission()
        for element in self.common_filters + self.arm_filters[channel]:
            t *= 10.0 ** (-element.insertion_loss / 10.0)
        return t


def _build_filter(entry: dict, path: str) -> FilterElement:
    try:
        return FilterElement(
            kind=str(entry["kind"]),
            center=_num(entry, "center_nm", positive=True) * 1e-9,
            width=_num(entry, "width_nm", positive=True) * 1e-9,
            extinction=_num(entry, "extinction_db", nonnegative=True),
            insertion_loss=_num(entry, "insertion_loss_db", nonnegative=True),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def resolve_config(user: dict, overrides=()) -> RunConfig:
    """Merge user config onto the defaults, apply overrides, validate and
    build the SI objects."""
    resolved = _merge(DEFAULT_CONFIG, user, "")
    for item in overrides:
        if "=" not in item:
            raise ConfigError("<override>", f"expected path=value, got {item!r}")
        dotted, raw = item.split("=", 1)
        _set_path(resolved, dotted.strip(), raw.strip())

    try:
        waveguide = WaveguideParams(
            length=_num(resolved, "waveguide.length_mm", positive=True) * 1e-3,
            beta2=_num(resolved, "waveguide.beta2_ps2_per_m") * 1e-24,
            gamma=_num(resolved, "waveguide.gamma_per_w_m", nonnegative=True),
            kappa=_num(resolved, "waveguide.kappa_per_cm_thz", nonnegative=True)
            * 1e2
            * 1e-12,
            temperature=_num(resolved, "waveguide.temperature_k", positive=True),
            propagation_loss=_num(
                resolved, "waveguide.propagation_loss_db", nonnegative=True
            ),
            coupling_loss_in=_num(
                resolved, "waveguide.coupling_loss_in_db", nonnegative=True
            ),
            coupling_loss_out=_num(
                resolved, "waveguide.coupling_loss_out_db", nonnegative=True
            ),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("waveguide", str(exc)) from None

    pump_tree = resolved["pump"]
    if not isinstance(pump_tree.get("pulsed"), bool):
        raise ConfigError("pump.pulsed", "expected true or false")
    envelope = None
    if pump_tree["pulsed"]:
        try:
            envelope = SquarePulse(
                duration=_num(resolved, "pump.pulse_duration_ns", positive=True) * 1e-9,
                rep_rate=_num(resolved, "pump.pulse_rep_rate_mhz", positive=True) * 1e6,
                rise_fall=_num(resolved, "pump.pulse_rise_fall_ps", nonnegative=True)
                * 1e-12,
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError("pump", str(exc)) from None
    try:
        pump = PumpConfig(
            wavelength=_num(resolved, "pump.wavelength_nm", positive=True) * 1e-9,
            power=_num(resolved, "pump.power_mw", nonnegative=True) * 1e-3,
            envelope=envelope,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError("pump", str(exc)) from None

    guard = _num(resolved, "bands.guard_ghz", positive=True) * 1e9
    s_lo, s_hi = (v * 1e12 for v in _pair(resolved, "bands.stokes_thz"))
    a_lo, a_hi = (v * 1e12 for v in _pair(resolved, "bands.anti_stokes_thz"))
    if not s_lo < s_hi <= 0:
        raise ConfigError("bands.stokes_thz", "must satisfy low < high <= 0")
    if not 0 <= a_lo < a_hi:
        raise ConfigError("bands.anti_stokes_thz", "must satisfy 0 <= low < high")
    if abs(s_hi) < guard:
        raise ConfigError(
            "bands.stokes_thz", "band reaches closer to the pump than the guard"
        )
    if abs(a_lo) < guard:
        raise ConfigError(
            "bands.anti_stokes_thz", "band reaches closer to the pump than the guard"
        )
    stokes_band = SpectralBand(s_lo, s_hi)
    anti_stokes_band = SpectralBand(a_lo, a_hi)

    common = tuple(
        _build_filter(e, f"filters.common[{i}]")
        for i, e in enumerate(resolved["filters"]["common"])
    )
    arm_filters = {
        ch: tuple(
            _build_filter(e, f"filters.{ch}[{i}]")
            for i, e in enumerate(resolved["filters"][ch])
        )
        for ch in ("stokes", "anti_stokes")
    }

    detectors = {}
    for ch in ("stokes", "anti_stokes"):
        base = f"detectors.{ch}"
        try:
            detectors[ch] = DetectorParams(
                efficiency=_num(resolved, f"{base}.efficiency", nonnegative=True),
                dark_rate=_num(resolved, f"{base}.dark_rate_hz", nonnegative=True),
                gate_rate=_num(resolved, f"{base}.gate_rate_khz", positive=True) * 1e3,
                gate_width=_num(resolved, f"{base}.gate_width_ns", positive=True)
                * 1e-9,
                dead_time=_num(resolved, f"{base}.dead_time_us", nonnegative=True)
                * 1e-6,
                jitter_sigma=_num(resolved, f"{base}.jitter_sigma_ps", nonnegative=True)
                * 1e-12,
            )
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(base, str(exc)) from None

    for key in ("coupling_loss_out_db", "propagation_loss_db"):
        _num(resolved, f"uncertainties.{key}", nonnegative=True)
    _num(resolved, "uncertainties.detector_efficiency_rel", nonnegative=True)

    raman = None
    raman_tree = resolved["raman"]
    if not isinstance(raman_tree.get("enabled"), bool):
        raise ConfigError("raman.enabled", "expected true or false")
    if raman_tree["enabled"]:
        table_path = Path(str(raman_tree["table_csv"]))
        if not table_path.is_file():
            raise ConfigError("raman.table_csv", f"no such file: {table_path}")
        try:
            raman = TabulatedSpectrum.from_csv(
                table_path,
                _num(resolved, "raman.reference_power_mw", positive=True) * 1e-3,
            )
        except ValueError as exc:
            raise ConfigError("raman.table_csv", str(exc)) from None

    sim_tree = resolved["simulation"]
    window = _pair(resolved, "simulation.trace_window_ns")
    if not window[0] < window[1]:
        raise ConfigError("simulation.trace_window_ns", "must satisfy low < high")
    seed = sim_tree["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("simulation.seed", "expected a nonnegative integer")
    exclude = sim_tree["snr_exclude_bins"]
    if isinstance(exclude, bool) or not isinstance(exclude, int) or exclude < 0:
        raise ConfigError("simulation.snr_exclude_bins", "expected an integer >= 0")
    points = sim_tree["spectrum_points_per_band"]
    if isinstance(points, bool) or not isinstance(points, int) or points < 2:
        raise ConfigError(
            "simulation.spectrum_points_per_band", "expected an integer >= 2"
        )
    if not isinstance(sim_tree["include_carrier_trace"], bool):
        raise ConfigError("simulation.include_carrier_trace", "expected true or false")
    simulation = SimulationSettings(
        duration=_num(resolved, "simulation.duration_s", positive=True),
        seed=int(seed),
        coincidence_bin=_num(resolved, "simulation.coincidence_bin_ns", positive=True)
        * 1e-9,
        coincidence_span=_num(resolved, "simulation.coincidence_span_ns", positive=True)
        * 1e-9,
        snr_exclude_bins=int(exclude),
        trace_bin=_num(resolved, "simulation.trace_bin_ps", positive=True) * 1e-12,
        trace_window=(window[0] * 1e-9, window[1] * 1e-9),
        carrier_lifetime=_num(resolved, "simulation.carrier_lifetime_ns", positive=True)
        * 1e-9,
        include_carrier_trace=bool(sim_tree["include_carrier_trace"]),
        spectrum_points_per_band=int(points),
    )

    sweep_tree = resolved["sweep"]
    for key in ("power_mw", "temperature_k"):
        values = sweep_tree[key]
        if (
            not isinstance(values, list)
            or not values
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in values)
        ):
            raise ConfigError(f"sweep.{key}", "expected a nonempty numeric array")
    powers = tuple(float(v) * 1e-3 for v in sweep_tree["power_mw"])
    temperatures = tuple(float(v) for v in sweep_tree["temperature_k"])
    if any(v < 0 for v in powers):
        raise ConfigError("sweep.power_mw", "powers must be >= 0")
    if any(v <= 0 for v in temperatures):
        raise ConfigError("sweep.temperature_k", "temperatures must be > 0")

    return RunConfig(
        resolved=resolved,
        waveguide=waveguide,
        pump=pump,
        stokes_band=stokes_band,
        anti_stokes_band=anti_stokes_band,
        guard=guard,
        common_filters=common,
        arm_filters=arm_filters,
        detectors=detectors,
        raman=raman,
        simulation=simulation,
        sweep=SweepSettings(powers=powers, temperatures=temperatures),
    )


def load_config(path=None, overrides=()) -> RunConfig:
    """Read a JSON config file (None or empty file means pure defaults),
    apply dotted-path overrides, and return the validated RunConfig."""
    user: dict = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError("<file>", f"no such config file: {p}")
        text = p.read_text()
        if text.strip():
            try:
                user = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("<file>", "top level must be a JSON object")
    return resolve_config(user, overrides)
