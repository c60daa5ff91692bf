"""Monte Carlo detection records, coincidences and time-resolved traces.

Photon arrivals at the two detection arms (Stokes and anti-Stokes) are
Poisson point processes at the analytically computed detected rates, so the
statistics downstream of the models are exact rather than re-derived.  The
two detectors are gated from a common clock: both photons of a pair see the
same gate state, which is what makes pair coincidences survive a small duty
cycle while accidentals are suppressed.  A single Bernoulli draw on the duty
therefore covers a whole pair, while detection efficiency and chain
transmission are drawn independently per arm.  Everything is valid in the
unsaturated regime (much less than one expected count per gate).

Time axes are seconds from the start of the run; all generators take an
integer seed and use numpy's default PCG64 bit generator, so a run is fully
reproducible from (configuration, seed).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import (
    DEFAULT_GUARD_HZ,
    SpectralBand,
    TabulatedSpectrum,
    WaveguideParams,
    PumpConfig,
    integrate_band,
    pair_flux_density,
    pump_power_at,
    raman_fiber_noise_density,
    thermal_scatter_flux_density,
)
from .instrument import DetectorParams

__all__ = [
    "CHANNELS",
    "ORIGINS",
    "EventStream",
    "DetectionArm",
    "CoincidenceHistogram",
    "CoincidenceMetrics",
    "sample_pair_detunings",
    "expected_rates",
    "generate_events",
    "coincidence_histogram",
    "snr_estimate",
    "carrier_density_trace",
    "TraceChannel",
    "TimeTrace",
    "time_resolved_flux",
    "rise_fall_time",
]

CHANNELS = ("stokes", "anti_stokes")
ORIGINS = ("pair", "thermal", "raman", "dark")

_CHANNEL_CODE = {name: i for i, name in enumerate(CHANNELS)}
_ORIGIN_CODE = {name: i for i, name in enumerate(ORIGINS)}


@dataclass(frozen=True, eq=False)
class EventStream:
    """Detected clicks: arrival time (s), channel and physical origin.

    channel and origin are small integer codes indexing CHANNELS and
    ORIGINS; times are nondecreasing.
    """

    time: np.ndarray
    channel: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.time, dtype=float).copy()
        ch = np.asarray(self.channel, dtype=np.int8).copy()
        org = np.asarray(self.origin, dtype=np.int8).copy()
        if not (t.shape == ch.shape == org.shape) or t.ndim != 1:
            raise ValueError("event columns must be 1-d and share one length")
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise ValueError("event times must be nondecreasing")
        if ch.size and (ch.min() < 0 or ch.max() >= len(CHANNELS)):
            raise ValueError("invalid channel code")
        if org.size and (org.min() < 0 or org.max() >= len(ORIGINS)):
            raise ValueError("invalid origin code")
        for name, arr in (("time", t), ("channel", ch), ("origin", org)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.time.size

    def times(self, channel: str | None = None, origin: str | None = None):
        """Arrival times filtered by channel and/or origin name."""
        mask = np.ones(self.time.shape, dtype=bool)
        if channel is not None:
            mask &= self.channel == _CHANNEL_CODE[channel]
        if origin is not None:
            mask &= self.origin == _ORIGIN_CODE[origin]
        return self.time[mask]

    def counts(self) -> dict[str, dict[str, int]]:
        """Click counts keyed by channel then origin."""
        out: dict[str, dict[str, int]] = {}
        for ch_name, ch_code in _CHANNEL_CODE.items():
            ch_mask = self.channel == ch_code
            out[ch_name] = {
                org_name: int(np.sum(ch_mask & (self.origin == org_code)))
                for org_name, org_code in _ORIGIN_CODE.items()
            }
        return out

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("time_s", "channel", "origin"))
            for i in range(self.time.size):
                writer.writerow(
                    (
                        f"{self.time[i]:.17g}",
                        CHANNELS[self.channel[i]],
                        ORIGINS[self.origin[i]],
                    )
                )

    @classmethod
    def from_csv(cls, path) -> "EventStream":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [c.strip() for c in header] != [
                "time_s",
                "channel",
                "origin",
            ]:
                raise ValueError(f"{path}: expected header time_s,channel,origin")
            times, chans, origs = [], [], []
            for row in reader:
                if not row:
                    continue
                times.append(float(row[0]))
                chans.append(_CHANNEL_CODE[row[1].strip()])
                origs.append(_ORIGIN_CODE[row[2].strip()])
        return cls(
            np.asarray(times, dtype=float),
            np.asarray(chans, dtype=np.int8),
            np.asarray(origs, dtype=np.int8),
        )


@dataclass(frozen=True)
class DetectionArm:
    """One detection arm: a gated detector plus the in-band transmission of
    everything between the waveguide and it.

    transmission may be a scalar (wavelength-flat chain) or a callable of
    signed detuning, used when a narrow tunable filter sits in the arm.
    """

    detector: DetectorParams
    transmission: float | Callable = 1.0

    def __post_init__(self):
        if not callable(self.transmission):
            t = float(self.transmission)
            if not 0.0 < t <= 1.0:
                raise ValueError("arm transmission must be in (0, 1]")

    def transmission_at(self, detuning) -> np.ndarray:
        nu = np.asarray(detuning, dtype=float)
        if callable(self.transmission):
            t = np.broadcast_to(
                np.asarray(self.transmission(nu), dtype=float), nu.shape
            )
        else:
            t = np.full(nu.shape, float(self.transmission))
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError("arm transmission must stay in [0, 1]")
        return t


def sample_pair_detunings(
    waveguide: WaveguideParams,
    power: float,
    band: SpectralBand,
    n: int,
    rng: np.random.Generator,
    grid_points: int = 4096,
) -> np.ndarray:
    """Draw n pair detunings inside a band from the pair spectral density.

    Inverse-CDF sampling on a dense tabulation of the density; accuracy is
    limited by the grid, which is ample for the smooth phase-matching
    envelope at sub-watt powers.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    grid = np.linspace(band.detuning_min, band.detuning_max, grid_points)
    pdf = np.asarray(pair_flux_density(grid, waveguide, power))
    mass = np.concatenate(
        ([0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid)))
    )
    if mass[-1] <= 0:
        raise ValueError("pair density vanishes on the band; nothing to sample")
    cdf = mass / mass[-1]
    return np.interp(rng.uniform(size=n), cdf, grid)


def _band_rate(density, band, breakpoints=None) -> float:
    return integrate_band(density, band, breakpoints=breakpoints)


def expected_rates(
    waveguide: WaveguideParams,
    pump: PumpConfig,
    stokes_band: SpectralBand,
    anti_stokes_band: SpectralBand,
    arms: dict[str, DetectionArm],
    *,
    raman_table: TabulatedSpectrum | None = None,
    guard: float = DEFAULT_GUARD_HZ,
) -> dict:
    """Analytic generation and detected rates per channel and origin, at the
    peak pump power.  Pulsed operation scales the time-averaged noise rates
    by the envelope mean (linear origins) or mean square (pairs); the values
    here are instantaneous at the plateau.
    """
    for name, band in (("stokes", stokes_band), ("anti_stokes", anti_stokes_band)):
        if band.min_abs_detuning < guard:
            raise ValueError(f"{name} band violates the zero-detuning guard")
    if stokes_band.detuning_max > 0:
        raise ValueError("stokes band must lie at negative detunings")
    if anti_stokes_band.detuning_min < 0:
        raise ValueError("anti-Stokes band must lie at positive detunings")
    bands = {"stokes": stokes_band, "anti_stokes": anti_stokes_band}
    power = pump.power
    out: dict = {"channels": {}}
    for ch in CHANNELS:
        arm = arms[ch]
        band = bands[ch]
        det = arm.detector
        thermal_gen = _band_rate(
            lambda nu: thermal_scatter_flux_density(nu, waveguide, power, pump.wavelength)
            * arm.transmission_at(nu),
            band,
        )
        if raman_table is not None:
            if not raman_table.covers(band):
                raise ValueError(
                    f"tabulated noise spectrum does not cover the {ch} band"
                )
            raman_gen = _band_rate(
                lambda nu: raman_fiber_noise_density(nu, raman_table, power)
                * arm.transmission_at(nu),
                band,
                breakpoints=raman_table.detuning,
            )
        else:
            raman_gen = 0.0
        pair_det = 2.0 * _band_rate(
            lambda nu: pair_flux_density(nu, waveguide, power)
            * det.efficiency
            * det.duty
            * arm.transmission_at(nu),
            band,
        )
        out["channels"][ch] = {
            "thermal_detected": det.efficiency * det.duty * thermal_gen,
            "raman_detected": det.efficiency * det.duty * raman_gen,
            "dark": det.dark_rate,
            "pair_detected": pair_det,
        }
    out["pair_generation"] = 2.0 * _band_rate(
        lambda nu: pair_flux_density(nu, waveguide, power), stokes_band
    )
    duty_joint = min(arms["stokes"].detector.duty, arms["anti_stokes"].detector.duty)
    out["pair_coincidence"] = 2.0 * _band_rate(
        lambda nu: pair_flux_density(nu, waveguide, power)
        * duty_joint
        * arms["stokes"].detector.efficiency
        * arms["stokes"].transmission_at(nu)
        * arms["anti_stokes"].detector.efficiency
        * arms["anti_stokes"].transmission_at(-np.asarray(nu)),
        stokes_band,
    )
    return out


def _thin_by_envelope(t, pump: PumpConfig, exponent: int, rng) -> np.ndarray:
    """Keep events according to the normalized pump envelope to the given
    power (1 for linear processes, 2 for pair generation)."""
    if pump.envelope is None or t.size == 0:
        return t
    shape = np.asarray(pump_power_at(pump, t)) / pump.power
    keep = rng.uniform(size=t.size) < shape**exponent
    return t[keep]


def _apply_dead_time(times: np.ndarray, dead: float) -> np.ndarray:
    """Greedy dead-time pruning mask over sorted times."""
    keep = np.ones(times.size, dtype=bool)
    if dead <= 0 or times.size == 0:
        return keep
    last = -math.inf
    for i, t in enumerate(times):
        if t - last < dead:
            keep[i] = False
        else:
            last = t
    return keep


def generate_events(
    waveguide: WaveguideParams,
    pump: PumpConfig,
    stokes_band: SpectralBand,
    anti_stokes_band: SpectralBand,
    arms: dict[str, DetectionArm],
    duration: float,
    seed: int,
    *,
    raman_table: TabulatedSpectrum | None = None,
    include: tuple[str, ...] = ORIGINS,
    guard: float = DEFAULT_GUARD_HZ,
) -> EventStream:
    """Simulate the detected click record over a run of the given duration.

    Noise origins (thermal, raman, dark) are independent Poisson processes
    per channel at their detected rates.  Pairs are generated as a single
    process at the pair rate; each pair draws one shared gate-state variable
    and independent per-arm detection Bernoullis, and its detuning is drawn
    from the pair spectral density so narrowband arm filters act per event.
    Pulsed pumps thin events by the envelope (squared for pairs).  Timing
    jitter is added per detected photon; dark counts carry no jitter.  The
    draw order is fixed (thermal, raman, dark per channel, then pairs), so a
    given configuration and seed reproduce the stream bit for bit.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    unknown = set(include) - set(ORIGINS)
    if unknown:
        raise ValueError(f"unknown origins {sorted(unknown)}")
    rates = expected_rates(
        waveguide,
        pump,
        stokes_band,
        anti_stokes_band,
        arms,
        raman_table=raman_table,
        guard=guard,
    )
    rng = np.random.default_rng(seed)
    times: list[np.ndarray] = []
    chans: list[np.ndarray] = []
    origs: list[np.ndarray] = []

    def emit(t, channel, origin):
        times.append(t)
        chans.append(np.full(t.size, _CHANNEL_CODE[channel], dtype=np.int8))
        origs.append(np.full(t.size, _ORIGIN_CODE[origin], dtype=np.int8))

    def poisson_times(rate) -> np.ndarray:
        n = int(rng.poisson(rate * duration))
        return rng.uniform(0.0, duration, n)

    for ch in CHANNELS:
        arm = arms[ch]
        jitter = arm.detector.jitter_sigma
        for origin in ("thermal", "raman"):
            if origin not in include:
                continue
            rate = rates["channels"][ch][f"{origin}_detected"]
            if rate <= 0:
                continue
            t = _thin_by_envelope(poisson_times(rate), pump, 1, rng)
            if jitter > 0 and t.size:
                t = t + rng.normal(0.0, jitter, t.size)
            emit(t, ch, origin)
        if "dark" in include and arm.detector.dark_rate > 0:
            emit(poisson_times(arm.detector.dark_rate), ch, "dark")

    if "pair" in include and rates["pair_generation"] > 0:
        # Pairs are generated at rates far above anything detectable, so the
        # process is thinned analytically before any times are drawn.  With
        # the shared gate variable a pair ends in one of three detected
        # classes (both arms, Stokes only, anti-Stokes only) whose rates are
        # exact band integrals; pairs with no detected photon never exist in
        # the stream.  Surviving pairs draw a Stokes detuning from the
        # density weighted by the union detection probability (the
        # anti-Stokes photon sits at the exact mirror detuning) and the
        # class split is applied conditionally at that detuning.
        arm_s = arms["stokes"]
        arm_as = arms["anti_stokes"]
        duty_s = arm_s.detector.duty
        duty_as = arm_as.detector.duty
        duty_joint = min(duty_s, duty_as)

        def q_s(nu):
            return arm_s.detector.efficiency * arm_s.transmission_at(nu)

        def q_as(nu):
            return arm_as.detector.efficiency * arm_as.transmission_at(
                -np.asarray(nu, dtype=float)
            )

        def p_any(nu):
            qs, qa = q_s(nu), q_as(nu)
            return (
                duty_joint * (qs + qa - qs * qa)
                + (duty_s - duty_joint) * qs
                + (duty_as - duty_joint) * qa
            )

        rate_any = 2.0 * _band_rate(
            lambda nu: pair_flux_density(nu, waveguide, pump.power) * p_any(nu),
            stokes_band,
        )
        if rate_any > 0:
            t = _thin_by_envelope(poisson_times(rate_any), pump, 2, rng)
            grid = np.linspace(
                stokes_band.detuning_min, stokes_band.detuning_max, 4096
            )
            weight = np.asarray(
                pair_flux_density(grid, waveguide, pump.power)
            ) * p_any(grid)
            mass = np.concatenate(
                ([0.0], np.cumsum(0.5 * (weight[1:] + weight[:-1]) * np.diff(grid)))
            )
            cdf = mass / mass[-1]
            nu_s = np.interp(rng.uniform(size=t.size), cdf, grid)
            qs, qa, pa = q_s(nu_s), q_as(nu_s), p_any(nu_s)
            p_both = duty_joint * qs * qa
            p_s_only = duty_s * qs - p_both
            split = rng.uniform(size=t.size) * pa
            both = split < p_both
            s_only = ~both & (split < p_both + p_s_only)
            as_only = ~both & ~s_only
            t_s = t[both | s_only]
            t_as = t[both | as_only]
            if arm_s.detector.jitter_sigma > 0 and t_s.size:
                t_s = t_s + rng.normal(0.0, arm_s.detector.jitter_sigma, t_s.size)
            if arm_as.detector.jitter_sigma > 0 and t_as.size:
                t_as = t_as + rng.normal(0.0, arm_as.detector.jitter_sigma, t_as.size)
            emit(t_s, "stokes", "pair")
            emit(t_as, "anti_stokes", "pair")

    if times:
        time = np.concatenate(times)
        channel = np.concatenate(chans)
        origin = np.concatenate(origs)
    else:
        time = np.empty(0)
        channel = np.empty(0, dtype=np.int8)
        origin = np.empty(0, dtype=np.int8)
    order = np.argsort(time, kind="stable")
    time, channel, origin = time[order], channel[order], origin[order]

    keep = np.ones(time.size, dtype=bool)
    for ch in CHANNELS:
        dead = arms[ch].detector.dead_time
        if dead > 0:
            mask = channel == _CHANNEL_CODE[ch]
            keep[mask] = _apply_dead_time(time[mask], dead)
    return EventStream(time[keep], channel[keep], origin[keep])


# ---------------------------------------------------------------------------
# coincidences
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoincidenceHistogram:
    """Histogram of anti-Stokes minus Stokes arrival-time differences."""

    bin_width: float
    span: float
    delay: np.ndarray
    counts: np.ndarray
    zero_bin: int
    n_stokes: int
    n_anti_stokes: int
    duration: float

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("delay_s", "counts"))
            for i in range(self.delay.size):
                writer.writerow((f"{self.delay[i]:.17g}", int(self.counts[i])))


def coincidence_histogram(
    stream: EventStream, bin_width: float, span: float, *, duration: float | None = None
) -> CoincidenceHistogram:
    """Histogram all (anti-Stokes, Stokes) click pairs with delay
    t_as - t_s inside [-span/2, span/2].

    span must be an integer number of bins; the zero-delay bin is the one
    containing delay 0.  Singles counts ride along for accidental-rate
    estimates.
    """
    if bin_width <= 0 or span <= 0:
        raise ValueError("bin width and span must be positive")
    nbins = int(round(span / bin_width))
    if nbins < 1 or abs(span - nbins * bin_width) > 1e-9 * span:
        raise ValueError("span must be an integer multiple of the bin width")
    t_s = stream.times(channel="stokes")
    t_as = stream.times(channel="anti_stokes")
    half = span / 2.0
    lo = np.searchsorted(t_s, t_as - half, side="left")
    hi = np.searchsorted(t_s, t_as + half, side="right")
    counts_per = hi - lo
    total = int(counts_per.sum())
    if total:
        idx_as = np.repeat(np.arange(t_as.size), counts_per)
        offsets = np.arange(total) - np.repeat(
            np.cumsum(counts_per) - counts_per, counts_per
        )
        idx_s = np.repeat(lo, counts_per) + offsets
        delays = t_as[idx_as] - t_s[idx_s]
    else:
        delays = np.empty(0)
    edges = (np.arange(nbins + 1) - nbins / 2.0) * bin_width
    hist, _ = np.histogram(delays, bins=edges)
    centers = 0.5 * (edges[:-1] + edges[1:])
    zero_bin = int(np.clip(np.searchsorted(edges, 0.0, side="right") - 1, 0, nbins - 1))
    if duration is None:
        duration = float(stream.time[-1]) if len(stream) else 0.0
    return CoincidenceHistogram(
        bin_width=bin_width,
        span=span,
        delay=centers,
        counts=hist.astype(np.int64),
        zero_bin=zero_bin,
        n_stokes=int(t_s.size),
        n_anti_stokes=int(t_as.size),
        duration=float(duration),
    )


@dataclass(frozen=True)
class CoincidenceMetrics:
    """Peak-to-background summary of a coincidence histogram."""

    snr: float
    snr_sigma: float
    car: float
    peak_counts: int
    offpeak_mean: float
    n_offpeak: int


def snr_estimate(hist: CoincidenceHistogram, exclude: int = 3) -> CoincidenceMetrics:
    """Signal-to-noise of the zero-delay peak over the accidental floor.

    snr = (peak - mean_offpeak) / mean_offpeak, where off-peak bins are all
    bins more than `exclude` bins away from the zero-delay bin.  The sigma
    comes from Poisson counting statistics in both the peak and the floor.
    The coincidences-to-accidentals ratio (car) is snr + 1.
    """
    if exclude < 0:
        raise ValueError("exclude must be >= 0")
    idx = np.arange(hist.counts.size)
    off = hist.counts[np.abs(idx - hist.zero_bin) > exclude]
    if off.size < 10:
        raise ValueError("need at least 10 off-peak bins for a floor estimate")
    peak = float(hist.counts[hist.zero_bin])
    mean_off = float(off.mean())
    if mean_off == 0.0:
        return CoincidenceMetrics(
            snr=math.inf,
            snr_sigma=math.nan,
            car=math.inf,
            peak_counts=int(peak),
            offpeak_mean=0.0,
            n_offpeak=int(off.size),
        )
    snr = (peak - mean_off) / mean_off
    var_mean = float(off.sum()) / off.size**2
    var_snr = peak / mean_off**2 + var_mean * (peak / mean_off**2) ** 2
    return CoincidenceMetrics(
        snr=snr,
        snr_sigma=math.sqrt(var_snr),
        car=peak / mean_off,
        peak_counts=int(peak),
        offpeak_mean=mean_off,
        n_offpeak=int(off.size),
    )


# ---------------------------------------------------------------------------
# slow dynamics and time-resolved traces
# ---------------------------------------------------------------------------


def carrier_density_trace(
    pump: PumpConfig,
    lifetime: float,
    t: np.ndarray,
    gen_linear: float = 1.0,
    gen_quadratic: float = 0.0,
) -> np.ndarray:
    """Free-carrier population N(t) driven by the pump envelope.

    dN/dt = g1 P(t) + g2 P(t)^2 - N / tau, integrated exactly on each grid
    interval with the drive held at its midpoint value.  N starts from zero
    at t[0]; for well separated pulses that matches the fully decayed state.
    """
    if lifetime <= 0:
        raise ValueError("carrier lifetime must be positive")
    t = np.asarray(t, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need a 1-d time grid with at least two points")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("time grid must be strictly increasing")
    mid = 0.5 * (t[:-1] + t[1:])
    p_mid = np.asarray(pump_power_at(pump, mid))
    drive = gen_linear * p_mid + gen_quadratic * p_mid**2
    decay = np.exp(-dt / lifetime)
    n = np.empty(t.size)
    n[0] = 0.0
    for i in range(dt.size):
        n[i + 1] = n[i] * decay[i] + drive[i] * lifetime * (1.0 - decay[i])
    return n


@dataclass(frozen=True)
class TraceChannel:
    """One detection channel of a time-resolved measurement.

    kind selects the response to the pump envelope: 'linear' follows P(t),
    'quadratic' follows P(t)^2, 'carrier' follows the free-carrier
    population with the given lifetime.  peak_rate is the detected rate
    (s^-1) when the response sits at its plateau.
    """

    name: str
    kind: str
    peak_rate: float
    carrier_lifetime: float = 1e-9
    gen_linear: float = 1.0
    gen_quadratic: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "quadratic", "carrier"):
            raise ValueError(f"unknown trace kind {self.kind!r}")
        if self.peak_rate < 0:
            raise ValueError("peak rate must be >= 0")
        if self.carrier_lifetime <= 0:
            raise ValueError("carrier lifetime must be positive")
        if self.jitter_sigma < 0:
            raise ValueError("jitter sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Histogram of detected counts versus time within the pulse frame."""

    time: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    n_pulses: int
    bin_width: float
    pulse_duration: float

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """Counts scaled so the plateau (central half of the pulse) is 1,
        with per-bin Poisson sigmas scaled identically."""
        window = (self.time >= 0.25 * self.pulse_duration) & (
            self.time <= 0.75 * self.pulse_duration
        )
        if not np.any(window):
            raise ValueError("no bins inside the plateau window")
        scale = float(self.counts[window].mean())
        if scale <= 0:
            raise ValueError("plateau has no counts; cannot normalize")
        return self.counts / scale, np.sqrt(np.maximum(self.counts, 1.0)) / scale

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("time_s", "counts", "expected"))
            for i in range(self.time.size):
                writer.writerow(
                    (
                        f"{self.time[i]:.17g}",
                        int(self.counts[i]),
                        f"{self.expected[i]:.17g}",
                    )
                )


def _gaussian_smooth(values: np.ndarray, sigma_samples: float) -> np.ndarray:
    if sigma_samples <= 0:
        return values
    half = max(int(math.ceil(6.0 * sigma_samples)), 1)
    x = np.arange(-half, half + 1, dtype=float)
    kernel = np.exp(-0.5 * (x / sigma_samples) ** 2)
    kernel /= kernel.sum()
    return np.convolve(values, kernel, mode="same")


def time_resolved_flux(
    pump: PumpConfig,
    channels,
    bin_width: float,
    duration: float,
    seed: int,
    window: tuple[float, float] | None = None,
) -> dict[str, TimeTrace]:
    """Time-resolved count histograms synchronized to a pulsed pump.

    For each channel the per-bin expectation is peak_rate times the
    normalized response shape integrated over the bin, times the number of
    pulses in the run; the recorded counts are one Poisson draw per bin
    (channels processed in their listed order for reproducibility).  Timing
    jitter enters as a Gaussian blur of the expected shape.  The time axis
    is relative to the start of the pulse ramp; bins of at most 100 ps are
    required so the specified edges stay resolved.
    """
    if pump.envelope is None:
        raise ValueError("time-resolved traces need a pulsed pump")
    if bin_width <= 0 or bin_width > 100e-12 * (1.0 + 1e-9):
        raise ValueError("bin width must be in (0, 100 ps]")
    if duration <= 0:
        raise ValueError("duration must be positive")
    env = pump.envelope
    n_pulses = int(math.floor(duration * env.rep_rate))
    if n_pulses < 1:
        raise ValueError("duration shorter than one pulse period")
    channels = list(channels)
    if window is None:
        tail = max(
            [8.0 * c.carrier_lifetime for c in channels if c.kind == "carrier"],
            default=2e-9,
        )
        window = (-2e-9, env.duration + env.ramp + max(tail, 2e-9))
    t0, t1 = window
    period = 1.0 / env.rep_rate
    if not (t0 < t1 and t1 - t0 <= period):
        raise ValueError("window must be positive length and fit in one period")
    nbins = int(math.ceil((t1 - t0) / bin_width))
    edges = t0 + np.arange(nbins + 1) * bin_width
    centers = 0.5 * (edges[:-1] + edges[1:])

    oversample = 8
    fine = t0 + (np.arange(nbins * oversample) + 0.5) * (bin_width / oversample)
    p_fine = np.asarray(pump_power_at(pump, fine))
    p_norm = p_fine / pump.power

    rng = np.random.default_rng(seed)
    out: dict[str, TimeTrace] = {}
    for ch in channels:
        if ch.kind == "linear":
            shape = p_norm
        elif ch.kind == "quadratic":
            shape = p_norm**2
        else:
            n_fine = carrier_density_trace(
                pump, ch.carrier_lifetime, fine, ch.gen_linear, ch.gen_quadratic
            )
            plateau = ch.carrier_lifetime * (
                ch.gen_linear * pump.power + ch.gen_quadratic * pump.power**2
            )
            shape = n_fine / plateau
        if ch.jitter_sigma > 0:
            shape = _gaussian_smooth(shape, ch.jitter_sigma / (bin_width / oversample))
        per_bin_shape = shape.reshape(nbins, oversample).mean(axis=1)
        expected = ch.peak_rate * per_bin_shape * bin_width * n_pulses
        counts = rng.poisson(expected)
        out[ch.name] = TimeTrace(
            time=centers,
            counts=counts.astype(np.int64),
            expected=expected,
            n_pulses=n_pulses,
            bin_width=bin_width,
            pulse_duration=env.duration,
        )
    return out


def rise_fall_time(
    time: np.ndarray,
    values: np.ndarray,
    low: float = 0.1,
    high: float = 0.9,
    edge: str = "rise",
) -> float:
    """Edge duration between the low and high plateau fractions (10-90% by
    default), by linear interpolation around the level crossings.

    The plateau level is the median of samples above 80% of the maximum.
    For an ideal step sampled at bin b the result is at most b.  Raises if
    the trace never reaches the levels (no edge to measure).
    """
    if not 0.0 < low < high < 1.0:
        raise ValueError("need 0 < low < high < 1")
    t = np.asarray(time, dtype=float)
    v = np.asarray(values, dtype=float)
    if t.shape != v.shape or t.ndim != 1 or t.size < 3:
        raise ValueError("need matching 1-d arrays with at least 3 samples")
    if edge == "fall":
        t = -t[::-1]
        v = v[::-1]
    elif edge != "rise":
        raise ValueError("edge must be 'rise' or 'fall'")
    vmax = v.max()
    if vmax <= 0:
        raise ValueError("trace has no signal")
    plateau = float(np.median(v[v >= 0.8 * vmax]))
    lo_level = low * plateau
    hi_level = high * plateau

    above_hi = np.nonzero(v >= hi_level)[0]
    if above_hi.size == 0:
        raise ValueError("trace never reaches the high level")
    ihi = int(above_hi[0])
    below_lo = np.nonzero(v[: ihi + 1] <= lo_level)[0]
    if below_lo.size == 0 or ihi == 0:
        raise ValueError("no resolved edge before the high level")
    ilo = int(below_lo[-1])

    def crossing(i0: int, i1: int, level: float) -> float:
        dv = v[i1] - v[i0]
        if dv == 0:
            return float(t[i1])
        return float(t[i0] + (level - v[i0]) / dv * (t[i1] - t[i0]))

    t_lo = crossing(ilo, ilo + 1, lo_level)
    t_hi = crossing(ihi - 1, ihi, hi_level)
    return t_hi - t_lo
