"""Analytic models of photon generation in a pumped silicon wire waveguide.

Two processes populate the sidebands of a narrow pump guided in a silicon
wire.  Degenerate four-wave mixing converts two pump photons into a
frequency-anticorrelated signal/idler pair and scales quadratically with
pump power.  Broadband inelastic scattering off thermally occupied
low-frequency excitations of the wire transfers pump photons to both
sidebands, is linear in pump power and in waveguide length, and carries the
Bose-Einstein temperature dependence that distinguishes it from parametric
noise.

Sign convention: detunings are signed optical frequency offsets from the
pump carrier, nu = nu_scattered - nu_pump.  The Stokes (red) side is nu < 0
and carries the spontaneous "+1" emission term; the anti-Stokes (blue) side
is nu > 0 and is purely thermal.  All quantities are strict SI (Hz, m, s, W,
K); spectral densities are per Hz of detuning.  Model functions are pure and
accept scalars or numpy arrays in their detuning argument.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import quad

__all__ = [
    "PLANCK",
    "BOLTZMANN",
    "LIGHT_SPEED",
    "DEFAULT_GUARD_HZ",
    "PhysicalConstants",
    "CONSTANTS",
    "WaveguideParams",
    "SquarePulse",
    "PumpConfig",
    "SpectralBand",
    "SpectrumSeries",
    "TabulatedSpectrum",
    "FluxDecomposition",
    "wavelength_to_frequency",
    "frequency_to_wavelength",
    "detuning_from_wavelength",
    "wavelength_at_detuning",
    "scattering_constant_to_si",
    "bose_einstein_occupancy",
    "rayleigh_jeans_occupancy",
    "thermal_scatter_power_density",
    "thermal_scatter_flux_density",
    "phase_mismatch_arg_sq",
    "pair_flux_density",
    "pair_first_zero",
    "raman_fiber_noise_density",
    "integrate_band",
    "total_flux_model",
    "pump_power_at",
]

# Exact SI defining constants (2019 redefinition).
PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J / K
LIGHT_SPEED = 299792458.0  # m / s

# Thermal occupancies diverge at zero detuning, so analysis bands keep at
# least this margin from the pump unless a caller overrides it.
DEFAULT_GUARD_HZ = 10e9


@dataclass(frozen=True)
class PhysicalConstants:
    """Fundamental constants used throughout; defaults are the exact SI values."""

    planck: float = PLANCK
    boltzmann: float = BOLTZMANN
    light_speed: float = LIGHT_SPEED


CONSTANTS = PhysicalConstants()


def _match_input(reference, values):
    """Return a python float for scalar input, the array otherwise."""
    if np.ndim(reference) == 0:
        return float(values)
    return values


# ---------------------------------------------------------------------------
# geometry and pump description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WaveguideParams:
    """Physical description of the wire and its linear/nonlinear response.

    length              m
    beta2               s^2 / m, signed group velocity dispersion
    gamma               1 / (W m), Kerr nonlinear parameter
    kappa               1 / (m Hz), broadband scattering efficiency
    temperature         K
    propagation_loss    dB over the full length
    coupling_loss_in    dB, chip input facet
    coupling_loss_out   dB, chip output facet
    """

    length: float = 11.2e-3
    beta2: float = -1.5e-24
    gamma: float = 300.0
    kappa: float = 3.5e-20
    temperature: float = 300.0
    propagation_loss: float = 2.5
    coupling_loss_in: float = 6.0
    coupling_loss_out: float = 6.0

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("waveguide length must be positive")
        if self.gamma < 0:
            raise ValueError("nonlinear parameter gamma must be >= 0")
        if self.kappa < 0:
            raise ValueError("scattering constant kappa must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        for name in ("propagation_loss", "coupling_loss_in", "coupling_loss_out"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0 dB")


@dataclass(frozen=True)
class SquarePulse:
    """Square pump envelope with finite edges.

    duration   s, time from the start of the rising ramp to the start of the
               falling ramp (the quoted pulse width)
    rep_rate   Hz
    rise_fall  s, 10-90% edge time; the full linear ramp lasts rise_fall/0.8
    """

    duration: float
    rep_rate: float
    rise_fall: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("pulse duration must be positive")
        if self.rep_rate <= 0:
            raise ValueError("repetition rate must be positive")
        if self.rise_fall < 0:
            raise ValueError("rise_fall must be >= 0")
        if self.rise_fall / 0.8 > self.duration:
            raise ValueError("edge ramp longer than the pulse itself")
        if (self.duration + self.rise_fall / 0.8) * self.rep_rate > 1.0:
            raise ValueError("pulse (including edges) does not fit in one period")

    @property
    def ramp(self) -> float:
        """Full 0-100% linear ramp duration in seconds."""
        return self.rise_fall / 0.8


@dataclass(frozen=True)
class PumpConfig:
    """Pump carrier and drive.  power is the in-waveguide power (peak power
    for pulsed operation).  envelope None means CW."""

    wavelength: float = 1539.8e-9
    power: float = 250e-6
    envelope: SquarePulse | None = None

    def __post_init__(self):
        if self.wavelength <= 0:
            raise ValueError("pump wavelength must be positive")
        if self.power < 0:
            raise ValueError("pump power must be >= 0")

    @property
    def frequency(self) -> float:
        return LIGHT_SPEED / self.wavelength

    @property
    def is_pulsed(self) -> bool:
        return self.envelope is not None


def pump_power_at(pump: PumpConfig, t):
    """Instantaneous pump power (W) at times t.

    CW pumps are constant.  Pulsed pumps repeat a trapezoid: linear ramp up
    over pump.envelope.ramp starting at t = 0 (mod period), flat top until
    t = duration, then a linear ramp down.  Peak value is pump.power.
    """
    t = np.asarray(t, dtype=float)
    if pump.envelope is None:
        out = np.full(t.shape, pump.power)
        return _match_input(t, out)
    env = pump.envelope
    period = 1.0 / env.rep_rate
    tt = np.mod(t, period)
    ramp = env.ramp
    if ramp > 0:
        up = np.clip(tt / ramp, 0.0, 1.0)
        down = np.clip((env.duration + ramp - tt) / ramp, 0.0, 1.0)
        shape = np.minimum(up, down)
    else:
        shape = ((tt >= 0.0) & (tt <= env.duration)).astype(float)
    return _match_input(t, pump.power * shape)


# ---------------------------------------------------------------------------
# spectral bands and series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralBand:
    """Closed detuning interval [detuning_min, detuning_max] in Hz.

    Bands that straddle zero detuning are rejected unless allow_straddle is
    set, because the thermal models diverge at the pump.
    """

    detuning_min: float
    detuning_max: float
    allow_straddle: bool = False

    def __post_init__(self):
        if not (self.detuning_min < self.detuning_max):
            raise ValueError("band requires detuning_min < detuning_max")
        if self.detuning_min < 0.0 < self.detuning_max and not self.allow_straddle:
            raise ValueError(
                "band straddles zero detuning; set allow_straddle to permit this"
            )

    @property
    def width(self) -> float:
        return self.detuning_max - self.detuning_min

    @property
    def min_abs_detuning(self) -> float:
        if self.detuning_min < 0.0 < self.detuning_max:
            return 0.0
        return min(abs(self.detuning_min), abs(self.detuning_max))

    def contains(self, detuning) -> bool:
        nu = np.asarray(detuning, dtype=float)
        return bool(np.all((nu >= self.detuning_min) & (nu <= self.detuning_max)))

    def mirrored(self) -> "SpectralBand":
        """The band reflected through zero detuning."""
        return SpectralBand(-self.detuning_max, -self.detuning_min, self.allow_straddle)


def _readonly(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    """Sampled spectral density: strictly increasing detunings (Hz), a
    nonnegative flux density (s^-1 Hz^-1) and a per-point sigma."""

    detuning: np.ndarray
    flux_density: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        det = _readonly(self.detuning)
        flux = _readonly(self.flux_density)
        sig = _readonly(self.sigma)
        if det.ndim != 1 or det.size < 1:
            raise ValueError("detuning grid must be a nonempty 1-d array")
        if flux.shape != det.shape or sig.shape != det.shape:
            raise ValueError("series columns must share one shape")
        if det.size > 1 and not np.all(np.diff(det) > 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(flux < 0):
            raise ValueError("flux density must be >= 0")
        if np.any(sig < 0):
            raise ValueError("sigma must be >= 0")
        object.__setattr__(self, "detuning", det)
        object.__setattr__(self, "flux_density", flux)
        object.__setattr__(self, "sigma", sig)

    def scaled(self, factor) -> "SpectrumSeries":
        """Pointwise rescale of density and sigma (factor scalar or per-point)."""
        f = np.asarray(factor, dtype=float)
        if np.any(f < 0):
            raise ValueError("scale factor must be >= 0")
        return SpectrumSeries(self.detuning, self.flux_density * f, self.sigma * f)

    def to_csv(self, path) -> None:
        write_columns_csv(
            path,
            ("detuning_hz", "flux_density_per_hz", "sigma_per_hz"),
            (self.detuning, self.flux_density, self.sigma),
        )

    @classmethod
    def from_csv(cls, path) -> "SpectrumSeries":
        cols = read_columns_csv(
            path, ("detuning_hz", "flux_density_per_hz", "sigma_per_hz")
        )
        return cls(*cols)


@dataclass(frozen=True, eq=False)
class TabulatedSpectrum:
    """Measured noise spectrum interpolated linearly between knots.

    Used for the filtering-line spontaneous Raman background, which has no
    closed form here.  flux_density is the photon flux density at the
    tabulated reference_power; evaluation outside the tabulated support is a
    domain error rather than an extrapolation.
    """

    detuning: np.ndarray
    flux_density: np.ndarray
    reference_power: float

    def __post_init__(self):
        det = _readonly(self.detuning)
        flux = _readonly(self.flux_density)
        if det.ndim != 1 or det.size < 2:
            raise ValueError("tabulated spectrum needs at least two knots")
        if flux.shape != det.shape:
            raise ValueError("columns must share one shape")
        if not np.all(np.diff(det) > 0):
            raise ValueError("detunings must be strictly increasing")
        if np.any(flux < 0):
            raise ValueError("flux density must be >= 0")
        if self.reference_power <= 0:
            raise ValueError("reference power must be positive")
        object.__setattr__(self, "detuning", det)
        object.__setattr__(self, "flux_density", flux)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.detuning[0]), float(self.detuning[-1])

    def covers(self, band: SpectralBand) -> bool:
        lo, hi = self.support
        return band.detuning_min >= lo and band.detuning_max <= hi

    def density_at(self, detuning):
        nu = np.asarray(detuning, dtype=float)
        lo, hi = self.support
        if np.any(nu < lo) or np.any(nu > hi):
            raise ValueError(
                f"detuning outside tabulated support [{lo:g}, {hi:g}] Hz"
            )
        out = np.interp(nu, self.detuning, self.flux_density)
        return _match_input(detuning, out)

    def to_csv(self, path) -> None:
        write_columns_csv(
            path,
            ("detuning_hz", "flux_density_per_hz"),
            (self.detuning, self.flux_density),
        )

    @classmethod
    def from_csv(cls, path, reference_power: float) -> "TabulatedSpectrum":
        cols = read_columns_csv(path, ("detuning_hz", "flux_density_per_hz"))
        return cls(cols[0], cols[1], reference_power)


def write_columns_csv(path, header, columns) -> None:
    """Write equal-length float columns with %.17g so values round-trip."""
    arrays = [np.asarray(c, dtype=float) for c in columns]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("columns must share one length")
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            writer.writerow([f"{a[i]:.17g}" for a in arrays])


def read_columns_csv(path, header) -> list[np.ndarray]:
    """Read CSV columns, requiring the exact header names in order."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        names = [c.strip() for c in first]
        if names != list(header):
            raise ValueError(
                f"{path}: expected header {','.join(header)}, got {','.join(names)}"
            )
        rows = [row for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: ragged rows")
    return [data[:, j].copy() for j in range(len(header))]


# ---------------------------------------------------------------------------
# unit conversions
# ---------------------------------------------------------------------------


def wavelength_to_frequency(wavelength):
    """Vacuum wavelength (m) to optical frequency (Hz)."""
    wl = np.asarray(wavelength, dtype=float)
    if np.any(wl <= 0):
        raise ValueError("wavelength must be positive")
    return _match_input(wavelength, LIGHT_SPEED / wl)


def frequency_to_wavelength(frequency):
    """Optical frequency (Hz) to vacuum wavelength (m)."""
    f = np.asarray(frequency, dtype=float)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    return _match_input(frequency, LIGHT_SPEED / f)


def detuning_from_wavelength(wavelength, pump_wavelength):
    """Signed detuning (Hz) of a wavelength from the pump carrier.

    Longer wavelengths than the pump give negative (Stokes) detunings.
    """
    nu = np.asarray(wavelength_to_frequency(wavelength), dtype=float)
    nu0 = wavelength_to_frequency(pump_wavelength)
    return _match_input(wavelength, nu - nu0)


def wavelength_at_detuning(detuning, pump_wavelength):
    """Vacuum wavelength (m) at a signed detuning from the pump carrier."""
    nu0 = wavelength_to_frequency(pump_wavelength)
    nu = nu0 + np.asarray(detuning, dtype=float)
    if np.any(nu <= 0):
        raise ValueError("detuning places the frequency at or below zero")
    return _match_input(detuning, LIGHT_SPEED / nu)


def scattering_constant_to_si(kappa_cm_thz: float) -> float:
    """Convert a scattering constant from cm^-1 THz^-1 to m^-1 Hz^-1."""
    if kappa_cm_thz < 0:
        raise ValueError("scattering constant must be >= 0")
    return kappa_cm_thz * 1e2 * 1e-12


# ---------------------------------------------------------------------------
# thermal occupancies and scattering
# ---------------------------------------------------------------------------


def bose_einstein_occupancy(detuning, temperature):
    """Mean thermal occupation 1/(exp(h|nu|/kT) - 1) of the excitation
    bridging a signed detuning nu.  Diverges at nu = 0, which is rejected."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    nu = np.asarray(detuning, dtype=float)
    if np.any(nu == 0):
        raise ValueError("occupancy diverges at zero detuning")
    x = PLANCK * np.abs(nu) / (BOLTZMANN * temperature)
    return _match_input(detuning, 1.0 / np.expm1(x))


def rayleigh_jeans_occupancy(detuning, temperature):
    """Classical equipartition limit kT/h|nu| of the thermal occupation."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    nu = np.asarray(detuning, dtype=float)
    if np.any(nu == 0):
        raise ValueError("occupancy diverges at zero detuning")
    x = PLANCK * np.abs(nu) / (BOLTZMANN * temperature)
    return _match_input(detuning, 1.0 / x)


def thermal_scatter_power_density(detuning, waveguide: WaveguideParams, power):
    """Spectral power density (W/Hz) of pump light scattered to detuning nu.

    kappa * (n + 1) * L * P on the Stokes side (nu < 0, spontaneous emission
    term included) and kappa * n * L * P on the anti-Stokes side, with n the
    Bose-Einstein occupation at |nu|.  Linear in power, length and kappa; the
    Stokes/anti-Stokes density ratio at equal |nu| is exp(h|nu|/kT) exactly.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    nu = np.asarray(detuning, dtype=float)
    n = np.asarray(bose_einstein_occupancy(nu, waveguide.temperature))
    emit = np.where(nu < 0, 1.0, 0.0)
    out = waveguide.kappa * (n + emit) * waveguide.length * power
    return _match_input(detuning, out)


def thermal_scatter_flux_density(
    detuning, waveguide: WaveguideParams, power, pump_wavelength
):
    """Photon flux density (s^-1 Hz^-1) of thermally scattered pump light:
    the power density divided by the photon energy h(nu0 + nu)."""
    nu = np.asarray(detuning, dtype=float)
    p = np.asarray(thermal_scatter_power_density(nu, waveguide, power))
    nu0 = wavelength_to_frequency(pump_wavelength)
    photon_energy = PLANCK * (nu0 + nu)
    if np.any(photon_energy <= 0):
        raise ValueError("detuning places the photon energy at or below zero")
    return _match_input(detuning, p / photon_energy)


# ---------------------------------------------------------------------------
# four-wave mixing pairs
# ---------------------------------------------------------------------------


def phase_mismatch_arg_sq(detuning, waveguide: WaveguideParams, power):
    """Squared argument x^2 of the pair phase-matching envelope.

    x^2 = beta2 (2 pi nu)^2 L^2 (beta2 (2 pi nu)^2 / 4 + gamma P).  Negative
    x^2 marks the modulation-instability band where the envelope becomes
    sinh-like gain rather than oscillatory.
    """
    nu = np.asarray(detuning, dtype=float)
    w2 = (2.0 * math.pi * nu) ** 2
    out = (
        waveguide.beta2
        * w2
        * waveguide.length**2
        * (waveguide.beta2 * w2 / 4.0 + waveguide.gamma * power)
    )
    return _match_input(detuning, out)


def _sinc_sq(u):
    """(sin(sqrt(u))/sqrt(u))^2 continued through u <= 0 as
    (sinh(sqrt(-u))/sqrt(-u))^2.

    Both branches are the same entire function of u (series
    1 - u/6 + u^2/120 - ...), used directly near u = 0 so the crossing into
    the modulation-instability band is smooth to machine precision.
    """
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 1e-6
    us = u[small]
    s = 1.0 - us / 6.0 + us * us / 120.0
    out[small] = s * s
    big = ~small
    ub = u[big]
    val = np.empty_like(ub)
    pos = ub > 0
    rp = np.sqrt(ub[pos])
    val[pos] = (np.sin(rp) / rp) ** 2
    rn = np.sqrt(-ub[~pos])
    val[~pos] = (np.sinh(rn) / rn) ** 2
    out[big] = val
    return out


def pair_flux_density(detuning, waveguide: WaveguideParams, power):
    """Spectral density (s^-1 Hz^-1) of four-wave-mixing pair generation at
    signed detuning nu.

    (gamma P L)^2 times the sinc^2 phase-matching envelope.  The density is
    even in nu: each generated pair contributes unit weight split equally
    between +|nu| and -|nu|, so the photon flux a one-sided band receives
    (one photon per pair) is twice the one-sided integral of this density,
    and so is the rate of pairs whose |detuning| falls in the band.
    """
    if power < 0:
        raise ValueError("power must be >= 0")
    u = np.asarray(phase_mismatch_arg_sq(detuning, waveguide, power))
    amplitude = (waveguide.gamma * power * waveguide.length) ** 2
    return _match_input(detuning, amplitude * _sinc_sq(u))


def pair_first_zero(waveguide: WaveguideParams, power) -> float:
    """Smallest positive detuning (Hz) where the pair density vanishes,
    i.e. where the phase-matching argument first reaches x = pi."""
    if waveguide.beta2 == 0:
        raise ValueError("pair density has no zero for beta2 = 0")
    if power < 0:
        raise ValueError("power must be >= 0")
    # x^2 as a polynomial in y = (2 pi nu)^2: A y^2 + B y = pi^2 with
    # A = beta2^2 L^2 / 4 > 0; the product of roots is negative, so exactly
    # one root is positive regardless of the dispersion sign.
    a = (waveguide.beta2 * waveguide.length) ** 2 / 4.0
    b = waveguide.beta2 * waveguide.length**2 * waveguide.gamma * power
    y = (-b + math.sqrt(b * b + 4.0 * a * math.pi**2)) / (2.0 * a)
    return math.sqrt(y) / (2.0 * math.pi)


# ---------------------------------------------------------------------------
# auxiliary noise channel
# ---------------------------------------------------------------------------


def raman_fiber_noise_density(detuning, table: TabulatedSpectrum, power):
    """Photon flux density of the filtering-line spontaneous Raman
    background, rescaled linearly from the tabulated reference power."""
    if power < 0:
        raise ValueError("power must be >= 0")
    base = np.asarray(table.density_at(detuning))
    return _match_input(detuning, base * (power / table.reference_power))


# ---------------------------------------------------------------------------
# band integrals and the power-law decomposition
# ---------------------------------------------------------------------------


def integrate_band(density, band: SpectralBand, *, rel_tol=1e-10, breakpoints=None):
    """Adaptive Gauss-Kronrod integral of a spectral density over a band.

    breakpoints, if given, are interior detunings where the integrand has
    kinks (e.g. interpolation knots); points outside the band are ignored.
    """
    pts = None
    if breakpoints is not None:
        pts = [
            p
            for p in sorted(float(p) for p in breakpoints)
            if band.detuning_min < p < band.detuning_max
        ]
        if not pts:
            pts = None
    value, _abserr, *_rest = quad(
        density,
        band.detuning_min,
        band.detuning_max,
        epsabs=0.0,
        epsrel=rel_tol,
        limit=800,
        points=pts,
        full_output=1,
    )
    if not np.isfinite(value):
        raise ValueError("band integral is not finite")
    return float(value)


@dataclass(frozen=True)
class FluxDecomposition:
    """Generated photon flux split into its pump-power scalings."""

    linear: float
    quadratic: float

    @property
    def total(self) -> float:
        return self.linear + self.quadratic


def total_flux_model(
    power,
    waveguide: WaveguideParams,
    pump_wavelength,
    bands,
    *,
    guard=DEFAULT_GUARD_HZ,
) -> FluxDecomposition:
    """Generated photon flux in the given band(s), split into the linear
    (thermal scattering) part and the quadratic (pair) part.

    The quadratic part of each band is twice the one-sided pair-density
    integral, which is both the photon flux the band receives and, for a
    one-sided band, the rate of pairs landing across it and its mirror.  The
    weak power dependence hiding in the phase-matching argument makes the
    "quadratic" coefficient drift by a few 1e-3 over a decade of power.
    """
    if isinstance(bands, SpectralBand):
        bands = (bands,)
    bands = tuple(bands)
    if not bands:
        raise ValueError("need at least one band")
    linear = 0.0
    quadratic = 0.0
    for band in bands:
        if band.min_abs_detuning < guard:
            raise ValueError(
                "band approaches zero detuning closer than the guard interval"
            )
        linear += integrate_band(
            lambda nu: thermal_scatter_flux_density(
                nu, waveguide, power, pump_wavelength
            ),
            band,
        )
        quadratic += 2.0 * integrate_band(
            lambda nu: pair_flux_density(nu, waveguide, power), band
        )
    return FluxDecomposition(linear=linear, quadratic=quadratic)
