"""Simulator and analysis toolkit for photon-pair generation and broadband
thermal-scattering noise in silicon wire waveguides."""

from .core import (
    BOLTZMANN,
    CONSTANTS,
    DEFAULT_GUARD_HZ,
    LIGHT_SPEED,
    PLANCK,
    FluxDecomposition,
    PhysicalConstants,
    PumpConfig,
    SpectralBand,
    SpectrumSeries,
    SquarePulse,
    TabulatedSpectrum,
    WaveguideParams,
    bose_einstein_occupancy,
    detuning_from_wavelength,
    frequency_to_wavelength,
    integrate_band,
    pair_first_zero,
    pair_flux_density,
    phase_mismatch_arg_sq,
    pump_power_at,
    raman_fiber_noise_density,
    rayleigh_jeans_occupancy,
    read_columns_csv,
    scattering_constant_to_si,
    thermal_scatter_flux_density,
    thermal_scatter_power_density,
    total_flux_model,
    wavelength_at_detuning,
    wavelength_to_frequency,
    write_columns_csv,
)
from .instrument import (
    DetectionChain,
    DetectorParams,
    FilterElement,
    LossBudget,
    LossEntry,
    apply_chain,
    chain_transmission,
    db_to_linear,
    detected_rate,
    filter_transmission,
)
from .events import (
    CHANNELS,
    ORIGINS,
    CoincidenceHistogram,
    CoincidenceMetrics,
    DetectionArm,
    EventStream,
    TimeTrace,
    TraceChannel,
    carrier_density_trace,
    coincidence_histogram,
    expected_rates,
    generate_events,
    rise_fall_time,
    sample_pair_detunings,
    snr_estimate,
    time_resolved_flux,
)
from .fitting import (
    Dataset,
    FitError,
    FitResult,
    KappaEstimate,
    extract_kappa,
    fit_bose_einstein,
    fit_linear_temperature,
    fit_power_decomposition,
    fit_sinc_spectrum,
    least_squares,
)
from .config import ConfigError, RunConfig, load_config, resolve_config

__version__ = "0.1.0"
