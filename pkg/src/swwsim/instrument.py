"""Detection chain: spectral filters, lumped losses and gated detectors.

Filters act multiplicatively on photon flux as a function of wavelength;
everything else in the chain is wavelength-flat and collapses into a loss
budget.  Detectors are gated Geiger-mode avalanche photodiodes described by
an efficiency, a gate rate and width, and a dark count rate quoted the way
the instrument reports it: as counts per second already including the duty
cycle, i.e. the rate of gates that fire with no photon present.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import SpectrumSeries, _match_input, wavelength_at_detuning

__all__ = [
    "FILTER_KINDS",
    "FilterElement",
    "DetectorParams",
    "LossEntry",
    "LossBudget",
    "DetectionChain",
    "db_to_linear",
    "filter_transmission",
    "chain_transmission",
    "apply_chain",
    "detected_rate",
]

FILTER_KINDS = ("bandpass", "bandblock", "demux", "gaussian")


def db_to_linear(loss_db) -> float:
    """Power transmission of a loss quoted in dB (3 dB -> ~0.5)."""
    loss = np.asarray(loss_db, dtype=float)
    return _match_input(loss_db, 10.0 ** (-loss / 10.0))


@dataclass(frozen=True)
class FilterElement:
    """One spectral filter.

    kind        bandpass | bandblock | demux | gaussian
    center      m, center wavelength
    width       m, full band width (band filters) or FWHM (gaussian)
    extinction  dB, floor outside the passband (inside, for bandblock)
    insertion_loss  dB, applied everywhere

    Band filters are ideal rectangles with an extinction floor; demux is a
    bandpass in its transmission behaviour and kept distinct only for
    reporting.  Transmission is everywhere in (0, 1]: the extinction floor
    keeps it strictly positive.
    """

    kind: str
    center: float
    width: float
    extinction: float = 150.0
    insertion_loss: float = 0.0

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.center <= 0:
            raise ValueError("filter center wavelength must be positive")
        if self.width <= 0:
            raise ValueError("filter width must be positive")
        if self.extinction < 0:
            raise ValueError("extinction must be >= 0 dB")
        if self.insertion_loss < 0:
            raise ValueError("insertion loss must be >= 0 dB")


def filter_transmission(element: FilterElement, wavelength):
    """Power transmission of a single filter at the given wavelength(s)."""
    lam = np.asarray(wavelength, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("wavelength must be positive")
    peak = db_to_linear(element.insertion_loss)
    floor = 10.0 ** (-element.extinction / 10.0)
    if element.kind == "gaussian":
        shape = np.exp(
            -4.0 * math.log(2.0) * ((lam - element.center) / element.width) ** 2
        )
        t = peak * np.maximum(shape, floor)
    else:
        inside = np.abs(lam - element.center) <= element.width / 2.0
        if element.kind == "bandblock":
            t = peak * np.where(inside, floor, 1.0)
        else:
            t = peak * np.where(inside, 1.0, floor)
    return _match_input(wavelength, t)


@dataclass(frozen=True)
class LossEntry:
    """One lumped wavelength-flat loss with an optional dB uncertainty."""

    label: str
    loss: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.loss < 0:
            raise ValueError("loss must be >= 0 dB")
        if self.sigma < 0:
            raise ValueError("loss sigma must be >= 0 dB")


@dataclass(frozen=True)
class LossBudget:
    """Chain of lumped losses; order is irrelevant, dBs add."""

    entries: tuple[LossEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def total_db(self) -> float:
        return sum(e.loss for e in self.entries)

    def transmission(self) -> float:
        return db_to_linear(self.total_db)

    def relative_sigma(self) -> float:
        """Relative |dT/T| from the per-entry dB sigmas, in quadrature.

        A dB uncertainty s maps to a relative flux uncertainty ln(10)/10 * s.
        """
        return math.sqrt(
            sum((math.log(10.0) / 10.0 * e.sigma) ** 2 for e in self.entries)
        )


def chain_transmission(chain, budget: LossBudget | None, wavelength):
    """Combined transmission of a filter chain plus a loss budget.

    Filters multiply, so the result does not depend on their order beyond
    floating point rounding.
    """
    lam = np.asarray(wavelength, dtype=float)
    t = np.ones_like(lam)
    for element in chain:
        t = t * np.asarray(filter_transmission(element, lam))
    if budget is not None:
        t = t * budget.transmission()
    return _match_input(wavelength, t)


def apply_chain(
    spectrum: SpectrumSeries, chain, budget: LossBudget | None, pump_wavelength
) -> SpectrumSeries:
    """Propagate a sampled spectrum through filters and lumped losses.

    Each point is attenuated at its own wavelength; sigmas scale with the
    same factor.  An empty chain with no budget is the identity.
    """
    lam = wavelength_at_detuning(spectrum.detuning, pump_wavelength)
    t = chain_transmission(chain, budget, lam)
    return spectrum.scaled(t)


@dataclass(frozen=True)
class DetectorParams:
    """Gated single-photon detector.

    efficiency  photon detection probability within an open gate
    dark_rate   s^-1, gates firing with no photon present, as quoted by the
                instrument (duty cycle already included)
    gate_rate   s^-1
    gate_width  s
    dead_time   s, electronic re-arm time after a click
    jitter_sigma  s, Gaussian timing jitter of recorded clicks
    """

    efficiency: float
    dark_rate: float = 0.0
    gate_rate: float = 1e5
    gate_width: float = 100e-9
    dead_time: float = 0.0
    jitter_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must be in [0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark rate must be >= 0")
        if self.gate_rate <= 0:
            raise ValueError("gate rate must be positive")
        if self.gate_width <= 0:
            raise ValueError("gate width must be positive")
        if self.gate_rate * self.gate_width > 1.0 + 1e-12:
            raise ValueError("gates overlap: gate_rate * gate_width > 1")
        if self.dark_rate > self.gate_rate:
            raise ValueError("dark rate cannot exceed the gate rate")
        if self.dead_time < 0:
            raise ValueError("dead time must be >= 0")
        if self.jitter_sigma < 0:
            raise ValueError("jitter sigma must be >= 0")

    @property
    def duty(self) -> float:
        """Fraction of time the detector is armed."""
        return self.gate_rate * self.gate_width


def detected_rate(incident_flux, detector: DetectorParams):
    """Mean click rate (s^-1) for a photon flux incident on a gated detector.

    Per gate the click probability is 1 - exp(-mu) with mu the mean detected
    photon number efficiency * flux * gate_width; gates not fired by a
    photon can still fire at the dark rate.  The rate saturates at the gate
    rate, reduces exactly to the dark rate at zero flux, and is monotone in
    the flux (dark_rate <= gate_rate guarantees the sign of the slope).
    """
    flux = np.asarray(incident_flux, dtype=float)
    if np.any(flux < 0):
        raise ValueError("incident flux must be >= 0")
    mu = detector.efficiency * flux * detector.gate_width
    quiet = np.exp(-mu)
    rate = detector.gate_rate * (1.0 - quiet) + detector.dark_rate * quiet
    return _match_input(incident_flux, rate)


@dataclass(frozen=True)
class DetectionChain:
    """Scalar summary of one detection arm for rate conversions and
    uncertainty propagation: efficiency (with relative sigma), gate duty and
    the lumped loss budget between waveguide and detector."""

    efficiency: float
    duty: float = 1.0
    losses: LossBudget = LossBudget()
    efficiency_rel_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.efficiency <= 1.0:
            raise ValueError("efficiency must be in (0, 1]")
        if not 0.0 < self.duty <= 1.0:
            raise ValueError("duty must be in (0, 1]")
        if self.efficiency_rel_sigma < 0:
            raise ValueError("efficiency sigma must be >= 0")

    def throughput(self) -> float:
        """Flux-to-detected-rate factor in the linear (unsaturated) regime."""
        return self.efficiency * self.duty * self.losses.transmission()
