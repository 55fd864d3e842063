"""Spectrally encoded coincidence imaging.

The probe is dispersed across the sample, ``x = D (l1 - l0)``, so the
position where a probe photon can be absorbed is fixed by its wavelength.
The partner's wavelength is read out by a spectrometer, converted to the
probe wavelength through energy conservation and mapped back to position.
The spectrometer is modelled as a photon-counting array calibrated in
sample coordinates, which lets the imaging chain run unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import PairStream, signal_wavelength
from .detection import DetectorSpec, pixel_centers
from .pipeline import ExperimentSetup, run_experiment

__all__ = [
    "DispersionSpec",
    "Dispersed",
    "disperse_position",
    "infer_position",
    "position_uncertainty",
    "SpectralGeometry",
    "SpectralProfile",
    "simulate_spectral_scan",
    "spectrometer_array",
]


@dataclass(frozen=True)
class DispersionSpec:
    """Linear disperser: centre wavelength (nm), dispersion (um/nm), field width (um), spectrometer sigma (nm)."""

    center_wavelength: float
    dispersion: float
    field_extent: float
    spectrometer_resolution: float

    def __post_init__(self):
        if self.dispersion == 0:
            raise ValueError("dispersion must be non-zero")
        if not self.spectrometer_resolution > 0:
            raise ValueError("spectrometer_resolution must be positive")
        if not self.field_extent > 0:
            raise ValueError("field_extent must be positive")


class Dispersed(NamedTuple):
    x: object  # um
    on_sample: object  # bool, False where the wavelength misses the field


def disperse_position(probe_wavelength, spec: DispersionSpec) -> Dispersed:
    x = spec.dispersion * (np.asarray(probe_wavelength, dtype=float) - spec.center_wavelength)
    on = np.abs(x) <= spec.field_extent / 2
    if x.ndim == 0:
        return Dispersed(float(x), bool(on))
    return Dispersed(x, on)


def infer_position(reference_wavelength, pump_wavelength, spec: DispersionSpec):
    """Sample position implied by a measured reference wavelength."""
    l1 = signal_wavelength(pump_wavelength, reference_wavelength)
    return disperse_position(l1, spec).x


def position_uncertainty(reference_wavelength, pump_wavelength, spec: DispersionSpec):
    """Linearised position error from the spectrometer readout noise.

    ``|D| * (dl1/dl2) * sigma`` with ``dl1/dl2 = (l1/l2)^2`` from energy conservation.
    """
    l1 = signal_wavelength(pump_wavelength, reference_wavelength)
    return abs(spec.dispersion) * (l1 / reference_wavelength) ** 2 * spec.spectrometer_resolution


@dataclass(frozen=True)
class SpectralGeometry:
    dispersion: DispersionSpec
    pump_wavelength: float

    def __call__(self, pairs: PairStream, rng):
        x1, on = disperse_position(pairs.probe_wavelength, self.dispersion)
        x1 = np.where(on, x1, np.nan)
        l2 = pairs.reference_wavelength + rng.normal(0.0, 1.0, len(pairs)) * self.dispersion.spectrometer_resolution
        # a readout can never fall on the blue side of the pump
        l2 = np.maximum(l2, self.pump_wavelength * (1 + 1e-9))
        return x1, infer_position(l2, self.pump_wavelength, self.dispersion)


@dataclass
class SpectralProfile:
    x: np.ndarray
    counts: np.ndarray
    exposure: float

    def write(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# x_um counts\n")
            for xv, c in zip(self.x, self.counts):
                fh.write(f"{xv:.9f} {int(c)}\n")


def simulate_spectral_scan(setup: ExperimentSetup, exposure, workers=1):
    """Run the spectrally encoded experiment; ``setup.geometry`` must be a :class:`SpectralGeometry`.

    Returns ``(profile, run_result)``; the profile is binned on
    ``setup.array`` pixels, which are already in sample coordinates.
    """
    if not isinstance(setup.geometry, SpectralGeometry):
        raise TypeError("setup.geometry must be a SpectralGeometry")
    res = run_experiment(setup, exposure, workers)
    counts = np.bincount(res.records.pixel, minlength=setup.array.pixel_count)
    return SpectralProfile(pixel_centers(setup.array), counts, float(exposure)), res


def spectrometer_array(spec: DispersionSpec, pixel_pitch, **kw) -> DetectorSpec:
    """Readout array covering the dispersed field."""
    n = int(np.ceil(spec.field_extent / pixel_pitch))
    return DetectorSpec.centered_array(pixel_pitch, n, **kw)
