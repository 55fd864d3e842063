"""Seeded, time-sliced Poisson stream of SPDC pairs.

Reproducibility scheme
----------------------
The exposure ``[0, duration)`` is cut into fixed slices of
``SourceSpec.slice_duration`` seconds.  Slice ``k`` draws from its own
generator ``Philox(SeedSequence(seed, spawn_key=(k, stage)))`` where
``stage`` is :data:`STAGE_SOURCE` for pair generation and other small
integers for downstream physics.  Within a slice the pair count is
Poisson(N0 * slice length) and the birth times are sorted uniforms, which is
the same law as exponential inter-arrival times.  Because every slice is
self-contained, any partition of the slice range across workers and a later
concatenation reproduces the single-threaded stream bit for bit.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Iterator, Union

import numpy as np

from .core import NS_PER_S, PairStream, PhotonPairEvent, reference_angle, signal_wavelength

__all__ = [
    "Monochromatic",
    "GaussianBandwidth",
    "SourceSpec",
    "PairSlice",
    "slice_rng",
    "slice_bounds",
    "iter_pair_slices",
    "generate_pair_stream",
    "multi_pair_probability",
    "write_event_log",
    "read_event_log",
]

STAGE_SOURCE = 0


@dataclass(frozen=True)
class Monochromatic:
    """Fixed probe/reference wavelengths (nm)."""

    probe_wavelength: float
    reference_wavelength: float


@dataclass(frozen=True)
class GaussianBandwidth:
    """Probe wavelength ~ Normal(center, std) in nm; the partner follows from energy conservation."""

    center: float
    std: float


SpectralModel = Union[Monochromatic, GaussianBandwidth]


@dataclass(frozen=True)
class SourceSpec:
    """SPDC source description.

    ``pair_rate`` is in pairs per second, ``pump_waist`` is the standard
    deviation of the birth position (um) and ``angular_spread`` the standard
    deviation of the probe angle (rad).  ``slice_duration`` (s) is part of the
    stream definition: changing it changes the random stream.
    """

    pair_rate: float = 4e6
    pump_wavelength: float = 351.0
    spectral_model: SpectralModel = field(default_factory=lambda: Monochromatic(702.0, 702.0))
    pump_waist: float = 50.0
    angular_spread: float = 0.05
    seed: int = 0
    slice_duration: float = 1e-3

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise ValueError("pair_rate must be positive")
        if self.pump_waist < 0:
            raise ValueError("pump_waist must be >= 0")
        if not self.angular_spread > 0:
            raise ValueError("angular_spread must be positive")
        if not self.slice_duration > 0:
            raise ValueError("slice_duration must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        lp = self.pump_wavelength
        sm = self.spectral_model
        if isinstance(sm, Monochromatic):
            if abs(lp * (1 / sm.probe_wavelength + 1 / sm.reference_wavelength) - 1) > 1e-9:
                raise ValueError("monochromatic wavelengths violate energy conservation with the pump")
        elif isinstance(sm, GaussianBandwidth):
            if sm.std < 0:
                raise ValueError("bandwidth std must be >= 0")
            if sm.center - 8 * sm.std <= lp:
                raise ValueError("probe band reaches the pump wavelength")
        else:
            raise TypeError(f"unknown spectral model {sm!r}")


@dataclass
class PairSlice:
    index: int
    t_start: float  # ns
    t_end: float  # ns
    pairs: PairStream


def slice_rng(seed, k, stage):
    """Independent generator for slice ``k`` and pipeline ``stage``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(k), int(stage)))
    return np.random.Generator(np.random.Philox(ss))


def slice_bounds(spec: SourceSpec, duration):
    """Number of slices and their common length (ns) for an exposure in seconds."""
    if duration < 0:
        raise ValueError("duration must be >= 0")
    n = int(math.ceil(duration / spec.slice_duration - 1e-12)) if duration > 0 else 0
    return n, spec.slice_duration * NS_PER_S


def _sample_slice(spec: SourceSpec, k, t0, t1):
    rng = slice_rng(spec.seed, k, STAGE_SOURCE)
    rate_ns = spec.pair_rate / NS_PER_S
    n = rng.poisson(rate_ns * (t1 - t0))
    t = t0 + np.sort(rng.random(n)) * (t1 - t0)
    # keep strictly increasing and inside [t0, t1)
    np.minimum(t, np.nextafter(t1, -np.inf), out=t)
    if n > 1:
        dup = np.flatnonzero(np.diff(t) <= 0)
        for i in dup:
            t[i + 1] = np.nextafter(t[i], np.inf)
    x = rng.normal(0.0, 1.0, n) * spec.pump_waist
    th1 = rng.normal(0.0, 1.0, n) * spec.angular_spread
    sm = spec.spectral_model
    if isinstance(sm, Monochromatic):
        l1 = np.full(n, float(sm.probe_wavelength))
        l2 = np.full(n, float(sm.reference_wavelength))
    else:
        l1 = sm.center + sm.std * rng.normal(0.0, 1.0, n)
        # 1/l1 + 1/l2 = 1/lp is symmetric in l1, l2
        l2 = np.asarray(signal_wavelength(spec.pump_wavelength, l1), dtype=float).reshape(n)
    th2 = np.asarray(reference_angle(th1, l1, l2), dtype=float).reshape(n)
    return PairStream(t, x, th1, th2, l1, l2)


def iter_pair_slices(spec: SourceSpec, duration, first=0, stop=None) -> Iterator[PairSlice]:
    """Yield the pair slices ``first <= k < stop`` of an exposure of ``duration`` seconds."""
    n, dt = slice_bounds(spec, duration)
    end = duration * NS_PER_S
    stop = n if stop is None else min(stop, n)
    for k in range(first, stop):
        t0 = k * dt
        t1 = min((k + 1) * dt, end)
        yield PairSlice(k, t0, t1, _sample_slice(spec, k, t0, t1))


def generate_pair_stream(spec: SourceSpec, duration) -> PairStream:
    """Time-ordered pairs emitted during ``duration`` seconds."""
    return PairStream.concatenate(s.pairs for s in iter_pair_slices(spec, duration))


def multi_pair_probability(pair_rate, window):
    """P(K >= 2) for K ~ Poisson(pair_rate * window); rate per second, window in ns."""
    mu = pair_rate * window / NS_PER_S
    if not (np.isfinite(mu) and mu >= 0):
        raise ValueError("pair_rate * window must be finite and >= 0")
    return float(-math.expm1(-mu) - mu * math.exp(-mu))


_EVENT_HEADER = "birth_time_ns,birth_x_um,probe_angle_rad,reference_angle_rad,probe_wavelength_nm,reference_wavelength_nm"


def write_event_log(path, pairs: PairStream):
    """Dump pairs as CSV, one event per line after a header line."""
    cols = np.column_stack(pairs.columns()) if len(pairs) else np.empty((0, 6))
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(_EVENT_HEADER + "\n")
        for row in cols:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def read_event_log(path) -> PairStream:
    with open(path, encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != _EVENT_HEADER:
            raise ValueError(f"unexpected event-log header: {header!r}")
        body = fh.read()
    if not body.strip():
        return PairStream.empty()
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    return PairStream(*(data[:, i].copy() for i in range(len(PhotonPairEvent.field_names()))))
