"""Bucket (D1) and array (D2) photon-counting detectors.

Timing response is Gaussian; the quoted width is a FWHM.  Dead time is
non-paralysable and tracked per channel (per pixel for the array) in a
:class:`DeadTimeState` that survives across calls, so a long exposure can
be fed through in time-ordered slices.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import FWHM_TO_SIGMA, NS_PER_S

__all__ = [
    "DetectorSpec",
    "DetectionClick",
    "ClickBatch",
    "DeadTimeState",
    "detect_bucket",
    "detect_array",
    "dark_clicks",
    "pixel_index",
    "pixel_centers",
    "apply_dead_time",
    "write_click_log",
    "read_click_log",
]

BUCKET = -1


@dataclass(frozen=True)
class DetectorSpec:
    """Photon-counting detector.

    ``jitter_fwhm``, ``dead_time`` and ``time_offset`` (fixed propagation
    delay) are in ns; ``dark_rate`` is counts/s per channel.  The pixel fields
    describe the array: pixel ``i`` covers
    ``[extent_offset + i*pitch, extent_offset + (i+1)*pitch)`` in um.  A
    bucket detector uses ``pixel_count=1`` and ignores position.
    """

    quantum_efficiency: float = 0.7
    jitter_fwhm: float = 0.5
    dead_time: float = 0.0
    pixel_pitch: float = 1.0
    pixel_count: int = 1
    extent_offset: float = 0.0
    time_offset: float = 0.0
    dark_rate: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.quantum_efficiency <= 1.0:
            raise ValueError("quantum_efficiency must lie in [0, 1]")
        if self.jitter_fwhm < 0 or self.dead_time < 0 or self.dark_rate < 0:
            raise ValueError("jitter, dead time and dark rate must be >= 0")
        if not self.pixel_pitch > 0 or self.pixel_count < 1:
            raise ValueError("pixel_pitch must be positive and pixel_count >= 1")

    @property
    def jitter_sigma(self):
        return self.jitter_fwhm * FWHM_TO_SIGMA

    @classmethod
    def centered_array(cls, pixel_pitch, pixel_count, center=0.0, **kw):
        return cls(pixel_pitch=pixel_pitch, pixel_count=pixel_count,
                   extent_offset=center - pixel_pitch * pixel_count / 2, **kw)


@dataclass(frozen=True)
class DetectionClick:
    channel: str  # "bucket" or "pixel"
    pixel: int  # -1 for the bucket
    timestamp: float


@dataclass
class ClickBatch:
    """Time-sorted clicks.  ``source`` indexes the photon batch that caused each click, -1 for dark counts."""

    timestamp: np.ndarray
    pixel: np.ndarray
    source: np.ndarray

    def __len__(self):
        return len(self.timestamp)

    @classmethod
    def empty(cls):
        return cls(np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in ("timestamp", "pixel", "source")))


class DeadTimeState:
    """Last accepted click time per channel."""

    def __init__(self, n_channels):
        self.last = np.full(int(n_channels), -np.inf)


@numba.njit(cache=True)
def _dead_time_filter(times, pixels, last, dead):
    keep = np.zeros(times.size, dtype=np.bool_)
    for i in range(times.size):
        p = pixels[i]
        if times[i] - last[p] >= dead:
            keep[i] = True
            last[p] = times[i]
    return keep


def apply_dead_time(times, pixels, state: DeadTimeState, dead_time):
    """Mask of clicks surviving a non-paralysable dead time; ``times`` must be sorted."""
    if dead_time <= 0 or times.size == 0:
        if times.size:
            np.maximum.at(state.last, pixels, times)
        return np.ones(times.size, dtype=bool)
    return _dead_time_filter(np.ascontiguousarray(times, dtype=np.float64),
                             np.ascontiguousarray(pixels, dtype=np.int64), state.last, float(dead_time))


def pixel_index(x, spec: DetectorSpec):
    """Pixel hit at array position ``x`` (um); -1 off the array."""
    idx = np.floor((np.asarray(x, dtype=float) - spec.extent_offset) / spec.pixel_pitch)
    ok = (idx >= 0) & (idx < spec.pixel_count)
    return np.where(ok, idx, -1).astype(np.int64)


def pixel_centers(spec: DetectorSpec):
    return spec.extent_offset + spec.pixel_pitch * (np.arange(spec.pixel_count) + 0.5)


def dark_clicks(spec: DetectorSpec, t0, t1, rng):
    """Uniform dark counts on every channel over ``[t0, t1)`` ns (unsorted)."""
    n = rng.poisson(spec.dark_rate * spec.pixel_count * (t1 - t0) / NS_PER_S)
    t = t0 + rng.random(n) * (t1 - t0)
    pix = rng.integers(0, spec.pixel_count, n)
    return t, pix.astype(np.int64)


def _finish(times, pixels, source, spec, state):
    order = np.argsort(times, kind="stable")
    times, pixels, source = times[order], pixels[order], source[order]
    if state is not None:
        keep = apply_dead_time(times, pixels, state, spec.dead_time)
        times, pixels, source = times[keep], pixels[keep], source[keep]
    return ClickBatch(times, pixels, source)


def detect_bucket(photons, birth_time, collection_efficiency, spec: DetectorSpec, rng,
                  state: DeadTimeState | None = None, dark_window=None):
    """Bucket clicks from fluorescence photons.

    ``photons`` is a :class:`~ghostfluor.sample.FluorescenceBatch` restricted
    to emitted photons, aligned with ``birth_time`` (ns).  A photon clicks
    with probability ``collection_efficiency * quantum_efficiency``; its
    timestamp is birth + emission delay + scattering delay + ``time_offset``
    + Gaussian jitter.  With ``dark_window=(t0, t1)`` dark counts are added.
    """
    birth_time = np.asarray(birth_time, dtype=float)
    n = birth_time.size
    p = collection_efficiency * spec.quantum_efficiency
    hit = rng.random(n) < p
    jitter = rng.normal(0.0, 1.0, n) * spec.jitter_sigma
    t = birth_time + photons.emit_offset + photons.extra_delay + spec.time_offset + jitter
    times, src = t[hit], np.flatnonzero(hit)
    if dark_window is not None and spec.dark_rate > 0:
        td, _ = dark_clicks(spec, dark_window[0], dark_window[1], rng)
        times = np.concatenate([times, td])
        src = np.concatenate([src, np.full(td.size, -1)])
    pixels = np.zeros(times.size, dtype=np.int64)
    batch = _finish(times, pixels, src, spec, state)
    batch.pixel[:] = BUCKET
    return batch


def detect_array(x2, birth_time, spec: DetectorSpec, state: DeadTimeState | None, rng, dark_window=None):
    """Array clicks from reference photons landing at ``x2`` (um) at ``birth_time`` (ns).

    Photons off the array are lost; the rest click with probability
    ``quantum_efficiency`` unless their pixel is still dead.  Dead time is
    judged on the jittered timestamps, so accepted clicks on a pixel are
    always at least ``dead_time`` apart.  ``state=None`` disables dead time.
    """
    x2 = np.asarray(x2, dtype=float)
    birth_time = np.asarray(birth_time, dtype=float)
    n = x2.size
    pix = pixel_index(x2, spec)
    hit = (rng.random(n) < spec.quantum_efficiency) & (pix >= 0)
    jitter = rng.normal(0.0, 1.0, n) * spec.jitter_sigma
    t = birth_time + spec.time_offset + jitter
    times, pixels, src = t[hit], pix[hit], np.flatnonzero(hit)
    if dark_window is not None and spec.dark_rate > 0:
        td, pd = dark_clicks(spec, dark_window[0], dark_window[1], rng)
        times = np.concatenate([times, td])
        pixels = np.concatenate([pixels, pd])
        src = np.concatenate([src, np.full(td.size, -1)])
    return _finish(times, pixels, src, spec, state)


def write_click_log(path, bucket: ClickBatch, array: ClickBatch):
    """Merged, time-sorted click log: ``channel,pixel,timestamp_ns`` per line."""
    t = np.concatenate([bucket.timestamp, array.timestamp])
    p = np.concatenate([np.full(len(bucket), BUCKET), array.pixel])
    order = np.argsort(t, kind="stable")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("channel,pixel,timestamp_ns\n")
        for i in order:
            ch = "bucket" if p[i] == BUCKET else "pixel"
            fh.write(f"{ch},{int(p[i])},{t[i]:.17g}\n")


def read_click_log(path):
    clicks = []
    with open(path, encoding="ascii") as fh:
        if fh.readline().strip() != "channel,pixel,timestamp_ns":
            raise ValueError("unexpected click-log header")
        for line in fh:
            ch, pix, ts = line.strip().split(",")
            clicks.append(DetectionClick(ch, int(pix), float(ts)))
    return clicks
