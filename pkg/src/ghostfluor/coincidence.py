"""Coincidence pairing, ghost-image accumulation and the broadened timing curve.

A coincidence window of length ``T`` is opened around every bucket click:
an array click at ``t2`` is a candidate for a bucket click at ``t1`` when
``|t1 - t2 - offset| <= T/2``.  The offset centres the window on the
broadened correlation peak (see :func:`optimal_window`).

Timing model: the intrinsic pair correlation is a delta, fluorescence adds
an exponential delay and each detector a Gaussian jitter, so ``t1 - t2``
follows an exponentially modified Gaussian (EMG) with
``sigma^2 = sigma1^2 + sigma2^2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .core import FWHM_TO_SIGMA
from .detection import ClickBatch, DetectorSpec

__all__ = [
    "CoincidenceConfig",
    "CoincidenceRecords",
    "Diagnostics",
    "pair_clicks",
    "StreamingPairer",
    "CoincidenceImage",
    "accumulate_image",
    "TimingModel",
    "emg_pdf",
    "emg_cdf",
    "broadened_g2",
    "optimal_window",
    "window_capture_fraction",
    "write_pgm",
]

POLICIES = ("discard_window", "keep_first")


@dataclass(frozen=True)
class CoincidenceConfig:
    """Window length ``window`` (ns), its centre ``offset`` (ns) and the multi-candidate policy."""

    window: float = 10.0
    ambiguity_policy: str = "discard_window"
    offset: float = 0.0

    def __post_init__(self):
        if not self.window > 0:
            raise ValueError("coincidence window must be positive")
        if self.ambiguity_policy not in POLICIES:
            raise ValueError(f"ambiguity_policy must be one of {POLICIES}")


@dataclass
class CoincidenceRecords:
    pixel: np.ndarray
    t_bucket: np.ndarray
    t_array: np.ndarray

    def __len__(self):
        return len(self.pixel)

    @classmethod
    def empty(cls):
        return cls(np.empty(0, dtype=np.int64), np.empty(0), np.empty(0))

    @classmethod
    def concatenate(cls, parts):
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in ("pixel", "t_bucket", "t_array")))


@dataclass
class Diagnostics:
    """Counters accumulated while pairing.

    ``ambiguous`` and ``unpaired`` count bucket clicks with several / no
    array candidates.  ``clock_windows`` and ``clock_windows_multi`` tile the
    exposure with fixed windows of length ``T`` and count those holding two
    or more array clicks; their ratio is the multi-pair error rate of the
    window.
    """

    bucket_clicks: int = 0
    array_clicks: int = 0
    coincidences: int = 0
    ambiguous: int = 0
    unpaired: int = 0
    clock_windows: int = 0
    clock_windows_multi: int = 0
    warnings: list = field(default_factory=list)

    def merge(self, other: "Diagnostics"):
        for name in ("bucket_clicks", "array_clicks", "coincidences", "ambiguous", "unpaired",
                     "clock_windows", "clock_windows_multi"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        self.warnings.extend(other.warnings)
        return self

    @property
    def multi_window_fraction(self):
        return self.clock_windows_multi / self.clock_windows if self.clock_windows else 0.0

    @property
    def ambiguity_fraction(self):
        return self.ambiguous / self.bucket_clicks if self.bucket_clicks else 0.0

    def report(self, extra=None):
        items = {
            "bucket_clicks": self.bucket_clicks,
            "array_clicks": self.array_clicks,
            "coincidences": self.coincidences,
            "ambiguous_bucket_clicks": self.ambiguous,
            "unpaired_bucket_clicks": self.unpaired,
            "ambiguity_fraction": f"{self.ambiguity_fraction:.9g}",
            "clock_windows": self.clock_windows,
            "clock_windows_multi": self.clock_windows_multi,
            "multi_window_fraction": f"{self.multi_window_fraction:.9g}",
        }
        if extra:
            items.update(extra)
        lines = [f"{k}={v}" for k, v in items.items()]
        lines += [f"warning={w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _check_sorted(t, what):
    if t.size > 1 and np.any(np.diff(t) < 0):
        raise ValueError(f"{what} clicks must be time-sorted")


def pair_clicks(bucket: ClickBatch, array: ClickBatch, config: CoincidenceConfig):
    """Match each bucket click with the array click inside its window.

    Exactly one candidate makes a coincidence.  With several, the
    ``discard_window`` policy drops the bucket click and ``keep_first`` keeps
    the earliest candidate; both count it as ambiguous.  Returns
    ``(records, diagnostics)``.  Clock-window occupancy is not computed here
    (see :class:`StreamingPairer`).
    """
    tb = np.asarray(bucket.timestamp, dtype=float)
    ta = np.asarray(array.timestamp, dtype=float)
    _check_sorted(tb, "bucket")
    _check_sorted(ta, "array")
    centre = tb - config.offset
    half = config.window / 2
    lo = np.searchsorted(ta, centre - half, side="left")
    hi = np.searchsorted(ta, centre + half, side="right")
    n = hi - lo
    take = n == 1
    if config.ambiguity_policy == "keep_first":
        take = n >= 1
    idx = lo[take]
    rec = CoincidenceRecords(np.asarray(array.pixel)[idx].astype(np.int64), tb[take], ta[idx])
    diag = Diagnostics(
        bucket_clicks=int(tb.size),
        array_clicks=int(ta.size),
        coincidences=int(take.sum()),
        ambiguous=int((n > 1).sum()),
        unpaired=int((n == 0).sum()),
    )
    return rec, diag


class StreamingPairer:
    """Incremental :func:`pair_clicks` over time-ordered slices.

    Call :meth:`push` with each slice's clicks and a ``horizon``: a time
    before which no later slice can produce a click.  Bucket clicks whose
    window closes before the horizon are paired immediately; older array
    clicks are released.  The result equals one-shot pairing of the full
    streams.  Clock windows tile ``[t_begin, t_end)``.
    """

    def __init__(self, config: CoincidenceConfig, t_begin=0.0, t_end=0.0):
        self.config = config
        self.t_begin = t_begin
        self.n_clock = int(math.floor((t_end - t_begin) / config.window + 1e-9)) if t_end > t_begin else 0
        self._at = np.empty(0)
        self._ap = np.empty(0, dtype=np.int64)
        self._bt = np.empty(0)
        self._occ = np.empty(0)
        self._occ_done = 0  # clock windows already counted
        self._records = []
        self.diagnostics = Diagnostics(clock_windows=self.n_clock)

    def push(self, bucket: ClickBatch, array: ClickBatch, horizon):
        cfg = self.config
        half = cfg.window / 2
        if len(array):
            t = np.concatenate([self._at, array.timestamp])
            p = np.concatenate([self._ap, array.pixel])
            o = np.argsort(t, kind="stable")
            self._at, self._ap = t[o], p[o]
            self._occ = np.concatenate([self._occ, array.timestamp])
            self.diagnostics.array_clicks += len(array)
        if len(bucket):
            self._bt = np.sort(np.concatenate([self._bt, bucket.timestamp]), kind="stable")

        ready = self._bt - cfg.offset + half < horizon
        if np.any(ready):
            rec, d = pair_clicks(ClickBatch(self._bt[ready], np.empty(0), np.empty(0)),
                                 ClickBatch(self._at, self._ap, np.empty(0)), cfg)
            self._records.append(rec)
            self.diagnostics.bucket_clicks += d.bucket_clicks
            self.diagnostics.coincidences += d.coincidences
            self.diagnostics.ambiguous += d.ambiguous
            self.diagnostics.unpaired += d.unpaired
            self._bt = self._bt[~ready]

        keep_from = horizon - cfg.offset - half
        if self._bt.size:
            keep_from = min(keep_from, self._bt[0] - cfg.offset - half)
        cut = np.searchsorted(self._at, keep_from, side="left")
        self._at, self._ap = self._at[cut:], self._ap[cut:]

        self._count_clock_windows(horizon)

    def _count_clock_windows(self, horizon):
        T = self.config.window
        if np.isfinite(horizon):
            final = int(math.floor((horizon - self.t_begin) / T))
        else:
            final = self.n_clock
        final = min(max(final, self._occ_done), self.n_clock)
        if final == self._occ_done:
            return
        k = np.floor((self._occ - self.t_begin) / T)
        done = k < final
        kk = k[done]
        kk = kk[(kk >= self._occ_done) & (kk < final)].astype(np.int64)
        if kk.size:
            counts = np.bincount(kk - self._occ_done)
            self.diagnostics.clock_windows_multi += int((counts >= 2).sum())
        self._occ = self._occ[~done]
        self._occ_done = final

    def finish(self):
        self.push(ClickBatch.empty(), ClickBatch.empty(), np.inf)
        return CoincidenceRecords.concatenate(self._records), self.diagnostics


# ---------------------------------------------------------------------------
# image


@dataclass
class CoincidenceImage:
    """Coincidence counts per array pixel.

    ``axis`` holds the reconstructed sample coordinate of each pixel (um);
    ``exposure`` is in seconds.
    """

    counts: np.ndarray
    exposure: float
    axis: np.ndarray
    config: CoincidenceConfig

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def rate(self):
        return self.total / self.exposure if self.exposure > 0 else 0.0

    def write_pgm(self, path):
        write_pgm(path, self.counts)

    def write_sidecar(self, path, metadata=None):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(f"# exposure_s={self.exposure!r}\n")
            fh.write(f"# total_counts={self.total}\n")
            fh.write(f"# window_ns={self.config.window!r}\n")
            fh.write(f"# window_offset_ns={self.config.offset!r}\n")
            fh.write(f"# ambiguity_policy={self.config.ambiguity_policy}\n")
            for k, v in (metadata or {}).items():
                fh.write(f"# {k}={v}\n")
            fh.write("# pixel x_sample_um counts\n")
            for i, (xv, c) in enumerate(zip(self.axis, self.counts)):
                fh.write(f"{i} {xv:.9f} {int(c)}\n")


def write_pgm(path, counts):
    """Plain (P2) 16-bit graymap, one row, counts min-max scaled to 0..65535."""
    c = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    lo, hi = int(c.min()), int(c.max())
    if hi > lo:
        v = np.rint((c - lo) * (65535.0 / (hi - lo))).astype(np.int64)
    else:
        v = np.zeros_like(c)
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"P2\n{c.shape[1]} {c.shape[0]}\n65535\n")
        for row in v:
            fh.write(" ".join(str(int(x)) for x in row) + "\n")


def accumulate_image(records: CoincidenceRecords, array_spec: DetectorSpec, exposure, config: CoincidenceConfig,
                     axis=None) -> CoincidenceImage:
    """Histogram coincidence pixels into an image."""
    pix = np.asarray(records.pixel, dtype=np.int64)
    if pix.size and (pix.min() < 0 or pix.max() >= array_spec.pixel_count):
        raise ValueError("record references a pixel outside the array")
    counts = np.bincount(pix, minlength=array_spec.pixel_count)
    if axis is None:
        axis = array_spec.extent_offset + array_spec.pixel_pitch * (np.arange(array_spec.pixel_count) + 0.5)
    return CoincidenceImage(counts, float(exposure), np.asarray(axis, dtype=float), config)


# ---------------------------------------------------------------------------
# timing


@dataclass(frozen=True)
class TimingModel:
    """Fluorescence lifetime and detector jitters (FWHM), all in ns."""

    lifetime: float = 1.0
    bucket_jitter_fwhm: float = 0.5
    array_jitter_fwhm: float = 0.5

    def __post_init__(self):
        if self.lifetime < 0 or self.bucket_jitter_fwhm < 0 or self.array_jitter_fwhm < 0:
            raise ValueError("timing parameters must be >= 0")

    @property
    def sigma(self):
        return math.hypot(self.bucket_jitter_fwhm, self.array_jitter_fwhm) * FWHM_TO_SIGMA


def emg_pdf(t, lifetime, sigma):
    """Density of exponential(lifetime) + normal(0, sigma) at ``t``."""
    t = np.asarray(t, dtype=float)
    tau, s = float(lifetime), float(sigma)
    if tau == 0 and s == 0:
        raise ValueError("degenerate timing model: the curve is a delta")
    if s == 0:
        return np.where(t >= 0, np.exp(-np.maximum(t, 0) / tau) / tau, 0.0)
    if tau == 0:
        return np.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2 * math.pi))
    z = (s / tau - t / s) / math.sqrt(2)
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        direct = np.exp(0.5 * (s / tau) ** 2 - t / tau) * special.erfc(z)
        scaled = special.erfcx(z) * np.exp(-0.5 * (t / s) ** 2)
    return np.where(z > 0, scaled, direct) / (2 * tau)


def emg_cdf(t, lifetime, sigma):
    t = np.asarray(t, dtype=float)
    tau, s = float(lifetime), float(sigma)
    if s == 0:
        if tau == 0:
            return (t >= 0).astype(float)
        return np.where(t >= 0, -np.expm1(-np.maximum(t, 0) / tau), 0.0)
    phi = special.ndtr(t / s)
    if tau == 0:
        return phi
    return phi - tau * emg_pdf(t, tau, s)


def broadened_g2(model: TimingModel, grid):
    """Coincidence timing curve ``p(t1 - t2)`` on ``grid`` (ns), unit area.

    Closed-form exponentially modified Gaussian.  The grid must span at
    least ``[-5 sigma, 10 lifetime]``.
    """
    grid = np.asarray(grid, dtype=float)
    s = model.sigma
    if grid.size == 0 or grid.min() > -5 * s or grid.max() < 10 * model.lifetime:
        raise ValueError("grid must span [-5 sigma, 10 lifetime]")
    return emg_pdf(grid, model.lifetime, s)


def optimal_window(model: TimingModel, window):
    """Best placement of a length-``window`` interval on the timing curve.

    Returns ``(start, captured_fraction)``.  For a log-concave density the
    optimum has equal density at both ends; that root is bracketed between
    a start far on the rising edge and the curve's mean.
    """
    T = float(window)
    if not T > 0:
        raise ValueError("window must be positive")
    tau, s = model.lifetime, model.sigma
    if s == 0:
        return 0.0, float(emg_cdf(T, tau, 0.0))
    if tau == 0:
        start = -T / 2
    else:
        def g(x):
            return float(emg_pdf(x + T, tau, s) - emg_pdf(x, tau, s))

        lo, hi = -T - 12 * s, tau
        if g(lo) > 0 and g(hi) < 0:
            start = optimize.brentq(g, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=200)
        else:
            res = optimize.minimize_scalar(
                lambda x: -float(emg_cdf(x + T, tau, s) - emg_cdf(x, tau, s)),
                bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
            start = float(res.x)
    frac = float(emg_cdf(start + T, tau, s) - emg_cdf(start, tau, s))
    return float(start), frac


def window_capture_fraction(model: TimingModel, window):
    """Fraction of the timing curve inside the optimally placed window."""
    return optimal_window(model, window)[1]
