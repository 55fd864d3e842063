"""End-to-end Monte Carlo of coincidence fluorescence imaging.

Each source slice is pushed through the same chain:

    pairs -> geometry (probe position on the sample, reference position on
    the array) -> absorption -> emission -> bucket / array detection ->
    streaming coincidence pairing

Every stage draws from its own per-slice generator, so changing one stage's
parameters never perturbs another stage's random numbers.

With ``workers > 1`` the slice range is cut into contiguous blocks that run
in separate processes.  Pair streams are identical to the single-process
run, but each block starts with fresh dead-time state and pairs only its own
clicks, so results agree statistically rather than bit for bit.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .coincidence import (
    CoincidenceConfig,
    CoincidenceImage,
    CoincidenceRecords,
    Diagnostics,
    StreamingPairer,
    TimingModel,
    accumulate_image,
    optimal_window,
)
from .core import NS_PER_S, OpticalLayout, PairStream
from .detection import ClickBatch, DeadTimeState, DetectorSpec, detect_array, detect_bucket, pixel_centers
from .optics import PSFSampler, magnification, trace_probe, trace_reference
from .sample import FluorophoreMap, fluorescence_emission, try_absorb
from .source import SourceSpec, iter_pair_slices, slice_bounds, slice_rng

log = logging.getLogger(__name__)

__all__ = [
    "ImagingGeometry",
    "ExperimentSetup",
    "RunResult",
    "run_experiment",
    "simulate_image",
    "timing_model",
    "auto_window_offset",
]

STAGE_GEOMETRY, STAGE_ABSORB, STAGE_EMIT, STAGE_BUCKET, STAGE_ARRAY = 1, 2, 3, 4, 5
JITTER_GUARD = 10.0  # sigmas


@dataclass(frozen=True)
class ImagingGeometry:
    """Ghost-imaging optics: ray trace both arms, optionally add diffraction.

    ``psf`` draws a displacement of the probe landing point about the
    geometric ray, reproducing the diffraction-limited coincidence PSF.
    ``aperture`` clips probe rays at the objective (lost photons).
    """

    layout: OpticalLayout
    psf: Optional[PSFSampler] = None
    aperture: Optional[float] = None

    def __call__(self, pairs: PairStream, rng):
        x1 = trace_probe(pairs, self.layout, self.aperture)
        if self.psf is not None:
            x1 = x1 + self.psf.sample(rng, len(pairs))
        return x1, trace_reference(pairs, self.layout)

    def reconstruction_axis(self, array: DetectorSpec):
        """Sample coordinate of each array pixel, image inversion included."""
        return magnification(self.layout) * pixel_centers(array)


@dataclass(frozen=True)
class ExperimentSetup:
    source: SourceSpec
    geometry: object  # callable (pairs, rng) -> (x_sample, x_reference)
    sample: FluorophoreMap
    bucket: DetectorSpec
    array: DetectorSpec
    collection_efficiency: float = 0.5
    coincidence: CoincidenceConfig = field(default_factory=CoincidenceConfig)
    auto_offset: bool = True

    def __post_init__(self):
        if not 0.0 <= self.collection_efficiency <= 1.0:
            raise ValueError("collection_efficiency must lie in [0, 1]")


@dataclass
class RunResult:
    records: CoincidenceRecords
    diagnostics: Diagnostics
    exposure: float
    n_pairs: int
    config: CoincidenceConfig
    bucket_clicks: Optional[ClickBatch] = None
    array_clicks: Optional[ClickBatch] = None

    def image(self, array: DetectorSpec, axis=None) -> CoincidenceImage:
        return accumulate_image(self.records, array, self.exposure, self.config, axis)


def timing_model(setup: ExperimentSetup) -> TimingModel:
    return TimingModel(setup.sample.dye.lifetime, setup.bucket.jitter_fwhm, setup.array.jitter_fwhm)


def auto_window_offset(setup: ExperimentSetup):
    """Centre of the best window on ``t_bucket - t_array``, fixed delays included."""
    start, _ = optimal_window(timing_model(setup), setup.coincidence.window)
    return start + setup.coincidence.window / 2 + setup.bucket.time_offset - setup.array.time_offset


def effective_config(setup: ExperimentSetup) -> CoincidenceConfig:
    if setup.auto_offset:
        return replace(setup.coincidence, offset=auto_window_offset(setup))
    return setup.coincidence


def _horizon(setup, t_end):
    return t_end + min(0.0,
                       setup.bucket.time_offset - JITTER_GUARD * setup.bucket.jitter_sigma,
                       setup.array.time_offset - JITTER_GUARD * setup.array.jitter_sigma)


def _run_block(setup: ExperimentSetup, exposure, first, stop, keep_clicks=False):
    cfg = effective_config(setup)
    n_slices, dt = slice_bounds(setup.source, exposure)
    t_begin = first * dt
    t_end = min(stop * dt, exposure * NS_PER_S)
    pairer = StreamingPairer(cfg, t_begin, t_end)
    bucket_state = DeadTimeState(1)
    array_state = DeadTimeState(setup.array.pixel_count)
    seed = setup.source.seed
    n_pairs = 0
    kept_b, kept_a = [], []
    for sl in iter_pair_slices(setup.source, exposure, first, stop):
        k, pairs = sl.index, sl.pairs
        n_pairs += len(pairs)
        x1, x2 = setup.geometry(pairs, slice_rng(seed, k, STAGE_GEOMETRY))
        ab = try_absorb(x1, setup.sample, slice_rng(seed, k, STAGE_ABSORB))
        idx = np.flatnonzero(ab.absorbed)
        fl = fluorescence_emission(idx.size, setup.sample, slice_rng(seed, k, STAGE_EMIT))
        em = fl.emitted
        photons = type(fl)(fl.emitted[em], fl.emit_offset[em], fl.extra_delay[em], fl.scattered[em])
        bucket = detect_bucket(photons, pairs.birth_time[idx[em]], setup.collection_efficiency, setup.bucket,
                               slice_rng(seed, k, STAGE_BUCKET), bucket_state, dark_window=(sl.t_start, sl.t_end))
        array = detect_array(x2, pairs.birth_time, setup.array, array_state,
                             slice_rng(seed, k, STAGE_ARRAY), dark_window=(sl.t_start, sl.t_end))
        pairer.push(bucket, array, _horizon(setup, sl.t_end))
        if keep_clicks:
            kept_b.append(bucket)
            kept_a.append(array)
    records, diag = pairer.finish()
    extra = (ClickBatch.concatenate(kept_b), ClickBatch.concatenate(kept_a)) if keep_clicks else (None, None)
    return records, diag, n_pairs, extra


def run_experiment(setup: ExperimentSetup, exposure, workers=1, keep_clicks=False, expected=None) -> RunResult:
    """Simulate ``exposure`` seconds and pair the clicks.

    ``keep_clicks`` retains every click (memory grows with exposure; single
    worker only).  ``expected`` is the anticipated coincidence count; fewer
    than 100 adds an under-sampling warning to the diagnostics.
    """
    if exposure < 0:
        raise ValueError("exposure must be >= 0")
    cfg = effective_config(setup)
    n_slices, _ = slice_bounds(setup.source, exposure)
    workers = max(1, min(int(workers), max(n_slices, 1)))
    if workers == 1:
        records, diag, n_pairs, (bk, ar) = _run_block(setup, exposure, 0, n_slices, keep_clicks)
    else:
        if keep_clicks:
            raise ValueError("keep_clicks requires a single worker")
        edges = np.linspace(0, n_slices, workers + 1).round().astype(int)
        with ProcessPoolExecutor(workers) as pool:
            futs = [pool.submit(_run_block, setup, exposure, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]
            parts = [f.result() for f in futs]
        records = CoincidenceRecords.concatenate(p[0] for p in parts)
        diag = Diagnostics()
        for p in parts:
            diag.merge(p[1])
        n_pairs = sum(p[2] for p in parts)
        bk = ar = None
    if expected is not None and expected < 100:
        diag.warnings.append(f"undersampled: expected {expected:.3g} coincidences (< 100)")
    log.debug("exposure %.3g s: %d pairs, %d coincidences", exposure, n_pairs, len(records))
    return RunResult(records, diag, float(exposure), n_pairs, cfg, bk, ar)


def simulate_image(setup: ExperimentSetup, exposure, workers=1, **kw):
    """Run an imaging experiment and return ``(image, result)``.

    The image axis is in sample coordinates when ``setup.geometry`` knows
    how to reconstruct it, otherwise in array coordinates.
    """
    res = run_experiment(setup, exposure, workers, **kw)
    axis = None
    if hasattr(setup.geometry, "reconstruction_axis"):
        axis = setup.geometry.reconstruction_axis(setup.array)
    return res.image(setup.array, axis), res


def expected_rate_upper_bound(setup: ExperimentSetup):
    """Pairs/s times every efficiency, peak absorption assumed everywhere."""
    from .sample import absorption_probability

    s = setup.sample
    pabs = absorption_probability(float(np.max(s.concentration)), s.dye.extinction, s.thickness)
    return (setup.source.pair_rate * pabs * s.dye.quantum_yield * setup.collection_efficiency
            * setup.bucket.quantum_efficiency * setup.array.quantum_efficiency)
