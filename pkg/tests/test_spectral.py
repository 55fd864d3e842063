import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ghostfluor.analysis import flatness_chi2, pearson
from ghostfluor.budget import BudgetParams, coincidence_rate_budget
from ghostfluor.coincidence import CoincidenceConfig
from ghostfluor.core import PairStream, signal_wavelength
from ghostfluor.detection import DetectorSpec
from ghostfluor.pipeline import ExperimentSetup
from ghostfluor.sample import DyeSpec, bar_pattern, point_source, uniform_slab
from ghostfluor.source import GaussianBandwidth, SourceSpec
from ghostfluor.spectral import (
    DispersionSpec,
    SpectralGeometry,
    disperse_position,
    infer_position,
    position_uncertainty,
    simulate_spectral_scan,
    spectrometer_array,
)

DISP = DispersionSpec(702.0, 10.0, 200.0, 0.1)


def test_dispersion_validation():
    with pytest.raises(ValueError):
        DispersionSpec(702, 0.0, 100, 0.1)
    with pytest.raises(ValueError):
        DispersionSpec(702, 10, 100, 0.0)


def test_dispersion_law():
    assert disperse_position(702.0, DISP) == (0.0, True)
    assert disperse_position(704.0, DISP).x == pytest.approx(20.0)
    assert disperse_position(720.0, DISP) == (180.0, False)


def test_inferred_position_from_reference_wavelength():
    spec = DispersionSpec(700.0, 10.0, 200.0, 0.1)
    l1 = signal_wavelength(351, 704)
    assert abs(l1 - 700.0) <= 0.1
    # 10 * (351 * 704 / 353 - 700)
    assert infer_position(704.0, 351.0, spec) == pytest.approx(0.11331444759207, rel=1e-10)
    assert infer_position(702.0, 351.0, DISP) == pytest.approx(0.0, abs=1e-12)


def test_inference_rejects_impossible_reading():
    with pytest.raises(ValueError):
        infer_position(351.0, 351.0, DISP)


@given(st.floats(692.0, 712.0))
def test_round_trip_at_zero_readout_error(l1):
    x = disperse_position(l1, DISP).x
    l2 = signal_wavelength(351.0, l1)
    assert infer_position(l2, 351.0, DISP) == pytest.approx(x, abs=1e-9)


def test_readout_noise_propagation():
    spec = DispersionSpec(702.0, 10.0, 200.0, 0.1)
    l1 = np.full(400_000, 705.0)
    l2 = signal_wavelength(351.0, l1)
    pairs = PairStream(np.arange(l1.size, dtype=float), np.zeros_like(l1), np.zeros_like(l1), np.zeros_like(l1),
                       l1, l2)
    _, x2 = SpectralGeometry(spec, 351.0)(pairs, np.random.default_rng(0))
    predicted = position_uncertainty(l2[0], 351.0, spec)
    assert predicted == pytest.approx(10.0 * (705.0 / l2[0]) ** 2 * 0.1, rel=1e-12)
    assert x2.std() == pytest.approx(predicted, rel=0.01)
    assert x2.mean() == pytest.approx(30.0, abs=0.01)


def spectral_setup(sample, resolution=0.1, pair_rate=4e6, seed=1, qy=1.0, collection=1.0, qe=1.0):
    disp = DispersionSpec(702.0, 10.0, 200.0, resolution)
    return ExperimentSetup(
        SourceSpec(pair_rate=pair_rate, spectral_model=GaussianBandwidth(702.0, 40.0), seed=seed),
        SpectralGeometry(disp, 351.0),
        sample,
        DetectorSpec(quantum_efficiency=qe),
        spectrometer_array(disp, 1.0, quantum_efficiency=qe),
        collection_efficiency=collection,
        coincidence=CoincidenceConfig(10.0, "discard_window"),
    )


DYE = DyeSpec(20.0, 1.0, 1.0)


def test_point_object_lands_in_its_bin():
    sample = point_source(200, 200, 20.5, 1e6, 20.0, DYE)
    prof, _ = simulate_spectral_scan(spectral_setup(sample, resolution=1e-9), 0.05)
    assert prof.counts.sum() > 100
    hit = np.flatnonzero(prof.counts)
    assert hit.size == 1 and prof.x[hit[0]] == pytest.approx(20.5)


def test_uniform_slab_profile_is_flat():
    sample = uniform_slab(40, 40, 1e6, 20.0, DYE)
    setup = spectral_setup(sample)
    setup = ExperimentSetup(setup.source, setup.geometry, setup.sample, setup.bucket,
                            DetectorSpec.centered_array(4.0, 8, quantum_efficiency=1.0), 1.0, setup.coincidence)
    prof, _ = simulate_spectral_scan(setup, 0.3)
    assert prof.counts.sum() > 2e4
    # the source band varies < 0.1 % over +-1.6 nm, far below the Poisson noise
    assert flatness_chi2(prof.counts)[2] > 1e-3


def test_bar_pattern_reconstruction():
    sample = bar_pattern(200, 200, 40, 1e6, 20.0, DYE)
    prof, res = simulate_spectral_scan(spectral_setup(sample), 0.5)
    assert prof.counts.sum() >= 1e5
    assert pearson(prof.counts, sample.concentration_at(prof.x)) > 0.95


def test_spectral_total_follows_budget():
    # all probe wavelengths land on a saturated slab inside the field
    sample = uniform_slab(400, 400, 1e6, 20.0, DyeSpec(20.0, 0.25, 1.0))
    disp = DispersionSpec(702.0, 1.0, 400.0, 0.1)
    setup = ExperimentSetup(
        SourceSpec(pair_rate=4e5, spectral_model=GaussianBandwidth(702.0, 20.0), seed=4),
        SpectralGeometry(disp, 351.0),
        sample,
        DetectorSpec(quantum_efficiency=0.7),
        spectrometer_array(disp, 2.0, quantum_efficiency=0.7),
        collection_efficiency=0.5,
        coincidence=CoincidenceConfig(10.0, "keep_first"),
    )
    exposure = 5.0
    prof, res = simulate_spectral_scan(setup, exposure)
    expected = exposure * coincidence_rate_budget(
        BudgetParams(pair_rate=4e5, concentration=1e6, quantum_yield=0.25, collection_efficiency=0.5,
                     bucket_efficiency=0.7, array_efficiency=0.7))
    # the 400 um field spans +-10 band sigmas; the missing tail is ~1.5e-23
    assert abs(prof.counts.sum() - expected) <= 3 * math.sqrt(expected)


def test_scan_requires_spectral_geometry():
    sample = uniform_slab(40, 40, 1.0, 20.0)
    setup = spectral_setup(sample)
    from ghostfluor.optics import focused_layout
    from ghostfluor.pipeline import ImagingGeometry
    bad = ExperimentSetup(setup.source, ImagingGeometry(focused_layout(1000, 1000, 1000, 351, 702)), sample,
                          setup.bucket, setup.array)
    with pytest.raises(TypeError):
        simulate_spectral_scan(bad, 0.001)


def test_profile_write(tmp_path):
    sample = uniform_slab(200, 200, 1e6, 20.0, DYE)
    prof, _ = simulate_spectral_scan(spectral_setup(sample), 0.002)
    path = tmp_path / "profile.txt"
    prof.write(path)
    data = np.loadtxt(path)
    assert data.shape == (200, 2)
    np.testing.assert_array_equal(data[:, 1], prof.counts)
