import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import cumulative_trapezoid

from ghostfluor.analysis import conditional_spread, fwhm
from ghostfluor.core import OpticalLayout, PairStream, reference_angle
from ghostfluor.optics import (
    FresnelKernelSpec,
    InfeasibleLayoutError,
    PSFProfile,
    PSFSampler,
    ResolutionError,
    _crystal_amplitude,
    biphoton_psf_1d,
    classical_psf_1d,
    conjugate_map,
    diffraction_width,
    focused_layout,
    inverse_conjugate_map,
    magnification,
    solve_image_distance,
    solve_reference_distance,
    sweep_reference_distance,
    trace_probe,
    trace_reference,
)
from ghostfluor.source import GaussianBandwidth, Monochromatic, SourceSpec, generate_pair_stream

UNIT = OpticalLayout(1000, 1000, 1000, 2000, 351, 702, 702)
RATIO2 = OpticalLayout(500, 1000, 1000, 5000 / 3, 351, 526.5, 1053)

# first zero-crossing pair of sinc^2 at half maximum: 2 * 1.3915573 / pi
SINC2_FWHM = 0.88589402


def pairs_from(birth_x, th1, l1=702.0, l2=702.0):
    birth_x = np.atleast_1d(np.asarray(birth_x, dtype=float))
    th1 = np.broadcast_to(np.asarray(th1, dtype=float), birth_x.shape).copy()
    n = birth_x.size
    l1a, l2a = np.full(n, l1), np.full(n, l2)
    return PairStream(np.arange(n, dtype=float), birth_x, th1, reference_angle(th1, l1a, l2a), l1a, l2a)


# imaging condition


def test_symmetric_conjugates():
    s1, virtual = solve_image_distance(1000, 1000, 1000, 702, 702)
    assert s1 == pytest.approx(2000.0, rel=1e-14) and not virtual


def test_ratio_two_image_distance():
    s1, virtual = solve_image_distance(500, 1000, 1000, 526.5, 1053)
    assert s1 == pytest.approx(1000 * 2500 / 1500, rel=1e-14) and not virtual


def test_image_at_infinity_rejected():
    with pytest.raises(ValueError):
        solve_image_distance(500, 500, 1000, 702, 702)


def test_virtual_image_flagged():
    s1, virtual = solve_image_distance(200, 300, 1000, 702, 702)
    assert virtual and s1 < 0


def test_reference_distance_inverse_cases():
    assert solve_reference_distance(2000, 1000, 1000, 702, 702) == pytest.approx(1000.0, rel=1e-14)
    assert solve_reference_distance(5000 / 3, 500, 1000, 526.5, 1053) == pytest.approx(1000.0, rel=1e-12)
    assert solve_reference_distance(1666.7, 500, 1000, 526.5, 1053) == pytest.approx(1000.0, rel=1e-3)


def test_negative_reference_distance_is_infeasible():
    with pytest.raises(InfeasibleLayoutError):
        solve_reference_distance(5000, 3000, 1000, 702, 702)


@given(st.floats(100, 5000), st.floats(1200, 20000), st.sampled_from([(702.0, 702.0), (526.5, 1053.0), (1053.0, 526.5)]))
def test_image_reference_round_trip(a, s1, lams):
    f = 1000.0
    l1, l2 = lams
    try:
        b = solve_reference_distance(s1, a, f, l1, l2)
    except InfeasibleLayoutError:
        return
    if b == 0:
        return
    back, virtual = solve_image_distance(a, b, f, l1, l2)
    assert not virtual
    assert back == pytest.approx(s1, rel=1e-9)


def test_focused_layout():
    lay = focused_layout(500, 1000, 1000, 351, 526.5)
    assert lay.reference_wavelength == pytest.approx(1053.0, rel=1e-14)
    assert lay.s1 == pytest.approx(5000 / 3, rel=1e-14)
    assert lay.in_focus()


# ray tracing


def test_axial_ray():
    assert trace_probe(pairs_from(0.0, 0.0), UNIT)[0] == 0.0
    assert trace_reference(pairs_from(0.0, 0.0), UNIT)[0] == 0.0


def abcd(layout):
    free = lambda d: np.array([[1.0, d], [0.0, 1.0]])
    lens = np.array([[1.0, 0.0], [-1.0 / layout.f_obj, 1.0]])
    return free(layout.s1) @ lens @ free(layout.a)


@given(st.floats(-100, 100), st.floats(-0.3, 0.3))
def test_probe_trace_matches_ray_matrices(x, th):
    lay = OpticalLayout(800, 1200, 1000, 3100, 351, 702, 702)
    expected = abcd(lay) @ np.array([x, math.sin(th)])
    assert trace_probe(pairs_from(x, th), lay)[0] == pytest.approx(expected[0], rel=1e-12, abs=1e-9)


def test_probe_trace_unit_layout_matrix():
    # a = f, s1 = 2f: [[1 - s1/f, a + s1 - a s1/f], [-1/f, 1 - a/f]]
    m = abcd(UNIT)
    np.testing.assert_allclose(m, [[-1.0, 1000.0], [-1e-3, 0.0]], atol=1e-12)
    t = 0.02
    assert trace_probe(pairs_from(0.0, t), UNIT)[0] == pytest.approx(1000 * math.sin(t), rel=1e-13)
    assert trace_probe(pairs_from(7.0, t), UNIT)[0] == pytest.approx(-7.0 + 1000 * math.sin(t), rel=1e-13)


def test_free_propagation_limit():
    lay = OpticalLayout(1000, 1000, math.inf, 2000, 351, 702, 702)
    x = trace_probe(pairs_from(3.0, 0.01), lay)[0]
    assert x == pytest.approx(3.0 + 3000 * math.sin(0.01), rel=1e-14)


def test_aperture_clips_rays():
    p = pairs_from([0.0, 0.0], [0.01, 0.2])
    x = trace_probe(p, UNIT, aperture=50.0)
    assert np.isfinite(x[0]) and np.isnan(x[1])


def test_reference_trace_cases():
    p = pairs_from(4.0, 0.0)
    assert trace_reference(p, UNIT)[0] == 4.0


def test_reference_trace_paraxial_composition():
    th1, l1, l2 = 0.003, 526.5, 1053.0
    p = pairs_from(2.0, th1, l1, l2)
    th2 = reference_angle(th1, l1, l2, paraxial=True)
    # free propagation of the mirrored partner over b
    assert trace_reference(p, RATIO2)[0] == pytest.approx(2.0 - 1000 * th2, abs=1e-5)


# conjugate map


def test_conjugate_map_cases():
    assert conjugate_map(0.0, UNIT) == 0.0
    assert conjugate_map(10.0, UNIT) == pytest.approx(-10.0, rel=1e-14)
    lay = OpticalLayout(1000, 1000, 1000 * 4000 / 3000, 4000, 351, 702, 702)
    assert lay.in_focus()
    assert magnification(lay) == pytest.approx(-2.0, rel=1e-14)
    assert abs(conjugate_map(5.0, lay)) == pytest.approx(10.0, rel=1e-14)
    assert inverse_conjugate_map(conjugate_map(3.3, lay), lay) == pytest.approx(3.3, rel=1e-14)


def test_conjugate_map_rejects_defocus():
    with pytest.raises(ValueError):
        conjugate_map(1.0, OpticalLayout(1000, 1000, 1000, 2100, 351, 702, 702))


def rays_to_fixed_reference(x2, th, layout):
    l1, l2 = layout.probe_wavelength, layout.reference_wavelength
    th2 = reference_angle(th, l1, l2)
    return pairs_from(x2 + layout.b * np.sin(th2), th, l1, l2)


@pytest.mark.parametrize("layout", [UNIT, RATIO2], ids=["ratio1", "ratio2"])
def test_probe_position_independent_of_angle_at_focus(layout):
    th = np.linspace(-0.3, 0.3, 61)
    p = rays_to_fixed_reference(6.0, th, layout)
    np.testing.assert_allclose(trace_reference(p, layout), 6.0, atol=1e-9)
    x1 = trace_probe(p, layout)
    assert np.ptp(x1) < 1e-9
    assert x1[0] == pytest.approx(float(conjugate_map(6.0, layout)), abs=1e-9)


def test_angle_dependence_grows_with_defocus():
    th = np.array([-0.01, 0.01])
    slopes = []
    for s1 in (2000, 2050, 2200, 2600):
        lay = OpticalLayout(1000, 1000, 1000, s1, 351, 702, 702)
        x1 = trace_probe(rays_to_fixed_reference(0.0, th, lay), lay)
        slopes.append(abs(x1[1] - x1[0]) / 0.02)
    assert slopes[0] < 1e-9
    assert all(b > a for a, b in zip(slopes, slopes[1:]))


@pytest.mark.parametrize("layout", [UNIT, RATIO2], ids=["ratio1", "ratio2"])
def test_reference_sweep_finds_focus(layout):
    spec = SourceSpec(spectral_model=Monochromatic(layout.probe_wavelength, layout.reference_wavelength), seed=3)
    pairs = generate_pair_stream(spec, 2e-3)
    step = 10.0
    grid = np.arange(500.0, 1500.0 + step / 2, step)
    spread = sweep_reference_distance(pairs, layout, grid)
    predicted = solve_reference_distance(layout.s1, layout.a, layout.f_obj, layout.probe_wavelength,
                                         layout.reference_wavelength)
    assert abs(grid[np.argmin(spread)] - predicted) <= step


def test_chromatic_blur_grows_with_bandwidth():
    spreads = []
    for std in (0.0, 1.0, 3.0, 10.0):
        pairs = generate_pair_stream(SourceSpec(spectral_model=GaussianBandwidth(702.0, std), seed=12), 2e-3)
        spreads.append(conditional_spread(trace_probe(pairs, UNIT), trace_reference(pairs, UNIT)))
    assert spreads[0] < 1e-6
    assert all(b > a for a, b in zip(spreads, spreads[1:]))


# diffraction


def test_crystal_integral_matches_gaussian_closed_form():
    # complex Gaussian integral sqrt(pi/alpha) exp(beta^2/4alpha + gamma) at 30 digits
    expected = np.array([12.989779488798037 + 13.499622107089254j,
                         11.723603152500971 + 14.597340141901359j,
                         -4.7511654507670996 - 18.030516405739638j])
    got = _crystal_amplitude(np.array([0.0, 10.0, -37.5]), 3.0, 0.702, 0.702, 1000.0, 1000.0, 250.0)
    np.testing.assert_allclose(got, expected, rtol=1e-9)


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        FresnelKernelSpec(50, 400, 800, 702, 702)
    with pytest.raises(ValueError):
        FresnelKernelSpec(50, 400, 63, 702, 702)
    with pytest.raises(ValueError):
        FresnelKernelSpec(0, 400, 801, 702, 702)


def test_coarse_grid_is_reported():
    with pytest.raises(ResolutionError):
        biphoton_psf_1d(FresnelKernelSpec(50, 400, 101, 702, 702), UNIT, 0.0)


@pytest.fixture(scope="module")
def unit_psf():
    return biphoton_psf_1d(FresnelKernelSpec(50, 400, 801, 702, 702), UNIT, 0.0)


def test_psf_normalized(unit_psf):
    assert unit_psf.intensity.max() == 1.0
    assert unit_psf.intensity.min() >= 0


def test_psf_matches_slit_diffraction(unit_psf):
    width = diffraction_width(702, 2000, 50)
    assert width == pytest.approx(14.04, rel=1e-12)
    assert unit_psf.fwhm == pytest.approx(SINC2_FWHM * width, rel=0.01)


def test_psf_matches_classical_single_lens(unit_psf):
    classical = classical_psf_1d(50, 702, UNIT.effective_distance, 1000, 2000, 0.0, unit_psf.x)
    assert unit_psf.fwhm == pytest.approx(classical.fwhm, rel=0.02)
    assert np.max(np.abs(unit_psf.intensity - classical.intensity)) < 0.01


def test_psf_peak_follows_reference_position():
    spec = FresnelKernelSpec(50, 200, 401, 702, 702, grid_center=-10.0)
    prof = biphoton_psf_1d(spec, UNIT, 10.0)
    assert abs(prof.peak_position - conjugate_map(10.0, UNIT)) <= spec.step


def test_psf_write(tmp_path, unit_psf):
    path = tmp_path / "psf.txt"
    unit_psf.write(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# x1_um normalized_intensity"
    assert len(lines) == 802
    data = np.loadtxt(path)
    np.testing.assert_allclose(data[:, 0], unit_psf.x, atol=1e-9)


def test_sampler_follows_profile(unit_psf):
    n = 400_000
    s = PSFSampler.from_profile(unit_psf, center=0.0).sample(np.random.default_rng(0), n)
    cum = cumulative_trapezoid(unit_psf.intensity, unit_psf.x, initial=0.0)
    cum /= cum[-1]
    edges = np.linspace(-40, 40, 41)
    p = np.diff(np.interp(edges, unit_psf.x, cum))
    counts, _ = np.histogram(s, bins=edges)
    assert np.all(np.abs(counts - n * p) <= 5 * np.sqrt(n * p * (1 - p)) + 1)
    assert abs(np.median(s)) < 0.1


def test_sampler_rejects_empty_profile():
    with pytest.raises(ValueError):
        PSFSampler(np.linspace(-1, 1, 5), np.zeros(5))


def test_profile_fwhm_of_triangle():
    p = PSFProfile(np.linspace(-2, 2, 401), np.clip(1 - np.abs(np.linspace(-2, 2, 401)), 0, None))
    assert p.fwhm == pytest.approx(1.0, rel=1e-9)
    assert p.peak_position == 0.0
