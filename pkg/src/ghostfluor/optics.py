"""Unfolded two-arm optics: imaging condition, ray tracing and the biphoton PSF.

Ray tracing is paraxial ABCD optics in one transverse dimension.  The slope
variable carried through the matrices is the direction sine, so the
phase-matching relation ``sin(theta2) = (l2/l1) sin(theta1)`` links the two
arms exactly and the in-focus conjugate relation holds to round-off rather
than to third order in the angle.

Image inversion: the physical sample coordinate conjugate to an array
position ``x2`` is ``x1 = -(s1/d) x2`` with ``d = a + (l2/l1) b``.
Reconstructed images are labelled in physical sample coordinates, so a
point object at ``x0`` reconstructs at ``x0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .analysis import conditional_spread, fwhm
from .core import OpticalLayout, PairStream, signal_wavelength

__all__ = [
    "ImageDistance",
    "InfeasibleLayoutError",
    "ResolutionError",
    "solve_image_distance",
    "solve_reference_distance",
    "focused_layout",
    "trace_probe",
    "trace_reference",
    "magnification",
    "conjugate_map",
    "inverse_conjugate_map",
    "sweep_reference_distance",
    "FresnelKernelSpec",
    "PSFProfile",
    "diffraction_width",
    "biphoton_psf_1d",
    "classical_psf_1d",
    "PSFSampler",
]


class InfeasibleLayoutError(ValueError):
    """Requested conjugate plane cannot be reached with a non-negative distance."""


class ResolutionError(ValueError):
    """Quadrature grid too coarse for the diffraction width it must resolve."""


class ImageDistance(NamedTuple):
    s1: float
    virtual: bool


def _um(wavelength_nm):
    return wavelength_nm * 1e-3


def solve_image_distance(a, b, f_obj, probe_wavelength, reference_wavelength) -> ImageDistance:
    """Sample-plane distance ``s1`` from ``1/s1 + 1/(a + (l2/l1) b) = 1/f_obj``.

    A negative ``s1`` (virtual plane) is returned as is, with ``virtual=True``.
    """
    d = a + (reference_wavelength / probe_wavelength) * b
    if np.isclose(d, f_obj, rtol=1e-12, atol=0.0):
        raise ValueError("effective object distance equals f_obj: image at infinity")
    s1 = f_obj * d / (d - f_obj)
    return ImageDistance(float(s1), bool(s1 < 0))


def solve_reference_distance(s1, a, f_obj, probe_wavelength, reference_wavelength):
    """Reference-arm length ``b`` that brings the plane at ``s1`` into focus."""
    if np.isclose(s1, f_obj, rtol=1e-12, atol=0.0):
        raise ValueError("s1 equals f_obj: conjugate object at infinity")
    b = (probe_wavelength / reference_wavelength) * (f_obj * s1 / (s1 - f_obj) - a)
    if b < 0:
        raise InfeasibleLayoutError(f"plane s1={s1} needs negative reference distance b={b:.6g}")
    return float(b)


def focused_layout(a, b, f_obj, pump_wavelength, probe_wavelength) -> OpticalLayout:
    """Layout with ``s1`` solved from the imaging condition for the given arms."""
    l2 = signal_wavelength(pump_wavelength, probe_wavelength)
    s1, virtual = solve_image_distance(a, b, f_obj, probe_wavelength, l2)
    if virtual:
        raise InfeasibleLayoutError("imaging condition gives a virtual sample plane")
    return OpticalLayout(a, b, f_obj, s1, pump_wavelength, probe_wavelength, l2)


def trace_probe(pairs: PairStream, layout: OpticalLayout, aperture=None):
    """Probe position at the sample plane (um).

    Free space over ``a``, thin-lens kick at ``f_obj``, free space over
    ``s1``.  With ``aperture`` (half-width at the lens, um) rays missing the
    lens come back as NaN.
    """
    u = np.sin(pairs.probe_angle)
    x_lens = pairs.birth_x + layout.a * u
    u_out = u - x_lens / layout.f_obj
    x1 = x_lens + layout.s1 * u_out
    if aperture is not None:
        x1 = np.where(np.abs(x_lens) <= aperture, x1, np.nan)
    return x1


def trace_reference(pairs: PairStream, layout: OpticalLayout, b=None):
    """Reference position at the array plane (um).

    The stored reference angle lies on the far side of the pump axis, so the
    physical slope is ``-sin(theta2)``.  ``b`` overrides ``layout.b`` (used by
    focus sweeps).
    """
    b = layout.b if b is None else b
    return pairs.birth_x - b * np.sin(pairs.reference_angle)


def magnification(layout: OpticalLayout):
    """Signed lateral magnification sample/array, ``-s1/d``."""
    return -layout.s1 / layout.effective_distance


def conjugate_map(x2, layout: OpticalLayout, rtol=1e-9):
    """Physical sample coordinate conjugate to array position ``x2``."""
    if not layout.in_focus(rtol):
        raise ValueError(f"layout violates the imaging condition (residual {layout.focus_residual():.3g})")
    return magnification(layout) * np.asarray(x2, dtype=float)


def inverse_conjugate_map(x1, layout: OpticalLayout, rtol=1e-9):
    if not layout.in_focus(rtol):
        raise ValueError(f"layout violates the imaging condition (residual {layout.focus_residual():.3g})")
    return np.asarray(x1, dtype=float) / magnification(layout)


def sweep_reference_distance(pairs: PairStream, layout: OpticalLayout, b_values):
    """Conditional spread of x1 given x2 for each trial reference distance.

    The sample plane stays where ``layout`` puts it; only the array moves.
    Returns an array aligned with ``b_values``.
    """
    x1 = trace_probe(pairs, layout)
    return np.array([conditional_spread(x1, trace_reference(pairs, layout, b=b)) for b in b_values])


# ---------------------------------------------------------------------------
# diffraction


@dataclass(frozen=True)
class FresnelKernelSpec:
    """Sampling of the 1-D biphoton point-spread quadrature.

    ``aperture_half_width`` is the hard objective aperture (um).  The output
    grid has ``grid_points`` samples over ``grid_extent`` um centred on
    ``grid_center``.  ``pump_half_width`` sets the Gaussian pump amplitude
    ``exp(-x^2/w^2)`` over the crystal; ``None`` picks a width five times the
    region the aperture can see, wide enough to be irrelevant.
    """

    aperture_half_width: float
    grid_extent: float
    grid_points: int
    probe_wavelength: float
    reference_wavelength: float
    grid_center: float = 0.0
    pump_half_width: Optional[float] = None

    def __post_init__(self):
        if self.grid_points < 64 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd and >= 64")
        if not self.aperture_half_width > 0:
            raise ValueError("aperture_half_width must be positive")
        if not self.grid_extent > 0:
            raise ValueError("grid_extent must be positive")

    @property
    def grid(self):
        h = self.grid_extent / 2
        return self.grid_center + np.linspace(-h, h, self.grid_points)

    @property
    def step(self):
        return self.grid_extent / (self.grid_points - 1)


@dataclass
class PSFProfile:
    x: np.ndarray
    intensity: np.ndarray

    @property
    def peak_position(self):
        return float(self.x[int(np.argmax(self.intensity))])

    @property
    def fwhm(self):
        return fwhm(self.x, self.intensity)

    def write(self, path):
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("# x1_um normalized_intensity\n")
            for xv, iv in zip(self.x, self.intensity):
                fh.write(f"{xv:.9f} {iv:.12e}\n")


def diffraction_width(wavelength, image_distance, aperture_half_width):
    """``lambda s1 / (2A)`` in um, the 1-D slit diffraction scale."""
    return _um(wavelength) * image_distance / (2.0 * aperture_half_width)


def _crystal_amplitude(xi, x2, l1, l2, a, b, w):
    """Pump-weighted crystal integral of the two free-space kernels.

    ``K(xi) = int dxc exp(-xc^2/w^2) h_a^(l1)(xi - xc) h_b^(l2)(xc - x2)``,
    evaluated by the trapezoidal rule on a grid fine enough for the local
    chirp frequency.  The integrand decays like a Gaussian, so the rule
    converges geometrically.
    """
    half = 5.0 * w
    kmax = 2 * np.pi * ((np.max(np.abs(xi)) + half) / (l1 * a) + (abs(x2) + half) / (l2 * b))
    h = np.pi / (3.0 * kmax)
    n = int(np.ceil(2 * half / h)) + 1
    xc = np.linspace(-half, half, n)
    dx = xc[1] - xc[0]
    common = np.exp(-(xc / w) ** 2 + 1j * np.pi * ((xc - x2) ** 2 / (l2 * b) + xc**2 / (l1 * a))) * dx
    out = np.empty(xi.size, dtype=complex)
    # exp(i pi (xi - xc)^2 / l1 a) = exp(i pi xi^2/l1 a) exp(-2 i pi xi xc / l1 a) exp(i pi xc^2/l1 a)
    chunk = max(1, int(4e6 // n))
    for s in range(0, xi.size, chunk):
        xs = xi[s:s + chunk]
        kern = np.exp(-2j * np.pi * np.outer(xs, xc) / (l1 * a))
        out[s:s + chunk] = np.exp(1j * np.pi * xs**2 / (l1 * a)) * (kern @ common)
    return out


def biphoton_psf_1d(spec: FresnelKernelSpec, layout: OpticalLayout, x2_fixed=0.0) -> PSFProfile:
    """Coincidence intensity over the sample plane for a fixed reference position.

    Evaluates ``|int dxc h1(x1; xc) h2(x2; xc)|^2`` with ``h2`` the Fresnel
    propagator over ``b`` at the reference wavelength and ``h1`` Fresnel over
    ``a``, the objective (hard aperture, thin-lens phase) and Fresnel over
    ``s1`` at the probe wavelength.  The crystal integral is done first on a
    trapezoid grid, the aperture integral by Gauss-Legendre.  The result is
    normalized to unit peak.
    """
    l1 = _um(spec.probe_wavelength)
    l2 = _um(spec.reference_wavelength)
    A = spec.aperture_half_width
    a, b, f, s1 = layout.a, layout.b, layout.f_obj, layout.s1
    width = diffraction_width(spec.probe_wavelength, abs(s1), A)
    if spec.step > width / 8.0:
        raise ResolutionError(
            f"grid step {spec.step:.4g} um exceeds 1/8 of the diffraction width {width:.4g} um"
        )
    x1 = spec.grid
    d = a + (l2 / l1) * b
    w = spec.pump_half_width if spec.pump_half_width is not None else 5.0 * (A + abs(x2_fixed))

    # Gauss-Legendre order from the largest phase slope across the pupil
    slope = 2 * np.pi / l1 * (A * abs(1 / d - 1 / f + 1 / s1) + abs(x2_fixed) / d + np.max(np.abs(x1)) / abs(s1))
    n_xi = int(2 * slope * A) + 128
    nodes, weights = np.polynomial.legendre.leggauss(n_xi)
    xi = A * nodes
    wxi = A * weights

    K = _crystal_amplitude(xi, x2_fixed, l1, l2, a, b, w)
    pupil = wxi * K * np.exp(-1j * np.pi * xi**2 / (l1 * f))
    amp = np.exp(1j * np.pi * (x1[:, None] - xi[None, :]) ** 2 / (l1 * s1)) @ pupil
    inten = np.abs(amp) ** 2
    return PSFProfile(x1, inten / inten.max())


def classical_psf_1d(aperture_half_width, wavelength, object_distance, f_obj, image_distance, x_object, x_grid, n_pupil=4001):
    """Single-lens 1-D imaging PSF of a point at ``x_object`` (composite Simpson over the pupil).

    Ordinary wide-field imaging at one wavelength; used as the classical
    comparison for the biphoton PSF.  Normalized to unit peak.
    """
    from scipy.integrate import simpson

    lam = _um(wavelength)
    A = aperture_half_width
    if n_pupil % 2 == 0:
        n_pupil += 1
    xi = np.linspace(-A, A, n_pupil)
    pupil = np.exp(1j * np.pi * ((xi - x_object) ** 2 / (lam * object_distance) - xi**2 / (lam * f_obj)))
    x = np.asarray(x_grid, dtype=float)
    field = pupil[None, :] * np.exp(1j * np.pi * (x[:, None] - xi[None, :]) ** 2 / (lam * image_distance))
    amp = simpson(field, x=xi, axis=1)
    inten = np.abs(amp) ** 2
    return PSFProfile(x, inten / inten.max())


class PSFSampler:
    """Draw transverse displacements distributed like a sampled PSF.

    The profile is treated as a piecewise-linear density about its peak
    (``center``, default the peak sample) and inverted through its
    cumulative integral.
    """

    def __init__(self, x, intensity, center=None):
        x = np.asarray(x, dtype=float)
        y = np.clip(np.asarray(intensity, dtype=float), 0.0, None)
        if center is None:
            center = x[int(np.argmax(y))]
        self.offsets = x - center
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])
        if cdf[-1] <= 0:
            raise ValueError("PSF has no mass")
        self.cdf = cdf / cdf[-1]

    @classmethod
    def from_profile(cls, profile: PSFProfile, center=None):
        return cls(profile.x, profile.intensity, center)

    def sample(self, rng, n):
        return np.interp(rng.random(n), self.cdf, self.offsets)
