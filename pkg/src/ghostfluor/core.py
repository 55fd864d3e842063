"""Unit conventions, core records and the SPDC phase-matching relations.

Every public function in the package works in the same fixed units:

==============  =========================
quantity        unit
==============  =========================
length          micrometre (um)
time            nanosecond (ns)
wavelength      nanometre (nm)
concentration   micromolar (uM)
extinction      M^-1 um^-1
angle           radian
==============  =========================

Exposure durations and rates are the one exception: they are given in
seconds and per second, because that is how source brightness is quoted.

Transverse geometry is one-dimensional.  A pair is born at ``birth_x`` in
the (thin) crystal plane; the probe leaves at ``probe_angle`` and the
reference at ``reference_angle``, the latter measured on the opposite side of
the pump axis so that ``sin(theta1)/lambda1 == sin(theta2)/lambda2`` holds for
the stored values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

__all__ = [
    "FWHM_TO_SIGMA",
    "NS_PER_S",
    "PhotonPairEvent",
    "PairStream",
    "OpticalLayout",
    "signal_wavelength",
    "reference_angle",
]

#: Gaussian FWHM -> standard deviation, 1 / (2 sqrt(2 ln 2)).
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
NS_PER_S = 1e9


def signal_wavelength(pump_wavelength, reference_wavelength):
    """Partner wavelength from energy conservation, ``1/l1 = 1/lp - 1/l2``.

    Works elementwise on arrays.  The reference photon must be redder than
    the pump, otherwise no partner exists and ``ValueError`` is raised.
    """
    lp = np.asarray(pump_wavelength, dtype=float)
    l2 = np.asarray(reference_wavelength, dtype=float)
    if np.any(lp <= 0):
        raise ValueError("pump wavelength must be positive")
    if np.any(l2 <= lp):
        raise ValueError("reference wavelength must exceed the pump wavelength")
    # lp*l2/(l2-lp) loses fewer digits than 1/(1/lp - 1/l2)
    out = lp * l2 / (l2 - lp)
    return float(out) if out.ndim == 0 else out


def reference_angle(probe_angle, probe_wavelength, reference_wavelength, paraxial=False):
    """Reference emission angle from ``l2 sin(theta1) = l1 sin(theta2)``.

    With ``paraxial=True`` the small-angle form ``theta2 = (l2/l1) theta1`` is
    returned instead.  Raises ``ValueError`` when ``|sin theta2|`` would exceed
    one (evanescent partner).
    """
    th1 = np.asarray(probe_angle, dtype=float)
    ratio = np.asarray(reference_wavelength, dtype=float) / np.asarray(probe_wavelength, dtype=float)
    if paraxial:
        out = ratio * th1
    else:
        s2 = ratio * np.sin(th1)
        if np.any(np.abs(s2) > 1.0):
            raise ValueError("no propagating reference direction: |sin(theta2)| > 1")
        out = np.arcsin(s2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PhotonPairEvent:
    """One down-converted pair.  Times in ns, positions in um, angles in rad."""

    birth_time: float
    birth_x: float
    probe_angle: float
    reference_angle: float
    probe_wavelength: float
    reference_wavelength: float

    @classmethod
    def field_names(cls):
        return tuple(f.name for f in fields(cls))


@dataclass
class PairStream:
    """Column-oriented batch of pairs, time-ordered.

    Attribute names and order mirror :class:`PhotonPairEvent`.
    """

    birth_time: np.ndarray
    birth_x: np.ndarray
    probe_angle: np.ndarray
    reference_angle: np.ndarray
    probe_wavelength: np.ndarray
    reference_wavelength: np.ndarray

    def __len__(self):
        return len(self.birth_time)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return PhotonPairEvent(*(float(getattr(self, n)[i]) for n in PhotonPairEvent.field_names()))
        return PairStream(*(getattr(self, n)[i] for n in PhotonPairEvent.field_names()))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @classmethod
    def empty(cls):
        return cls(*(np.empty(0) for _ in PhotonPairEvent.field_names()))

    @classmethod
    def concatenate(cls, parts):
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, n) for p in parts]) for n in PhotonPairEvent.field_names()))

    def columns(self):
        return [getattr(self, n) for n in PhotonPairEvent.field_names()]


@dataclass(frozen=True)
class OpticalLayout:
    """Unfolded probe/reference geometry.

    Attributes:
        a: crystal to objective distance (um).
        b: crystal to reference array distance (um).
        f_obj: objective focal length (um).
        s1: objective to sample-plane distance (um).
        pump_wavelength: CW pump wavelength (nm).
        probe_wavelength: nominal probe wavelength (nm).
        reference_wavelength: nominal reference wavelength (nm).
    """

    a: float
    b: float
    f_obj: float
    s1: float
    pump_wavelength: float
    probe_wavelength: float
    reference_wavelength: float

    def __post_init__(self):
        for name in ("a", "b", "f_obj", "s1", "pump_wavelength", "probe_wavelength", "reference_wavelength"):
            v = getattr(self, name)
            # f_obj = inf is free propagation
            if not (v > 0 and (np.isfinite(v) or name == "f_obj")):
                raise ValueError(f"layout.{name} must be positive, got {v!r}")
        lhs = 1.0 / self.probe_wavelength + 1.0 / self.reference_wavelength
        if abs(lhs * self.pump_wavelength - 1.0) > 1e-9:
            raise ValueError("layout wavelengths violate 1/l1 + 1/l2 = 1/lp")

    @property
    def wavelength_ratio(self):
        """``l2 / l1`` of the nominal wavelengths."""
        return self.reference_wavelength / self.probe_wavelength

    @property
    def effective_distance(self):
        """``a + (l2/l1) b``, the unfolded object distance seen by the objective."""
        return self.a + self.wavelength_ratio * self.b

    def focus_residual(self):
        """Relative residual of the imaging condition; zero when in focus."""
        lhs = 1.0 / self.s1 + 1.0 / self.effective_distance
        return abs(lhs * self.f_obj - 1.0)

    def in_focus(self, rtol=1e-9):
        return self.focus_residual() <= rtol
