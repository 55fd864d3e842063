"""Fluorophore maps, Beer-Lambert absorption, emission delay and in-sample scattering.

The sample is thin: an absorbed probe photon keeps the transverse coordinate
it had at the sample plane and the thickness enters only through
``m * eps * L``.  Two scattering channels are modelled:

* probe scattering, a Gaussian transverse displacement applied *before*
  the concentration lookup (it moves where the photon is absorbed);
* fluorescence scattering, an extra positive delay on the emitted photon.

:class:`FluorescenceBatch` has no position field at all.  The fluorescence
photon goes to a bucket detector, so nothing downstream can learn where it
was emitted from it.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "DyeSpec",
    "ALEXA_FLUOR_700",
    "FluorophoreMap",
    "AbsorptionBatch",
    "FluorescenceBatch",
    "absorption_probability",
    "try_absorb",
    "emission_delay",
    "fluorescence_emission",
    "point_source",
    "two_point",
    "uniform_slab",
    "bar_pattern",
    "load_fluorophore_map",
    "save_fluorophore_map",
]

UM_TO_M = 1e-6


@dataclass(frozen=True)
class DyeSpec:
    """Dye constants: extinction (M^-1 um^-1), quantum yield, lifetime (ns), absorption peak (nm)."""

    extinction: float = 20.0
    quantum_yield: float = 0.25
    lifetime: float = 1.0
    peak_absorption: float = 700.0

    def __post_init__(self):
        if self.extinction < 0:
            raise ValueError("extinction must be >= 0")
        if not 0.0 <= self.quantum_yield <= 1.0:
            raise ValueError("quantum_yield must lie in [0, 1]")
        if not self.lifetime > 0:
            raise ValueError("lifetime must be positive")


#: Near-infrared dye used for the count budget.
ALEXA_FLUOR_700 = DyeSpec(extinction=20.0, quantum_yield=0.25, lifetime=1.0, peak_absorption=700.0)


@dataclass(frozen=True)
class FluorophoreMap:
    """Concentration profile m(x) in uM sampled at cell centres.

    Cell ``i`` is centred on ``x_min + i * dx`` and extends half a cell either
    side; positions outside all cells see no dye.
    """

    concentration: np.ndarray
    x_min: float
    dx: float
    thickness: float
    dye: DyeSpec = ALEXA_FLUOR_700
    probe_scatter_prob: float = 0.0
    probe_scatter_spread: float = 0.0
    fluo_scatter_prob: float = 0.0
    fluo_scatter_delay: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.concentration, dtype=float)
        object.__setattr__(self, "concentration", c)
        if c.ndim != 1 or c.size == 0:
            raise ValueError("concentration must be a non-empty 1-D array")
        if np.any(c < 0) or not np.all(np.isfinite(c)):
            raise ValueError("concentrations must be finite and >= 0")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not self.thickness > 0:
            raise ValueError("thickness must be positive")
        for name in ("probe_scatter_prob", "fluo_scatter_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.probe_scatter_spread < 0 or self.fluo_scatter_delay < 0:
            raise ValueError("scattering spreads must be >= 0")

    @property
    def x(self):
        return self.x_min + self.dx * np.arange(self.concentration.size)

    @property
    def extent(self):
        """(left edge, right edge) in um."""
        return self.x_min - self.dx / 2, self.x_min + self.dx * (self.concentration.size - 0.5)

    def concentration_at(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.floor((x - self.x_min) / self.dx + 0.5)
        inside = (idx >= 0) & (idx < self.concentration.size)  # NaN compares False
        out = np.zeros(x.shape)
        out[inside] = self.concentration[idx[inside].astype(np.intp)]
        return out

    def with_scattering(self, **kw):
        return replace(self, **kw)


@dataclass
class AbsorptionBatch:
    absorbed: np.ndarray  # bool per incoming probe photon
    x_abs: np.ndarray  # um, NaN where the photon passed through
    scattered: np.ndarray  # bool, probe scattering fired


@dataclass
class FluorescenceBatch:
    """Outcome for each absorption: emitted flag and timing only."""

    emitted: np.ndarray
    emit_offset: np.ndarray  # ns after absorption
    extra_delay: np.ndarray  # ns, from fluorescence scattering
    scattered: np.ndarray


def absorption_probability(concentration, extinction, thickness):
    """Beer-Lambert absorbed fraction ``1 - exp(-m eps L)``; m in uM, eps in M^-1 um^-1, L in um."""
    m = np.asarray(concentration, dtype=float)
    if np.any(m < 0) or extinction < 0 or thickness < 0:
        raise ValueError("concentration, extinction and thickness must be >= 0")
    out = -np.expm1(-m * UM_TO_M * extinction * thickness)
    return float(out) if out.ndim == 0 else out


def try_absorb(x1, fmap: FluorophoreMap, rng) -> AbsorptionBatch:
    """Decide absorption for probe photons arriving at sample positions ``x1``.

    Draw order per call is fixed: scatter decision, scatter displacement,
    absorption uniform, each as one vector.
    """
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    n = x1.size
    scattered = rng.random(n) < fmap.probe_scatter_prob
    kick = rng.normal(0.0, 1.0, n) * fmap.probe_scatter_spread
    x = np.where(scattered, x1 + kick, x1)
    p = absorption_probability(fmap.concentration_at(x), fmap.dye.extinction, fmap.thickness)
    absorbed = rng.random(n) < p
    return AbsorptionBatch(absorbed, np.where(absorbed, x, np.nan), scattered)


def emission_delay(lifetime, rng, size=None):
    """Exponential emission delay (ns) with mean ``lifetime``."""
    if not lifetime > 0:
        raise ValueError("lifetime must be positive")
    return rng.exponential(lifetime, size)


def fluorescence_emission(n_absorbed, fmap: FluorophoreMap, rng) -> FluorescenceBatch:
    """Radiative decay for ``n_absorbed`` excited molecules.

    Takes a count, not positions: emission statistics are position
    independent.  Scattered photons pick up an exponential extra delay of
    mean ``fmap.fluo_scatter_delay``.
    """
    n = int(n_absorbed)
    emitted = rng.random(n) < fmap.dye.quantum_yield
    offset = emission_delay(fmap.dye.lifetime, rng, n)
    scattered = emitted & (rng.random(n) < fmap.fluo_scatter_prob)
    extra = rng.exponential(1.0, n) * fmap.fluo_scatter_delay
    extra = np.where(scattered, extra, 0.0)
    return FluorescenceBatch(emitted, offset, extra, scattered)


# ---------------------------------------------------------------------------
# built-in objects


def _grid(extent, points):
    if points < 1:
        raise ValueError("points must be >= 1")
    dx = extent / points
    return -extent / 2 + dx / 2, dx


def point_source(extent, points, x0, concentration, thickness, dye=ALEXA_FLUOR_700, **scatter):
    """Single loaded cell at ``x0``."""
    x_min, dx = _grid(extent, points)
    c = np.zeros(points)
    i = int(np.floor((x0 - x_min) / dx + 0.5))
    if not 0 <= i < points:
        raise ValueError("x0 outside the map")
    c[i] = concentration
    return FluorophoreMap(c, x_min, dx, thickness, dye, **scatter)


def two_point(extent, points, separation, concentration, thickness, dye=ALEXA_FLUOR_700, center=0.0, **scatter):
    """Two loaded cells ``separation`` apart (resolution target)."""
    x_min, dx = _grid(extent, points)
    c = np.zeros(points)
    for x0 in (center - separation / 2, center + separation / 2):
        i = int(np.floor((x0 - x_min) / dx + 0.5))
        if not 0 <= i < points:
            raise ValueError("point outside the map")
        c[i] = concentration
    return FluorophoreMap(c, x_min, dx, thickness, dye, **scatter)


def uniform_slab(extent, points, concentration, thickness, dye=ALEXA_FLUOR_700, **scatter):
    x_min, dx = _grid(extent, points)
    return FluorophoreMap(np.full(points, float(concentration)), x_min, dx, thickness, dye, **scatter)


def bar_pattern(extent, points, period, concentration, thickness, dye=ALEXA_FLUOR_700, duty=0.5, phase=0.0, **scatter):
    """Square-wave bar chart: loaded where ``((x - phase)/period) mod 1 < duty``."""
    x_min, dx = _grid(extent, points)
    x = x_min + dx * np.arange(points)
    c = np.where(np.mod((x - phase) / period, 1.0) < duty, float(concentration), 0.0)
    return FluorophoreMap(c, x_min, dx, thickness, dye, **scatter)


# ---------------------------------------------------------------------------
# text grid files
#
# line 1: whitespace separated key=value header
#   extent=<um> points=<n> thickness=<um> extinction=<M^-1 um^-1>
#   quantum_yield=<0..1> lifetime=<ns> [peak_absorption=<nm>] [x_min=<um>]
# x_min (first cell centre) defaults to a map centred on x = 0.
# then one concentration (uM) per line, left to right.

_REQUIRED = ("extent", "points", "thickness", "extinction", "quantum_yield", "lifetime")


def load_fluorophore_map(path, **scatter) -> FluorophoreMap:
    with open(path, encoding="ascii") as fh:
        header = fh.readline()
        head = {}
        for tok in header.split():
            if "=" not in tok:
                raise ValueError(f"bad header token {tok!r} in {path}")
            k, v = tok.split("=", 1)
            head[k.strip()] = float(v)
        missing = [k for k in _REQUIRED if k not in head]
        if missing:
            raise ValueError(f"map header missing {', '.join(missing)}")
        values = np.loadtxt(fh, ndmin=1)
    points = int(head["points"])
    if values.size != points:
        raise ValueError(f"map declares {points} points but holds {values.size}")
    dye = DyeSpec(head["extinction"], head["quantum_yield"], head["lifetime"], head.get("peak_absorption", 700.0))
    x_min, dx = _grid(head["extent"], points)
    x_min = head.get("x_min", x_min)
    return FluorophoreMap(values, x_min, dx, head["thickness"], dye, **scatter)


def save_fluorophore_map(path, fmap: FluorophoreMap):
    n = fmap.concentration.size
    d = fmap.dye
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(
            f"extent={fmap.dx * n:.12g} points={n} thickness={fmap.thickness:.12g} "
            f"extinction={d.extinction:.12g} quantum_yield={d.quantum_yield:.12g} "
            f"lifetime={d.lifetime:.12g} peak_absorption={d.peak_absorption:.12g} x_min={fmap.x_min!r}\n"
        )
        for v in fmap.concentration:
            fh.write(f"{v:.12g}\n")
