"""Command-line runner: ``ghostfluor <mode> --config FILE [--seed N] [--out DIR] [--workers N] [--exposure S]``.

Configuration is an INI file.  Every key, its unit and its default is listed
in ``SCHEMA``; unknown sections or keys are rejected so typos cannot pass
silently.  Exit status is 0 on success, 2 for configuration errors (one line
``config_error: <reason>`` on stderr) and 3 for failures while running.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .budget import BudgetParams, budget_report
from .coincidence import CoincidenceConfig, TimingModel, broadened_g2, optimal_window
from .core import OpticalLayout, signal_wavelength
from .detection import DetectorSpec
from .optics import (
    FresnelKernelSpec,
    PSFSampler,
    biphoton_psf_1d,
    conjugate_map,
    focused_layout,
    magnification,
    solve_reference_distance,
    sweep_reference_distance,
)
from .pipeline import ExperimentSetup, ImagingGeometry, expected_rate_upper_bound, simulate_image
from .sample import DyeSpec, bar_pattern, load_fluorophore_map, point_source, two_point, uniform_slab
from .source import GaussianBandwidth, Monochromatic, SourceSpec, generate_pair_stream, multi_pair_probability
from .spectral import DispersionSpec, SpectralGeometry, simulate_spectral_scan, spectrometer_array

log = logging.getLogger(__name__)

MODES = ("budget", "image", "psf", "spectral", "g2", "scan_b")

# section -> key -> (type, default, unit / meaning)
SCHEMA = {
    "run": {
        "exposure": (float, 1.0, "s"),
        "workers": (int, 1, "processes"),
        "collection_efficiency": (float, 0.5, "fraction of emitted photons reaching the bucket"),
    },
    "source": {
        "pair_rate": (float, 4e6, "pairs/s"),
        "pump_wavelength": (float, 351.0, "nm"),
        "spectrum": (str, "monochromatic", "monochromatic | gaussian"),
        "probe_wavelength": (float, 702.0, "nm, monochromatic probe or gaussian centre"),
        "bandwidth_std": (float, 0.0, "nm, gaussian probe spread"),
        "pump_waist": (float, 50.0, "um, gaussian birth-position std"),
        "angular_spread": (float, 0.05, "rad, probe angle std"),
        "slice_duration": (float, 1e-3, "s"),
        "seed": (int, 0, ""),
    },
    "layout": {
        "a": (float, 1000.0, "um, crystal to objective"),
        "b": (float, 1000.0, "um, crystal to array"),
        "f_obj": (float, 1000.0, "um, objective focal length"),
        "s1": (float, None, "um, objective to sample; solved for focus when absent"),
        "defocus": (bool, False, "allow a layout off the imaging condition"),
    },
    "sample": {
        "kind": (str, "point", "point | two_point | slab | bars | file"),
        "path": (str, None, "concentration grid file (kind=file), relative to the config"),
        "extent": (float, 200.0, "um"),
        "points": (int, 200, "cells"),
        "x0": (float, 0.0, "um, point position"),
        "separation": (float, 10.0, "um, two_point spacing"),
        "period": (float, 40.0, "um, bar period"),
        "duty": (float, 0.5, "bar fill fraction"),
        "phase": (float, 0.0, "um, bar phase"),
        "concentration": (float, 100.0, "uM"),
        "thickness": (float, 20.0, "um"),
        "extinction": (float, 20.0, "M^-1 um^-1"),
        "quantum_yield": (float, 0.25, ""),
        "lifetime": (float, 1.0, "ns"),
        "probe_scatter_prob": (float, 0.0, ""),
        "probe_scatter_spread": (float, 0.0, "um, gaussian std of the probe displacement"),
        "fluo_scatter_prob": (float, 0.0, ""),
        "fluo_scatter_delay": (float, 0.0, "ns, mean extra delay of scattered fluorescence"),
    },
    "bucket": {
        "quantum_efficiency": (float, 0.7, ""),
        "jitter_fwhm": (float, 0.5, "ns"),
        "dead_time": (float, 0.0, "ns"),
        "time_offset": (float, 0.0, "ns"),
        "dark_rate": (float, 0.0, "counts/s"),
    },
    "array": {
        "quantum_efficiency": (float, 0.7, ""),
        "jitter_fwhm": (float, 0.5, "ns"),
        "dead_time": (float, 0.0, "ns, per pixel"),
        "time_offset": (float, 0.0, "ns"),
        "dark_rate": (float, 0.0, "counts/s per pixel"),
        "pixel_pitch": (float, 1.0, "um"),
        "pixel_count": (int, 200, ""),
        "center": (float, 0.0, "um"),
    },
    "coincidence": {
        "window": (float, 10.0, "ns"),
        "ambiguity_policy": (str, "discard_window", "discard_window | keep_first"),
        "offset": (float, 0.0, "ns, window centre on t_bucket - t_array"),
        "auto_offset": (bool, True, "centre the window on the timing curve"),
    },
    "budget": {
        "counts_per_pixel": (float, 100.0, ""),
        "image_pixels": (int, 10000, ""),
    },
    "psf": {
        "aperture_half_width": (float, 50.0, "um"),
        "grid_extent": (float, 400.0, "um"),
        "grid_points": (int, 801, "odd"),
        "x2": (float, 0.0, "um, array position of the point"),
        "pump_half_width": (float, None, "um, gaussian pump amplitude width"),
    },
    "image": {
        "diffraction": (bool, False, "draw the probe landing point from the coincidence PSF"),
    },
    "spectral": {
        "center_wavelength": (float, 702.0, "nm"),
        "dispersion": (float, 10.0, "um/nm"),
        "field_extent": (float, 200.0, "um"),
        "spectrometer_resolution": (float, 0.1, "nm"),
        "pixel_pitch": (float, 1.0, "um"),
    },
    "g2": {
        "t_min": (float, -5.0, "ns"),
        "t_max": (float, 15.0, "ns"),
        "points": (int, 2001, ""),
    },
    "scan_b": {
        "b_min": (float, 500.0, "um"),
        "b_max": (float, 1500.0, "um"),
        "steps": (int, 101, ""),
        "pairs": (int, 200000, "pairs traced"),
    },
}


class ConfigError(ValueError):
    pass


def _parse_bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_config(path):
    """Read ``path`` into ``{section: {key: value}}`` with every default filled in."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(" ".join(str(exc).split())) from None
    out = {sec: {k: spec[1] for k, spec in keys.items()} for sec, keys in SCHEMA.items()}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            typ = SCHEMA[sec][key][0]
            try:
                out[sec][key] = _parse_bool(raw) if typ is bool else typ(raw.strip())
            except ValueError:
                raise ConfigError(f"bad value for {sec}.{key}: {raw.strip()!r}") from None
    out["_dir"] = path.parent
    return out


# ---------------------------------------------------------------------------
# building model objects


def build_source(c):
    s = c["source"]
    if s["spectrum"] == "monochromatic":
        l2 = signal_wavelength(s["pump_wavelength"], s["probe_wavelength"])
        model = Monochromatic(s["probe_wavelength"], l2)
    elif s["spectrum"] == "gaussian":
        model = GaussianBandwidth(s["probe_wavelength"], s["bandwidth_std"])
    else:
        raise ConfigError(f"source.spectrum must be monochromatic or gaussian, got {s['spectrum']!r}")
    return SourceSpec(pair_rate=s["pair_rate"], pump_wavelength=s["pump_wavelength"], spectral_model=model,
                      pump_waist=s["pump_waist"], angular_spread=s["angular_spread"], seed=s["seed"],
                      slice_duration=s["slice_duration"])


def build_layout(c, require_focus):
    lay, s = c["layout"], c["source"]
    lp, l1 = s["pump_wavelength"], s["probe_wavelength"]
    if lay["s1"] is None:
        return focused_layout(lay["a"], lay["b"], lay["f_obj"], lp, l1)
    layout = OpticalLayout(lay["a"], lay["b"], lay["f_obj"], lay["s1"], lp, l1, signal_wavelength(lp, l1))
    if require_focus and not lay["defocus"] and not layout.in_focus():
        raise ConfigError(f"layout off the imaging condition (residual {layout.focus_residual():.3g}); "
                          "set layout.defocus = true to allow")
    return layout


def build_sample(c):
    s = c["sample"]
    dye = DyeSpec(s["extinction"], s["quantum_yield"], s["lifetime"])
    scatter = {k: s[k] for k in ("probe_scatter_prob", "probe_scatter_spread", "fluo_scatter_prob",
                                 "fluo_scatter_delay")}
    kind = s["kind"]
    common = (s["extent"], s["points"])
    if kind == "point":
        return point_source(*common, s["x0"], s["concentration"], s["thickness"], dye, **scatter)
    if kind == "two_point":
        return two_point(*common, s["separation"], s["concentration"], s["thickness"], dye, center=s["x0"],
                         **scatter)
    if kind == "slab":
        return uniform_slab(*common, s["concentration"], s["thickness"], dye, **scatter)
    if kind == "bars":
        return bar_pattern(*common, s["period"], s["concentration"], s["thickness"], dye, duty=s["duty"],
                           phase=s["phase"], **scatter)
    if kind == "file":
        if not s["path"]:
            raise ConfigError("sample.path is required for kind = file")
        p = Path(s["path"])
        if not p.is_absolute():
            p = c["_dir"] / p
        if not p.is_file():
            raise ConfigError(f"sample file not found: {p}")
        return load_fluorophore_map(p, **scatter)
    raise ConfigError(f"unknown sample.kind {kind!r}")


def _detector_kw(sec):
    return {k: sec[k] for k in ("quantum_efficiency", "jitter_fwhm", "dead_time", "time_offset", "dark_rate")}


def build_bucket(c):
    return DetectorSpec(**_detector_kw(c["bucket"]))


def build_array(c):
    a = c["array"]
    return DetectorSpec.centered_array(a["pixel_pitch"], a["pixel_count"], a["center"], **_detector_kw(a))


def build_coincidence(c):
    k = c["coincidence"]
    return CoincidenceConfig(k["window"], k["ambiguity_policy"], k["offset"])


def build_psf_spec(c, layout):
    p = c["psf"]
    return FresnelKernelSpec(p["aperture_half_width"], p["grid_extent"], p["grid_points"],
                             layout.probe_wavelength, layout.reference_wavelength,
                             grid_center=float(conjugate_map(p["x2"], layout)) if layout.in_focus() else 0.0,
                             pump_half_width=p["pump_half_width"])


def build_budget(c):
    s = c["sample"]
    return BudgetParams(
        pair_rate=c["source"]["pair_rate"], concentration=s["concentration"], extinction=s["extinction"],
        thickness=s["thickness"], quantum_yield=s["quantum_yield"],
        collection_efficiency=c["run"]["collection_efficiency"],
        bucket_efficiency=c["bucket"]["quantum_efficiency"], array_efficiency=c["array"]["quantum_efficiency"],
        window=c["coincidence"]["window"], counts_per_pixel=c["budget"]["counts_per_pixel"],
        image_pixels=c["budget"]["image_pixels"])


def _setup(c, geometry, array):
    return ExperimentSetup(build_source(c), geometry, build_sample(c), build_bucket(c), array,
                           c["run"]["collection_efficiency"], build_coincidence(c),
                           c["coincidence"]["auto_offset"])


# ---------------------------------------------------------------------------
# modes


def _write(path, text):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)


def run_budget(c, out):
    _write(out / "budget_report.txt", budget_report(build_budget(c)))


def _expected_coincidences(setup, exposure):
    return expected_rate_upper_bound(setup) * exposure


def run_image(c, out):
    layout = build_layout(c, require_focus=True)
    psf = None
    if c["image"]["diffraction"]:
        prof = biphoton_psf_1d(build_psf_spec(c, layout), layout, c["psf"]["x2"])
        psf = PSFSampler.from_profile(prof, center=float(conjugate_map(c["psf"]["x2"], layout)))
    geom = ImagingGeometry(layout, psf)
    setup = _setup(c, geom, build_array(c))
    exposure = c["run"]["exposure"]
    img, res = simulate_image(setup, exposure, c["run"]["workers"],
                              expected=_expected_coincidences(setup, exposure))
    img.write_pgm(out / "image.pgm")
    meta = {"seed": setup.source.seed, "pairs": res.n_pairs,
            "magnification": f"{magnification(layout):.12g}", "s1_um": f"{layout.s1:.12g}"}
    img.write_sidecar(out / "image_counts.txt", meta)
    _write(out / "diagnostics.txt", res.diagnostics.report({
        "pairs": res.n_pairs,
        "exposure_s": repr(float(exposure)),
        "window_offset_ns": f"{res.config.offset:.9g}",
        "multi_pair_probability": f"{multi_pair_probability(setup.source.pair_rate, res.config.window):.9g}",
    }))


def run_psf(c, out):
    layout = build_layout(c, require_focus=True)
    if not layout.in_focus():
        raise ConfigError("psf mode needs a focused layout")
    biphoton_psf_1d(build_psf_spec(c, layout), layout, c["psf"]["x2"]).write(out / "psf.txt")


def run_spectral(c, out):
    sp = c["spectral"]
    ds = DispersionSpec(sp["center_wavelength"], sp["dispersion"], sp["field_extent"], sp["spectrometer_resolution"])
    a = c["array"]
    array = spectrometer_array(ds, sp["pixel_pitch"], **_detector_kw(a))
    setup = _setup(c, SpectralGeometry(ds, c["source"]["pump_wavelength"]), array)
    exposure = c["run"]["exposure"]
    prof, res = simulate_spectral_scan(setup, exposure, c["run"]["workers"])
    if _expected_coincidences(setup, exposure) < 100:
        res.diagnostics.warnings.append("undersampled: expected coincidences < 100")
    prof.write(out / "profile.txt")
    _write(out / "diagnostics.txt", res.diagnostics.report({"pairs": res.n_pairs,
                                                            "exposure_s": repr(float(exposure))}))


def run_g2(c, out):
    g = c["g2"]
    model = TimingModel(c["sample"]["lifetime"], c["bucket"]["jitter_fwhm"], c["array"]["jitter_fwhm"])
    grid = np.linspace(g["t_min"], g["t_max"], g["points"])
    curve = broadened_g2(model, grid)
    start, frac = optimal_window(model, c["coincidence"]["window"])
    lines = [f"# lifetime_ns={model.lifetime!r}", f"# sigma_ns={model.sigma:.12g}",
             f"# window_ns={c['coincidence']['window']!r}", f"# window_start_ns={start:.12g}",
             f"# capture_fraction={frac:.12g}", "# delay_ns density_per_ns"]
    lines += [f"{t:.9f} {v:.12e}" for t, v in zip(grid, curve)]
    _write(out / "g2.txt", "\n".join(lines) + "\n")


def run_scan_b(c, out):
    layout = build_layout(c, require_focus=False)
    k = c["scan_b"]
    src = build_source(c)
    pairs = generate_pair_stream(src, k["pairs"] / src.pair_rate)
    b_values = np.linspace(k["b_min"], k["b_max"], k["steps"])
    spread = sweep_reference_distance(pairs, layout, b_values)
    predicted = solve_reference_distance(layout.s1, layout.a, layout.f_obj, layout.probe_wavelength,
                                         layout.reference_wavelength)
    lines = [f"# pairs={len(pairs)}", f"# predicted_b_um={predicted:.12g}",
             f"# best_b_um={b_values[int(np.argmin(spread))]:.12g}", "# b_um conditional_spread_um"]
    lines += [f"{b:.9f} {s:.12e}" for b, s in zip(b_values, spread)]
    _write(out / "scan_b.txt", "\n".join(lines) + "\n")


RUNNERS = {"budget": run_budget, "image": run_image, "psf": run_psf, "spectral": run_spectral,
           "g2": run_g2, "scan_b": run_scan_b}


def run(mode, config, out):
    """Run ``mode`` on a loaded config, writing into directory ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    RUNNERS[mode](config, out)


def build_parser():
    ap = argparse.ArgumentParser(prog="ghostfluor", description="Coincidence fluorescence imaging simulator")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--seed", type=int, help="override source.seed")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--workers", type=int, help="override run.workers")
    ap.add_argument("--exposure", type=float, help="override run.exposure (s)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be >= 0")
            cfg["source"]["seed"] = args.seed
        if args.workers is not None:
            cfg["run"]["workers"] = args.workers
        if args.exposure is not None:
            cfg["run"]["exposure"] = args.exposure
        if cfg["run"]["exposure"] < 0:
            raise ConfigError("exposure must be >= 0")
        if cfg["run"]["workers"] < 1:
            raise ConfigError("workers must be >= 1")
        # validate every model object up front so bad values are config errors
        build_source(cfg)
        if args.mode in ("image", "psf", "scan_b"):
            build_layout(cfg, require_focus=args.mode != "scan_b")
        if args.mode in ("image", "spectral"):
            build_sample(cfg)
            build_bucket(cfg)
            build_array(cfg)
            build_coincidence(cfg)
        if args.mode == "budget":
            build_budget(cfg)
    except (ConfigError, ValueError) as exc:
        print(f"config_error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    try:
        run(args.mode, cfg, args.out)
    except ConfigError as exc:
        print(f"config_error: {' '.join(str(exc).split())}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any failure as a runtime error
        log.debug("run failed", exc_info=True)
        print(f"runtime_error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
