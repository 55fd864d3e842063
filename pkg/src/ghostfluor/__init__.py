"""Monte Carlo simulator for coincidence (ghost) fluorescence microscopy with photon pairs."""

__version__ = "0.1.0"

from .budget import AcquisitionTime, BudgetParams, acquisition_time, budget_report, coincidence_rate_budget
from .coincidence import (
    CoincidenceConfig,
    CoincidenceImage,
    CoincidenceRecords,
    Diagnostics,
    StreamingPairer,
    TimingModel,
    accumulate_image,
    broadened_g2,
    optimal_window,
    pair_clicks,
    window_capture_fraction,
)
from .core import OpticalLayout, PairStream, PhotonPairEvent, reference_angle, signal_wavelength
from .detection import ClickBatch, DeadTimeState, DetectorSpec, detect_array, detect_bucket
from .optics import (
    FresnelKernelSpec,
    InfeasibleLayoutError,
    PSFProfile,
    PSFSampler,
    ResolutionError,
    biphoton_psf_1d,
    classical_psf_1d,
    conjugate_map,
    focused_layout,
    solve_image_distance,
    solve_reference_distance,
    sweep_reference_distance,
    trace_probe,
    trace_reference,
)
from .pipeline import ExperimentSetup, ImagingGeometry, RunResult, run_experiment, simulate_image
from .sample import (
    ALEXA_FLUOR_700,
    DyeSpec,
    FluorophoreMap,
    absorption_probability,
    bar_pattern,
    fluorescence_emission,
    point_source,
    try_absorb,
    two_point,
    uniform_slab,
)
from .source import GaussianBandwidth, Monochromatic, SourceSpec, generate_pair_stream, multi_pair_probability
from .spectral import DispersionSpec, SpectralGeometry, disperse_position, infer_position, simulate_spectral_scan
