"""Simulation and variance-based reconstruction for IR imaging through a
nonlinear (induced-coherence) interferometer."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, QuantirError, RankDeficientError
from .forward import (FrameStack, NoiseModel, apply_psf, pixel_intensity, read_stack,
                      render_frame, render_stack, write_stack)
from .optics import (OpticalConfig, ScanPlan, acquisition_time, idler_wavelength, phase_from_z,
                     scan_positions, wrap_phase)
from .reconstruct import (FringeFit, RunningStats, ScalarImage, fit_fringe, mean_image,
                          phase_map, reflectivity_image, std_image, variance_bias_factor,
                          variance_image, visibility_image)
from .sample import (SampleMap, SpeckleModel, Stroke, apply_speckle, gen_bar_target,
                     gen_capped_chip, gen_chip_contacts, read_sample, write_sample)
from .truncation import (SelectionSpec, TruncationReport, frobenius_diff, frobenius_norm,
                         run_truncation_study, select_frames)

__all__ = [
    "ConfigError", "DataError", "QuantirError", "RankDeficientError",
    "FrameStack", "NoiseModel", "apply_psf", "pixel_intensity", "read_stack", "render_frame",
    "render_stack", "write_stack",
    "OpticalConfig", "ScanPlan", "acquisition_time", "idler_wavelength", "phase_from_z",
    "scan_positions", "wrap_phase",
    "FringeFit", "RunningStats", "ScalarImage", "fit_fringe", "mean_image", "phase_map",
    "reflectivity_image", "std_image", "variance_bias_factor", "variance_image", "visibility_image",
    "SampleMap", "SpeckleModel", "Stroke", "apply_speckle", "gen_bar_target", "gen_capped_chip",
    "gen_chip_contacts", "read_sample", "write_sample",
    "SelectionSpec", "TruncationReport", "frobenius_diff", "frobenius_norm",
    "run_truncation_study", "select_frames",
]
