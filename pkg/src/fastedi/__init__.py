"""Fast event-based double integral (EDI) motion deblurring."""

from .baseline import compute_edi_baseline, deblur_with_map, reconstruct_latent
from .calib import HardwareParams, contrast_from_hardware, symmetric_contrast
from .errors import FastEdiError
from .fast import DeblurResult, EdiAccumulator, run_offline, throughput_probe
from .metrics import laplacian_variance, psnr
from .model import (
    ContrastParams,
    EdiMap,
    Event,
    EventArray,
    ExposureWindow,
    GrayImage,
    IntegrationMode,
    SensorGeometry,
    cumulative_sum,
    signed_contrast,
)

__version__ = "0.1.0"

__all__ = [
    "ContrastParams", "DeblurResult", "EdiAccumulator", "EdiMap", "Event", "EventArray",
    "ExposureWindow", "FastEdiError", "GrayImage", "HardwareParams", "IntegrationMode",
    "SensorGeometry", "compute_edi_baseline", "contrast_from_hardware", "cumulative_sum",
    "deblur_with_map", "laplacian_variance", "psnr", "reconstruct_latent", "run_offline",
    "signed_contrast", "symmetric_contrast", "throughput_probe",
]
