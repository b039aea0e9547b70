"""Simulated ghost spectroscopy of a plasmonic Fano-resonance sensor.

Photon-pair source, sample, detectors and coincidence counting, scan
protocols for coincidence and direct transmission spectroscopy, and the
analysis that turns spectra into resonance shifts and detectability verdicts.
"""

from .analysis import (
    FanoFit,
    ShiftEstimate,
    SnrReport,
    detectability,
    estimate_shift,
    fit_fano,
    snr_report,
)
from .detection import (
    CoincidenceWindow,
    DetectorSpec,
    EventStream,
    MonochromatorSpec,
    RateBreakdown,
    count_coincidences,
    detect,
    expected_rates,
    passband,
)
from .experiment import (
    Apparatus,
    ScanConfig,
    Spectrum,
    SpectrumRecord,
    measure,
    normalize,
    run_classical_scan,
    run_quantum_scan,
)
from .sample import (
    Analyte,
    FanoProfile,
    SensorModel,
    glycerin_index,
    resonance_minimum_wavelength,
    shifted_profile,
    transmission,
)
from .source import (
    BiphotonSpectrum,
    PairEvent,
    PumpSpec,
    conjugate_wavelength,
    sample_pairs,
    spectral_density,
)

__version__ = "0.1.0"

__all__ = [
    "FanoFit",
    "ShiftEstimate",
    "SnrReport",
    "detectability",
    "estimate_shift",
    "fit_fano",
    "snr_report",
    "CoincidenceWindow",
    "DetectorSpec",
    "EventStream",
    "MonochromatorSpec",
    "RateBreakdown",
    "count_coincidences",
    "detect",
    "expected_rates",
    "passband",
    "Apparatus",
    "ScanConfig",
    "Spectrum",
    "SpectrumRecord",
    "measure",
    "normalize",
    "run_classical_scan",
    "run_quantum_scan",
    "Analyte",
    "FanoProfile",
    "SensorModel",
    "glycerin_index",
    "resonance_minimum_wavelength",
    "shifted_profile",
    "transmission",
    "BiphotonSpectrum",
    "PairEvent",
    "PumpSpec",
    "conjugate_wavelength",
    "sample_pairs",
    "spectral_density",
]
