"""qfm-casr - quantum frequency mixing and synchronized readout toolkit

Simulates how a two-level spin mixes a weak far-detuned target tone with a
strong AC bias into a low-frequency effective tone, how a synchronized XY8
readout undersamples that tone, and how frequency, amplitude and phase of
the target are recovered from the readout spectrum.

Example:
    from qfmcasr import QFMCASREngine, load_config

    engine = QFMCASREngine(load_config("two_tone_2p4ghz"))
    trace = engine.simulate()
    for peak in engine.analyze(trace).peaks:
        print(peak.target_frequency, peak.target_field, peak.snr)

    # Brute-force check of the effective model
    report = QFMCASREngine(load_config("oracle_2p4ghz")).oracle_validate()
    print(report.passed)
"""

__version__ = "0.1.0"

from .core.casr import CASRConfig, TimeTrace, alias_frequency, simulate_trace
from .core.engine import ExperimentConfig, QFMCASREngine, list_presets, load_config
from .core.errors import (
    AcceptanceError,
    ConfigError,
    MalformedFileError,
    NumericalError,
    QFMCASRError,
)
from .core.qfm import Branch, EffectiveSignal, FieldTone, NVTwoLevel, down_convert
from .core.storage import CSVStorage, JSONStorage, StorageBackend

__all__ = [
    "QFMCASREngine",
    "ExperimentConfig",
    "load_config",
    "list_presets",
    # Physics
    "Branch",
    "FieldTone",
    "NVTwoLevel",
    "EffectiveSignal",
    "down_convert",
    "CASRConfig",
    "TimeTrace",
    "simulate_trace",
    "alias_frequency",
    # Storage backends
    "StorageBackend",
    "JSONStorage",
    "CSVStorage",
    # Errors
    "QFMCASRError",
    "ConfigError",
    "MalformedFileError",
    "AcceptanceError",
    "NumericalError",
]
