"""QFM-CASR Engine - main entry point for running experiments from a config."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from scipy import optimize

from .casr import CASRConfig, TimeTrace, max_phase, sample_seed, simulate_trace
from .errors import ConfigError, InsufficientBinsError, MalformedFileError
from .oracle import (
    Frame,
    IntegrationConfig,
    OracleComparison,
    SpinState,
    Trajectory,
    accumulated_phase,
    compare_to_prediction,
    evolve_lab,
    fit_effective,
    lowpass_cutoff,
)
from .qfm import (
    Branch,
    EffectiveSignal,
    FieldTone,
    NVTwoLevel,
    ValidityReport,
    down_convert,
    down_convert_all,
    validity_check,
)
from .sensitivity import (
    SensitivityReport,
    SensitivityTable,
    calibrate_slope,
    measure_sensitivity,
    sweep_frequency,
    target_sensitivity,
)
from .spectroscopy import (
    Calibration,
    NoiseFloor,
    PeakEstimate,
    Spectrum,
    fft_spectrum,
    find_peaks,
    noise_floor,
    phase_from_peak,
)
from .units import TWO_PI, wrap_phase

logger = logging.getLogger(__name__)

PRESET_PACKAGE = "qfmcasr.presets"

# Alternate preset names accepted by load_config
PRESET_ALIASES = {
    "fig2_sweep": "sensitivity_sweep",
    "fig3_0p6ghz": "two_tone_0p6ghz",
    "fig3_2p4ghz": "two_tone_2p4ghz",
    "fig3_4ghz": "single_tone_4ghz",
    "fig4_phase": "phase_sweep_2p4ghz",
}


# =============================================================================
# Configuration schema
# =============================================================================

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ToneModel(_Strict):
    """A tone in ordinary-frequency units."""
    amplitude_hz: float = Field(ge=0)
    frequency_hz: float = Field(gt=0)
    phase_deg: float = 0.0

    def to_tone(self) -> FieldTone:
        return FieldTone.from_hz(self.amplitude_hz, self.frequency_hz, self.phase_deg)


class NVModel(_Strict):
    branch: Branch = Branch.MINUS_ONE
    resonance_hz: Optional[float] = Field(default=None, gt=0)
    bias_field_t: Optional[float] = None

    @model_validator(mode="after")
    def _one_source(self) -> "NVModel":
        if self.resonance_hz is not None and self.bias_field_t is not None:
            raise ValueError("give either resonance_hz or bias_field_t, not both")
        return self

    def to_nv(self) -> NVTwoLevel:
        if self.resonance_hz is not None:
            return NVTwoLevel(resonance=TWO_PI * self.resonance_hz, branch=self.branch)
        if self.bias_field_t is not None:
            return NVTwoLevel.from_bias_field(self.bias_field_t, self.branch)
        return NVTwoLevel.default(self.branch)


class CASRModel(_Strict):
    k: int = Field(default=6, ge=1)
    tau_s: float = Field(default=0.5e-6, gt=0)
    t_seq_s: float = Field(default=80e-6, gt=0)
    contrast: float = Field(default=1.0, gt=0, le=1)
    coherence_decay: bool = False
    literal_prefactor: bool = False

    @model_validator(mode="after")
    def _window_fits(self) -> "CASRModel":
        if 8 * self.k * self.tau_s > self.t_seq_s:
            raise ValueError("sensing window 8k·tau exceeds t_seq_s")
        return self


class NoiseModel(_Strict):
    eta_t_per_sqrt_hz: Optional[float] = Field(default=None, ge=0)
    sigma_sample_t: Optional[float] = Field(default=None, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "NoiseModel":
        if self.eta_t_per_sqrt_hz is not None and self.sigma_sample_t is not None:
            raise ValueError("give either eta_t_per_sqrt_hz or sigma_sample_t, not both")
        return self


class AnalysisModel(_Strict):
    clip_dc: bool = True
    window: Literal["none", "hann"] = "none"
    min_snr: float = Field(default=5.0, gt=0)
    guard_bins: int = Field(default=10, ge=0)
    band_hz: Optional[Tuple[float, float]] = None
    alias_n: Optional[int] = Field(default=None, ge=0)
    alias_side: Literal["upper", "lower"] = "upper"
    bias_side: Literal["above", "below"] = "above"


class SweepModel(_Strict):
    start_hz: float = Field(default=10e6, gt=0)
    stop_hz: float = Field(default=4e9, gt=0, le=10e9)
    points: int = Field(default=500, ge=2)
    spacing: Literal["log", "linear"] = "log"
    bias_offset_hz: float = -1e6
    margin_hz: float = Field(default=20e6, gt=0)
    branches: List[Branch] = Field(default_factory=lambda: [Branch.MINUS_ONE, Branch.PLUS_ONE])
    eta_effective_t_per_sqrt_hz: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _ordered(self) -> "SweepModel":
        if self.stop_hz <= self.start_hz:
            raise ValueError("stop_hz must exceed start_hz")
        return self

    def grid(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.start_hz, self.stop_hz, self.points)
        return np.linspace(self.start_hz, self.stop_hz, self.points)


class PhaseSweepModel(_Strict):
    start_deg: float = 0.0
    step_deg: float = Field(default=1.0, gt=0)
    steps: int = Field(default=360, ge=1)
    step_duration_s: float = Field(default=1.0, gt=0)
    signal_index: int = Field(default=0, ge=0)
    histogram_bin_deg: float = Field(default=0.1, gt=0)


class OracleModel(_Strict):
    duration_s: float = Field(default=20e-6, gt=0, le=50e-6)
    frame: Frame = Frame.LAB
    step_s: Optional[float] = Field(default=None, gt=0)
    record_stride: int = Field(default=100, ge=1)
    signal_index: int = Field(default=0, ge=0)
    validity_threshold: float = Field(default=0.05, gt=0)
    lowpass: bool = True
    max_jump_rad: float = Field(default=math.pi / 2, gt=0)


class OutputModel(_Strict):
    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class ExperimentConfig(_Strict):
    """Everything one run needs; validated before anything executes."""
    nv: NVModel = Field(default_factory=NVModel)
    bias: ToneModel
    signals: List[ToneModel] = Field(default_factory=list)
    casr: CASRModel = Field(default_factory=CASRModel)
    noise: NoiseModel = Field(default_factory=NoiseModel)
    duration_s: float = Field(default=1.0, gt=0)
    start_time_s: float = 0.0
    seed: int = Field(default=0, ge=0)
    analysis: AnalysisModel = Field(default_factory=AnalysisModel)
    sweep: SweepModel = Field(default_factory=SweepModel)
    phase_sweep: PhaseSweepModel = Field(default_factory=PhaseSweepModel)
    oracle: OracleModel = Field(default_factory=OracleModel)
    output: OutputModel = Field(default_factory=OutputModel)

    @model_validator(mode="after")
    def _at_least_one_block(self) -> "ExperimentConfig":
        if self.duration_s < self.casr.t_seq_s:
            raise ValueError("duration_s is shorter than one measurement block")
        return self


def _locate(exc: ValidationError) -> List[Tuple[str, str]]:
    return [
        (".".join(str(part) for part in err["loc"]) or "<root>", err["msg"])
        for err in exc.errors()
    ]


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Validate YAML (or JSON) text into an ExperimentConfig.

    Raises:
        ConfigError: With the line of a YAML syntax error or the per-field
            locations of schema violations
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"{source}: invalid YAML", line=line) from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: expected a mapping at the top level")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"{source}: schema validation failed", problems=_locate(exc)) from exc


def list_presets() -> List[str]:
    root = resources.files(PRESET_PACKAGE)
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(source: Union[str, Path]) -> ExperimentConfig:
    """Load a config from a file path or a shipped preset name or alias."""
    path = Path(source)
    if path.is_file():
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise MalformedFileError(str(path), f"cannot read config: {exc}") from exc
        return parse_config(text, str(path))

    name = str(source)
    for suffix in (".yaml", ".cfg"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    name = PRESET_ALIASES.get(name, name)
    preset = resources.files(PRESET_PACKAGE) / f"{name}.yaml"
    if preset.is_file():
        logger.debug("Using shipped preset %s", name)
        return parse_config(preset.read_text(encoding="utf-8"), f"preset {name}")
    raise MalformedFileError(str(source), "no such config file or preset")


def apply_overrides(
    config: ExperimentConfig,
    seed: Optional[int] = None,
    clip_dc: Optional[bool] = None,
    window: Optional[str] = None,
    literal_prefactor: Optional[bool] = None,
    out: Optional[str] = None,
    fmt: Optional[str] = None,
) -> ExperimentConfig:
    """Copy of ``config`` with command-line overrides applied."""
    analysis: Dict[str, Any] = {}
    if clip_dc is not None:
        analysis["clip_dc"] = clip_dc
    if window is not None:
        analysis["window"] = window
    output: Dict[str, Any] = {}
    if out is not None:
        output["path"] = out
    if fmt is not None:
        output["format"] = fmt

    update: Dict[str, Any] = {
        "analysis": config.analysis.model_copy(update=analysis),
        "output": config.output.model_copy(update=output),
    }
    if seed is not None:
        update["seed"] = seed
    if literal_prefactor is not None:
        update["casr"] = config.casr.model_copy(update={"literal_prefactor": literal_prefactor})
    return parse_config(
        yaml.safe_dump(config.model_copy(update=update).model_dump(mode="json")), "<overrides>"
    )


# =============================================================================
# Result types
# =============================================================================

@dataclass(frozen=True)
class SpectrumAnalysis:
    """Spectrum of a trace with its calibrated peaks and noise floor.

    ``noise`` is None when the spectrum is too short to leave enough bins
    outside DC and the peaks.
    """
    spectrum: Spectrum
    peaks: List[PeakEstimate]
    noise: Optional[NoiseFloor]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "peaks": [p.to_dict() for p in self.peaks],
            "noise_floor": self.noise.to_dict() if self.noise is not None else None,
            "resolution_hz": self.spectrum.resolution,
        }


@dataclass(frozen=True)
class PhaseSweepResult:
    """Applied versus recovered target phase over a phase sweep.

    Attributes:
        applied: Applied φ_s per step (rad)
        recovered: Recovered φ'_s per step (rad)
        values: Complex peak bin per step
        histogram_counts: Counts of Δφ per bin
        histogram_edges: Bin edges of Δφ (degrees)
        quadrature_r2: R² of sinusoid fits to (real, imaginary) parts
        quadrature_offset_deg: Phase offset between the two fits
    """
    applied: np.ndarray = field(repr=False)
    recovered: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    histogram_counts: np.ndarray = field(repr=False)
    histogram_edges: np.ndarray = field(repr=False)
    quadrature_r2: Tuple[float, float]
    quadrature_offset_deg: float

    @property
    def delta(self) -> np.ndarray:
        """Δφ wrapped to (-π, π]."""
        return np.asarray(wrap_phase(self.recovered - self.applied))

    @property
    def sigma_deg(self) -> float:
        if self.delta.size < 2:
            return 0.0
        return float(np.degrees(np.std(self.delta, ddof=1)))

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def magnitude_spread(self) -> float:
        """Relative standard deviation of |peak|."""
        mean = float(self.magnitude.mean())
        return float(self.magnitude.std()) / mean if mean else 0.0

    def to_rows(self) -> List[Dict[str, float]]:
        delta = np.degrees(self.delta)
        return [
            {
                "applied_deg": float(np.degrees(a)),
                "recovered_deg": float(np.degrees(r)),
                "delta_deg": float(d),
                "re": float(v.real),
                "im": float(v.imag),
                "magnitude": float(abs(v)),
            }
            for a, r, d, v in zip(self.applied, self.recovered, delta, self.values)
        ]

    def histogram_rows(self) -> List[Dict[str, float]]:
        edges = self.histogram_edges
        return [
            {"delta_low_deg": float(lo), "delta_high_deg": float(hi), "count": int(c)}
            for lo, hi, c in zip(edges[:-1], edges[1:], self.histogram_counts)
        ]

    def summary(self) -> Dict[str, Any]:
        return {
            "steps": int(self.applied.size),
            "sigma_deg": self.sigma_deg,
            "quadrature_r2": list(self.quadrature_r2),
            "quadrature_offset_deg": self.quadrature_offset_deg,
            "magnitude_relative_std": self.magnitude_spread,
        }


@dataclass(frozen=True)
class OracleReport:
    """Brute-force integration checked against the closed-form effective tone."""
    comparison: OracleComparison
    validity: ValidityReport
    predicted: EffectiveSignal
    norm_error: float
    cutoff: Optional[float]
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def passed(self) -> bool:
        return self.comparison.passed

    def to_dict(self) -> Dict[str, Any]:
        return {
            **self.comparison.to_dict(),
            "validity": self.validity.to_dict(),
            "max_norm_error": self.norm_error,
            "lowpass_cutoff_hz": self.cutoff,
            "fit": self.comparison.fit.to_dict(),
        }


def _sinusoid_r2(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """R² and phase of a fit y ≈ A·cos(x + p) + c."""

    def model(v: np.ndarray, a: float, p: float, c: float) -> np.ndarray:
        return a * np.cos(v + p) + c

    offset = float(y.mean())
    amplitude = 0.5 * float(np.ptp(y)) or 1e-12
    guess = [amplitude, -float(x[int(np.argmax(y))]), offset]
    popt, _ = optimize.curve_fit(model, x, y, p0=guess, maxfev=5000)
    residual = y - model(x, *popt)
    total = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual**2)) / total if total > 0 else 1.0
    phase = popt[1] + (math.pi if popt[0] < 0 else 0.0)
    return r2, phase


# =============================================================================
# Engine
# =============================================================================

class QFMCASREngine:
    """High-level runner for one experiment configuration.

    Example:
        engine = QFMCASREngine(load_config("two_tone_2p4ghz"))
        trace = engine.simulate()
        analysis = engine.analyze(trace)
    """

    def __init__(self, config: ExperimentConfig):
        """Initialize the engine.

        Args:
            config: Validated experiment configuration
        """
        self.config = config

    @classmethod
    def from_source(cls, source: Union[str, Path], **overrides: Any) -> "QFMCASREngine":
        return cls(apply_overrides(load_config(source), **overrides))

    @cached_property
    def nv(self) -> NVTwoLevel:
        return self.config.nv.to_nv()

    @cached_property
    def bias(self) -> FieldTone:
        return self.config.bias.to_tone()

    @cached_property
    def signals(self) -> List[FieldTone]:
        return [tone.to_tone() for tone in self.config.signals]

    @cached_property
    def casr_config(self) -> CASRConfig:
        c = self.config.casr
        cfg = CASRConfig(
            k=c.k,
            tau=c.tau_s,
            t_seq=c.t_seq_s,
            contrast=c.contrast,
            coherence_time=self.nv.t2_xy8 if c.coherence_decay else None,
            literal_prefactor=c.literal_prefactor,
        )
        noise = self.config.noise
        if noise.eta_t_per_sqrt_hz is not None:
            return cfg.with_noise_density(noise.eta_t_per_sqrt_hz)
        if noise.sigma_sample_t is not None:
            return CASRConfig(**{**cfg.to_dict(), "sigma_sample": noise.sigma_sample_t})
        return cfg

    def _require_signals(self) -> None:
        if not self.signals:
            raise ConfigError(
                "config has no signals", problems=[("signals", "at least one tone required")]
            )

    def effective_signals(self) -> List[EffectiveSignal]:
        """Effective tones of every configured signal mixed with the bias."""
        return down_convert_all(self.signals, self.bias, self.nv)

    def validity(self) -> List[ValidityReport]:
        return [validity_check(s, self.bias, self.nv) for s in self.signals]

    def calibration(self) -> Calibration:
        a = self.config.analysis
        return Calibration(
            config=self.casr_config,
            bias=self.bias,
            nv=self.nv,
            n=a.alias_n,
            alias_side=1 if a.alias_side == "upper" else -1,
            bias_side=1 if a.bias_side == "above" else -1,
        )

    def summary(self, trace: Optional[TimeTrace] = None) -> Dict[str, Any]:
        """Sample count, Φ_max per tone and validity margins."""
        effective = self.effective_signals()
        samples = int(round(self.config.duration_s / self.config.casr.t_seq_s))
        return {
            "samples": len(trace) if trace is not None else samples,
            "sampling_rate_hz": self.casr_config.sampling_rate,
            "sigma_sample_t": self.casr_config.sigma_sample,
            "tones": [
                {
                    "effective_frequency_hz": e.frequency / TWO_PI,
                    "effective_amplitude_hz": e.amplitude / TWO_PI,
                    "phi_max_rad": max_phase(e, self.casr_config),
                    "stark_shift_hz": e.stark_shift / TWO_PI,
                }
                for e in effective
            ],
            "validity": [r.to_dict() for r in self.validity()],
        }

    def simulate(self, duration: Optional[float] = None, seed: Optional[int] = None) -> TimeTrace:
        """Synthesize the CASR readout of the configured tones."""
        self._require_signals()
        return simulate_trace(
            self.effective_signals(),
            self.casr_config,
            self.config.duration_s if duration is None else duration,
            seed=self.config.seed if seed is None else seed,
            start_time=self.config.start_time_s,
        )

    def analyze(self, trace: TimeTrace) -> SpectrumAnalysis:
        """Spectrum, calibrated peaks and noise floor of a trace."""
        a = self.config.analysis
        spec = fft_spectrum(trace, clip_dc=a.clip_dc, window=a.window)
        peaks = find_peaks(spec, min_snr=a.min_snr, guard_bins=a.guard_bins, band=a.band_hz)
        calibration = self.calibration()
        annotated = []
        for peak in peaks:
            try:
                annotated.append(calibration.annotate(peak, spec))
            except ValueError as exc:
                logger.warning("Peak at %.6g Hz left uncalibrated: %s", peak.frequency, exc)
                annotated.append(peak)
        floor: Optional[NoiseFloor]
        try:
            floor = noise_floor(
                spec,
                [p.frequency for p in peaks],
                a.guard_bins,
                calibration=calibration,
                reference_alias=peaks[0].frequency if peaks else None,
            )
        except InsufficientBinsError as exc:
            logger.warning("Noise floor unavailable: %s", exc)
            floor = None
        return SpectrumAnalysis(spectrum=spec, peaks=annotated, noise=floor)

    def sensitivity(self, repeats: int = 10) -> SensitivityReport:
        """Calibrate the slope, measure η_e and attach the first signal as target."""
        cfg = self.casr_config
        curve = calibrate_slope(cfg)
        report = measure_sensitivity(cfg, curve, repeats=repeats, seed=self.config.seed)
        if self.signals:
            report = target_sensitivity(report, self.signals[0], self.bias, self.nv)
        return report

    def sensitivity_sweep(self) -> SensitivityTable:
        """η_s over the configured grid for the configured branches."""
        sweep = self.config.sweep
        eta = sweep.eta_effective_t_per_sqrt_hz or self.config.noise.eta_t_per_sqrt_hz
        if eta is None:
            raise ConfigError(
                "sensitivity sweep needs an effective sensitivity",
                problems=[("sweep.eta_effective_t_per_sqrt_hz", "or noise.eta_t_per_sqrt_hz")],
            )
        resonances = None
        if self.config.nv.resonance_hz is not None or self.config.nv.bias_field_t is not None:
            resonances = {self.nv.branch: self.nv.resonance}
        return sweep_frequency(
            sweep.grid(),
            eta,
            self.bias.amplitude,
            branches=sweep.branches,
            resonances=resonances,
            bias_offset_hz=sweep.bias_offset_hz,
            margin_hz=sweep.margin_hz,
        )

    def phase_sweep(self) -> PhaseSweepResult:
        """Step the phase of one target tone and recover it from each spectrum."""
        self._require_signals()
        ps = self.config.phase_sweep
        if ps.signal_index >= len(self.signals):
            raise ConfigError("phase sweep signal index out of range",
                              problems=[("phase_sweep.signal_index", "no such signal")])
        cfg = self.casr_config
        calibration = self.calibration()
        a = self.config.analysis

        applied = np.radians(ps.start_deg + ps.step_deg * np.arange(ps.steps))
        recovered = np.empty(ps.steps)
        values = np.empty(ps.steps, dtype=complex)
        for index, phase in enumerate(applied):
            tones = list(self.signals)
            tones[ps.signal_index] = tones[ps.signal_index].with_phase(float(phase))
            effective = down_convert_all(tones, self.bias, self.nv)
            trace = simulate_trace(
                effective,
                cfg,
                ps.step_duration_s,
                seed=sample_seed(self.config.seed, index),
                start_time=self.config.start_time_s,
            )
            spec = fft_spectrum(trace, clip_dc=a.clip_dc, window=a.window)
            peaks = find_peaks(spec, min_snr=a.min_snr, guard_bins=a.guard_bins, band=a.band_hz)
            if not peaks:
                raise ValueError(f"No peak found at phase step {index}")
            peak = max(peaks, key=lambda p: p.magnitude)
            f_a = float(spec.frequencies[peak.index])
            recovered[index] = phase_from_peak(
                spec, f_a, calibration.effective_context(f_a), self.bias.phase, snr=peak.snr
            )
            values[index] = spec.values[peak.index]
            logger.debug("Phase step %d: applied %.2f deg", index, math.degrees(phase))

        delta_deg = np.degrees(np.asarray(wrap_phase(recovered - applied)))
        width = ps.histogram_bin_deg
        half = width * (math.ceil(float(np.abs(delta_deg).max()) / width) + 1)
        counts, edges = np.histogram(delta_deg, bins=np.arange(-half, half + 0.5 * width, width))

        r2_re, phase_re = _sinusoid_r2(applied, values.real)
        r2_im, phase_im = _sinusoid_r2(applied, values.imag)
        offset = math.degrees(wrap_phase(phase_im - phase_re))
        return PhaseSweepResult(
            applied=applied,
            recovered=recovered,
            values=values,
            histogram_counts=counts,
            histogram_edges=edges,
            quadrature_r2=(r2_re, r2_im),
            quadrature_offset_deg=offset,
        )

    def oracle_validate(self, keep_trajectory: bool = False) -> OracleReport:
        """Integrate the lab-frame dynamics and compare with the effective model."""
        self._require_signals()
        o = self.config.oracle
        if o.signal_index >= len(self.signals):
            raise ConfigError("oracle signal index out of range",
                              problems=[("oracle.signal_index", "no such signal")])
        signal = self.signals[o.signal_index]
        tones = [signal, self.bias]
        predicted = down_convert(signal, self.bias, self.nv)
        validity = validity_check(signal, self.bias, self.nv, o.validity_threshold)
        if not validity.passed:
            logger.warning("Oracle parameters violate the far-detuning condition")

        integration = IntegrationConfig(
            duration=o.duration_s, step=o.step_s, frame=o.frame, record_stride=o.record_stride
        )
        trajectory = evolve_lab(SpinState.superposition(), tones, self.nv, integration)
        cutoff = lowpass_cutoff(tones, self.nv, predicted.frequency) if o.lowpass else None
        series = accumulated_phase(trajectory, cutoff=cutoff, max_jump=o.max_jump_rad)
        fit = fit_effective(series, expected_frequency=predicted.frequency)
        comparison = compare_to_prediction(fit, predicted)
        return OracleReport(
            comparison=comparison,
            validity=validity,
            predicted=predicted,
            norm_error=trajectory.max_norm_error,
            cutoff=cutoff,
            trajectory=trajectory if keep_trajectory else None,
        )
