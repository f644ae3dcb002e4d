"""Frequency-domain analysis of CASR traces.

Spectra are single-sided and scaled so that an on-grid tone A·cos(2πft + φ)
shows up as a bin of magnitude A and angle φ. Peaks are refined by
three-point quadratic interpolation of the log-magnitude, phases are read
from the complex peak bin, and amplitudes are carried back to effective and
target field units through a :class:`Calibration`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, signal, special

from .casr import CASRConfig, TimeTrace, alias_frequency
from .errors import InsufficientBinsError
from .qfm import EffectiveSignal, FieldTone, NVTwoLevel, amplitude_transfer
from .units import GAMMA_NV, TWO_PI, normalize_phase

logger = logging.getLogger(__name__)

WINDOWS = ("none", "hann")
MIN_NOISE_BINS = 100
LOW_SNR = 5.0

# Neighbours this far below a peak are rounding noise of an on-grid tone
ON_GRID_FLOOR = 1e-12

# First maximum of J₁; the peak law is monotonic below it
J1_MAX_ARGUMENT = 1.8411837813406593

# Rayleigh magnitudes: RMS = median·√2/√(2 ln 2)
_MEDIAN_TO_RMS = math.sqrt(2.0) / math.sqrt(2.0 * math.log(2.0))


# =============================================================================
# Domain Types
# =============================================================================

@dataclass(frozen=True)
class Spectrum:
    """Single-sided complex spectrum of a TimeTrace.

    Attributes:
        frequencies: Bin frequencies (Hz), resolution 1/duration
        values: Complex amplitudes, normalized to tone amplitude
        n_samples: Length of the source trace
        sample_rate: Readout rate f_SR (Hz)
        start_time: Start time of the source trace (s)
        window: Window that was applied
        clip_dc: Whether the mean was removed first
        source: Metadata of the source trace
    """
    frequencies: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    n_samples: int
    sample_rate: float
    start_time: float = 0.0
    window: str = "none"
    clip_dc: bool = False
    source: Dict[str, Any] = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.n_samples

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def bin_index(self, frequency: float) -> int:
        """Nearest bin to ``frequency``."""
        index = int(round(frequency / self.resolution))
        return min(max(index, 0), len(self) - 1)

    def value_at(self, frequency: float) -> complex:
        return complex(self.values[self.bin_index(frequency)])

    def power(self) -> float:
        """Σx² of the (windowless) source samples reconstructed from the bins."""
        mag2 = self.magnitude**2
        total = mag2[0]
        if self.n_samples % 2 == 0:
            total += 0.5 * mag2[1:-1].sum() + mag2[-1]
        else:
            total += 0.5 * mag2[1:].sum()
        return float(self.n_samples * total)


@dataclass(frozen=True)
class PeakEstimate:
    """One detected spectral peak.

    Field amplitudes, phases and the target frequency are filled in by
    :meth:`Calibration.annotate` and stay ``None`` for a bare spectrum.
    """
    frequency: float
    index: int
    magnitude: float
    value: complex
    snr: float
    effective_field: Optional[float] = None
    target_field: Optional[float] = None
    effective_phase: Optional[float] = None
    target_phase: Optional[float] = None
    target_frequency: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alias_hz": self.frequency,
            "bin": self.index,
            "magnitude": self.magnitude,
            "re": self.value.real,
            "im": self.value.imag,
            "snr": self.snr,
            "effective_field_t": self.effective_field,
            "target_field_t": self.target_field,
            "effective_phase_deg": _degrees(self.effective_phase),
            "target_phase_deg": _degrees(self.target_phase),
            "target_frequency_hz": self.target_frequency,
        }


@dataclass(frozen=True)
class NoiseFloor:
    """Spread of spectral magnitudes outside peaks and DC.

    ``std`` is the standard deviation of magnitudes, ``rms`` their root mean
    square; field-unit versions are set when a calibration is supplied.
    """
    std: float
    rms: float
    bins: int
    effective_std: Optional[float] = None
    target_std: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "std": self.std,
            "rms": self.rms,
            "bins": self.bins,
            "effective_std_t": self.effective_std,
            "target_std_t": self.target_std,
        }


def _degrees(phase: Optional[float]) -> Optional[float]:
    return None if phase is None else math.degrees(phase)


# =============================================================================
# Calibration chain
# =============================================================================

@dataclass(frozen=True)
class Calibration:
    """Conversion from readout contrast to effective and target fields.

    The operator supplies the coarse prior: the bias tone, the alias
    harmonic ``n`` and which side of n·f_SR and of the bias the signal is on.

    Attributes:
        config: Sequence configuration of the measurement
        bias: AC bias tone
        nv: Two-level subsystem
        n: Alias harmonic; defaults to the one of the XY8 filter centre
        alias_side: +1 if f_e = n·f_SR + f_a, -1 if f_e = n·f_SR − f_a
        bias_side: +1 if the target sits above the bias, -1 below
    """
    config: CASRConfig
    bias: FieldTone
    nv: NVTwoLevel
    n: Optional[int] = None
    alias_side: int = 1
    bias_side: int = 1

    def __post_init__(self) -> None:
        if self.alias_side not in (1, -1) or self.bias_side not in (1, -1):
            raise ValueError("Branch sides must be +1 or -1")
        if self.n is None:
            _, n = alias_frequency(self.config.sequence_frequency, self.config.sampling_rate)
            object.__setattr__(self, "n", n)

    @property
    def harmonic(self) -> int:
        assert self.n is not None
        return self.n

    def effective_frequency(self, f_a: float) -> float:
        """Effective frequency (Hz) that folds onto ``f_a``."""
        return self.harmonic * self.config.sampling_rate + self.alias_side * f_a

    def target_frequency(self, f_a: float) -> float:
        return map_alias_to_target(
            f_a,
            self.bias.frequency / TWO_PI,
            self.config.sampling_rate,
            self.harmonic,
            bias_side=self.bias_side,
            alias_side=self.alias_side,
        )

    def transfer(self, f_a: float) -> float:
        """Signed Ω_e/Ω_s at the target frequency implied by ``f_a``."""
        omega_s = TWO_PI * self.target_frequency(f_a)
        return float(
            amplitude_transfer(omega_s, self.bias.frequency, self.nv.resonance, self.bias.amplitude)
        )

    def attenuation(self, f_a: float) -> float:
        """|Ω_s/Ω_e| at the target frequency implied by ``f_a``."""
        return 1.0 / abs(self.transfer(f_a))

    def effective_context(self, f_a: float) -> EffectiveSignal:
        """Effective-tone context (frequency, sign, fold) used for phase extraction."""
        return EffectiveSignal(
            amplitude=math.copysign(1.0, self.transfer(f_a)),
            frequency=TWO_PI * self.effective_frequency(f_a),
            phase=0.0,
            folded=self.bias_side < 0,
        )

    def effective_field(self, magnitude: float, f_a: float) -> float:
        """Effective field amplitude (T) behind a peak of ``magnitude``."""
        omega_e = TWO_PI * self.effective_frequency(f_a)
        return abs(amplitude_from_peak(magnitude, omega_e, self.config)) / GAMMA_NV

    def effective_noise(self, magnitude: float) -> float:
        """Linear conversion of a noise magnitude to effective field (T)."""
        return magnitude / self.config.slope()

    def annotate(self, peak: PeakEstimate, spec: Spectrum) -> PeakEstimate:
        """Fill in field amplitudes, phases and target frequency of ``peak``."""
        effective_field = self.effective_field(peak.magnitude, peak.frequency)
        context = self.effective_context(peak.frequency)
        target_phase = None
        effective_phase = None
        if peak.frequency > 0:
            target_phase = phase_from_peak(
                spec, peak.frequency, context, self.bias.phase, snr=peak.snr
            )
            fold = -1.0 if context.folded else 1.0
            effective_phase = normalize_phase(fold * (target_phase - self.bias.phase))
        return replace(
            peak,
            effective_field=effective_field,
            target_field=effective_field * self.attenuation(peak.frequency),
            effective_phase=effective_phase,
            target_phase=target_phase,
            target_frequency=self.target_frequency(peak.frequency),
        )


# =============================================================================
# Spectrum and peaks
# =============================================================================

def fft_spectrum(trace: TimeTrace, clip_dc: bool = False, window: str = "none") -> Spectrum:
    """Single-sided FFT normalized to tone amplitude.

    Args:
        trace: Uniformly sampled readout (at least 2 samples)
        clip_dc: Remove the mean before transforming
        window: "none" or "hann"; the Hann coherent gain is divided out
    """
    if len(trace) < 2:
        raise ValueError(f"Trace needs at least 2 samples, got {len(trace)}")
    if window not in WINDOWS:
        raise ValueError(f"Unknown window {window!r}, expected one of {WINDOWS}")

    x = trace.centered() if clip_dc else trace.samples
    n = len(trace)
    gain = 1.0
    if window == "hann":
        taper = signal.get_window("hann", n)
        gain = float(taper.mean())
        x = x * taper

    values = np.fft.rfft(x) * (2.0 / (n * gain))
    values[0] *= 0.5
    if n % 2 == 0:
        values[-1] *= 0.5
    if clip_dc:
        values[0] = 0.0

    return Spectrum(
        frequencies=np.fft.rfftfreq(n, d=trace.period),
        values=values,
        n_samples=n,
        sample_rate=trace.sample_rate,
        start_time=trace.start_time,
        window=window,
        clip_dc=clip_dc,
        source={
            "config": trace.config.to_dict(),
            "signals": [s.to_dict() for s in trace.signals],
            "seed": trace.seed,
        },
    )


def _excluded_mask(spec: Spectrum, exclusions: Iterable[float], guard_bins: int) -> np.ndarray:
    mask = np.zeros(len(spec), dtype=bool)
    mask[0] = True
    for frequency in exclusions:
        centre = spec.bin_index(frequency)
        mask[max(centre - guard_bins, 0) : centre + guard_bins + 1] = True
    return mask


def noise_floor(
    spec: Spectrum,
    exclusions: Iterable[float] = (),
    guard_bins: int = 10,
    calibration: Optional[Calibration] = None,
    reference_alias: Optional[float] = None,
) -> NoiseFloor:
    """Magnitude statistics away from DC and the excluded frequencies.

    Args:
        spec: Spectrum to inspect
        exclusions: Frequencies (Hz) whose ±``guard_bins`` neighbourhood is skipped
        guard_bins: Half width of each exclusion
        calibration: Adds effective and target field units when given
        reference_alias: Alias frequency whose attenuation converts to target
            units; defaults to the first exclusion

    Raises:
        InsufficientBinsError: Fewer than 100 bins remain
    """
    exclusions = list(exclusions)
    keep = ~_excluded_mask(spec, exclusions, guard_bins)
    bins = int(keep.sum())
    if bins < MIN_NOISE_BINS:
        raise InsufficientBinsError(f"Only {bins} noise bins left, need {MIN_NOISE_BINS}")

    magnitudes = spec.magnitude[keep]
    std = float(magnitudes.std())
    rms = float(np.sqrt(np.mean(magnitudes**2)))
    floor = NoiseFloor(std=std, rms=rms, bins=bins)
    if calibration is None:
        return floor

    effective_std = calibration.effective_noise(std)
    reference = reference_alias
    if reference is None:
        reference = exclusions[0] if exclusions else spec.sample_rate / 4.0
    return replace(
        floor,
        effective_std=effective_std,
        target_std=effective_std * calibration.attenuation(reference),
    )


def refine_peak(spec: Spectrum, index: int) -> Tuple[float, float]:
    """Quadratic interpolation of log-magnitude around bin ``index``.

    Returns:
        (frequency in Hz, interpolated magnitude)
    """
    magnitude = spec.magnitude
    if index <= 0 or index >= len(spec) - 1:
        return index * spec.resolution, float(magnitude[index])
    if min(magnitude[index - 1], magnitude[index + 1]) <= ON_GRID_FLOOR * magnitude[index]:
        return index * spec.resolution, float(magnitude[index])
    tiny = np.finfo(float).tiny
    a, b, g = np.log(np.maximum(magnitude[index - 1 : index + 2], tiny))
    curvature = a - 2.0 * b + g
    offset = 0.0 if curvature == 0.0 else 0.5 * (a - g) / curvature
    offset = float(np.clip(offset, -0.5, 0.5))
    peak = math.exp(b - 0.25 * (a - g) * offset)
    return (index + offset) * spec.resolution, peak


def find_peaks(
    spec: Spectrum,
    min_snr: float = LOW_SNR,
    guard_bins: int = 10,
    band: Optional[Tuple[float, float]] = None,
    dynamic_range: float = 1e-3,
) -> List[PeakEstimate]:
    """Local maxima standing ``min_snr`` above the noise RMS.

    The noise RMS is first estimated from the median magnitude, then
    recomputed with the detected peaks excluded and used for the reported
    SNR. Peaks weaker than ``dynamic_range`` times the strongest one are
    dropped, which keeps noiseless spectra free of numerical ripple.

    Args:
        spec: Spectrum to search
        min_snr: Detection threshold relative to the noise RMS
        guard_bins: Exclusion half width around peaks for the final floor
        band: Optional (low, high) search window in Hz
        dynamic_range: Relative floor below the strongest peak
    """
    if len(spec) == 0:
        raise ValueError("Spectrum is empty")
    magnitude = spec.magnitude.copy()
    magnitude[0] = 0.0

    rough_rms = float(np.median(magnitude[1:])) * _MEDIAN_TO_RMS if len(spec) > 1 else 0.0
    strongest = float(magnitude.max())
    height = max(min_snr * rough_rms, dynamic_range * strongest)
    if strongest == 0.0:
        return []

    indices, _ = signal.find_peaks(magnitude, height=height)
    if band is not None:
        low, high = band
        indices = indices[(spec.frequencies[indices] >= low) & (spec.frequencies[indices] <= high)]

    frequencies = [float(spec.frequencies[i]) for i in indices]
    try:
        rms = noise_floor(spec, frequencies, guard_bins).rms
    except InsufficientBinsError:
        rms = rough_rms

    peaks = []
    for index in indices:
        refined_frequency, refined_magnitude = refine_peak(spec, int(index))
        snr = math.inf if rms == 0.0 else refined_magnitude / rms
        if snr < min_snr:
            continue
        peaks.append(
            PeakEstimate(
                frequency=refined_frequency,
                index=int(index),
                magnitude=refined_magnitude,
                value=complex(spec.values[index]),
                snr=snr,
            )
        )
    logger.debug("Found %d peaks above SNR %.3g", len(peaks), min_snr)
    return peaks


# =============================================================================
# Phase, amplitude and frequency back-mapping
# =============================================================================

def phase_from_peak(
    spec: Spectrum,
    f_a: float,
    effective: EffectiveSignal,
    bias_phase: float,
    snr: Optional[float] = None,
) -> float:
    """Target phase φ_s recovered from the complex bin at ``f_a``.

    The bin angle ψ is referenced to the trace start. Folding to the alias
    multiplies the phase by the alias side s, so φ_e = s·ψ − ω_e·t₀, shifted
    by π when Ω_e is negative. The QFM fold then gives φ_s = φ_b ± φ_e.

    Args:
        spec: Spectrum holding the peak
        f_a: Alias frequency of the peak (Hz), must be non-zero
        effective: Effective-tone context; its frequency, amplitude sign and
            ``folded`` flag are used, not its phase
        bias_phase: Known bias phase φ_b (rad)
        snr: Peak SNR if already known; estimated from the spectrum otherwise

    Returns:
        φ_s normalized to [0, 2π)
    """
    if f_a <= 0:
        raise ValueError("Phase is undefined for a peak at DC")
    index = spec.bin_index(f_a)
    value = spec.values[index]

    if snr is None:
        try:
            floor = noise_floor(spec, [f_a])
            snr = math.inf if floor.rms == 0 else abs(value) / floor.rms
        except InsufficientBinsError:
            snr = math.inf
    if snr < LOW_SNR:
        logger.warning("Peak at %.6g Hz has SNR %.2f; phase error will be large", f_a, snr)

    f_e = effective.frequency / TWO_PI
    _, n = alias_frequency(f_e, spec.sample_rate)
    side = 1.0 if f_e >= n * spec.sample_rate else -1.0

    phase_e = side * float(np.angle(value)) - effective.frequency * spec.start_time
    if effective.amplitude < 0:
        phase_e += math.pi
    if effective.folded:
        return normalize_phase(bias_phase - phase_e)
    return normalize_phase(bias_phase + phase_e)


def amplitude_from_peak(magnitude: float, omega_e: float, cfg: CASRConfig) -> float:
    """Invert peak = C·J₁(Φ_max) for the effective amplitude |Ω_e| (rad/s).

    Raises:
        ValueError: If ``magnitude`` exceeds the J₁ maximum
    """
    contrast = cfg.effective_contrast
    target = magnitude / contrast
    ceiling = float(special.j1(J1_MAX_ARGUMENT))
    if target < 0 or target > ceiling:
        raise ValueError(f"Peak {magnitude:.4g} is outside the invertible range of C·J₁")
    if target == 0.0:
        return 0.0
    if target == ceiling:
        phi = J1_MAX_ARGUMENT
    else:
        phi = optimize.brentq(lambda x: special.j1(x) - target, 0.0, J1_MAX_ARGUMENT, xtol=1e-15)
    return phi * omega_e / cfg.phase_prefactor


def map_alias_to_target(
    f_a: float,
    f_b: float,
    f_sr: float,
    n: int,
    bias_side: int = 1,
    alias_side: int = 1,
) -> float:
    """Target frequency f_s = f_b ± (n·f_SR ± f_a) for the chosen branch."""
    return f_b + bias_side * (n * f_sr + alias_side * f_a)


def candidate_targets(f_a: float, f_b: float, n: int, f_sr: float) -> List[float]:
    """All four branch combinations of :func:`map_alias_to_target`."""
    return [
        map_alias_to_target(f_a, f_b, f_sr, n, bias_side=b, alias_side=a)
        for b in (1, -1)
        for a in (1, -1)
    ]


def disambiguate_target(
    first: Sequence[float], second: Sequence[float], tolerance: float = 1.0
) -> List[float]:
    """Target frequencies present in both candidate sets within ``tolerance`` Hz.

    The two sets come from measurements of the same target with two
    different bias frequencies.
    """
    matches = []
    for a in first:
        for b in second:
            if abs(a - b) <= tolerance:
                matches.append(0.5 * (a + b))
    return sorted(set(matches))
