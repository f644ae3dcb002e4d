"""Quantum frequency mixing in closed form.

A weak target tone and a strong AC bias tone, both far detuned from the spin
resonance ω₀, produce an effective longitudinal drive at their difference
frequency. This module evaluates its amplitude, the accompanying AC Stark
shift and the far-detuning validity margins.

Example:
    nv = NVTwoLevel.default(Branch.MINUS_ONE)
    signal = FieldTone.from_hz(0.21e6, 2.4e9 + 3125.0)
    bias = FieldTone.from_hz(4.3e6, 2.399e9)
    effective = down_convert(signal, bias, nv)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateFrequencyError, PoleError
from .units import (
    GAMMA_NV,
    NV_ZERO_FIELD_SPLITTING,
    OMEGA_MINUS_ONE,
    OMEGA_PLUS_ONE,
    T2_HAHN,
    T2_STAR,
    T2_XY8_6,
    TWO_PI,
    ArrayLike,
    normalize_phase,
)

logger = logging.getLogger(__name__)

DEFAULT_POLE_EPSILON = 1e-12
DEFAULT_FREQUENCY_FLOOR = TWO_PI * 1.0
DEFAULT_VALIDITY_THRESHOLD = 0.05


# =============================================================================
# Domain Types
# =============================================================================

class Branch(str, Enum):
    """Which |±1⟩ level forms the two-level system with |0⟩."""
    MINUS_ONE = "minus_one"
    PLUS_ONE = "plus_one"


@dataclass(frozen=True)
class FieldTone:
    """One oscillating drive Ω·cos(ωt + φ), all in angular units."""
    amplitude: float
    frequency: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.amplitude < 0:
            raise ValueError(f"Tone amplitude must be >= 0, got {self.amplitude}")
        if self.frequency <= 0:
            raise ValueError(f"Tone frequency must be > 0, got {self.frequency}")
        object.__setattr__(self, "phase", normalize_phase(float(self.phase)))

    @classmethod
    def from_hz(
        cls, amplitude_hz: float, frequency_hz: float, phase_deg: float = 0.0
    ) -> "FieldTone":
        """Build a tone from ordinary-frequency amplitude/frequency and a phase in degrees."""
        return cls(
            amplitude=TWO_PI * amplitude_hz,
            frequency=TWO_PI * frequency_hz,
            phase=math.radians(phase_deg),
        )

    def with_phase(self, phase: float) -> "FieldTone":
        return replace(self, phase=phase)

    def with_amplitude(self, amplitude: float) -> "FieldTone":
        return replace(self, amplitude=amplitude)

    def to_dict(self) -> Dict[str, Any]:
        return {"amplitude": self.amplitude, "frequency": self.frequency, "phase": self.phase}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FieldTone":
        return cls(
            amplitude=data["amplitude"],
            frequency=data["frequency"],
            phase=data.get("phase", 0.0),
        )


@dataclass(frozen=True)
class NVTwoLevel:
    """The |0⟩ ↔ |±1⟩ transition used as the mixer.

    Attributes:
        resonance: Transition frequency ω₀ (rad/s)
        branch: Selected |±1⟩ level
        bias_field: DC bias field (T) the resonance was derived from, if known
        t2_star, t2_hahn, t2_xy8: Ensemble coherence times (s)
    """
    resonance: float
    branch: Branch = Branch.MINUS_ONE
    bias_field: Optional[float] = None
    t2_star: float = T2_STAR
    t2_hahn: float = T2_HAHN
    t2_xy8: float = T2_XY8_6

    def __post_init__(self) -> None:
        if self.resonance <= 0:
            raise ValueError(f"Resonance must be > 0, got {self.resonance}")
        object.__setattr__(self, "branch", Branch(self.branch))

    @classmethod
    def default(cls, branch: Branch = Branch.MINUS_ONE) -> "NVTwoLevel":
        """Resonances of the 20.7 mT working point."""
        branch = Branch(branch)
        resonance = OMEGA_MINUS_ONE if branch is Branch.MINUS_ONE else OMEGA_PLUS_ONE
        return cls(resonance=resonance, branch=branch)

    @classmethod
    def from_bias_field(cls, bias_field: float, branch: Branch = Branch.MINUS_ONE) -> "NVTwoLevel":
        """Resonance ω_{±1} = D ± γB for a DC field along the NV axis."""
        branch = Branch(branch)
        sign = -1.0 if branch is Branch.MINUS_ONE else 1.0
        resonance = NV_ZERO_FIELD_SPLITTING + sign * GAMMA_NV * bias_field
        if resonance <= 0:
            raise ValueError(
                f"Bias field {bias_field} T drives the {branch.value} resonance below zero"
            )
        return cls(resonance=resonance, branch=branch, bias_field=bias_field)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "resonance": self.resonance,
            "branch": self.branch.value,
            "bias_field": self.bias_field,
            "t2_star": self.t2_star,
            "t2_hahn": self.t2_hahn,
            "t2_xy8": self.t2_xy8,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NVTwoLevel":
        return cls(
            resonance=data["resonance"],
            branch=Branch(data.get("branch", Branch.MINUS_ONE.value)),
            bias_field=data.get("bias_field"),
            t2_star=data.get("t2_star", T2_STAR),
            t2_hahn=data.get("t2_hahn", T2_HAHN),
            t2_xy8=data.get("t2_xy8", T2_XY8_6),
        )


@dataclass(frozen=True)
class EffectiveSignal:
    """Down-converted tone Ω_e·cos(ω_e t + φ_e) plus the static Stark shift δ.

    ``amplitude`` is signed; ``folded`` records that the signal sat below the
    bias and both ω_e and φ_e were negated to keep ω_e positive.
    """
    amplitude: float
    frequency: float
    phase: float
    stark_shift: float = 0.0
    folded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "phase", normalize_phase(float(self.phase)))

    def value(self, t: ArrayLike) -> ArrayLike:
        """Instantaneous effective drive Ω_e·cos(ω_e t + φ_e)."""
        return self.amplitude * np.cos(self.frequency * np.asarray(t) + self.phase)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "phase": self.phase,
            "stark_shift": self.stark_shift,
            "folded": self.folded,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EffectiveSignal":
        return cls(
            amplitude=data["amplitude"],
            frequency=data["frequency"],
            phase=data["phase"],
            stark_shift=data.get("stark_shift", 0.0),
            folded=data.get("folded", False),
        )


@dataclass(frozen=True)
class ValidityReport:
    """Far-detuning margins of a signal/bias pair.

    Margins are ordered (|ω - ω₀|, |ω + ω₀|). Ratios are taken against the
    smallest of the four margins.
    """
    signal_margins: Tuple[float, float]
    bias_margins: Tuple[float, float]
    signal_ratio: float
    bias_ratio: float
    difference_ratio: float
    threshold: float
    passed: bool = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "passed", self.max_ratio < self.threshold)

    @property
    def min_detuning(self) -> float:
        return min(self.signal_margins + self.bias_margins)

    @property
    def max_ratio(self) -> float:
        return max(self.signal_ratio, self.bias_ratio, self.difference_ratio)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "signal_margins_hz": [m / TWO_PI for m in self.signal_margins],
            "bias_margins_hz": [m / TWO_PI for m in self.bias_margins],
            "signal_ratio": self.signal_ratio,
            "bias_ratio": self.bias_ratio,
            "difference_ratio": self.difference_ratio,
            "threshold": self.threshold,
            "passed": self.passed,
        }


# =============================================================================
# Helpers
# =============================================================================

def _check_pole(frequency: float, resonance: float, epsilon: float, label: str) -> None:
    if abs(frequency - resonance) <= epsilon * resonance:
        raise PoleError(
            f"{label} frequency {frequency / TWO_PI:.6g} Hz is on the spin resonance "
            f"{resonance / TWO_PI:.6g} Hz"
        )


def _response(frequency: ArrayLike, resonance: float) -> ArrayLike:
    """ω₀/(ω² − ω₀²), evaluated in factored form."""
    return resonance / ((frequency - resonance) * (frequency + resonance))


def amplitude_transfer(
    signal_frequency: ArrayLike,
    bias_frequency: ArrayLike,
    resonance: float,
    bias_amplitude: float,
) -> ArrayLike:
    """Signed ratio Ω_e/Ω_s for a unit target amplitude.

    Vectorized over the frequency arguments; poles are not checked here.
    """
    return 0.5 * bias_amplitude * (
        _response(signal_frequency, resonance) + _response(bias_frequency, resonance)
    )


# =============================================================================
# Operations
# =============================================================================

def effective_amplitude(
    signal: FieldTone,
    bias: FieldTone,
    nv: NVTwoLevel,
    epsilon: float = DEFAULT_POLE_EPSILON,
) -> float:
    """Effective signal amplitude Ω_e (signed, rad/s).

    Args:
        signal: Target tone
        bias: AC bias tone
        nv: Two-level subsystem
        epsilon: Relative distance to ω₀ treated as a pole

    Returns:
        (Ω_s·Ω_b/2)·(ω₀/(ω_s² − ω₀²) + ω₀/(ω_b² − ω₀²))

    Raises:
        PoleError: If either tone frequency equals ω₀ within ``epsilon``
    """
    _check_pole(signal.frequency, nv.resonance, epsilon, "Signal")
    _check_pole(bias.frequency, nv.resonance, epsilon, "Bias")
    ratio = amplitude_transfer(signal.frequency, bias.frequency, nv.resonance, bias.amplitude)
    return float(signal.amplitude * ratio)


def stark_shift(
    signal: FieldTone,
    bias: FieldTone,
    nv: NVTwoLevel,
    epsilon: float = DEFAULT_POLE_EPSILON,
) -> float:
    """AC Stark shift δ of the transition frequency (rad/s)."""
    return multi_tone_stark_shift([signal], bias, nv, epsilon)


def multi_tone_stark_shift(
    signals: Sequence[FieldTone],
    bias: FieldTone,
    nv: NVTwoLevel,
    epsilon: float = DEFAULT_POLE_EPSILON,
) -> float:
    """Stark shift of a bias tone plus any number of target tones.

    Cross terms between target tones are second order in the weak amplitudes
    and are dropped.
    """
    _check_pole(bias.frequency, nv.resonance, epsilon, "Bias")
    shift = -bias.amplitude**2 * _response(bias.frequency, nv.resonance)
    for tone in signals:
        _check_pole(tone.frequency, nv.resonance, epsilon, "Signal")
        shift -= tone.amplitude**2 * _response(tone.frequency, nv.resonance)
    return float(shift)


def down_convert(
    signal: FieldTone,
    bias: FieldTone,
    nv: NVTwoLevel,
    frequency_floor: float = DEFAULT_FREQUENCY_FLOOR,
    epsilon: float = DEFAULT_POLE_EPSILON,
    stark: Optional[float] = None,
) -> EffectiveSignal:
    """Bundle the effective tone produced by mixing ``signal`` with ``bias``.

    A signal below the bias is folded to a positive ω_e by negating both ω_e
    and φ_e, which leaves Ω_e·cos(ω_e t + φ_e) unchanged.

    Raises:
        DegenerateFrequencyError: If |ω_s − ω_b| < ``frequency_floor``
        PoleError: If either tone sits on ω₀
    """
    difference = signal.frequency - bias.frequency
    if abs(difference) < frequency_floor:
        raise DegenerateFrequencyError(
            f"Signal and bias are {abs(difference) / TWO_PI:.3g} Hz apart, "
            f"below the {frequency_floor / TWO_PI:.3g} Hz floor"
        )
    amplitude = effective_amplitude(signal, bias, nv, epsilon)
    shift = stark if stark is not None else stark_shift(signal, bias, nv, epsilon)
    phase = signal.phase - bias.phase
    folded = difference < 0
    if folded:
        difference, phase = -difference, -phase
    return EffectiveSignal(
        amplitude=amplitude,
        frequency=difference,
        phase=phase,
        stark_shift=shift,
        folded=folded,
    )


def down_convert_all(
    signals: Sequence[FieldTone],
    bias: FieldTone,
    nv: NVTwoLevel,
    frequency_floor: float = DEFAULT_FREQUENCY_FLOOR,
    epsilon: float = DEFAULT_POLE_EPSILON,
) -> List[EffectiveSignal]:
    """Down-convert several target tones sharing one bias.

    Every effective tone carries the Stark shift of the full drive.
    """
    shift = multi_tone_stark_shift(signals, bias, nv, epsilon)
    return [
        down_convert(tone, bias, nv, frequency_floor, epsilon, stark=shift) for tone in signals
    ]


def validity_check(
    signal: FieldTone,
    bias: FieldTone,
    nv: NVTwoLevel,
    threshold: float = DEFAULT_VALIDITY_THRESHOLD,
) -> ValidityReport:
    """Report how far the pair sits inside the far-detuned regime. Never raises."""
    w0 = nv.resonance
    signal_margins = (abs(signal.frequency - w0), signal.frequency + w0)
    bias_margins = (abs(bias.frequency - w0), bias.frequency + w0)
    min_detuning = min(signal_margins + bias_margins)

    def ratio(value: float) -> float:
        if min_detuning == 0.0:
            return 0.0 if value == 0.0 else math.inf
        return value / min_detuning

    report = ValidityReport(
        signal_margins=signal_margins,
        bias_margins=bias_margins,
        signal_ratio=ratio(signal.amplitude),
        bias_ratio=ratio(bias.amplitude),
        difference_ratio=ratio(abs(signal.frequency - bias.frequency)),
        threshold=threshold,
    )
    if not report.passed:
        logger.warning(
            "Far-detuning check failed at f_s %.6g Hz: max ratio %.3g >= %.3g",
            signal.frequency / TWO_PI,
            report.max_ratio,
            threshold,
        )
    return report
