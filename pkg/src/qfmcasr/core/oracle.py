"""Brute-force spin dynamics used to validate the effective model.

The two-level Schrödinger equation with H = (ω₀/2)σ_z + Σ Ω_i cos(ω_i t + φ_i)σ_x
is integrated with a fixed-step fourth-order Runge-Kutta scheme. The RK4
update of a linear system is itself a 2x2 matrix per step, so propagators are
built for many steps at once with numpy and only the product over blocks is
sequential.

The carrier-removed coherence is averaged over each record block, turned into
an accumulated phase and fitted with a·sin(ωt + φ) + b·t + c to recover the
effective tone.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import optimize, signal

from .errors import FitConvergenceError, StepTooLargeError, UnwrapAmbiguityError
from .qfm import EffectiveSignal, FieldTone, NVTwoLevel
from .units import TWO_PI, ArrayLike, normalize_phase, wrap_phase

logger = logging.getLogger(__name__)

MAX_ORACLE_DURATION = 50e-6
DEFAULT_STEPS_PER_PERIOD = 100
MIN_STEPS_PER_PERIOD = 50
NORM_TOLERANCE = 1e-9
CHUNK_STEPS = 65536

# Largest allowed wrapped phase change between consecutive records
DEFAULT_MAX_JUMP = math.pi / 2

LOWPASS_ORDER = 8
MIN_PERIODS = 3
RESIDUAL_FRACTION = 0.1
RESIDUAL_FLOOR = 1e-8
SMALL_MODULATION = 1e-6


class Frame(str, Enum):
    """Reference frame the amplitudes are integrated in."""
    LAB = "lab"
    ROTATING = "rotating"


# =============================================================================
# Domain Types
# =============================================================================

@dataclass(frozen=True)
class SpinState:
    """Amplitudes (c₀, c₁) of the two-level state."""
    c0: complex
    c1: complex

    @classmethod
    def ground(cls) -> "SpinState":
        return cls(1.0 + 0j, 0j)

    @classmethod
    def superposition(cls) -> "SpinState":
        """(|0⟩ + |1⟩)/√2, the state after an ideal π/2 rotation."""
        amplitude = complex(1.0 / math.sqrt(2.0))
        return cls(amplitude, amplitude)

    @classmethod
    def from_array(cls, values: np.ndarray) -> "SpinState":
        return cls(complex(values[0]), complex(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1], dtype=complex)

    @property
    def norm(self) -> float:
        return abs(self.c0) ** 2 + abs(self.c1) ** 2

    @property
    def population(self) -> float:
        """Population of |1⟩."""
        return abs(self.c1) ** 2

    @property
    def coherence(self) -> complex:
        return self.c1 * self.c0.conjugate()

    def normalized(self) -> "SpinState":
        scale = 1.0 / math.sqrt(self.norm)
        return SpinState(self.c0 * scale, self.c1 * scale)


@dataclass(frozen=True)
class IntegrationConfig:
    """Fixed-step integration settings.

    Attributes:
        duration: Simulated time (s), at most 50 µs
        step: Step (s); defaults to 1/(100·f_max)
        frame: Lab or rotating frame
        record_stride: Steps per record block
        norm_tolerance: Norm drift that triggers renormalization
    """
    duration: float
    step: Optional[float] = None
    frame: Frame = Frame.LAB
    record_stride: int = 100
    norm_tolerance: float = NORM_TOLERANCE

    def __post_init__(self) -> None:
        object.__setattr__(self, "frame", Frame(self.frame))
        if self.duration <= 0:
            raise ValueError(f"Duration must be > 0, got {self.duration}")
        if self.duration > MAX_ORACLE_DURATION:
            raise ValueError(
                f"Oracle duration {self.duration:.3g} s exceeds the {MAX_ORACLE_DURATION:.0e} s cap"
            )
        if self.step is not None and self.step <= 0:
            raise ValueError(f"Step must be > 0, got {self.step}")
        if self.record_stride < 1:
            raise ValueError(f"Record stride must be >= 1, got {self.record_stride}")

    def resolve_step(self, f_max: float) -> float:
        """Step actually used: the requested one, shrunk to tile the duration.

        Raises:
            StepTooLargeError: If the requested step exceeds 1/(50·f_max)
        """
        limit = 1.0 / (MIN_STEPS_PER_PERIOD * f_max)
        requested = self.step if self.step is not None else 1.0 / (DEFAULT_STEPS_PER_PERIOD * f_max)
        if requested > limit * (1.0 + 1e-12):
            raise StepTooLargeError(
                f"Step {requested:.3g} s exceeds 1/(50·f_max) = {limit:.3g} s "
                f"for f_max = {f_max:.6g} Hz"
            )
        blocks = max(1, math.ceil(self.duration / (requested * self.record_stride) - 1e-9))
        return self.duration / (blocks * self.record_stride)


@dataclass(frozen=True)
class Trajectory:
    """States at record-block boundaries plus block-averaged coherence.

    Attributes:
        times: Block boundary times (s), starting at 0
        states: Amplitudes (c₀, c₁) at each boundary, in ``frame``
        coherence_times: Centre time of each record block (s)
        mean_coherence: Block mean of the carrier-removed coherence c₁c₀*·e^{-iω₀t}
        resonance: ω₀ (rad/s)
        step: Integrator step (s)
        frame: Frame of ``states``
        max_norm_error: Largest |‖ψ‖² − 1| seen at a block boundary
        renormalizations: Number of renormalizations applied
    """
    times: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    coherence_times: np.ndarray = field(repr=False)
    mean_coherence: np.ndarray = field(repr=False)
    resonance: float
    step: float
    frame: Frame
    max_norm_error: float = 0.0
    renormalizations: int = 0

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def final_state(self) -> SpinState:
        return SpinState.from_array(self.states[-1])

    def state(self, index: int) -> SpinState:
        return SpinState.from_array(self.states[index])

    def populations(self) -> np.ndarray:
        return np.abs(self.states[:, 1]) ** 2

    def boundary_coherence(self) -> np.ndarray:
        """Carrier-removed coherence at the block boundaries."""
        coherence = self.states[:, 1] * np.conj(self.states[:, 0])
        if self.frame is Frame.LAB:
            coherence = coherence * np.exp(-1j * self.resonance * self.times)
        return coherence

    def final_phase(self) -> float:
        """Carrier-removed relative phase of the final state, in (-π, π]."""
        return float(-np.angle(self.boundary_coherence()[-1]))

    def to_rows(self) -> List[Dict[str, float]]:
        """Rows of the trajectory dump (time_s, re/im of c₀ and c₁, phase_rad)."""
        phase = -np.unwrap(np.angle(self.boundary_coherence()))
        return [
            {
                "time_s": float(t),
                "re_c0": float(state[0].real),
                "im_c0": float(state[0].imag),
                "re_c1": float(state[1].real),
                "im_c1": float(state[1].imag),
                "phase_rad": float(p),
            }
            for t, state, p in zip(self.times, self.states, phase)
        ]


@dataclass(frozen=True)
class PhaseSeries:
    """Accumulated phase ϕ(t) with the ω₀ carrier removed."""
    times: np.ndarray = field(repr=False)
    phase: np.ndarray = field(repr=False)
    cutoff: Optional[float] = None

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self) > 1 else 0.0


@dataclass(frozen=True)
class OracleFit:
    """Effective-tone parameters recovered from a phase series.

    ``amplitude`` is Ω_e = a·ω/2 with the fit canonicalized to a ≥ 0.
    ``flagged`` marks a residual RMS above 10 % of the modulation amplitude.
    """
    amplitude: float
    frequency: float
    phase: float
    stark_shift: float
    modulation_amplitude: float
    residual_rms: float
    flagged: bool
    samples: int

    def as_effective(self) -> EffectiveSignal:
        return EffectiveSignal(
            amplitude=self.amplitude,
            frequency=self.frequency,
            phase=self.phase,
            stark_shift=self.stark_shift,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "amplitude_hz": self.amplitude / TWO_PI,
            "frequency_hz": self.frequency / TWO_PI,
            "phase_deg": math.degrees(self.phase),
            "stark_shift_hz": self.stark_shift / TWO_PI,
            "modulation_amplitude_rad": self.modulation_amplitude,
            "residual_rms_rad": self.residual_rms,
            "flagged": self.flagged,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class AcceptanceBounds:
    """Oracle-vs-formula tolerances."""
    amplitude: float = 0.05
    frequency: float = 1e-4
    phase_deg: float = 2.0


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    predicted: float
    fitted: float
    error: float
    limit: Optional[float]
    within: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "quantity": self.name,
            "predicted": self.predicted,
            "fitted": self.fitted,
            "error": self.error,
            "limit": self.limit,
            "within": self.within,
        }


@dataclass(frozen=True)
class OracleComparison:
    """Predicted versus fitted effective parameters."""
    rows: List[ComparisonRow]
    fit: OracleFit
    predicted: EffectiveSignal
    passed: bool

    def row(self, name: str) -> ComparisonRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "flagged": self.fit.flagged,
            "residual_rms_rad": self.fit.residual_rms,
            "rows": [row.to_dict() for row in self.rows],
        }


# =============================================================================
# Integration
# =============================================================================

def max_frequency(tones: Sequence[FieldTone], nv: NVTwoLevel) -> float:
    """Fastest frequency in the problem, (ω₀ + max ω_i)/2π in Hz."""
    highest = max((tone.frequency for tone in tones), default=0.0)
    return (nv.resonance + highest) / TWO_PI


def _generator(
    t: np.ndarray, tones: Sequence[FieldTone], resonance: float, frame: Frame
) -> np.ndarray:
    """A(t) = -i·H(t) for every time in ``t``, shape (len(t), 2, 2)."""
    drive = np.zeros_like(t)
    for tone in tones:
        drive += tone.amplitude * np.cos(tone.frequency * t + tone.phase)

    a = np.zeros(t.shape + (2, 2), dtype=complex)
    if frame is Frame.LAB:
        a[:, 0, 0] = -0.5j * resonance
        a[:, 1, 1] = 0.5j * resonance
        a[:, 0, 1] = -1j * drive
        a[:, 1, 0] = -1j * drive
    else:
        carrier = np.exp(1j * resonance * t)
        a[:, 0, 1] = -1j * drive * carrier
        a[:, 1, 0] = -1j * drive * np.conj(carrier)
    return a


def _rk4_propagators(
    t: np.ndarray, h: float, tones: Sequence[FieldTone], resonance: float, frame: Frame
) -> np.ndarray:
    """One-step RK4 update matrices for steps starting at ``t``."""
    identity = np.eye(2, dtype=complex)
    a1 = _generator(t, tones, resonance, frame)
    a2 = _generator(t + 0.5 * h, tones, resonance, frame)
    a3 = _generator(t + h, tones, resonance, frame)
    k1 = a1
    k2 = a2 @ (identity + 0.5 * h * k1)
    k3 = a2 @ (identity + 0.5 * h * k2)
    k4 = a3 @ (identity + h * k3)
    return identity + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def evolve_lab(
    state: SpinState,
    tones: Sequence[FieldTone],
    nv: NVTwoLevel,
    cfg: IntegrationConfig,
) -> Trajectory:
    """Integrate the two-level dynamics under a set of transverse drives.

    Args:
        state: Initial amplitudes at t = 0
        tones: Drives Ω_i·cos(ω_i t + φ_i) along σ_x; empty means free precession
        nv: Two-level subsystem providing ω₀
        cfg: Step, duration, frame and record settings

    Returns:
        Trajectory recorded every ``cfg.record_stride`` steps

    Raises:
        StepTooLargeError: If the step violates the 1/(50·f_max) bound
    """
    f_max = max_frequency(tones, nv)
    h = cfg.resolve_step(f_max)
    stride = cfg.record_stride
    resonance = nv.resonance
    n_blocks = int(round(cfg.duration / (h * stride)))
    blocks_per_chunk = max(1, CHUNK_STEPS // stride)
    logger.info(
        "Integrating %d steps of %.3g s in the %s frame (f_max %.6g Hz)",
        n_blocks * stride,
        h,
        cfg.frame.value,
        f_max,
    )

    states = np.empty((n_blocks + 1, 2), dtype=complex)
    states[0] = state.as_array()
    mean_coherence = np.empty(n_blocks, dtype=complex)
    max_norm_error = abs(state.norm - 1.0)
    renormalizations = 0

    for first in range(0, n_blocks, blocks_per_chunk):
        count = min(blocks_per_chunk, n_blocks - first)
        steps = first * stride + np.arange(count * stride)
        t = steps * h
        m = _rk4_propagators(t, h, tones, resonance, cfg.frame).reshape(count, stride, 2, 2)

        block = np.broadcast_to(np.eye(2, dtype=complex), (count, 2, 2)).copy()
        for i in range(stride):
            block = m[:, i] @ block

        for j in range(count):
            psi = block[j] @ states[first + j]
            drift = abs(float(np.vdot(psi, psi).real) - 1.0)
            max_norm_error = max(max_norm_error, drift)
            if drift > cfg.norm_tolerance:
                psi = psi / np.linalg.norm(psi)
                renormalizations += 1
            states[first + j + 1] = psi

        psi = states[first : first + count].copy()
        t_blocks = t.reshape(count, stride)
        total = np.zeros(count, dtype=complex)
        for i in range(stride):
            coherence = psi[:, 1] * np.conj(psi[:, 0])
            if cfg.frame is Frame.LAB:
                coherence = coherence * np.exp(-1j * resonance * t_blocks[:, i])
            total += coherence
            psi = np.einsum("bij,bj->bi", m[:, i], psi)
        mean_coherence[first : first + count] = total / stride

    times = h * stride * np.arange(n_blocks + 1)
    coherence_times = times[:-1] + 0.5 * (stride - 1) * h
    logger.debug(
        "Max norm drift %.3g with %d renormalizations", max_norm_error, renormalizations
    )
    return Trajectory(
        times=times,
        states=states,
        coherence_times=coherence_times,
        mean_coherence=mean_coherence,
        resonance=resonance,
        step=h,
        frame=cfg.frame,
        max_norm_error=max_norm_error,
        renormalizations=renormalizations,
    )


# =============================================================================
# Phase extraction and fitting
# =============================================================================

def lowpass_cutoff(
    tones: Sequence[FieldTone], nv: NVTwoLevel, effective_frequency: float
) -> Optional[float]:
    """Low-pass cutoff (Hz) that removes drive micromotion from the phase.

    The cutoff is a fifth of the smallest drive detuning. It is only returned
    when it clears the effective frequency by a factor of five; otherwise the
    micromotion is left in and shows up in the fit residual.
    """
    if not tones:
        return None
    detuning = min(abs(tone.frequency - nv.resonance) for tone in tones) / TWO_PI
    cutoff = 0.2 * detuning
    if cutoff < 5.0 * effective_frequency / TWO_PI:
        return None
    return cutoff


def accumulated_phase(
    trajectory: Trajectory,
    cutoff: Optional[float] = None,
    max_jump: float = DEFAULT_MAX_JUMP,
) -> PhaseSeries:
    """Unwrapped relative phase between c₀ and c₁ with the carrier removed.

    Args:
        trajectory: Result of :func:`evolve_lab` started in a superposition
        cutoff: Optional Butterworth low-pass cutoff (Hz), applied forward and
            backward; edge samples inside the filter settling time are dropped
        max_jump: Largest wrapped change allowed between records

    Raises:
        UnwrapAmbiguityError: If consecutive records differ by more than ``max_jump``
    """
    z = trajectory.mean_coherence
    if np.any(np.abs(z) < 1e-6):
        raise ValueError("Coherence vanishes; the trajectory did not start in a superposition")
    wrapped = np.angle(z)
    jumps = np.abs(wrap_phase(np.diff(wrapped)))
    if jumps.size and float(jumps.max()) > max_jump:
        index = int(np.argmax(jumps))
        raise UnwrapAmbiguityError(
            f"Phase jumps {float(jumps.max()):.3g} rad between records {index} and {index + 1}; "
            "the trajectory is undersampled"
        )
    phase = -np.unwrap(wrapped)
    times = trajectory.coherence_times

    if cutoff is not None:
        fs = 1.0 / (times[1] - times[0])
        sos = signal.butter(LOWPASS_ORDER, cutoff, btype="low", fs=fs, output="sos")
        trim = int(math.ceil(3.0 * fs / cutoff))
        if phase.size <= 4 * trim:
            raise ValueError("Phase series is too short for the requested low-pass cutoff")
        phase = signal.sosfiltfilt(sos, phase, padlen=min(trim, phase.size - 1))
        phase, times = phase[trim:-trim], times[trim:-trim]

    return PhaseSeries(times=times, phase=phase, cutoff=cutoff)


def effective_phase(t: ArrayLike, effective: EffectiveSignal) -> np.ndarray:
    """Closed-form ϕ(t) = −δ·t + (2Ω_e/ω_e)·[sin(ω_e t + φ_e) − sin φ_e]."""
    t = np.asarray(t, dtype=float)
    depth = 2.0 * effective.amplitude / effective.frequency
    modulation = np.sin(effective.frequency * t + effective.phase) - math.sin(effective.phase)
    return -effective.stark_shift * t + depth * modulation


def _initial_guess(u: np.ndarray, residual: np.ndarray, frequency: Optional[float]) -> List[float]:
    if frequency is None:
        padded = 8 * u.size
        spectrum = np.abs(np.fft.rfft(residual - residual.mean(), n=padded))
        spectrum[0] = 0.0
        step = u[1] - u[0]
        frequency = TWO_PI * float(np.fft.rfftfreq(padded, d=step)[int(np.argmax(spectrum))])
    sin_part = 2.0 * float(np.mean(residual * np.sin(frequency * u)))
    cos_part = 2.0 * float(np.mean(residual * np.cos(frequency * u)))
    return [math.hypot(sin_part, cos_part), frequency, math.atan2(cos_part, sin_part)]


def fit_effective(
    series: PhaseSeries,
    expected_frequency: Optional[float] = None,
    max_evaluations: int = 2000,
) -> OracleFit:
    """Least-squares fit of a·sin(ωt + φ) + b·t + c to an accumulated phase.

    Time is rescaled to the unit interval for the fit. The initial frequency
    comes from ``expected_frequency`` (rad/s) or from the FFT of the
    detrended series.

    Returns:
        OracleFit with Ω_e = a·ω/2, ω_e = ω, φ_e = φ and δ = −b

    Raises:
        ValueError: If the series spans fewer than three periods
        FitConvergenceError: If the optimizer gives up
    """
    if len(series) < 8:
        raise ValueError(f"Phase series has only {len(series)} samples")
    t0 = float(series.times[0])
    span = series.duration
    u = (series.times - t0) / span
    y = series.phase

    slope, intercept = np.polyfit(u, y, 1)
    residual = y - (slope * u + intercept)
    scaled_expected = None if expected_frequency is None else expected_frequency * span

    def linear_only() -> OracleFit:
        frequency = expected_frequency if expected_frequency is not None else 0.0
        rms = float(np.sqrt(np.mean(residual**2)))
        return OracleFit(
            amplitude=0.0,
            frequency=frequency,
            phase=0.0,
            stark_shift=-slope / span,
            modulation_amplitude=0.0,
            residual_rms=rms,
            flagged=rms > RESIDUAL_FLOOR,
            samples=len(series),
        )

    if float(np.ptp(residual)) < SMALL_MODULATION:
        logger.debug("Modulation below %.0e rad; fitting the linear ramp only", SMALL_MODULATION)
        return linear_only()

    amplitude, frequency, phase = _initial_guess(u, residual, scaled_expected)
    if frequency / TWO_PI < MIN_PERIODS:
        raise ValueError(
            f"Phase series spans {frequency / TWO_PI:.2f} periods, need at least {MIN_PERIODS}"
        )

    def model(x: np.ndarray, a: float, w: float, p: float, b: float, c: float) -> np.ndarray:
        return a * np.sin(w * x + p) + b * x + c

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", optimize.OptimizeWarning)
        try:
            popt, _ = optimize.curve_fit(
                model,
                u,
                y,
                p0=[amplitude, frequency, phase, slope, intercept],
                maxfev=max_evaluations,
            )
        except RuntimeError as exc:
            raise FitConvergenceError(f"Phase fit did not converge: {exc}") from exc

    a, w, p, b, c = (float(v) for v in popt)
    rms = float(np.sqrt(np.mean((y - model(u, a, w, p, b, c)) ** 2)))
    if w < 0:
        w, p, a = -w, -p, -a
    if a < 0:
        a, p = -a, p + math.pi

    omega = w / span
    flagged = rms > RESIDUAL_FRACTION * a and rms > RESIDUAL_FLOOR
    if flagged:
        logger.warning("Fit residual %.3g rad exceeds 10%% of modulation %.3g rad", rms, a)
    return OracleFit(
        amplitude=0.5 * a * omega,
        frequency=omega,
        phase=normalize_phase(p - omega * t0),
        stark_shift=-b / span,
        modulation_amplitude=a,
        residual_rms=rms,
        flagged=flagged,
        samples=len(series),
    )


def compare_to_prediction(
    fit: OracleFit,
    predicted: EffectiveSignal,
    bounds: AcceptanceBounds = AcceptanceBounds(),
) -> OracleComparison:
    """Check a fit against the closed-form effective tone.

    The prediction is put in the same a ≥ 0 form as the fit. When the
    predicted modulation depth is below 1e-6 rad the frequency and phase are
    meaningless, so only a small fitted modulation is required.
    """
    amplitude = predicted.amplitude
    phase = predicted.phase
    if amplitude < 0:
        amplitude, phase = -amplitude, phase + math.pi
    depth = 2.0 * amplitude / predicted.frequency

    stark_error = (
        abs(fit.stark_shift - predicted.stark_shift) / abs(predicted.stark_shift)
        if predicted.stark_shift != 0
        else abs(fit.stark_shift)
    )
    stark = ComparisonRow(
        "stark_shift", predicted.stark_shift, fit.stark_shift, stark_error, None, True
    )

    if depth < SMALL_MODULATION:
        small = fit.modulation_amplitude < SMALL_MODULATION
        rows = [
            ComparisonRow("amplitude", amplitude, fit.amplitude, fit.modulation_amplitude,
                          SMALL_MODULATION, small),
            ComparisonRow("frequency", predicted.frequency, fit.frequency, 0.0, None, True),
            ComparisonRow("phase", phase, fit.phase, 0.0, None, True),
            stark,
        ]
        return OracleComparison(rows=rows, fit=fit, predicted=predicted, passed=small)

    amplitude_error = abs(fit.amplitude - amplitude) / amplitude
    frequency_error = abs(fit.frequency - predicted.frequency) / predicted.frequency
    phase_error = abs(math.degrees(wrap_phase(fit.phase - phase)))
    rows = [
        ComparisonRow("amplitude", amplitude, fit.amplitude, amplitude_error, bounds.amplitude,
                      amplitude_error <= bounds.amplitude),
        ComparisonRow("frequency", predicted.frequency, fit.frequency, frequency_error,
                      bounds.frequency, frequency_error <= bounds.frequency),
        ComparisonRow("phase", normalize_phase(phase), fit.phase, phase_error, bounds.phase_deg,
                      phase_error <= bounds.phase_deg),
        stark,
    ]
    passed = all(row.within for row in rows) and not fit.flagged
    if not passed:
        logger.info("Oracle comparison failed: %s", [r.name for r in rows if not r.within])
    return OracleComparison(rows=rows, fit=fit, predicted=predicted, passed=passed)
