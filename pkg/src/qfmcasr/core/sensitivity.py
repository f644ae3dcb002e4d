"""Sensitivity calibration and the frequency-dependent sensitivity model.

The calibration mirrors the bench procedure: sweep the test-tone phase to
find the node-aligned setting, sweep the amplitude out to the first turning
point of the readout (Φ_max = π/2), convert the amplitude axis to tesla with
the closed-form B_π/2 and take the zero-crossing slope. The sensitivity is
then η = σ/s with σ the one-second readout spread.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .casr import CASRConfig, max_phase, sample_seed, simulate_trace
from .errors import TurningPointNotFoundError
from .qfm import (
    Branch,
    EffectiveSignal,
    FieldTone,
    NVTwoLevel,
    ValidityReport,
    amplitude_transfer,
    effective_amplitude,
    validity_check,
)
from .units import GAMMA_NV, TWO_PI

logger = logging.getLogger(__name__)

LINEAR_REGION = 0.3
EXCLUDED_MARGIN_HZ = 20e6
DEFAULT_BIAS_OFFSET_HZ = -1e6
MAX_SWEEP_FREQUENCY_HZ = 10e9
DEFAULT_COIL_FACTOR = 1e-6
# Averaged readout points per record; sets the repeat-to-repeat spread of σ
READOUT_POINTS = 600


# =============================================================================
# Domain Types
# =============================================================================

@dataclass(frozen=True)
class MagnetometryCurve:
    """Readout contrast versus calibrated test-tone amplitude.

    Attributes:
        amplitudes: Swept generator amplitude (arbitrary units)
        contrast: Mean readout per amplitude
        fields: Amplitude axis in tesla
        slope: Zero-crossing slope dS/dB (contrast per tesla)
        calibration_factor: B_π/2 / A_π/2 (T per unit)
        half_pi_amplitude: First turning point A_π/2
        half_pi_field: B_π/2 (T)
        node_phase: Test-tone phase of maximum response (rad)
        omega_e: Test-tone angular frequency
    """
    amplitudes: np.ndarray = field(repr=False)
    contrast: np.ndarray = field(repr=False)
    fields: np.ndarray = field(repr=False)
    slope: float
    calibration_factor: float
    half_pi_amplitude: float
    half_pi_field: float
    node_phase: float
    omega_e: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slope_per_t": self.slope,
            "calibration_factor_t_per_unit": self.calibration_factor,
            "half_pi_amplitude": self.half_pi_amplitude,
            "half_pi_field_t": self.half_pi_field,
            "node_phase_deg": math.degrees(self.node_phase),
            "omega_e_hz": self.omega_e / TWO_PI,
        }


@dataclass(frozen=True)
class SensitivityReport:
    """η_e = σ/s plus, once a target is attached, η_s = η_e·|Ω_s/Ω_e|.

    Attributes:
        eta_effective: Mean effective-signal sensitivity (T/√Hz)
        eta_std: Standard deviation of η across repeats
        sigma: Mean one-second readout standard deviation (contrast)
        slope: Slope the report was computed with (contrast per tesla)
        repeats: Number of independent records
        per_repeat: η of each record
        attenuation: |Ω_s/Ω_e| of the attached target, if any
        eta_target: Target-signal sensitivity (T/√Hz), if a target is attached
        validity: Far-detuning report of the attached target
    """
    eta_effective: float
    eta_std: float
    sigma: float
    slope: float
    repeats: int
    per_repeat: Tuple[float, ...] = ()
    attenuation: Optional[float] = None
    eta_target: Optional[float] = None
    validity: Optional[ValidityReport] = None

    @property
    def relative_spread(self) -> float:
        return self.eta_std / self.eta_effective if self.eta_effective else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "eta_effective_t_per_sqrt_hz": self.eta_effective,
            "eta_std_t_per_sqrt_hz": self.eta_std,
            "sigma_1s": self.sigma,
            "slope_per_t": self.slope,
            "repeats": self.repeats,
            "per_repeat": list(self.per_repeat),
            "attenuation": self.attenuation,
            "eta_target_t_per_sqrt_hz": self.eta_target,
            "validity": self.validity.to_dict() if self.validity else None,
        }


@dataclass(frozen=True)
class SensitivityRow:
    frequency_hz: float
    eta_target: float
    branch: Branch
    valid: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frequency_hz": self.frequency_hz,
            "eta_target_T_per_sqrtHz": self.eta_target,
            "branch": self.branch.value,
            "valid_flag": int(self.valid),
        }


@dataclass(frozen=True)
class SensitivityTable:
    """η_s over a target-frequency grid for one or more NV branches."""
    rows: List[SensitivityRow]
    eta_effective: float
    bias_amplitude: float
    bias_offset_hz: float
    margin_hz: float

    COLUMNS = ("frequency_hz", "eta_target_T_per_sqrtHz", "branch", "valid_flag")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def branches(self) -> List[Branch]:
        seen: List[Branch] = []
        for row in self.rows:
            if row.branch not in seen:
                seen.append(row.branch)
        return seen

    def for_branch(self, branch: Branch) -> List[SensitivityRow]:
        branch = Branch(branch)
        return [row for row in self.rows if row.branch is branch]

    def columns(self, branch: Branch) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(frequency_hz, eta, valid) arrays for one branch."""
        rows = self.for_branch(branch)
        return (
            np.array([r.frequency_hz for r in rows]),
            np.array([r.eta_target for r in rows]),
            np.array([r.valid for r in rows], dtype=bool),
        )

    def to_rows(self) -> List[Dict[str, Any]]:
        return [row.to_dict() for row in self.rows]

    def metadata(self) -> Dict[str, Any]:
        return {
            "eta_effective_t_per_sqrt_hz": self.eta_effective,
            "bias_amplitude_hz": self.bias_amplitude / TWO_PI,
            "bias_offset_hz": self.bias_offset_hz,
            "margin_hz": self.margin_hz,
        }


# =============================================================================
# Calibration
# =============================================================================

def half_pi_field(cfg: CASRConfig, omega_e: Optional[float] = None) -> float:
    """Field amplitude (T) that accumulates Φ_max = π/2, i.e. π·ω_e/(4Nγ)."""
    omega = cfg.resonance if omega_e is None else omega_e
    return 0.5 * math.pi * omega / (cfg.phase_prefactor * GAMMA_NV)


def _readout(
    amplitudes: np.ndarray,
    phase: float,
    cfg: CASRConfig,
    omega_e: float,
    coil_factor: float,
) -> np.ndarray:
    """Block readout for a test tone of generator amplitude A at phase φ."""
    unit = EffectiveSignal(amplitude=GAMMA_NV * coil_factor, frequency=omega_e, phase=phase)
    phi = max_phase(unit, cfg) * math.cos(unit.phase) * amplitudes
    return 0.5 * (1.0 + cfg.effective_contrast * np.sin(phi))


def _noisy(
    values: np.ndarray, noise: float, repeats: int, rng: Optional[np.random.Generator]
) -> np.ndarray:
    if noise <= 0 or rng is None:
        return values
    return values + rng.normal(0.0, noise, size=(repeats,) + values.shape).mean(axis=0)


def calibrate_slope(
    cfg: CASRConfig,
    omega_e: Optional[float] = None,
    repeats: int = 1,
    coil_factor: float = DEFAULT_COIL_FACTOR,
    amplitude_max: Optional[float] = None,
    points: int = 401,
    phase_step_deg: float = 1.0,
    noise: float = 0.0,
    seed: Optional[int] = None,
) -> MagnetometryCurve:
    """Simulate the phase and amplitude sweeps and fit the zero-crossing slope.

    Args:
        cfg: Sequence configuration
        omega_e: Test-tone angular frequency; defaults to π/τ
        repeats: Readouts averaged per sweep point
        coil_factor: Field per generator unit (T)
        amplitude_max: Sweep half range in generator units; twice A_π/2 by default
        points: Amplitude points over [-amplitude_max, amplitude_max]
        phase_step_deg: Phase sweep step
        noise: Per-readout standard deviation in contrast units
        seed: RNG seed for ``noise``

    Raises:
        ValueError: If the test tone is off the sequence resonance by more than 1 %
        TurningPointNotFoundError: If the sweep stops short of A_π/2
    """
    omega = cfg.resonance if omega_e is None else omega_e
    if not cfg.check_resonance(omega):
        raise ValueError("Test tone must be resonant with the sequence within 1%")
    if repeats < 1 or points < 5:
        raise ValueError("Need at least one repeat and five sweep points")

    b_half_pi = half_pi_field(cfg, omega)
    if amplitude_max is None:
        amplitude_max = 2.0 * b_half_pi / coil_factor
    rng = np.random.default_rng(seed) if noise > 0 else None

    phases = np.radians(np.arange(0.0, 360.0, phase_step_deg))
    quarter = np.array([0.25 * amplitude_max])
    response = np.array([
        _noisy(_readout(quarter, p, cfg, omega, coil_factor), noise, repeats, rng)[0]
        for p in phases
    ])
    node_phase = float(phases[int(np.argmax(response))])

    amplitudes = np.linspace(-amplitude_max, amplitude_max, points)
    readout = _readout(amplitudes, node_phase, cfg, omega, coil_factor)
    contrast = _noisy(readout, noise, repeats, rng)

    positive = amplitudes > 0
    upper = contrast[positive]
    peak = int(np.argmax(upper))
    if peak >= upper.size - 1:
        raise TurningPointNotFoundError(
            f"Readout still rising at the sweep edge A = {amplitude_max:.4g}; widen the sweep"
        )
    window = slice(max(peak - 2, 0), min(peak + 3, upper.size))
    a2, a1, _ = np.polyfit(amplitudes[positive][window], upper[window], 2)
    half_pi_amplitude = float(-a1 / (2.0 * a2)) if a2 < 0 else float(amplitudes[positive][peak])

    factor = b_half_pi / half_pi_amplitude
    fields = amplitudes * factor
    reduced = fields / b_half_pi
    linear = np.abs(0.5 * math.pi * reduced) <= LINEAR_REGION
    if int(linear.sum()) < 4:
        raise ValueError("Too few sweep points inside the linear region")
    slope = float(np.polyfit(reduced[linear], contrast[linear], 3)[2]) / b_half_pi

    logger.info(
        "Calibrated A_pi/2 = %.5g, factor %.4g T/unit, slope %.4g /T",
        half_pi_amplitude,
        factor,
        slope,
    )
    return MagnetometryCurve(
        amplitudes=amplitudes,
        contrast=contrast,
        fields=fields,
        slope=slope,
        calibration_factor=factor,
        half_pi_amplitude=half_pi_amplitude,
        half_pi_field=b_half_pi,
        node_phase=node_phase,
        omega_e=omega,
    )


# =============================================================================
# Sensitivity
# =============================================================================

def measure_sensitivity(
    cfg: CASRConfig,
    curve: MagnetometryCurve,
    repeats: int = 10,
    record_s: float = 1.0,
    seed: int = 0,
    readout_points: int = READOUT_POINTS,
) -> SensitivityReport:
    """η_e = σ_1s / s from signal-free records.

    Each repeat simulates ``record_s`` of readout with the noise of ``cfg``
    and a seed derived from ``seed``. The record is cut into
    ``readout_points`` equal windows, each averaged to one readout point, and
    σ_1s is the standard deviation of those points scaled to a one-second
    average. Ten repeats at 600 points spread by about 3 %.
    """
    if repeats < 1:
        raise ValueError(f"Repeats must be >= 1, got {repeats}")
    if curve.slope == 0:
        raise ValueError("Calibration curve has zero slope")
    if readout_points < 2:
        raise ValueError(f"Readout points must be >= 2, got {readout_points}")

    sigmas = []
    for index in range(repeats):
        trace = simulate_trace([], cfg, record_s, seed=sample_seed(seed, index))
        sigmas.append(_one_second_spread(trace.samples, cfg.t_seq, readout_points))

    etas = tuple(s / curve.slope for s in sigmas)
    sigma = float(np.mean(sigmas))
    eta_std = float(np.std(etas, ddof=1)) if repeats > 1 else 0.0
    logger.debug("Sensitivity over %d repeats: sigma %.4g, slope %.4g", repeats, sigma, curve.slope)
    return SensitivityReport(
        eta_effective=sigma / curve.slope,
        eta_std=eta_std,
        sigma=sigma,
        slope=curve.slope,
        repeats=repeats,
        per_repeat=etas,
    )


def _one_second_spread(samples: np.ndarray, period: float, points: int) -> float:
    points = min(points, len(samples))
    if points < 2:
        return 0.0
    width = len(samples) // points
    readouts = samples[: points * width].reshape(points, width).mean(axis=1)
    return float(np.std(readouts, ddof=1)) * math.sqrt(width * period)


def target_sensitivity(
    report: SensitivityReport,
    signal: FieldTone,
    bias: FieldTone,
    nv: NVTwoLevel,
) -> SensitivityReport:
    """Attach a target: η_s = η_e·|Ω_s/Ω_e| for unit target amplitude.

    Raises:
        PoleError: If the target or bias sits on ω₀
    """
    transfer = effective_amplitude(signal.with_amplitude(1.0), bias, nv)
    attenuation = math.inf if transfer == 0 else 1.0 / abs(transfer)
    return replace(
        report,
        attenuation=attenuation,
        eta_target=report.eta_effective * attenuation,
        validity=validity_check(signal, bias, nv),
    )


def sweep_frequency(
    frequencies_hz: Iterable[float],
    eta_effective: float,
    bias_amplitude: float,
    branches: Sequence[Branch] = (Branch.MINUS_ONE, Branch.PLUS_ONE),
    resonances: Optional[Dict[Branch, float]] = None,
    bias_offset_hz: float = DEFAULT_BIAS_OFFSET_HZ,
    margin_hz: float = EXCLUDED_MARGIN_HZ,
) -> SensitivityTable:
    """η_s over a grid of target frequencies, bias detuned by a fixed offset.

    Points where the bias frequency is not positive or either tone lies
    within ``margin_hz`` of ω₀ are flagged invalid and carry NaN.

    Args:
        frequencies_hz: Target frequencies, each in (0, 10 GHz]
        eta_effective: Measured η_e (T/√Hz)
        bias_amplitude: Ω_b (rad/s)
        branches: NV branches to evaluate
        resonances: Optional ω₀ override per branch (rad/s)
        bias_offset_hz: f_b − f_s
        margin_hz: Excluded zone around ω₀
    """
    grid = np.asarray(list(frequencies_hz), dtype=float)
    if grid.size == 0:
        raise ValueError("Frequency grid is empty")
    if np.any(grid <= 0) or np.any(grid > MAX_SWEEP_FREQUENCY_HZ):
        raise ValueError("Sweep frequencies must lie in (0, 10 GHz]")

    omega_s = TWO_PI * grid
    omega_b = omega_s + TWO_PI * bias_offset_hz
    margin = TWO_PI * margin_hz
    rows: List[SensitivityRow] = []
    for branch in branches:
        branch = Branch(branch)
        resonance = (resonances or {}).get(branch, NVTwoLevel.default(branch).resonance)
        valid = (
            (omega_b > 0)
            & (np.abs(omega_s - resonance) > margin)
            & (np.abs(omega_b - resonance) > margin)
        )
        eta = np.full(grid.shape, np.nan)
        transfer = amplitude_transfer(omega_s[valid], omega_b[valid], resonance, bias_amplitude)
        with np.errstate(divide="ignore"):
            eta[valid] = eta_effective / np.abs(transfer)
        rows.extend(
            SensitivityRow(float(f), float(e), branch, bool(v)) for f, e, v in zip(grid, eta, valid)
        )
        logger.debug("Branch %s: %d of %d points valid", branch.value, int(valid.sum()), grid.size)

    return SensitivityTable(
        rows=rows,
        eta_effective=eta_effective,
        bias_amplitude=bias_amplitude,
        bias_offset_hz=bias_offset_hz,
        margin_hz=margin_hz,
    )
