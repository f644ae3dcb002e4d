"""Tests for the brute-force spin dynamics and the effective-tone fit."""

import math

import numpy as np
import pytest

from qfmcasr.core.errors import StepTooLargeError, UnwrapAmbiguityError
from qfmcasr.core.oracle import (
    AcceptanceBounds,
    Frame,
    IntegrationConfig,
    OracleFit,
    PhaseSeries,
    SpinState,
    Trajectory,
    accumulated_phase,
    compare_to_prediction,
    effective_phase,
    evolve_lab,
    fit_effective,
    lowpass_cutoff,
    max_frequency,
)
from qfmcasr.core.qfm import EffectiveSignal, FieldTone, NVTwoLevel, down_convert
from qfmcasr.core.units import TWO_PI


@pytest.fixture
def scaled_tones():
    """Signal 51 MHz and bias 50 MHz against a 20 MHz resonance."""
    return FieldTone.from_hz(0.1e6, 51e6), FieldTone.from_hz(1.2e6, 50e6)


def synthetic_series(effective: EffectiveSignal, duration: float = 5e-6,
                     samples: int = 2000) -> PhaseSeries:
    """Noiseless phase series of one effective tone."""
    times = np.linspace(0.0, duration, samples)
    return PhaseSeries(times=times, phase=effective_phase(times, effective))


# =============================================================================
# Domain Types
# =============================================================================

class TestSpinState:
    """Tests for SpinState."""

    def test_ground(self):
        """Test the |0⟩ state."""
        state = SpinState.ground()
        assert state.norm == 1.0
        assert state.population == 0.0

    def test_superposition(self):
        """Test the equal superposition."""
        state = SpinState.superposition()
        assert state.norm == pytest.approx(1.0)
        assert state.coherence == pytest.approx(0.5)

    def test_normalized(self):
        """Test normalization of an unnormalized state."""
        state = SpinState(2.0 + 0j, 0j).normalized()
        assert state.c0 == pytest.approx(1.0)


class TestIntegrationConfig:
    """Tests for IntegrationConfig."""

    def test_default_step_tiles_duration(self):
        """Test that the default step divides the duration."""
        cfg = IntegrationConfig(duration=1e-6)
        step = cfg.resolve_step(20e6)
        assert step <= 1.0 / (100 * 20e6) * (1 + 1e-12)
        blocks = cfg.duration / (step * cfg.record_stride)
        assert blocks == pytest.approx(round(blocks), abs=1e-9)

    def test_step_constraint(self):
        """Test that a step above 1/100 of the fastest period is rejected."""
        cfg = IntegrationConfig(duration=1e-6, step=1e-9)
        with pytest.raises(StepTooLargeError):
            cfg.resolve_step(400e6)

    def test_duration_cap(self):
        """Test that runs beyond 50 µs are rejected."""
        with pytest.raises(ValueError):
            IntegrationConfig(duration=60e-6)

    def test_frame_from_string(self):
        """Test that the frame can be given by its value."""
        assert IntegrationConfig(duration=1e-6, frame="rotating").frame is Frame.ROTATING


# =============================================================================
# Integration
# =============================================================================

class TestEvolveLab:
    """Tests for evolve_lab."""

    def test_resonant_pi_pulse(self):
        """A resonant drive for π/Ω flips |0⟩ into |1⟩."""
        nv = NVTwoLevel(resonance=TWO_PI * 200e6)
        rabi = TWO_PI * 1e6
        drive = FieldTone(amplitude=rabi, frequency=nv.resonance)
        trajectory = evolve_lab(SpinState.ground(), [drive], nv,
                                IntegrationConfig(duration=math.pi / rabi))
        assert trajectory.final_state.population == pytest.approx(1.0, abs=1e-4)

    def test_rotating_frame_agrees(self):
        """Test that lab and rotating frames agree on a resonant pulse."""
        nv = NVTwoLevel(resonance=TWO_PI * 200e6)
        rabi = TWO_PI * 1e6
        drive = FieldTone(amplitude=rabi, frequency=nv.resonance)
        cfg = IntegrationConfig(duration=0.5 * math.pi / rabi, frame=Frame.ROTATING)
        trajectory = evolve_lab(SpinState.ground(), [drive], nv, cfg)
        assert trajectory.final_state.population == pytest.approx(0.5, abs=1e-2)

    def test_norm_is_conserved(self):
        """Test that RK4 keeps the state normalized."""
        nv = NVTwoLevel(resonance=TWO_PI * 200e6)
        drive = FieldTone(amplitude=TWO_PI * 1e6, frequency=nv.resonance)
        trajectory = evolve_lab(SpinState.ground(), [drive], nv, IntegrationConfig(duration=0.5e-6))
        norms = np.sum(np.abs(trajectory.states) ** 2, axis=1)
        assert np.max(np.abs(norms - 1.0)) < 1e-8
        assert trajectory.max_norm_error < 1e-8

    def test_free_precession_keeps_phase(self, scaled_nv):
        """Test that an undriven spin accumulates no extra phase."""
        trajectory = evolve_lab(SpinState.superposition(), [], scaled_nv,
                                IntegrationConfig(duration=1e-6))
        assert abs(trajectory.final_phase()) < 1e-5
        assert trajectory.populations() == pytest.approx(np.full(len(trajectory), 0.5), abs=1e-9)

    def test_fourth_order_convergence(self, scaled_nv):
        """Halving the step cuts the phase error by about 16."""
        f_max = max_frequency([], scaled_nv)
        errors = []
        for divisor in (1, 2, 4):
            cfg = IntegrationConfig(duration=1e-6, step=1.0 / (50 * f_max * divisor))
            trajectory = evolve_lab(SpinState.superposition(), [], scaled_nv, cfg)
            errors.append(abs(trajectory.final_phase()))
        assert errors[0] / errors[1] == pytest.approx(16.0, rel=0.15)
        assert errors[1] / errors[2] == pytest.approx(16.0, rel=0.15)

    def test_step_too_large(self, scaled_nv, scaled_tones):
        """Test that a coarse explicit step raises StepTooLargeError."""
        with pytest.raises(StepTooLargeError):
            evolve_lab(SpinState.superposition(), list(scaled_tones), scaled_nv,
                       IntegrationConfig(duration=1e-6, step=1e-9))

    def test_trajectory_rows(self, scaled_nv):
        """Test the trajectory table rows."""
        trajectory = evolve_lab(SpinState.superposition(), [], scaled_nv,
                                IntegrationConfig(duration=1e-6))
        rows = trajectory.to_rows()
        assert len(rows) == len(trajectory)
        assert set(rows[0]) == {"time_s", "re_c0", "im_c0", "re_c1", "im_c1", "phase_rad"}
        assert rows[0]["time_s"] == 0.0


# =============================================================================
# Phase extraction and fit
# =============================================================================

class TestAccumulatedPhase:
    """Tests for accumulated_phase."""

    def _trajectory(self, coherence: np.ndarray) -> Trajectory:
        n = coherence.size
        return Trajectory(
            times=np.arange(n + 1) * 1e-8,
            states=np.tile([1 / math.sqrt(2), 1 / math.sqrt(2)], (n + 1, 1)).astype(complex),
            coherence_times=(np.arange(n) + 0.5) * 1e-8,
            mean_coherence=coherence,
            resonance=TWO_PI * 20e6,
            step=1e-10,
            frame=Frame.LAB,
        )

    def test_sign_convention(self):
        """A coherence rotating as e^{-iθ(t)} gives ϕ = +θ."""
        theta = np.linspace(0.0, 3.0, 50)
        series = accumulated_phase(self._trajectory(0.5 * np.exp(-1j * theta)))
        np.testing.assert_allclose(series.phase, theta, atol=1e-12)

    def test_ambiguous_unwrap(self):
        """Test that jumps near π per sample are rejected."""
        coherence = 0.5 * np.exp(1j * 2.0 * np.arange(20))
        with pytest.raises(UnwrapAmbiguityError):
            accumulated_phase(self._trajectory(coherence))

    def test_vanishing_coherence(self):
        """Test that a vanishing coherence is rejected."""
        with pytest.raises(ValueError):
            accumulated_phase(self._trajectory(np.zeros(20, dtype=complex)))

    def test_lowpass_cutoff(self, scaled_nv, scaled_tones):
        """Test the cutoff between ω_e and the drive micromotion."""
        assert lowpass_cutoff(list(scaled_tones), scaled_nv, TWO_PI * 1e6) == pytest.approx(6e6)
        assert lowpass_cutoff(list(scaled_tones), scaled_nv, TWO_PI * 2e6) is None
        assert lowpass_cutoff([], scaled_nv, TWO_PI * 1e6) is None


class TestFitEffective:
    """Tests for fit_effective on synthetic phase series."""

    def test_recovers_parameters(self):
        """Test that the fit recovers amplitude, frequency, phase and ramp."""
        truth = EffectiveSignal(amplitude=TWO_PI * 1000.0, frequency=TWO_PI * 1e6, phase=0.7,
                                stark_shift=-TWO_PI * 13.8e3)
        fit = fit_effective(synthetic_series(truth))
        assert fit.amplitude == pytest.approx(truth.amplitude, rel=1e-6)
        assert fit.frequency == pytest.approx(truth.frequency, rel=1e-6)
        assert fit.phase == pytest.approx(truth.phase, abs=1e-6)
        assert fit.stark_shift == pytest.approx(truth.stark_shift, rel=1e-6)
        assert not fit.flagged

    def test_negative_amplitude_is_canonicalized(self):
        """Test that a negative amplitude is folded into the phase."""
        truth = EffectiveSignal(amplitude=-TWO_PI * 1000.0, frequency=TWO_PI * 1e6, phase=0.7)
        fit = fit_effective(synthetic_series(truth), expected_frequency=truth.frequency)
        assert fit.amplitude == pytest.approx(-truth.amplitude, rel=1e-6)
        assert fit.phase == pytest.approx(0.7 + math.pi, abs=1e-6)

    def test_time_offset(self):
        """Test a series that does not start at zero."""
        truth = EffectiveSignal(amplitude=TWO_PI * 500.0, frequency=TWO_PI * 1e6, phase=2.0)
        times = np.linspace(1e-6, 6e-6, 1500)
        series = PhaseSeries(times=times, phase=effective_phase(times, truth))
        fit = fit_effective(series, expected_frequency=truth.frequency)
        assert fit.phase == pytest.approx(2.0, abs=1e-6)

    def test_linear_only(self):
        """Test a series with only the Stark ramp."""
        truth = EffectiveSignal(amplitude=0.0, frequency=TWO_PI * 1e6, phase=0.0,
                                stark_shift=-TWO_PI * 5e3)
        fit = fit_effective(synthetic_series(truth), expected_frequency=truth.frequency)
        assert fit.amplitude == 0.0
        assert fit.modulation_amplitude == 0.0
        assert fit.stark_shift == pytest.approx(truth.stark_shift, rel=1e-9)

    def test_too_few_periods(self):
        """Test that fewer than two periods flag the fit."""
        truth = EffectiveSignal(amplitude=TWO_PI * 1000.0, frequency=TWO_PI * 1e6, phase=0.0)
        with pytest.raises(ValueError):
            series = synthetic_series(truth, duration=1e-6)
            fit_effective(series, expected_frequency=truth.frequency)

    def test_too_few_samples(self):
        """Test that too few samples are rejected."""
        truth = EffectiveSignal(amplitude=TWO_PI * 1000.0, frequency=TWO_PI * 1e6, phase=0.0)
        with pytest.raises(ValueError):
            fit_effective(synthetic_series(truth, samples=5))


class TestCompareToPrediction:
    """Tests for compare_to_prediction."""

    def _fit(self, **overrides) -> OracleFit:
        values = dict(amplitude=TWO_PI * 1000.0, frequency=TWO_PI * 1e6, phase=0.5,
                      stark_shift=-TWO_PI * 1e4, modulation_amplitude=2e-3, residual_rms=1e-7,
                      flagged=False, samples=300)
        values.update(overrides)
        return OracleFit(**values)

    def test_within_bounds(self):
        """Test a comparison inside every bound."""
        predicted = EffectiveSignal(TWO_PI * 1020.0, TWO_PI * 1e6, 0.51, -TWO_PI * 1e4)
        comparison = compare_to_prediction(self._fit(), predicted)
        assert comparison.passed
        assert comparison.row("amplitude").error == pytest.approx(20 / 1020)

    def test_amplitude_out_of_bounds(self):
        """Test a 20 % amplitude miss."""
        predicted = EffectiveSignal(TWO_PI * 1200.0, TWO_PI * 1e6, 0.5, -TWO_PI * 1e4)
        comparison = compare_to_prediction(self._fit(), predicted)
        assert not comparison.passed
        assert not comparison.row("amplitude").within

    def test_negative_prediction(self):
        """Test that a negative predicted Ω_e compares by magnitude."""
        predicted = EffectiveSignal(-TWO_PI * 1000.0, TWO_PI * 1e6, 0.5 - math.pi, -TWO_PI * 1e4)
        assert compare_to_prediction(self._fit(), predicted).passed

    def test_flagged_fit_fails(self):
        """Test that a flagged fit never passes."""
        predicted = EffectiveSignal(TWO_PI * 1000.0, TWO_PI * 1e6, 0.5, -TWO_PI * 1e4)
        assert not compare_to_prediction(self._fit(flagged=True), predicted).passed

    def test_zero_amplitude(self):
        """Test a prediction with zero Ω_e."""
        predicted = EffectiveSignal(0.0, TWO_PI * 1e6, 0.0, -TWO_PI * 5e3)
        fit = fit_effective(synthetic_series(predicted), expected_frequency=predicted.frequency)
        comparison = compare_to_prediction(fit, predicted)
        assert comparison.passed
        assert comparison.row("amplitude").fitted == 0.0

    def test_custom_bounds(self):
        """Test loosened acceptance bounds."""
        predicted = EffectiveSignal(TWO_PI * 1200.0, TWO_PI * 1e6, 0.5, -TWO_PI * 1e4)
        loose = AcceptanceBounds(amplitude=0.25)
        assert compare_to_prediction(self._fit(), predicted, loose).passed

    def test_report_dict(self):
        """Test the row order of the report."""
        predicted = EffectiveSignal(TWO_PI * 1000.0, TWO_PI * 1e6, 0.5, -TWO_PI * 1e4)
        report = compare_to_prediction(self._fit(), predicted).to_dict()
        assert [row["quantity"] for row in report["rows"]] == [
            "amplitude", "frequency", "phase", "stark_shift"
        ]


# =============================================================================
# End-to-end oracle
# =============================================================================

def _oracle(signal: FieldTone, bias: FieldTone, nv: NVTwoLevel, duration: float = 6e-6):
    """Integrate, filter, fit and compare one target/bias pair."""
    tones = [signal, bias]
    predicted = down_convert(signal, bias, nv)
    integration = IntegrationConfig(duration=duration)
    trajectory = evolve_lab(SpinState.superposition(), tones, nv, integration)
    cutoff = lowpass_cutoff(tones, nv, predicted.frequency)
    series = accumulated_phase(trajectory, cutoff=cutoff)
    fit = fit_effective(series, expected_frequency=predicted.frequency)
    return trajectory, cutoff, compare_to_prediction(fit, predicted)


class TestOracleAgreement:
    """Lab-frame integration against the closed-form effective tone."""

    def test_scaled_working_point(self, scaled_nv, scaled_tones):
        """Test agreement on the down-scaled working point."""
        trajectory, cutoff, comparison = _oracle(*scaled_tones, scaled_nv)
        assert cutoff == pytest.approx(6e6)
        assert trajectory.max_norm_error < 1e-8
        assert comparison.row("amplitude").error < 0.05
        assert comparison.row("frequency").error < 1e-4
        assert comparison.row("phase").error < 2.0
        assert comparison.row("stark_shift").error < 0.1
        assert not comparison.fit.flagged
        assert comparison.passed

    def test_phase_offsets_carry_through(self, scaled_nv):
        """Test that φ_s − φ_b reaches the fitted phase."""
        signal = FieldTone.from_hz(0.1e6, 51e6, phase_deg=70.0)
        bias = FieldTone.from_hz(1.2e6, 50e6, phase_deg=10.0)
        _, _, comparison = _oracle(signal, bias, scaled_nv)
        assert comparison.passed
        assert math.degrees(comparison.fit.phase) == pytest.approx(60.0, abs=2.0)

    def test_broken_far_detuning_is_flagged(self, scaled_nv):
        """Test that drives 10 MHz from ω₀ fail the comparison."""
        signal = FieldTone.from_hz(0.1e6, 30e6)
        bias = FieldTone.from_hz(1.2e6, 29e6)
        _, cutoff, comparison = _oracle(signal, bias, scaled_nv)
        assert cutoff is None
        assert comparison.fit.flagged
        assert not comparison.passed

    @pytest.mark.slow
    def test_full_frequency_working_point(self, working_signal, working_bias, nv_minus):
        """Test the 2.4 GHz working point at full frequency."""
        _, _, comparison = _oracle(working_signal, working_bias, nv_minus, duration=20e-6)
        assert comparison.row("frequency").error < 1e-3
        assert comparison.passed
