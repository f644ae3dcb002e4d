"""Unit tests for the closed-form frequency-mixing model."""

import math

import numpy as np
import pytest

from qfmcasr.core.errors import DegenerateFrequencyError, NumericalError, PoleError
from qfmcasr.core.qfm import (
    Branch,
    EffectiveSignal,
    FieldTone,
    NVTwoLevel,
    down_convert,
    down_convert_all,
    effective_amplitude,
    multi_tone_stark_shift,
    stark_shift,
    validity_check,
)
from qfmcasr.core.units import OMEGA_MINUS_ONE, OMEGA_PLUS_ONE, TWO_PI


# =============================================================================
# Domain Types
# =============================================================================

class TestFieldTone:
    """Tests for FieldTone."""

    def test_from_hz_converts_to_angular(self):
        """Test that Hz and degree inputs become angular units."""
        tone = FieldTone.from_hz(4.3e6, 2.399e9, phase_deg=90.0)
        assert tone.amplitude == pytest.approx(TWO_PI * 4.3e6)
        assert tone.frequency == pytest.approx(TWO_PI * 2.399e9)
        assert tone.phase == pytest.approx(math.pi / 2)

    def test_phase_is_normalized(self):
        """Test that negative phases wrap into [0, 2π)."""
        tone = FieldTone(amplitude=1.0, frequency=1.0, phase=-math.pi / 2)
        assert tone.phase == pytest.approx(1.5 * math.pi)

    def test_rejects_negative_amplitude(self):
        """Test that a negative amplitude is rejected."""
        with pytest.raises(ValueError):
            FieldTone(amplitude=-1.0, frequency=1.0)

    def test_rejects_non_positive_frequency(self):
        """Test that a zero frequency is rejected."""
        with pytest.raises(ValueError):
            FieldTone(amplitude=1.0, frequency=0.0)

    def test_dict_round_trip(self):
        """Test serialization to and from dict."""
        tone = FieldTone.from_hz(1e4, 2.4e9, 30.0)
        assert FieldTone.from_dict(tone.to_dict()) == tone


class TestNVTwoLevel:
    """Tests for the two-level subsystem."""

    def test_default_resonances(self):
        """Test the default resonance of each branch."""
        assert NVTwoLevel.default(Branch.MINUS_ONE).resonance == OMEGA_MINUS_ONE
        assert NVTwoLevel.default(Branch.PLUS_ONE).resonance == OMEGA_PLUS_ONE

    def test_from_bias_field_matches_working_point(self):
        """20.7 mT puts the -1 line at 2.29 GHz and the +1 line at 3.45 GHz."""
        minus = NVTwoLevel.from_bias_field(20.7e-3, Branch.MINUS_ONE)
        plus = NVTwoLevel.from_bias_field(20.7e-3, Branch.PLUS_ONE)
        assert minus.resonance / TWO_PI == pytest.approx(2.29e9, rel=1e-3)
        assert plus.resonance / TWO_PI == pytest.approx(3.45e9, rel=1e-3)
        assert minus.bias_field == 20.7e-3

    def test_branch_accepts_string(self):
        """Test that the branch can be given by its value."""
        nv = NVTwoLevel(resonance=1.0, branch="plus_one")
        assert nv.branch is Branch.PLUS_ONE

    def test_rejects_field_beyond_crossing(self):
        """Test that a field pushing the -1 line below zero is rejected."""
        with pytest.raises(ValueError):
            NVTwoLevel.from_bias_field(0.2, Branch.MINUS_ONE)


# =============================================================================
# Effective amplitude
# =============================================================================

class TestEffectiveAmplitude:
    """Tests for effective_amplitude."""

    def test_working_point_attenuation(self, working_signal, working_bias, nv_minus):
        """A 2.4 GHz target is reduced by about a factor of 50."""
        signal = FieldTone.from_hz(0.21e6, 2.4e9)
        ratio = abs(effective_amplitude(signal, working_bias, nv_minus)) / signal.amplitude
        assert ratio == pytest.approx(0.0192, abs=2e-4)
        assert 1.0 / ratio == pytest.approx(50.0, rel=0.05)

    def test_zero_signal_gives_zero(self, working_bias, nv_minus):
        """Test that a silent target gives no effective signal."""
        signal = FieldTone.from_hz(0.0, 2.4e9)
        assert effective_amplitude(signal, working_bias, nv_minus) == 0.0

    def test_pole_on_signal(self, working_bias, nv_minus):
        """Test that a target on ω₀ raises PoleError."""
        signal = FieldTone(amplitude=1.0, frequency=nv_minus.resonance)
        with pytest.raises(PoleError):
            effective_amplitude(signal, working_bias, nv_minus)

    def test_pole_on_bias(self, working_signal, nv_minus):
        """Test that a bias on ω₀ raises PoleError."""
        bias = FieldTone(amplitude=1.0, frequency=nv_minus.resonance)
        with pytest.raises(PoleError):
            effective_amplitude(working_signal, bias, nv_minus)

    def test_pole_error_is_numerical(self):
        """Test that PoleError maps to the numerical exit code."""
        assert issubclass(PoleError, NumericalError)
        assert PoleError.exit_code == 6

    def test_symmetric_under_swap(self, working_signal, working_bias, nv_minus):
        """Test that swapping target and bias leaves Ω_e unchanged."""
        forward = effective_amplitude(working_signal, working_bias, nv_minus)
        backward = effective_amplitude(working_bias, working_signal, nv_minus)
        assert backward == pytest.approx(forward, rel=1e-14)

    def test_bilinear(self, working_signal, working_bias, nv_minus):
        """Ω_e scales linearly with each amplitude separately."""
        rng = np.random.default_rng(7)
        base = effective_amplitude(working_signal, working_bias, nv_minus)
        for scale_s, scale_b in rng.uniform(0.1, 10.0, size=(5, 2)):
            signal = working_signal.with_amplitude(working_signal.amplitude * scale_s)
            bias = working_bias.with_amplitude(working_bias.amplitude * scale_b)
            scaled = effective_amplitude(signal, bias, nv_minus)
            assert scaled == pytest.approx(base * scale_s * scale_b, rel=1e-12)

    def test_low_frequency_plateau(self, nv_minus):
        """Far below ω₀ the transfer is Ω_b/ω₀."""
        bias = FieldTone.from_hz(4.3e6, 9e6)
        signal = FieldTone.from_hz(1.0, 10e6)
        ratio = abs(effective_amplitude(signal, bias, nv_minus)) / signal.amplitude
        assert ratio == pytest.approx(bias.amplitude / nv_minus.resonance, rel=0.01)

    def test_sign_change_across_resonance(self, nv_minus):
        """Test that Ω_e flips sign as the target crosses ω₀."""
        bias = FieldTone.from_hz(4.3e6, 1e9)
        f0 = nv_minus.resonance / TWO_PI
        below = effective_amplitude(FieldTone.from_hz(1e4, f0 - 10e6), bias, nv_minus)
        above = effective_amplitude(FieldTone.from_hz(1e4, f0 + 10e6), bias, nv_minus)
        assert below < 0 < above

    def test_negative_below_both_resonances(self, nv_minus):
        """At 0.6 GHz both tones sit below ω₀ and Ω_e comes out negative."""
        bias = FieldTone.from_hz(4.3e6, 0.599e9)
        signal = FieldTone.from_hz(5e4, 0.6e9 + 2000.0)
        assert effective_amplitude(signal, bias, nv_minus) < 0


# =============================================================================
# Stark shift
# =============================================================================

class TestStarkShift:
    """Tests for the AC Stark shift."""

    def test_no_drive_no_shift(self, nv_minus):
        """Test that zero amplitudes give zero shift."""
        signal = FieldTone.from_hz(0.0, 2.4e9)
        bias = FieldTone.from_hz(0.0, 2.399e9)
        assert stark_shift(signal, bias, nv_minus) == 0.0

    def test_working_point_regression(self, working_signal, working_bias, nv_minus):
        """δ ≈ −2π·82.9 kHz for the 2.4 GHz working point."""
        delta = stark_shift(working_signal, working_bias, nv_minus) / TWO_PI
        expected = -(4.3e6**2) * 2.29e9 / ((2.399e9 - 2.29e9) * (2.399e9 + 2.29e9)) - (
            0.21e6**2
        ) * 2.29e9 / ((2.400003125e9 - 2.29e9) * (2.400003125e9 + 2.29e9))
        assert delta == pytest.approx(expected, rel=1e-9)
        assert delta == pytest.approx(-82.9e3, rel=0.01)

    def test_vanishes_at_high_frequency(self, nv_minus):
        """Test that the shift shrinks as both tones move far above ω₀."""
        w0 = nv_minus.resonance / TWO_PI
        shifts = []
        for factor in (10.0, 100.0, 1000.0):
            signal = FieldTone.from_hz(1e4, factor * w0 + 1e6)
            bias = FieldTone.from_hz(4.3e6, factor * w0)
            shifts.append(abs(stark_shift(signal, bias, nv_minus)))
        assert shifts[0] > shifts[1] > shifts[2]

    def test_multi_tone_adds_signal_terms(self, working_signal, working_bias, nv_minus):
        """Test that each signal adds its own Ω² term to the bias shift."""
        second = working_signal.with_amplitude(2 * working_signal.amplitude)
        single = stark_shift(working_signal, working_bias, nv_minus)
        bias_only = multi_tone_stark_shift([], working_bias, nv_minus)
        both = multi_tone_stark_shift([working_signal, second], working_bias, nv_minus)
        signal_term = single - bias_only
        assert both - bias_only == pytest.approx(5 * signal_term, rel=1e-9)


# =============================================================================
# Down-conversion
# =============================================================================

class TestDownConvert:
    """Tests for down_convert."""

    def test_working_point_effective_frequency(self, working_signal, working_bias, nv_minus):
        """Test that ω_e is exactly ω_s − ω_b."""
        effective = down_convert(working_signal, working_bias, nv_minus)
        assert effective.frequency / TWO_PI == pytest.approx(1.003125e6, rel=1e-12)
        assert not effective.folded

    def test_low_frequency_target(self, nv_minus):
        """Test down-conversion of a 0.6 GHz target."""
        signal = FieldTone.from_hz(5e4, 0.6e9 + 2000.0)
        bias = FieldTone.from_hz(4.3e6, 0.599e9)
        effective = down_convert(signal, bias, nv_minus)
        assert effective.frequency / TWO_PI == pytest.approx(1.002e6, rel=1e-12)

    def test_equal_phases_give_zero(self, nv_minus):
        """Test that φ_e is zero when target and bias share a phase."""
        signal = FieldTone.from_hz(1e4, 2.4e9, phase_deg=37.0)
        bias = FieldTone.from_hz(4.3e6, 2.399e9, phase_deg=37.0)
        assert down_convert(signal, bias, nv_minus).phase == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_frequencies(self, nv_minus):
        """Test that tones closer than the frequency floor are rejected."""
        signal = FieldTone.from_hz(1e4, 2.4e9)
        bias = FieldTone.from_hz(4.3e6, 2.4e9 + 0.5)
        with pytest.raises(DegenerateFrequencyError):
            down_convert(signal, bias, nv_minus)

    def test_fold_keeps_waveform(self, nv_minus):
        """A signal below the bias folds without changing Ω_e·cos(ω_e t + φ_e)."""
        signal = FieldTone.from_hz(1e4, 2.399e9, phase_deg=20.0)
        bias = FieldTone.from_hz(4.3e6, 2.4e9 + 3125.0, phase_deg=75.0)
        effective = down_convert(signal, bias, nv_minus)
        assert effective.folded
        assert effective.frequency > 0

        t = np.random.default_rng(3).uniform(0.0, 1e-3, size=1000)
        unfolded = effective.amplitude * np.cos(
            (signal.frequency - bias.frequency) * t + (signal.phase - bias.phase)
        )
        np.testing.assert_allclose(
            effective.value(t), unfolded, rtol=0, atol=1e-9 * abs(effective.amplitude)
        )

    def test_swap_negates_frequency_and_phase(self, working_signal, working_bias, nv_minus):
        """Swapping tones keeps Ω_e and, after folding, the same effective tone."""
        forward = down_convert(working_signal.with_phase(0.4), working_bias, nv_minus)
        backward = down_convert(working_bias, working_signal.with_phase(0.4), nv_minus)
        assert backward.folded and not forward.folded
        assert backward.amplitude == pytest.approx(forward.amplitude, rel=1e-14)
        assert backward.frequency == pytest.approx(forward.frequency, rel=1e-12)
        assert backward.phase == pytest.approx(forward.phase, abs=1e-12)

    def test_down_convert_all_shares_stark_shift(self, working_signal, working_bias, nv_minus):
        """Test that every effective tone carries the shift of the whole list."""
        second = FieldTone.from_hz(0.21e6, 2.4e9 + 3126.0)
        effective = down_convert_all([working_signal, second], working_bias, nv_minus)
        expected = multi_tone_stark_shift([working_signal, second], working_bias, nv_minus)
        assert [e.stark_shift for e in effective] == [expected, expected]
        assert effective[1].frequency - effective[0].frequency == pytest.approx(TWO_PI, rel=1e-5)

    def test_effective_signal_dict_round_trip(self, working_signal, working_bias, nv_minus):
        """Test serialization of EffectiveSignal to and from dict."""
        effective = down_convert(working_signal, working_bias, nv_minus)
        assert EffectiveSignal.from_dict(effective.to_dict()) == effective


# =============================================================================
# Validity
# =============================================================================

class TestValidityCheck:
    """Tests for validity_check."""

    def test_working_point_passes(self, working_signal, working_bias, nv_minus):
        """Test that the 2.4 GHz working point is far detuned."""
        report = validity_check(working_signal, working_bias, nv_minus)
        assert report.passed
        assert report.min_detuning / TWO_PI == pytest.approx(109e6, rel=0.01)

    def test_near_resonance_fails(self, working_bias, nv_minus):
        """Test that a target 1 MHz from ω₀ fails."""
        signal = FieldTone(amplitude=TWO_PI * 1e4, frequency=nv_minus.resonance + TWO_PI * 1e6)
        assert not validity_check(signal, working_bias, nv_minus).passed

    def test_failure_logs_warning(self, working_bias, nv_minus, caplog):
        """Test that a failed check is reported at WARNING level."""
        signal = FieldTone(amplitude=TWO_PI * 1e4, frequency=nv_minus.resonance + TWO_PI * 1e6)
        with caplog.at_level("WARNING", logger="qfmcasr.core.qfm"):
            validity_check(signal, working_bias, nv_minus)
        assert "Far-detuning check failed" in caplog.text

    def test_pass_is_silent(self, working_signal, working_bias, nv_minus, caplog):
        """Test that a passing check logs nothing at WARNING level."""
        with caplog.at_level("WARNING", logger="qfmcasr.core.qfm"):
            validity_check(working_signal, working_bias, nv_minus)
        assert caplog.text == ""

    def test_low_frequency_passes(self, nv_minus):
        """Test that a 10 MHz target is far detuned from 2.29 GHz."""
        signal = FieldTone.from_hz(1e4, 10e6)
        bias = FieldTone.from_hz(4.3e6, 9e6)
        report = validity_check(signal, bias, nv_minus)
        assert report.passed
        assert report.min_detuning / TWO_PI == pytest.approx(2.28e9, rel=0.01)

    def test_threshold_is_strict(self, working_signal, working_bias, nv_minus):
        """Test that a ratio equal to the threshold fails."""
        report = validity_check(working_signal, working_bias, nv_minus)
        at_limit = validity_check(
            working_signal, working_bias, nv_minus, threshold=report.max_ratio
        )
        assert not at_limit.passed

    def test_never_raises_on_resonance(self, working_bias, nv_minus):
        """Test that a target on ω₀ is reported, not raised."""
        signal = FieldTone(amplitude=1.0, frequency=nv_minus.resonance)
        report = validity_check(signal, working_bias, nv_minus)
        assert not report.passed
        assert report.to_dict()["passed"] is False
