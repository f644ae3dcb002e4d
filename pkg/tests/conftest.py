"""Shared fixtures for qfm-casr tests."""

import tempfile
from pathlib import Path

import pytest

from qfmcasr.core.qfm import Branch, FieldTone, NVTwoLevel
from qfmcasr.core.units import TWO_PI


# Down-scaled mixing problem the lab-frame integrator handles in well under a
# second: ω₀ = 20 MHz, bias 50 MHz, signal 51 MHz, ω_e = 1 MHz.
SCALED_ORACLE_YAML = """
nv:
  resonance_hz: 2.0e+7
bias:
  amplitude_hz: 1.2e+6
  frequency_hz: 5.0e+7
signals:
  - amplitude_hz: 1.0e+5
    frequency_hz: 5.1e+7
oracle:
  duration_s: 6.0e-6
  frame: lab
  record_stride: 100
"""

# Same drives pulled to 10 MHz from the resonance; the far-detuning condition breaks.
BROKEN_ORACLE_YAML = """
nv:
  resonance_hz: 2.0e+7
bias:
  amplitude_hz: 1.2e+6
  frequency_hz: 2.9e+7
signals:
  - amplitude_hz: 1.0e+5
    frequency_hz: 3.0e+7
oracle:
  duration_s: 6.0e-6
  frame: lab
  record_stride: 100
"""


@pytest.fixture
def temp_dir():
    """Create a temporary directory for tests."""
    with tempfile.TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def nv_minus():
    """Default |0⟩ ↔ |−1⟩ subsystem at 2.29 GHz."""
    return NVTwoLevel.default(Branch.MINUS_ONE)


@pytest.fixture
def working_bias():
    """4.3 MHz bias 1 MHz below the 2.4 GHz target."""
    return FieldTone.from_hz(4.3e6, 2.399e9)


@pytest.fixture
def working_signal():
    """0.21 MHz target 3125 Hz above 2.4 GHz."""
    return FieldTone.from_hz(0.21e6, 2.4e9 + 3125.0)


@pytest.fixture
def scaled_nv():
    """20 MHz resonance for the down-scaled oracle."""
    return NVTwoLevel(resonance=TWO_PI * 20e6)


@pytest.fixture
def scaled_oracle_yaml():
    return SCALED_ORACLE_YAML


@pytest.fixture
def broken_oracle_yaml():
    return BROKEN_ORACLE_YAML
