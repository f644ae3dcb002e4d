"""Physical constants and unit conversions.

Frequencies and drive amplitudes are angular frequencies (rad/s) everywhere
inside the package; hertz, tesla and degrees appear only at I/O boundaries.
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

TWO_PI = 2.0 * math.pi

# NV electron gyromagnetic ratio (g ~ 2), rad/s/T
GAMMA_NV = TWO_PI * 28.024e9

# Ground-state zero-field splitting
NV_ZERO_FIELD_SPLITTING = TWO_PI * 2.87e9

# Transition frequencies at the 20.7 mT working point
OMEGA_MINUS_ONE = TWO_PI * 2.29e9
OMEGA_PLUS_ONE = TWO_PI * 3.45e9

# Ensemble coherence times
T2_STAR = 1.5e-6
T2_HAHN = 10e-6
T2_XY8_6 = 50e-6


def hz_to_angular(f: ArrayLike) -> ArrayLike:
    return TWO_PI * f


def angular_to_hz(omega: ArrayLike) -> ArrayLike:
    return omega / TWO_PI


def tesla_to_angular(b: ArrayLike) -> ArrayLike:
    """Field amplitude (T) to Rabi amplitude (rad/s)."""
    return GAMMA_NV * b


def angular_to_tesla(omega: ArrayLike) -> ArrayLike:
    """Rabi amplitude (rad/s) to field amplitude (T)."""
    return omega / GAMMA_NV


def normalize_phase(phase: float) -> float:
    """Map a phase onto [0, 2π)."""
    wrapped = math.fmod(phase, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    # fmod of a tiny negative number can round up to exactly 2π
    if wrapped >= TWO_PI:
        wrapped = 0.0
    return wrapped


def wrap_phase(phase: ArrayLike) -> ArrayLike:
    """Map phases onto (-π, π]."""
    wrapped = np.angle(np.exp(1j * np.asarray(phase, dtype=float)))
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped
