"""Coherently averaged synchronized readout (CASR) trace synthesis.

Each measurement block runs an XY8-k sequence that accumulates a dynamical
phase Φ = Σ Φ_max,i·cos(ω_e,i·t + φ_e,i) from the effective tones present at
the block start time t; the readout is S = ½(1 + C·sin Φ). Blocks repeat
every T_seq, so the readout undersamples the effective tones and folds them
to alias frequencies below f_SR/2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .qfm import EffectiveSignal
from .units import GAMMA_NV, TWO_PI, ArrayLike

logger = logging.getLogger(__name__)

SeedLike = Optional[int]

RESONANCE_TOLERANCE = 0.01


# =============================================================================
# Configuration
# =============================================================================

@dataclass(frozen=True)
class CASRConfig:
    """Pulse-sequence and sampling parameters.

    Attributes:
        k: XY8 repetition count; the block holds N = 8k π pulses
        tau: π-pulse spacing (s)
        t_seq: Full measurement-block duration (s); f_SR = 1/t_seq
        contrast: Readout contrast scale C in (0, 1]
        sigma_sample: Per-sample readout noise in effective-field units (T)
        coherence_time: If set, contrast is scaled by exp(-N·τ/T₂)
        literal_prefactor: Use Φ_max = 4πNΩ_e/ω_e instead of 2NΩ_e/ω_e
    """
    k: int = 6
    tau: float = 0.5e-6
    t_seq: float = 80e-6
    contrast: float = 1.0
    sigma_sample: float = 0.0
    coherence_time: Optional[float] = None
    literal_prefactor: bool = False

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"XY8 repetition count must be >= 1, got {self.k}")
        if self.tau <= 0 or self.t_seq <= 0:
            raise ValueError("Pulse spacing and block duration must be positive")
        if self.n_pulses * self.tau > self.t_seq:
            raise ValueError(
                f"Sensing window {self.n_pulses * self.tau:.3g} s exceeds T_seq {self.t_seq:.3g} s"
            )
        if not 0 < self.contrast <= 1:
            raise ValueError(f"Contrast must lie in (0, 1], got {self.contrast}")
        if self.sigma_sample < 0:
            raise ValueError(f"Noise level must be >= 0, got {self.sigma_sample}")
        if self.coherence_time is not None and self.coherence_time <= 0:
            raise ValueError(f"Coherence time must be > 0, got {self.coherence_time}")

    @property
    def n_pulses(self) -> int:
        return 8 * self.k

    @property
    def sampling_rate(self) -> float:
        """f_SR in Hz."""
        return 1.0 / self.t_seq

    @property
    def sensing_window(self) -> float:
        return self.n_pulses * self.tau

    @property
    def resonance(self) -> float:
        """Effective angular frequency the XY8 filter is centred on, π/τ."""
        return math.pi / self.tau

    @property
    def sequence_frequency(self) -> float:
        """Filter centre 1/(2τ) in Hz."""
        return 0.5 / self.tau

    @property
    def effective_contrast(self) -> float:
        if self.coherence_time is None:
            return self.contrast
        return self.contrast * math.exp(-self.sensing_window / self.coherence_time)

    @property
    def phase_prefactor(self) -> float:
        """Factor p in Φ_max = p·Ω_e/ω_e."""
        return 4.0 * math.pi * self.n_pulses if self.literal_prefactor else 2.0 * self.n_pulses

    def slope(self, omega_e: Optional[float] = None) -> float:
        """Small-signal readout slope dS/dB (contrast per tesla) at the node-aligned phase."""
        omega = self.resonance if omega_e is None else omega_e
        return 0.5 * self.effective_contrast * self.phase_prefactor * GAMMA_NV / omega

    @property
    def noise_contrast(self) -> float:
        """Per-sample noise converted to contrast through the calibrated slope."""
        return self.sigma_sample * self.slope()

    def check_resonance(self, omega_e: float) -> bool:
        """Return True when τ matches π/ω_e within 1 %, warning otherwise."""
        mismatch = abs(self.tau * omega_e / math.pi - 1.0)
        if mismatch > RESONANCE_TOLERANCE:
            logger.warning(
                "Pulse spacing %.4g s is %.1f%% off the effective half-period of %.6g Hz",
                self.tau,
                100 * mismatch,
                omega_e / TWO_PI,
            )
            return False
        return True

    def with_noise_density(self, eta: float) -> "CASRConfig":
        """Copy with σ_sample = η·√f_SR for a noise density η (T/√Hz)."""
        return replace(self, sigma_sample=eta * math.sqrt(self.sampling_rate))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "tau": self.tau,
            "t_seq": self.t_seq,
            "contrast": self.contrast,
            "sigma_sample": self.sigma_sample,
            "coherence_time": self.coherence_time,
            "literal_prefactor": self.literal_prefactor,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CASRConfig":
        return cls(**data)


@dataclass(frozen=True)
class TimeTrace:
    """Uniformly sampled CASR readout.

    Attributes:
        start_time: Time of the first block (s)
        period: Sample period, equal to T_seq (s)
        samples: Readout contrast per block
        config: Sequence configuration the trace was produced with
        signals: Effective tones that were present
        seed: Noise seed, if noise was injected
    """
    start_time: float
    period: float
    samples: np.ndarray = field(repr=False)
    config: CASRConfig = field(default_factory=CASRConfig)
    signals: Tuple[EffectiveSignal, ...] = ()
    seed: SeedLike = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=float))
        object.__setattr__(self, "signals", tuple(self.signals))
        if self.period <= 0:
            raise ValueError(f"Sample period must be > 0, got {self.period}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.period * np.arange(len(self))

    @property
    def duration(self) -> float:
        return len(self) * self.period

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.period

    def centered(self) -> np.ndarray:
        """Samples with the mean removed."""
        return self.samples - self.samples.mean()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "start_time": self.start_time,
            "period": self.period,
            "samples": self.samples.tolist(),
            "config": self.config.to_dict(),
            "signals": [s.to_dict() for s in self.signals],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TimeTrace":
        return cls(
            start_time=data["start_time"],
            period=data["period"],
            samples=np.asarray(data["samples"], dtype=float),
            config=CASRConfig.from_dict(data.get("config", {})),
            signals=tuple(EffectiveSignal.from_dict(s) for s in data.get("signals", [])),
            seed=data.get("seed"),
        )


# =============================================================================
# Operations
# =============================================================================

def max_phase(effective: EffectiveSignal, cfg: CASRConfig) -> float:
    """Peak accumulated phase per block, Φ_max = 2NΩ_e/ω_e (signed)."""
    if effective.frequency <= 0:
        raise ValueError(f"Effective frequency must be > 0, got {effective.frequency}")
    return cfg.phase_prefactor * effective.amplitude / effective.frequency


def accumulated_phase(
    t: ArrayLike, signals: Sequence[EffectiveSignal], cfg: CASRConfig
) -> np.ndarray:
    """Σ Φ_max,i·cos(ω_e,i·t + φ_e,i) for block start times ``t``."""
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for effective in signals:
        total += max_phase(effective, cfg) * np.cos(effective.frequency * t + effective.phase)
    return total


def envelope(t: ArrayLike, signals: Sequence[EffectiveSignal], cfg: CASRConfig) -> np.ndarray:
    """Noiseless readout S(t) = ½(1 + C·sin Φ(t)), in [0, 1]."""
    return 0.5 * (1.0 + cfg.effective_contrast * np.sin(accumulated_phase(t, signals, cfg)))


def simulate_trace(
    signals: Sequence[EffectiveSignal],
    cfg: CASRConfig,
    duration: float,
    seed: SeedLike = None,
    start_time: float = 0.0,
) -> TimeTrace:
    """Sample the envelope once per block and add Gaussian readout noise.

    Args:
        signals: Effective tones present during the run
        cfg: Sequence configuration; ``cfg.sigma_sample`` sets the noise
        duration: Acquisition time (s), at least one block
        seed: RNG seed; identical inputs and seed give identical traces
        start_time: Time of the first block (s)

    Returns:
        TimeTrace with round(duration·f_SR) samples
    """
    if duration < cfg.t_seq:
        raise ValueError(f"Duration {duration} s is shorter than one block ({cfg.t_seq} s)")
    for effective in signals:
        cfg.check_resonance(effective.frequency)

    n_samples = int(round(duration * cfg.sampling_rate))
    trace = TimeTrace(
        start_time=start_time,
        period=cfg.t_seq,
        samples=np.zeros(n_samples),
        config=cfg,
        signals=tuple(signals),
        seed=seed,
    )
    samples = envelope(trace.times, signals, cfg)
    if cfg.sigma_sample > 0:
        rng = np.random.default_rng(seed)
        samples = samples + rng.normal(0.0, cfg.noise_contrast, size=n_samples)
    logger.debug("Simulated %d samples over %.3g s", n_samples, duration)
    return replace(trace, samples=samples)


def alias_frequency(f_e: float, f_sr: float) -> Tuple[float, int]:
    """Fold an effective frequency into the first Nyquist zone of the readout.

    ``n`` is the integer nearest to f_e/f_SR, with exact half-integer ties
    rounded to even.

    Returns:
        (f_a, n) with f_a = |f_e − n·f_SR| ≤ f_SR/2
    """
    if f_e <= 0 or f_sr <= 0:
        raise ValueError("Frequencies must be positive")
    n = int(round(f_e / f_sr))
    return abs(f_e - n * f_sr), n


def alias_candidates(f_a: float, n: int, f_sr: float) -> List[float]:
    """Effective frequencies that fold onto ``f_a`` at harmonic ``n`` (both branches)."""
    upper = n * f_sr + f_a
    lower = n * f_sr - f_a
    return [upper] if f_a == 0 else [upper, lower]


def alias_side(f_e: float, f_sr: float) -> int:
    """+1 when f_e sits above n·f_SR, -1 below."""
    _, n = alias_frequency(f_e, f_sr)
    return 1 if f_e >= n * f_sr else -1


def sample_seed(base: int, index: Union[int, Sequence[int]]) -> int:
    """Derive a reproducible per-run seed from a base seed and an index."""
    entropy = [base] + ([index] if isinstance(index, int) else list(index))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
