"""Random symbol timelines, emission schedules and Poisson observation traces.

All times live on the receiver's sampling grid ``t_n = n * dt`` and are
stored as integer sample indices; ``*_seconds`` accessors convert back.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ExpectedSignal
from .errors import ConfigurationError


class Framework(str, enum.Enum):
    F1 = "F1"  # type-B synchronizes, type-A carries data (OOK)
    F2 = "F2"  # MoSK: type-A for 1, type-B for 0, joint sync/detection


@dataclass(frozen=True)
class TimelineConfig:
    mean_symbol_duration: float = 2e-3
    alpha: float = 0.2
    block_length: int = 20
    sample_step: float = 50e-6

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ConfigurationError("alpha must satisfy 0 <= alpha < 1 (T_min > 0)")
        if self.block_length < 1:
            raise ConfigurationError("block length must be >= 1")
        if not (self.sample_step > 0 and self.mean_symbol_duration > 0):
            raise ConfigurationError("durations must be positive")
        ratio = self.mean_symbol_duration / self.sample_step
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigurationError(
                f"sample step {self.sample_step} does not divide mean symbol duration "
                f"{self.mean_symbol_duration}"
            )
        if self.n_min < 1:
            raise ConfigurationError("T_min is shorter than one sample")

    @property
    def samples_per_symbol(self) -> int:
        return int(round(self.mean_symbol_duration / self.sample_step))

    @property
    def t_min(self) -> float:
        return (1.0 - self.alpha) * self.mean_symbol_duration

    @property
    def t_max(self) -> float:
        return (1.0 + self.alpha) * self.mean_symbol_duration

    @property
    def n_min(self) -> int:
        """Shortest interval in samples (grid points inside [T_min, T_max])."""
        return int(math.ceil(self.t_min / self.sample_step - 1e-9))

    @property
    def n_max(self) -> int:
        return int(math.floor(self.t_max / self.sample_step + 1e-9))


@dataclass(frozen=True)
class SymbolTimeline:
    """Ground truth for one block; ``starts[k-1]`` is t_s[k] in samples."""

    dt: float
    starts: np.ndarray
    bits: np.ndarray
    a: np.ndarray | None = None
    b: np.ndarray | None = None

    @property
    def start_seconds(self) -> np.ndarray:
        return self.starts * self.dt

    def __len__(self) -> int:
        return int(self.starts.size)


@dataclass(frozen=True)
class ObservationTrace:
    dt: float
    counts_a: np.ndarray
    counts_b: np.ndarray

    def __len__(self) -> int:
        return int(self.counts_a.size)


@dataclass(frozen=True)
class BlockStreams:
    """Independent generators for one block, in the fixed order of use."""

    gaps: np.random.Generator
    bits: np.random.Generator
    counts_a: np.random.Generator
    counts_b: np.random.Generator


def block_streams(master_seed: int, block: int, namespace: int = 0, point: int = 0) -> BlockStreams:
    """Derive the block's substreams from ``(master_seed, namespace, point, block)``."""
    root = np.random.SeedSequence(entropy=master_seed, spawn_key=(namespace, point, block))
    gens = [np.random.default_rng(s) for s in root.spawn(4)]
    return BlockStreams(*gens)


def sample_timeline(
    config: TimelineConfig,
    rng: np.random.Generator,
    bit_rng: np.random.Generator | None = None,
) -> SymbolTimeline:
    """Draw start times and equiprobable bits; bits come from ``rng`` unless given."""
    k = config.block_length
    gaps = rng.integers(config.n_min, config.n_max + 1, size=k)
    starts = np.cumsum(gaps)  # anchor t_s[0] = 0
    bits = (bit_rng or rng).integers(0, 2, size=k)
    return SymbolTimeline(config.sample_step, starts.astype(np.int64), bits.astype(np.int64))


def emission_schedule(timeline: SymbolTimeline, framework: Framework | str) -> SymbolTimeline:
    framework = Framework(framework)
    a = timeline.bits.copy()
    if framework is Framework.F1:
        b = np.ones_like(timeline.bits)
    else:
        b = 1 - timeline.bits
    return replace(timeline, a=a, b=b)


def trace_length(timeline: SymbolTimeline, config: TimelineConfig, horizon_samples: int) -> int:
    """Samples needed to cover ``[0, t_s[K] + T_max + CIR horizon]``."""
    last = int(timeline.starts[-1]) if len(timeline) else 0
    return last + config.n_max + horizon_samples + 1


def sample_observations(
    expected_a: ExpectedSignal,
    expected_b: ExpectedSignal,
    rng: np.random.Generator,
    rng_b: np.random.Generator | None = None,
) -> ObservationTrace:
    """Independent Poisson counts per sample; type-B uses ``rng_b`` when given."""
    if expected_a.dt != expected_b.dt or expected_a.signal.shape != expected_b.signal.shape:
        raise ConfigurationError("expected signals must share the sampling grid")
    ra = rng.poisson(expected_a.mean)
    rb = (rng_b or rng).poisson(expected_b.mean)
    return ObservationTrace(expected_a.dt, ra.astype(np.int64), rb.astype(np.int64))
