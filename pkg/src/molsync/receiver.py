"""Receiver-side knowledge shared by the Framework 1 and Framework 2 steps.

Everything is expressed on the sample grid. Hypothesis ``t`` for the start
of symbol ``k`` ranges over ``s + [n_min, n_max]`` where ``s`` is the previous
estimate; the likelihood window is ``s + [n_min, 2 n_min]``. Both offsets are
relative to ``s``, so the CIR contribution of every hypothesis to every window
sample is a fixed matrix computed once per link.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .channel import Cir
from .errors import ConfigurationError
from .timeline import TimelineConfig


class Scheme(str, enum.Enum):
    ML = "ML"
    LF = "LF"
    PO = "PO"
    TT = "TT"
    PERFECT = "PERFECT"  # detection with the true start times


@dataclass(frozen=True)
class SchemeParams:
    """Scheme selector plus the threshold-trigger knobs.

    ``threshold`` is in molecules for Framework 1 and in normalized units
    (count / c_x) for Framework 2. ``min_window`` is in samples and
    defaults to T_min.
    """

    scheme: Scheme = Scheme.ML
    threshold: float | None = None
    min_window: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.scheme is Scheme.TT:
            if self.threshold is None or not self.threshold > 0:
                raise ConfigurationError("threshold-trigger needs a threshold > 0")


@dataclass(frozen=True)
class NormConstants:
    """Per-type normalization ``c_x = z_x + max_t N_x P_x(t)`` and peak offsets (samples)."""

    c_a: float
    c_b: float
    peak_a: int
    peak_b: int


def hypothesis_matrix(kernel: np.ndarray, n_min: int, n_max: int) -> np.ndarray:
    """CIR value at window sample ``s + j`` (j in [n_min, 2 n_min]) for start ``s + h``."""
    hyps = np.arange(n_min, n_max + 1)
    window = np.arange(n_min, 2 * n_min + 1)
    lag = window[None, :] - hyps[:, None]
    valid = (lag >= 0) & (lag < kernel.size)
    out = np.zeros(lag.shape)
    out[valid] = kernel[lag[valid]]
    return out


@dataclass(frozen=True)
class ReceiverModel:
    n_min: int
    n_max: int
    n_mean: int
    kernel_a: np.ndarray
    kernel_b: np.ndarray
    noise_a: float
    noise_b: float
    norms: NormConstants
    params: SchemeParams
    hyp_a: np.ndarray = field(repr=False)
    hyp_b: np.ndarray = field(repr=False)

    @classmethod
    def build(
        cls,
        cir_a: Cir,
        cir_b: Cir,
        noise_a: float,
        noise_b: float,
        timeline: TimelineConfig,
        params: SchemeParams = SchemeParams(),
    ) -> "ReceiverModel":
        if not (noise_a > 0 and noise_b > 0):
            raise ConfigurationError("noise means must be > 0 (log of a zero Poisson mean)")
        n_min, n_max = timeline.n_min, timeline.n_max
        if params.scheme in (Scheme.ML, Scheme.LF) and n_max > 2 * n_min:
            raise ConfigurationError(
                f"{params.scheme.value} needs T_max <= 2 T_min (got {n_max} > 2*{n_min} samples)"
            )
        min_window = n_min if params.min_window is None else params.min_window
        if not 0 < min_window <= n_min:
            raise ConfigurationError("minimum detection window must satisfy 0 < T_dw <= T_min")
        if min_window != params.min_window:
            params = SchemeParams(params.scheme, params.threshold, min_window)
        dt = timeline.sample_step
        ka, kb = cir_a.kernel(dt), cir_b.kernel(dt)
        for k in (ka, kb):
            k.flags.writeable = False
        norms = NormConstants(
            c_a=noise_a + float(ka.max()),
            c_b=noise_b + float(kb.max()),
            peak_a=int(np.argmax(ka)),
            peak_b=int(np.argmax(kb)),
        )
        return cls(
            n_min=n_min,
            n_max=n_max,
            n_mean=timeline.samples_per_symbol,
            kernel_a=ka,
            kernel_b=kb,
            noise_a=float(noise_a),
            noise_b=float(noise_b),
            norms=norms,
            params=params,
            hyp_a=hypothesis_matrix(ka, n_min, n_max),
            hyp_b=hypothesis_matrix(kb, n_min, n_max),
        )

    @property
    def horizon(self) -> int:
        return max(self.kernel_a.size, self.kernel_b.size)

    @property
    def min_window(self) -> int:
        assert self.params.min_window is not None
        return self.params.min_window

    @property
    def threshold(self) -> float:
        if self.params.threshold is None:
            raise ConfigurationError("no threshold configured")
        return self.params.threshold

    def hypotheses(self, prev_start: int) -> np.ndarray:
        return prev_start + np.arange(self.n_min, self.n_max + 1)

    def window(self, prev_start: int, n_samples: int) -> slice:
        """Likelihood window ``[s + n_min, s + 2 n_min]`` cropped to the trace."""
        lo = prev_start + self.n_min
        hi = min(prev_start + 2 * self.n_min + 1, n_samples)
        return slice(lo, max(lo, hi))


@dataclass
class SyncState:
    """Decision-directed receiver state for one block.

    ``background_*`` holds the reconstructed contribution of every release
    already decided, so hypothesis means are ``background + CIR(hypothesis)``.
    """

    background_a: np.ndarray
    background_b: np.ndarray
    starts: list[int] = field(default_factory=list)
    bits: list[int] = field(default_factory=list)
    ends: list[int] = field(default_factory=list)

    @classmethod
    def empty(cls, n_samples: int) -> "SyncState":
        return cls(np.zeros(n_samples), np.zeros(n_samples))

    @property
    def n_samples(self) -> int:
        return int(self.background_a.size)

    @property
    def prev_start(self) -> int:
        return self.starts[-1] if self.starts else 0

    @property
    def prev_end(self) -> int:
        return self.ends[-1] if self.ends else 0

    def add_release(self, background: np.ndarray, kernel: np.ndarray, start: int) -> None:
        n = background.size
        if start >= n:
            return
        stop = min(n, start + kernel.size)
        background[start:stop] += kernel[: stop - start]
