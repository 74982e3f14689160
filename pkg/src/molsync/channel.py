"""Channel impulse responses and expected bound-molecule counts.

A :class:`Cir` is a tabulated expected count ``p(t)`` for one release of one
molecule type. The default model is the transparent spherical receiver
in an unbounded 3-D medium; any other receiver model can be supplied as a
two-column CSV table and is used the same way.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import CirFormatError, ConfigurationError

# Tail cut: samples after the peak are kept while p(t) >= CUTOFF * peak.
TAIL_CUTOFF = 1e-4


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def linear_to_db(value: float) -> float:
    return 10.0 * math.log10(value)


@dataclass(frozen=True)
class ChannelParams:
    """Physical parameters for one molecule type.

    Attributes:
        diffusion_coefficient: D in m^2/s.
        distance: transmitter to receiver-centre distance r0 in m.
        receiver_radius: rr in m.
        release_count: molecules released per emission (N_x).
        noise_mean: expected number of external noise molecules bound (z_x).
    """

    diffusion_coefficient: float = 5e-9
    distance: float = 2e-6
    receiver_radius: float = 1e-6
    release_count: float = 1000.0
    noise_mean: float = 5.0

    def __post_init__(self) -> None:
        if not self.diffusion_coefficient > 0:
            raise ConfigurationError("diffusion coefficient must be positive")
        if not self.distance > self.receiver_radius > 0:
            raise ConfigurationError("need distance > receiver_radius > 0")
        if self.release_count < 0 or self.noise_mean < 0:
            raise ConfigurationError("release count and noise mean must be >= 0")

    @property
    def peak_time(self) -> float:
        """Analytic peak of the transparent-receiver CIR, r0^2 / (6 D)."""
        return self.distance**2 / (6.0 * self.diffusion_coefficient)


@dataclass(frozen=True)
class Cir:
    """Tabulated channel impulse response.

    ``times`` are strictly increasing and start at 0 with ``values[0] == 0``.
    Lookups past the last tabulated time return 0.
    """

    times: np.ndarray
    values: np.ndarray
    peak_time: float = field(init=False)
    peak_value: float = field(init=False)

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape or times.size == 0:
            raise ConfigurationError("CIR needs matching non-empty 1-D arrays")
        if times[0] != 0.0 or values[0] != 0.0:
            raise ConfigurationError("CIR must start at t = 0 with p(0) = 0")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("CIR times must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ConfigurationError("CIR values must be finite and >= 0")
        times.flags.writeable = False
        values.flags.writeable = False
        peak = int(np.argmax(values))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "peak_time", float(times[peak]))
        object.__setattr__(self, "peak_value", float(values[peak]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Cir):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(
            self.values, other.values
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def scaled(self, factor: float) -> "Cir":
        if factor < 0:
            raise ConfigurationError("CIR scale factor must be >= 0")
        return Cir(self.times, self.values * factor)

    def evaluate(self, t: np.ndarray | float) -> np.ndarray:
        """Nearest-sample lookup; 0 for t < 0 or t beyond the table."""
        t = np.asarray(t, dtype=float)
        last = self.times.size - 1
        idx = np.searchsorted(self.times, t)
        hi = np.clip(idx, 0, last)
        lo = np.clip(idx - 1, 0, last)
        nearest = np.where(np.abs(t - self.times[lo]) <= np.abs(self.times[hi] - t), lo, hi)
        out = self.values[nearest]
        return np.where((t < 0) | (t > self.horizon), 0.0, out)

    def kernel(self, dt: float, length: int | None = None) -> np.ndarray:
        """CIR sampled at lags ``m * dt`` for ``m = 0 .. length-1``."""
        if length is None:
            length = int(math.floor(self.horizon / dt + 1e-9)) + 1
        lags = np.arange(length) * dt
        # Fast path when the table already lives on this grid.
        n_tab = self.times.size
        if n_tab >= 2 and np.allclose(self.times, np.arange(n_tab) * dt, rtol=0, atol=dt * 1e-6):
            out = np.zeros(length)
            m = min(length, n_tab)
            out[:m] = self.values[:m]
            return out
        return self.evaluate(lags)


def build_transparent_cir(
    params: ChannelParams, dt: float, horizon: float | None = None
) -> Cir:
    """Tabulate ``N V_r (4 pi D t)^(-3/2) exp(-r0^2 / (4 D t))`` on a ``dt`` grid.

    With ``horizon=None`` the table runs until the post-peak tail drops below
    ``TAIL_CUTOFF`` times the peak; an explicit horizon must cover at least ten
    peak times and the same tail cut is still applied.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    t_peak = params.peak_time
    if horizon is None:
        # (tp/t)^1.5 e^1.5 bounds the ratio p(t)/p(tp) for t > tp.
        horizon = t_peak * (math.exp(1.5) / TAIL_CUTOFF) ** (2.0 / 3.0) * 1.05 + 2 * dt
    elif horizon < 10.0 * t_peak:
        raise ConfigurationError(
            f"CIR horizon {horizon:g} s is shorter than 10 peak times ({10 * t_peak:g} s)"
        )
    n = int(math.floor(horizon / dt + 1e-9)) + 1
    t = np.arange(n) * dt
    values = np.zeros(n)
    d, r0 = params.diffusion_coefficient, params.distance
    volume = 4.0 / 3.0 * math.pi * params.receiver_radius**3
    pos = t > 0
    tp = t[pos]
    values[pos] = params.release_count * volume * (4 * math.pi * d * tp) ** -1.5 * np.exp(
        -(r0**2) / (4 * d * tp)
    )
    return Cir(*_cut_tail(t, values))


def _cut_tail(times: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    peak = int(np.argmax(values))
    below = np.flatnonzero(values[peak:] < TAIL_CUTOFF * values[peak])
    if below.size and values[peak] > 0:
        end = peak + int(below[0])
        return times[:end], values[:end]
    return times, values


def load_cir_table(path: str | Path) -> Cir:
    """Read a ``t_seconds,expected_count`` CSV; a single header row is optional."""
    rows: list[tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise CirFormatError(f"row {lineno}: expected 2 columns, got {len(row)}")
            try:
                t, p = float(row[0]), float(row[1])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header
                raise CirFormatError(f"row {lineno}: non-numeric value {row!r}") from None
            if not (math.isfinite(t) and math.isfinite(p)):
                raise CirFormatError(f"row {lineno}: non-finite value {row!r}")
            if p < 0:
                raise CirFormatError(f"row {lineno}: negative count {p}")
            if rows and t <= rows[-1][0]:
                raise CirFormatError(f"row {lineno}: time {t} is not increasing")
            if not rows and (t != 0.0 or p != 0.0):
                raise CirFormatError(f"row {lineno}: table must start with (0, 0)")
            rows.append((t, p))
    if not rows:
        raise CirFormatError(f"{path}: empty CIR table")
    arr = np.array(rows)
    return Cir(arr[:, 0], arr[:, 1])


def save_cir_table(cir: Cir, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t_seconds", "expected_count"])
        for t, p in zip(cir.times, cir.values):
            writer.writerow([repr(float(t)), repr(float(p))])


@dataclass(frozen=True)
class ExpectedSignal:
    """Per-sample Poisson means for one molecule type.

    ``signal`` is the superposed release contribution; ``mean`` adds the
    noise floor. Keeping the two apart makes superposition exact.
    """

    dt: float
    signal: np.ndarray
    noise_mean: float

    @property
    def mean(self) -> np.ndarray:
        return self.signal + self.noise_mean


def superpose(kernel: np.ndarray, starts: Iterable[int], weights: Iterable[float], n: int) -> np.ndarray:
    """Sum of ``weight * kernel`` shifted to each start index, cropped to ``n``."""
    out = np.zeros(n)
    m = kernel.size
    for i, w in zip(starts, weights):
        if w == 0 or i >= n:
            continue
        stop = min(n, i + m)
        out[i:stop] += w * kernel[: stop - i]
    return out


def expected_signal(
    cir: Cir,
    releases: Sequence[tuple[float, float]],
    noise_mean: float,
    dt: float,
    n_samples: int,
) -> ExpectedSignal:
    """Expected counts on ``t_n = n dt`` for releases given as ``(time_s, indicator)``."""
    starts: list[int] = []
    weights: list[float] = []
    for time, indicator in releases:
        if time < 0:
            raise ConfigurationError(f"release time {time} < 0")
        idx = int(round(time / dt))
        if abs(idx * dt - time) > 1e-9 * dt + 1e-15:
            raise ConfigurationError(f"release time {time} is not on the {dt} s grid")
        starts.append(idx)
        weights.append(float(indicator))
    kernel = cir.kernel(dt)
    return ExpectedSignal(dt, superpose(kernel, starts, weights, n_samples), float(noise_mean))


def snr(cir: Cir, noise_mean: float) -> float:
    """Peak expected count over noise mean (linear)."""
    if not noise_mean > 0:
        raise ConfigurationError("SNR is undefined for a zero noise mean")
    return cir.peak_value / noise_mean


def snr_db(cir: Cir, noise_mean: float) -> float:
    return linear_to_db(snr(cir, noise_mean))


def calibrate_release_count(unit_cir: Cir, noise_mean: float, target_snr: float) -> float:
    """Release count that gives ``target_snr`` (linear) for a per-molecule CIR."""
    if not target_snr > 0:
        raise ConfigurationError("target SNR must be positive")
    if not unit_cir.peak_value > 0:
        raise ConfigurationError("CIR shape has zero peak; cannot calibrate")
    return target_snr * noise_mean / unit_cir.peak_value
