"""Per-block reports and their aggregation over Monte Carlo blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .coding import SyncErrorRecord, classify_sync_errors
from .errors import AggregationError
from .sync_f1 import SyncResult
from .timeline import SymbolTimeline


def bit_error_rate(detected: Sequence[int], true: Sequence[int]) -> float:
    """Positional BER; missing decisions count as errors, surplus ones are ignored."""
    true = np.asarray(true)
    det = np.asarray(detected)[: true.size]
    if true.size == 0:
        return 0.0
    errors = int(np.count_nonzero(det != true[: det.size])) + (true.size - det.size)
    return errors / true.size


@dataclass(frozen=True)
class BlockReport:
    """Errors of one block. ``sample_errors[k]`` exists only where symbol k was estimated."""

    block: int
    samples_per_symbol: int
    sample_errors: np.ndarray
    record: SyncErrorRecord
    ber: float
    detected_bits: np.ndarray
    true_bits: np.ndarray

    @property
    def normalized_errors(self) -> np.ndarray:
        return self.sample_errors / self.samples_per_symbol

    @property
    def n_symbols(self) -> int:
        return int(self.true_bits.size)


def block_report(
    result: SyncResult,
    timeline: SymbolTimeline,
    samples_per_symbol: int,
    block: int = 0,
    ber: float | None = None,
) -> BlockReport:
    """Build the report; ``ber`` overrides the channel-bit BER (coded runs)."""
    k = len(timeline)
    est = result.starts[:k]
    errors = est - timeline.starts[: est.size]
    record = classify_sync_errors(est, timeline.starts)
    if ber is None:
        ber = bit_error_rate(result.bits, timeline.bits)
    return BlockReport(
        block=block,
        samples_per_symbol=samples_per_symbol,
        sample_errors=errors.astype(np.int64),
        record=record,
        ber=float(ber),
        detected_bits=result.bits,
        true_bits=timeline.bits,
    )


@dataclass(frozen=True)
class AggregateReport:
    mae: np.ndarray
    mae_stderr: np.ndarray
    abs_mean_err: np.ndarray
    p_insertion: np.ndarray
    p_deletion: np.ndarray
    n_included: np.ndarray
    hist_left: np.ndarray
    hist_mass: np.ndarray
    bin_width: float
    mean_ber: float
    ber_stderr: float
    mean_abs_error: float
    n_blocks: int
    block_ber: np.ndarray

    @property
    def histogram_mode(self) -> float:
        """Left edge of the most populated bin (earliest on ties)."""
        if self.hist_mass.size == 0:
            return math.nan
        return float(self.hist_left[int(np.argmax(self.hist_mass))])


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return math.nan
    return float(np.std(values, ddof=1) / math.sqrt(values.size))


def aggregate(reports: Iterable[BlockReport], bin_width: float = 0.05) -> AggregateReport:
    """Fold block reports in ascending block order."""
    reports = sorted(reports, key=lambda r: r.block)
    if not reports:
        raise AggregationError("cannot aggregate zero blocks")
    if not bin_width > 0:
        raise AggregationError("histogram bin width must be positive")
    k = reports[0].n_symbols
    sps = reports[0].samples_per_symbol
    abs_sum = np.zeros(k)
    sq_sum = np.zeros(k)
    err_sum = np.zeros(k)
    ins = np.zeros(k, dtype=np.int64)
    dels = np.zeros(k, dtype=np.int64)
    count = np.zeros(k, dtype=np.int64)
    bins: dict[int, int] = {}
    step = bin_width * sps
    n_err = 0
    abs_total = 0.0
    for rep in reports:
        e = rep.normalized_errors
        m = e.size
        abs_sum[:m] += np.abs(e)
        sq_sum[:m] += e * e
        err_sum[:m] += e
        count[:m] += 1
        ins[:m] += rep.record.insertions[:m]
        dels[:m] += rep.record.deletions[:m]
        idx = np.floor(rep.sample_errors / step + 1e-9).astype(np.int64)
        for i, c in zip(*np.unique(idx, return_counts=True)):
            bins[int(i)] = bins.get(int(i), 0) + int(c)
        n_err += m
        abs_total += float(np.abs(e).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        mae = abs_sum / count
        var = np.where(count > 1, (sq_sum - count * mae**2) / (count - 1), np.nan)
        mae_se = np.sqrt(np.maximum(var, 0.0) / count)
        abs_mean = np.abs(err_sum / count)
        p_ins = ins / count
        p_del = dels / count
    if bins:
        lo, hi = min(bins), max(bins)
        idx = np.arange(lo, hi + 1)
        mass = np.array([bins.get(int(i), 0) for i in idx], dtype=float) / n_err
        left = idx * bin_width
    else:
        mass = left = np.zeros(0)
    block_ber = np.array([r.ber for r in reports])
    return AggregateReport(
        mae=mae,
        mae_stderr=mae_se,
        abs_mean_err=abs_mean,
        p_insertion=p_ins,
        p_deletion=p_del,
        n_included=count,
        hist_left=left,
        hist_mass=mass,
        bin_width=bin_width,
        mean_ber=float(block_ber.mean()),
        ber_stderr=_stderr(block_ber),
        mean_abs_error=abs_total / n_err if n_err else math.nan,
        n_blocks=len(reports),
        block_ber=block_ber,
    )
