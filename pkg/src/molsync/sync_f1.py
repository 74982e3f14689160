"""Framework 1: synchronize on type-B counts, detect bits on type-A counts.

Each ``*_step`` function reads a :class:`SyncState` and returns a decision;
the caller commits it. :func:`run_block` wires the steps into the
per-block pipeline, running synchronization one symbol ahead of detection
because the detection window of symbol ``k`` closes at the start of ``k+1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import EstimatorFailure
from .receiver import ReceiverModel, Scheme, SyncState


@dataclass(frozen=True)
class SyncResult:
    """Per-symbol decisions for one block (sample indices; -1 marks a failed bit)."""

    dt: float
    starts: np.ndarray
    windows: tuple[tuple[int, int], ...]
    bits: np.ndarray

    @property
    def start_seconds(self) -> np.ndarray:
        return self.starts * self.dt

    def __len__(self) -> int:
        return int(self.starts.size)


@lru_cache(maxsize=8)
def _log_factorial_table(size: int) -> np.ndarray:
    return np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, size)))))


def log_factorial(counts: np.ndarray) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    size = 1 << max(10, int(counts.max(initial=0) + 1).bit_length())
    return _log_factorial_table(size)[counts]


def poisson_loglik(counts: np.ndarray, means: np.ndarray, include_factorial: bool = False) -> np.ndarray:
    """Sum over the last axis of ``r ln(mean) - mean`` (minus ``ln r!`` if asked)."""
    out = (counts * np.log(means) - means).sum(axis=-1)
    if include_factorial:
        out = out - log_factorial(counts).sum()
    return out


def hypothesis_metrics(
    trace_b: np.ndarray,
    state: SyncState,
    rx: ReceiverModel,
    kind: str = "ml",
    include_factorial: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """ML or LF metric for every start hypothesis of the next symbol."""
    s = state.prev_start
    win = rx.window(s, trace_b.size)
    r = trace_b[win]
    if r.size == 0:
        raise EstimatorFailure("observation window lies beyond the trace")
    means = state.background_b[win] + rx.noise_b + rx.hyp_b[:, : r.size]
    if kind == "ml":
        metric = poisson_loglik(r, means, include_factorial)
    elif kind == "lf":
        metric = (r * means).sum(axis=1)
    else:
        raise ValueError(f"unknown metric {kind!r}")
    return rx.hypotheses(s), metric


def ml_sync_step(trace_b: np.ndarray, state: SyncState, rx: ReceiverModel) -> int:
    hyps, metric = hypothesis_metrics(trace_b, state, rx, "ml")
    return int(hyps[np.argmax(metric)])


def lf_sync_step(trace_b: np.ndarray, state: SyncState, rx: ReceiverModel) -> int:
    hyps, metric = hypothesis_metrics(trace_b, state, rx, "lf")
    return int(hyps[np.argmax(metric)])


def po_sync_step(trace_b: np.ndarray, state: SyncState, rx: ReceiverModel) -> int:
    """Largest count in the expected-peak region, moved back by the CIR peak delay."""
    tp = rx.norms.peak_b
    lo = state.prev_start + rx.n_min + tp
    hi = min(state.prev_start + rx.n_max + tp, trace_b.size - 1)
    if hi < lo:
        raise EstimatorFailure("peak region lies beyond the trace")
    return lo + int(np.argmax(trace_b[lo : hi + 1])) - tp


def tt_sync_step(trace_b: np.ndarray, state: SyncState, rx: ReceiverModel) -> tuple[int, int]:
    """Detection zone opened by an up-crossing of the threshold.

    The zone closes at the first later sample at or below the threshold,
    but never before ``start + min_window``.
    """
    level = rx.threshold
    after = state.prev_end + 1
    hits = trace_b[after:] >= level
    if not hits.any():
        raise EstimatorFailure("no threshold crossing before the end of the trace")
    start = after + int(np.argmax(hits))
    below = trace_b[start + 1 :] <= level
    down = start + 1 + int(np.argmax(below)) if below.any() else trace_b.size - 1
    return start, max(down, start + rx.min_window)


def ml_decide(counts: np.ndarray, mean0: np.ndarray, mean1: np.ndarray) -> int:
    """1 iff the w=1 log-likelihood is at least the w=0 one."""
    return int(poisson_loglik(counts, mean1) >= poisson_loglik(counts, mean0))


def ml_detect(trace_a: np.ndarray, window: tuple[int, int], state: SyncState, rx: ReceiverModel) -> int:
    """ML bit decision over the inclusive sample window ``[start, end]``."""
    lo, hi = window
    hi = min(hi, trace_a.size - 1)
    if hi < lo:
        raise EstimatorFailure("empty detection window")
    r = trace_a[lo : hi + 1]
    mean0 = state.background_a[lo : hi + 1] + rx.noise_a
    sig = np.zeros(r.size)
    m = min(r.size, rx.kernel_a.size)
    sig[:m] = rx.kernel_a[:m]
    return ml_decide(r, mean0, mean0 + sig)


_STEPS = {Scheme.ML: ml_sync_step, Scheme.LF: lf_sync_step, Scheme.PO: po_sync_step}


def _detect_and_commit(trace_a, window, state, rx, start) -> int:
    try:
        bit = ml_detect(trace_a, window, state, rx)
    except EstimatorFailure:
        return -1
    if bit == 1:
        state.add_release(state.background_a, rx.kernel_a, start)
    return bit


def run_block(
    counts_a: np.ndarray,
    counts_b: np.ndarray,
    rx: ReceiverModel,
    n_symbols: int,
    dt: float,
    true_starts: np.ndarray | None = None,
) -> SyncResult:
    """Synchronize and detect up to ``n_symbols`` symbols of one block."""
    state = SyncState.empty(counts_a.size)
    windows: list[tuple[int, int]] = []
    bits: list[int] = []
    scheme = rx.params.scheme

    if scheme is Scheme.TT:
        for _ in range(n_symbols):
            try:
                start, end = tt_sync_step(counts_b, state, rx)
            except EstimatorFailure:
                break
            state.starts.append(start)
            state.ends.append(end)
            windows.append((start, end))
            bits.append(_detect_and_commit(counts_a, (start, end), state, rx, start))
    else:
        if scheme is Scheme.PERFECT and true_starts is None:
            raise ValueError("perfect-sync mode needs the true start times")
        step = _STEPS.get(scheme)
        for k in range(n_symbols):
            if scheme is Scheme.PERFECT:
                t = int(true_starts[k])
            else:
                try:
                    t = step(counts_b, state, rx)
                except EstimatorFailure:
                    break
            state.starts.append(t)
            state.add_release(state.background_b, rx.kernel_b, t)
            if k >= 1:
                prev = state.starts[-2]
                windows.append((prev, t))
                bits.append(_detect_and_commit(counts_a, (prev, t), state, rx, prev))
        if state.starts:
            last = state.starts[-1]
            window = (last, last + rx.n_mean)
            windows.append(window)
            bits.append(_detect_and_commit(counts_a, window, state, rx, last))

    return SyncResult(
        dt=dt,
        starts=np.array(state.starts, dtype=np.int64),
        windows=tuple(windows),
        bits=np.array(bits, dtype=np.int64),
    )
