"""Framework 2: joint synchronization and detection with MoSK.

A bit 1 releases type-A molecules, a bit 0 releases type-B, so every step
decides the pair ``(start, bit)`` at once. Ties go to the earlier start,
then to bit 1.
"""

from __future__ import annotations

import numpy as np

from .errors import EstimatorFailure
from .receiver import NormConstants, ReceiverModel, Scheme, SyncState
from .sync_f1 import SyncResult, poisson_loglik

__all__ = [
    "NormConstants",
    "joint_metrics",
    "joint_ml_step",
    "joint_lf_step",
    "joint_po_step",
    "joint_tt_step",
    "perfect_sync_detect",
    "run_block",
]


def _window_means(trace_a, trace_b, state, rx):
    s = state.prev_start
    win = rx.window(s, trace_a.size)
    ra, rb = trace_a[win], trace_b[win]
    if ra.size == 0:
        raise EstimatorFailure("observation window lies beyond the trace")
    m = ra.size
    base_a = state.background_a[win] + rx.noise_a
    base_b = state.background_b[win] + rx.noise_b
    return s, ra, rb, base_a, base_b, base_a + rx.hyp_a[:, :m], base_b + rx.hyp_b[:, :m]


def joint_metrics(
    trace_a: np.ndarray,
    trace_b: np.ndarray,
    state: SyncState,
    rx: ReceiverModel,
    include_factorial: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Joint log-likelihood per hypothesis; column 0 is w=1, column 1 is w=0."""
    s, ra, rb, base_a, base_b, hyp_a, hyp_b = _window_means(trace_a, trace_b, state, rx)
    la1 = poisson_loglik(ra, hyp_a, include_factorial)
    lb1 = poisson_loglik(rb, hyp_b, include_factorial)
    la0 = poisson_loglik(ra, base_a, include_factorial)
    lb0 = poisson_loglik(rb, base_b, include_factorial)
    metric = np.stack([la1 + lb0, la0 + lb1], axis=1)
    return rx.hypotheses(s), metric


def joint_ml_step(trace_a, trace_b, state: SyncState, rx: ReceiverModel) -> tuple[int, int]:
    hyps, metric = joint_metrics(trace_a, trace_b, state, rx)
    h, col = divmod(int(np.argmax(metric)), 2)
    return int(hyps[h]), 1 - col


def filtered_signals(trace_a, trace_b, state: SyncState, rx: ReceiverModel):
    """Normalized correlations of each trace with its own hypothesis means."""
    s, ra, rb, _, _, hyp_a, hyp_b = _window_means(trace_a, trace_b, state, rx)
    fa = (ra * hyp_a).sum(axis=1) / rx.norms.c_a**2
    fb = (rb * hyp_b).sum(axis=1) / rx.norms.c_b**2
    return rx.hypotheses(s), fa, fb


def joint_lf_step(trace_a, trace_b, state: SyncState, rx: ReceiverModel) -> tuple[int, int]:
    hyps, fa, fb = filtered_signals(trace_a, trace_b, state, rx)
    h = int(np.argmax(np.maximum(fa, fb)))
    return int(hyps[h]), int(fa[h] >= fb[h])


def joint_po_step(trace_a, trace_b, state: SyncState, rx: ReceiverModel) -> tuple[int, int]:
    nc = rx.norms
    lo = state.prev_start + rx.n_min + min(nc.peak_a, nc.peak_b)
    hi = min(state.prev_start + rx.n_max + max(nc.peak_a, nc.peak_b), trace_a.size - 1)
    if hi < lo:
        raise EstimatorFailure("peak region lies beyond the trace")
    seg_a, seg_b = trace_a[lo : hi + 1], trace_b[lo : hi + 1]
    if seg_a.max() / nc.c_a >= seg_b.max() / nc.c_b:
        start = lo + int(np.argmax(seg_a)) - nc.peak_a
    else:
        start = lo + int(np.argmax(seg_b)) - nc.peak_b
    at_a = _count_at(trace_a, start + nc.peak_a)
    at_b = _count_at(trace_b, start + nc.peak_b)
    return start, int(at_a / nc.c_a >= at_b / nc.c_b)


def _count_at(trace: np.ndarray, idx: int) -> int:
    return int(trace[idx]) if 0 <= idx < trace.size else 0


def joint_tt_step(trace_a, trace_b, state: SyncState, rx: ReceiverModel) -> tuple[int, int]:
    """First sample after ``prev_start + T_dw`` where either normalized count reaches the threshold."""
    nc = rx.norms
    after = state.prev_start + rx.min_window + 1
    na = trace_a[after:] / nc.c_a
    nb = trace_b[after:] / nc.c_b
    hits = np.maximum(na, nb) >= rx.threshold
    if not hits.any():
        raise EstimatorFailure("no threshold crossing before the end of the trace")
    i = int(np.argmax(hits))
    return after + i, int(na[i] >= nb[i])


def perfect_sync_detect(trace_a, trace_b, window: tuple[int, int], state: SyncState, rx: ReceiverModel) -> int:
    """Joint ML bit decision with the symbol start known to be ``window[0]``."""
    lo, hi = window
    hi = min(hi, trace_a.size - 1)
    if hi < lo:
        raise EstimatorFailure("empty detection window")
    ra, rb = trace_a[lo : hi + 1], trace_b[lo : hi + 1]
    base_a = state.background_a[lo : hi + 1] + rx.noise_a
    base_b = state.background_b[lo : hi + 1] + rx.noise_b
    sig_a, sig_b = np.zeros(ra.size), np.zeros(ra.size)
    ma, mb = min(ra.size, rx.kernel_a.size), min(ra.size, rx.kernel_b.size)
    sig_a[:ma] = rx.kernel_a[:ma]
    sig_b[:mb] = rx.kernel_b[:mb]
    one = poisson_loglik(ra, base_a + sig_a) + poisson_loglik(rb, base_b)
    zero = poisson_loglik(ra, base_a) + poisson_loglik(rb, base_b + sig_b)
    return int(one >= zero)


_STEPS = {
    Scheme.ML: joint_ml_step,
    Scheme.LF: joint_lf_step,
    Scheme.PO: joint_po_step,
    Scheme.TT: joint_tt_step,
}


def _commit(state: SyncState, rx: ReceiverModel, start: int, bit: int) -> None:
    state.starts.append(start)
    state.bits.append(bit)
    if bit == 1:
        state.add_release(state.background_a, rx.kernel_a, start)
    elif bit == 0:
        state.add_release(state.background_b, rx.kernel_b, start)


def run_block(
    counts_a: np.ndarray,
    counts_b: np.ndarray,
    rx: ReceiverModel,
    n_symbols: int,
    dt: float,
    true_starts: np.ndarray | None = None,
) -> SyncResult:
    state = SyncState.empty(counts_a.size)
    windows: list[tuple[int, int]] = []
    scheme = rx.params.scheme
    if scheme is Scheme.PERFECT:
        if true_starts is None:
            raise ValueError("perfect-sync mode needs the true start times")
        for k in range(n_symbols):
            lo = int(true_starts[k])
            hi = int(true_starts[k + 1]) if k + 1 < n_symbols else lo + rx.n_mean
            try:
                bit = perfect_sync_detect(counts_a, counts_b, (lo, hi), state, rx)
            except EstimatorFailure:
                bit = -1
            windows.append((lo, hi))
            _commit(state, rx, lo, bit)
    else:
        step = _STEPS[scheme]
        for _ in range(n_symbols):
            prev = state.prev_start
            try:
                start, bit = step(counts_a, counts_b, state, rx)
            except EstimatorFailure:
                break
            if scheme in (Scheme.ML, Scheme.LF):
                win = rx.window(prev, counts_a.size)
                windows.append((win.start, win.stop - 1))
            else:
                windows.append((start, start))
            _commit(state, rx, start, bit)
    return SyncResult(
        dt=dt,
        starts=np.array(state.starts, dtype=np.int64),
        windows=tuple(windows),
        bits=np.array(state.bits, dtype=np.int64),
    )
