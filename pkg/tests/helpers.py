"""Shared builders for synchronization tests."""

import numpy as np

from molsync.channel import ChannelParams, build_transparent_cir, superpose
from molsync.receiver import ReceiverModel, SchemeParams, SyncState
from molsync.timeline import TimelineConfig

DT = 50e-6
UNIT = build_transparent_cir(ChannelParams(release_count=1.0), DT)


def receiver(snr_db=3.0, scheme="ML", config=None, noise=5.0, **kw):
    n = 10 ** (snr_db / 10) * noise / UNIT.peak_value
    cir = UNIT.scaled(n)
    return ReceiverModel.build(cir, cir, noise, noise, config or TimelineConfig(), SchemeParams(scheme, **kw))


def random_situation(rng, rx, framework="F1", max_prior=5):
    """Traces plus a decision-directed state holding the true history of a few prior symbols."""
    k_prior = int(rng.integers(0, max_prior + 1))
    gaps = rng.integers(rx.n_min, rx.n_max + 1, size=k_prior + 1)
    starts = np.cumsum(gaps)
    bits = rng.integers(0, 2, size=k_prior + 1)
    n = int(starts[-1]) + 2 * rx.n_max + 1
    if framework == "F1":
        a, b = bits, np.ones_like(bits)
    else:
        a, b = bits, 1 - bits
    ra = rng.poisson(superpose(rx.kernel_a, starts, a, n) + rx.noise_a)
    rb = rng.poisson(superpose(rx.kernel_b, starts, b, n) + rx.noise_b)
    state = SyncState.empty(n)
    for s, wa, wb in zip(starts[:-1], a[:-1], b[:-1]):
        state.starts.append(int(s))
        state.bits.append(int(wa))
        if wa:
            state.add_release(state.background_a, rx.kernel_a, int(s))
        if wb:
            state.add_release(state.background_b, rx.kernel_b, int(s))
    return ra, rb, state, int(starts[-1]), int(bits[-1])
