"""Insertion/deletion accounting and the Sellers marker code.

The decoder implements the single-error rules for the marker ``100``:
the three bits found where the next marker should sit tell whether one bit
was lost (``000``/``001``) or gained (``010``/``110``) in the preceding
data segment, and the read position is shifted accordingly.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import CodingError


class SyncError(str, enum.Enum):
    NONE = "none"
    INSERTION = "insertion"
    DELETION = "deletion"


@dataclass(frozen=True)
class SyncErrorRecord:
    """``offsets[k]`` is deletions minus insertions over symbols before ``k``."""

    flags: tuple[SyncError, ...]
    offsets: np.ndarray

    @property
    def insertions(self) -> np.ndarray:
        return np.array([f is SyncError.INSERTION for f in self.flags])

    @property
    def deletions(self) -> np.ndarray:
        return np.array([f is SyncError.DELETION for f in self.flags])


def classify_sync_errors(estimated: Sequence[float], true: Sequence[float]) -> SyncErrorRecord:
    """Flag each symbol as a deletion, an insertion or neither.

    Symbol ``k`` (1-based) with running offset ``o`` is a deletion if
    ``est[k] >= true[k+o+1]`` and otherwise an insertion if
    ``est[k+1] <= true[k+o]``. Lookups outside either sequence make the
    predicate false; symbols without an estimate are never flagged.
    """
    est = np.asarray(estimated)
    ts = np.asarray(true)
    n_true, n_est = ts.size, est.size
    offset = 0
    flags: list[SyncError] = []
    offsets = np.zeros(n_true, dtype=np.int64)
    for k in range(1, n_true + 1):
        offsets[k - 1] = offset
        flag = SyncError.NONE
        if k <= n_est:
            j = k + offset + 1
            if 1 <= j <= n_true and est[k - 1] >= ts[j - 1]:
                flag = SyncError.DELETION
                offset += 1
            else:
                j = k + offset
                if k + 1 <= n_est and 1 <= j <= n_true and est[k] <= ts[j - 1]:
                    flag = SyncError.INSERTION
                    offset -= 1
        flags.append(flag)
    return SyncErrorRecord(tuple(flags), offsets)


@dataclass(frozen=True)
class MarkerCodeConfig:
    data_length: int = 7
    marker: tuple[int, ...] = (1, 0, 0)

    def __post_init__(self) -> None:
        marker = tuple(int(b) for b in self.marker)
        if self.data_length < 1 or len(marker) < 1:
            raise CodingError("need data length >= 1 and a non-empty marker")
        if any(b not in (0, 1) for b in marker):
            raise CodingError("marker must be binary")
        object.__setattr__(self, "marker", marker)

    @classmethod
    def from_string(cls, data_length: int, marker: str) -> "MarkerCodeConfig":
        return cls(data_length, tuple(int(c) for c in marker))

    @property
    def codeword_length(self) -> int:
        return self.data_length + len(self.marker)

    def data_bits(self, n_symbols: int) -> int:
        if n_symbols % self.codeword_length:
            raise CodingError(
                f"{n_symbols} symbols is not a multiple of the codeword length {self.codeword_length}"
            )
        return n_symbols // self.codeword_length * self.data_length


def marker_encode(bits: Sequence[int], config: MarkerCodeConfig) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    n_data = config.data_length
    if bits.size % n_data:
        raise CodingError(f"{bits.size} data bits is not a multiple of the data length {n_data}")
    blocks = bits.reshape(-1, n_data)
    markers = np.tile(np.array(config.marker, dtype=np.int64), (blocks.shape[0], 1))
    return np.hstack([blocks, markers]).ravel()


_DELETION = {(0, 0, 0), (0, 0, 1)}
_INSERTION = {(0, 1, 0), (1, 1, 0)}


def marker_decode(received: Sequence[int], config: MarkerCodeConfig) -> np.ndarray:
    """Strip markers, correcting one insertion or deletion per data segment.

    A lost bit is restored as 0. A short final segment is decoded as far as
    the stream allows.
    """
    if config.marker != (1, 0, 0):
        raise CodingError("the decision table is defined for the marker 100 only")
    s = [int(b) for b in received]
    n_data, n_mark = config.data_length, len(config.marker)
    if len(s) < n_data + n_mark:
        raise CodingError(f"stream of {len(s)} bits is shorter than one codeword ({n_data + n_mark})")
    out: list[int] = []
    pos, n = 0, len(s)
    while pos < n:
        rem = n - pos
        if rem >= n_data + n_mark:
            slot = tuple(s[pos + n_data : pos + n_data + n_mark])
        elif rem == n_data + n_mark - 1 and tuple(s[pos + n_data - 1 :]) == config.marker:
            slot = (0, 0, 0)  # final segment lost a bit
        else:
            out.extend(s[pos : pos + n_data])
            break
        if slot in _DELETION:
            out.extend(s[pos : pos + n_data - 1])
            out.append(0)
            pos += n_data - 1 + n_mark
        elif slot in _INSERTION:
            out.extend(s[pos : pos + n_data])
            pos += n_data + 1 + n_mark
        else:
            out.extend(s[pos : pos + n_data])
            pos += n_data + n_mark
    return np.array(out, dtype=np.int64)


def strip_markers(received: Sequence[int], config: MarkerCodeConfig) -> np.ndarray:
    """Data positions of the stream assuming perfect alignment (no correction)."""
    s = np.asarray(received, dtype=np.int64)
    idx = np.arange(s.size)
    return s[idx % config.codeword_length < config.data_length]
