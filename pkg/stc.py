"""Binary syndrome-trellis codes: parity submatrix, Viterbi embedding, extraction.

Column bit r of the submatrix touches syndrome row i + r of message block i; rows
past the message length are dropped. Trellis state bit 0 is the current row. Every
message bit owns hh.w cover elements; elements left over extend the last block.
"""
import logging
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np

from exceptions import EmbedFailure, InvalidArgumentError

logger = logging.getLogger(__name__)

MIN_HEIGHT, MAX_HEIGHT = 2, 8


@dataclass(frozen=True)
class SubMatrix:
    h: int
    columns: Tuple[int, ...]

    def __post_init__(self):
        if not MIN_HEIGHT <= self.h <= MAX_HEIGHT:
            raise InvalidArgumentError(f"height must lie in [{MIN_HEIGHT}, {MAX_HEIGHT}], got {self.h}")
        if not self.columns:
            raise InvalidArgumentError("submatrix needs at least one column")
        edge = 1 | (1 << (self.h - 1))
        for col in self.columns:
            if col >> self.h or col & edge != edge:
                raise InvalidArgumentError(f"column {col:#b} must have its top and bottom bits set")

    @property
    def w(self) -> int:
        return len(self.columns)


@dataclass
class BitCover:
    bits: np.ndarray
    costs: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        self.costs = np.asarray(self.costs, dtype=np.float64)
        if self.bits.shape != self.costs.shape or self.bits.ndim != 1:
            raise InvalidArgumentError("bits and costs must be 1-D sequences of equal length")
        if np.any(self.costs < 0) or np.any(np.isnan(self.costs)):
            raise InvalidArgumentError("costs must be nonnegative")

    def __len__(self) -> int:
        return len(self.bits)


class StcResult(NamedTuple):
    stego: np.ndarray
    cost: float


def build_hhat(h: int, w: int, key: int) -> SubMatrix:
    if w < 1:
        raise InvalidArgumentError(f"width must be >= 1, got {w}")
    if not MIN_HEIGHT <= h <= MAX_HEIGHT:
        raise InvalidArgumentError(f"height must lie in [{MIN_HEIGHT}, {MAX_HEIGHT}], got {h}")
    rng = np.random.default_rng(key)
    middle = rng.integers(0, 1 << (h - 2), size=w) if h > 2 else np.zeros(w, dtype=np.int64)
    columns = tuple(int(1 | (m << 1) | (1 << (h - 1))) for m in middle)
    return SubMatrix(h, columns)


def stc_width(n: int, m: int, payload: float) -> int:
    """Submatrix width round(1/payload), narrowed when the cover is too short to hold it."""
    if payload <= 0:
        raise InvalidArgumentError(f"payload must be positive, got {payload}")
    if m <= 0:
        return 1
    if n < m:
        raise InvalidArgumentError(f"cover of {n} elements cannot carry {m} message bits")
    return max(1, min(int(np.floor(1.0 / payload + 0.5)), n // m))


def block_widths(n: int, m: int, w: int) -> np.ndarray:
    """Columns per message bit: w each, the leftover n - w*m elements join the last block."""
    if w < 1:
        raise InvalidArgumentError(f"width must be >= 1, got {w}")
    if m <= 0:
        return np.zeros(0, dtype=np.int64)
    if n < w * m:
        raise InvalidArgumentError(f"cover of {n} elements cannot carry {m} message bits at width {w}")
    widths = np.full(m, w, dtype=np.int64)
    widths[-1] += n - w * m
    return widths


def column_layout(n: int, m: int, hh: SubMatrix) -> np.ndarray:
    """The submatrix column applied to every cover element; the last block cycles through them."""
    widths = block_widths(n, m, hh.w)
    if not widths.size:
        return np.zeros(0, dtype=np.int64)
    cols = np.asarray(hh.columns, dtype=np.int64)
    return np.concatenate([cols[np.arange(w) % hh.w] for w in widths])


def prune(values: Sequence, bit: int, fill):
    """Keep the states whose current row equals `bit`, shift out that row."""
    half = len(values) // 2
    kept = [values[2 * j + bit] for j in range(half)]
    return kept + [fill] * half


def stc_embed(cover: BitCover, msg: Sequence[int], hh: SubMatrix, wet_cap: float = np.inf) -> StcResult:
    """Minimum-cost stego bits whose syndrome equals `msg` (exact Viterbi)."""
    msg = np.asarray(msg, dtype=np.uint8)
    n, m = len(cover), len(msg)
    if m == 0:
        return StcResult(cover.bits.copy(), 0.0)
    widths = block_widths(n, m, hh.w)
    cols = column_layout(n, m, hh)
    costs = np.where(cover.costs >= wet_cap, np.inf, cover.costs)

    n_states = 1 << hh.h
    states = np.arange(n_states)
    weights = np.full(n_states, np.inf)
    weights[0] = 0.0
    took_one = np.zeros((n, n_states), dtype=bool)

    pos = 0
    for i in range(m):
        for _ in range(widths[i]):
            x, c = cover.bits[pos], costs[pos]
            w0 = weights + (c if x == 1 else 0.0)
            w1 = weights[states ^ cols[pos]] + (0.0 if x == 1 else c)
            # ties keep the unchanged bit
            take1 = (w1 <= w0) if x == 1 else (w1 < w0)
            took_one[pos] = take1
            weights = np.where(take1, w1, w0)
            pos += 1
        weights = np.concatenate([weights[msg[i]::2], np.full(n_states // 2, np.inf)])

    state = int(np.argmin(weights))
    best = float(weights[state])
    if not np.isfinite(best):
        raise EmbedFailure("no finite-cost path satisfies the message syndrome")

    stego = np.zeros(n, dtype=np.uint8)
    pos = n
    for i in range(m - 1, -1, -1):
        state = 2 * state + int(msg[i])
        for _ in range(widths[i]):
            pos -= 1
            if took_one[pos, state]:
                stego[pos] = 1
                state ^= int(cols[pos])
    logger.debug(f"STC embedded {m} bits into {n} elements, cost {best:.6g}, "
                 f"{int(np.count_nonzero(stego != cover.bits))} changes")
    return StcResult(stego, best)


def stc_extract(stego: Sequence[int], hh: SubMatrix, msg_len: int) -> np.ndarray:
    """Syndrome of `stego` under the band matrix induced by `hh`."""
    y = np.asarray(stego, dtype=np.int64) & 1
    if msg_len == 0:
        return np.zeros(0, dtype=np.uint8)
    widths = block_widths(len(y), msg_len, hh.w)
    cols = column_layout(len(y), msg_len, hh)
    starts = np.concatenate([[0], np.cumsum(widths)[:-1]])
    msg = np.zeros(msg_len, dtype=np.int64)
    for r in range(hh.h):
        if r >= msg_len:
            break
        parity = np.add.reduceat(y & ((cols >> r) & 1), starts) & 1
        msg[r:] ^= parity[:msg_len - r]
    return msg.astype(np.uint8)
