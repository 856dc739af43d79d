"""JPEG recompression channel simulator and transport channel matching (TCM)."""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from codec import (BLOCK, CoefficientImage, QuantTable, blockify, dequantize_blocks,
                   quant_table, quantize_blocks, unblockify)
from exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 12


@dataclass(frozen=True)
class ChannelParams:
    q1: QuantTable
    q2: QuantTable

    @classmethod
    def matched(cls, quality: int) -> "ChannelParams":
        q = quant_table(quality)
        return cls(q, q)

    @property
    def stationary(self) -> "ChannelParams":
        """Parameters once the image already carries the channel's table."""
        return ChannelParams(self.q2, self.q2)


@dataclass
class ChannelReport:
    changed_total: int
    changed_by_mode: np.ndarray
    total_coeffs: int

    @property
    def p_e(self) -> float:
        return self.changed_total / self.total_coeffs if self.total_coeffs else 0.0

    def __add__(self, other: "ChannelReport") -> "ChannelReport":
        return ChannelReport(self.changed_total + other.changed_total,
                             self.changed_by_mode + other.changed_by_mode,
                             self.total_coeffs + other.total_coeffs)

    @classmethod
    def empty(cls) -> "ChannelReport":
        return cls(0, np.zeros((BLOCK, BLOCK), dtype=np.int64), 0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "changed_total": int(self.changed_total),
            "total_coeffs": int(self.total_coeffs),
            "p_e": self.p_e,
            "changed_by_mode": self.changed_by_mode.astype(int).tolist(),
        }


@dataclass
class TcmResult:
    image: CoefficientImage
    iterations: int
    residual_changes: int
    history: List[int] = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.residual_changes == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "iterations": self.iterations,
            "residual_changes": self.residual_changes,
            "converged": self.converged,
            "history": list(self.history),
        }


def recompress_blocks(blocks: np.ndarray, params: ChannelParams) -> np.ndarray:
    """Decompress with q1 then recompress with q2, on any (..., 8, 8) stack of blocks."""
    spatial = dequantize_blocks(blocks, params.q1.steps)
    return quantize_blocks(spatial, params.q2.steps).astype(np.int64)


def recompress_block(block: np.ndarray, params: ChannelParams) -> np.ndarray:
    block = np.asarray(block)
    if block.shape != (BLOCK, BLOCK):
        raise InvalidArgumentError(f"expected an 8x8 block, got {block.shape}")
    return recompress_blocks(block, params)


def recompress_image(ci: CoefficientImage, params: ChannelParams) -> CoefficientImage:
    out = recompress_blocks(ci.blocks(), params)
    return CoefficientImage(unblockify(out), params.q2)


def diff_report(a: CoefficientImage, b: CoefficientImage) -> ChannelReport:
    if a.coeffs.shape != b.coeffs.shape:
        raise InvalidArgumentError(f"dimension mismatch: {a.coeffs.shape} vs {b.coeffs.shape}")
    changed = blockify(a.coeffs != b.coeffs)
    by_mode = changed.sum(axis=(0, 1)).astype(np.int64)
    return ChannelReport(int(by_mode.sum()), by_mode, int(a.coeffs.size))


def count_changes(a: CoefficientImage, b: CoefficientImage) -> int:
    return int(np.count_nonzero(a.coeffs != b.coeffs))


def tcm(ci: CoefficientImage, params: ChannelParams, max_iters: int = DEFAULT_MAX_ITERS) -> TcmResult:
    """Recompress until nothing changes or the change count stops decreasing."""
    if max_iters < 1:
        raise InvalidArgumentError(f"max_iters must be >= 1, got {max_iters}")

    current = ci
    history: List[int] = []
    step_params = params
    iteration = 0
    while iteration < max_iters:
        iteration += 1
        nxt = recompress_image(current, step_params)
        # a table change makes the first pass incomparable with its input
        comparable = current.qtable == nxt.qtable
        changes = count_changes(current, nxt)
        step_params = params.stationary
        logger.debug(f"TCM iteration {iteration}: {changes} changed coefficients")
        previous = history[-1] if history and comparable else None
        history.append(changes)
        current = nxt
        if comparable and changes == 0:
            return TcmResult(current, iteration, 0, history)
        if previous is not None and changes >= previous:
            break

    residual = count_changes(current, recompress_image(current, params.stationary))
    if residual:
        logger.warning(f"TCM stopped after {iteration} iterations with {residual} coefficients still changing")
    return TcmResult(current, iteration, residual, history)


def simulate(ci: CoefficientImage, params: ChannelParams, passes: int = 1) -> Dict[str, Any]:
    """Push an image through the channel `passes` times and report each pass."""
    if passes < 1:
        raise InvalidArgumentError(f"passes must be >= 1, got {passes}")
    reports: List[ChannelReport] = []
    current = ci
    step_params = params
    for _ in range(passes):
        nxt = recompress_image(current, step_params)
        reports.append(diff_report(current, nxt))
        current = nxt
        step_params = params.stationary
    return {
        "image": current,
        "passes": reports,
        "cumulative": diff_report(ci, current),
    }


def channel_for(ci: CoefficientImage, quality: Optional[int]) -> ChannelParams:
    """Channel from the image's own table to `quality` (default: the image's quality)."""
    q2 = quant_table(quality) if quality is not None else ci.qtable
    return ChannelParams(ci.qtable, q2)
