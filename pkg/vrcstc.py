"""STC embedding with a per-state stego image and a dynamically updated robustness cost.

Every trellis state carries the tentative stego image of its surviving path. A
transition that flips a cover bit costs rho + r, where r is the robustness cost of the
predecessor's image with the change applied; a transition that keeps the bit costs 0.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from channel import ChannelParams, ChannelReport, diff_report, recompress_image
from codec import BLOCK, CoefficientImage
from distortion import MAX_ABS_COEFF, CostMap
from exceptions import EmbedFailure, InvalidArgumentError
from robustness import BlockRobustnessOracle, Overlay, RobustnessConfig
from stc import SubMatrix, block_widths, column_layout, prune

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VrcstcParams:
    hh: SubMatrix
    config: RobustnessConfig
    rng_key: int


@dataclass(frozen=True)
class PlannedChanges:
    """Cover bits, replacement values and wetness for every lattice position."""
    bits: np.ndarray
    values: np.ndarray
    wet: np.ndarray


@dataclass
class VrcstcResult:
    stego: CoefficientImage
    cost: float
    changes: int
    stats: Dict[str, Any] = field(default_factory=dict)


class StateImage:
    """Sparse overlay of one trellis path on the shared cover, keyed by block index."""

    __slots__ = ("overlays",)

    def __init__(self, overlays: Optional[Dict[int, Overlay]] = None):
        self.overlays = overlays or {}

    def overlay(self, block_index: int) -> Overlay:
        return self.overlays.get(block_index, ())

    def with_overlay(self, block_index: int, overlay: Overlay) -> "StateImage":
        overlays = dict(self.overlays)
        overlays[block_index] = overlay
        return StateImage(overlays)

    def positions(self, width: int) -> Dict[int, int]:
        """Flat coefficient position -> new value."""
        blocks_per_row = width // BLOCK
        out = {}
        for block_index, overlay in self.overlays.items():
            brow, bcol = divmod(block_index, blocks_per_row)
            for offset, value in overlay:
                r, c = divmod(offset, BLOCK)
                out[(brow * BLOCK + r) * width + bcol * BLOCK + c] = value
        return out

    def apply(self, cover: CoefficientImage) -> CoefficientImage:
        coeffs = cover.coeffs.astype(np.int64).ravel()
        for pos, value in self.positions(cover.width).items():
            coeffs[pos] = value
        return cover.with_coeffs(coeffs.reshape(cover.coeffs.shape))


def planned_changes(cover: CoefficientImage, lattice: np.ndarray, rng_key: int,
                    max_abs: int = MAX_ABS_COEFF) -> PlannedChanges:
    """Fix the +-1 change of every lattice position before the trellis runs.

    +1 and -1 move away from zero (to +2 / -2), so a change never creates a zero.
    """
    values = cover.coeffs.ravel()[lattice].astype(np.int64)
    rng = np.random.default_rng(rng_key)
    signs = rng.choice(np.array([-1, 1]), size=len(lattice))
    new_values = values + signs
    new_values[values == 1] = 2
    new_values[values == -1] = -2
    return PlannedChanges(
        bits=(np.abs(values) & 1).astype(np.uint8),
        values=new_values,
        wet=np.abs(new_values) > max_abs,
    )


def _block_coordinates(lattice: np.ndarray, width: int) -> Tuple[np.ndarray, np.ndarray]:
    rows, cols = np.divmod(lattice, width)
    block_index = (rows // BLOCK) * (width // BLOCK) + cols // BLOCK
    offset = (rows % BLOCK) * BLOCK + cols % BLOCK
    return block_index, offset


def vrcstc_embed(cover: CoefficientImage, lattice: np.ndarray, cm: CostMap, msg: np.ndarray,
                 p: VrcstcParams, changes: Optional[PlannedChanges] = None) -> VrcstcResult:
    lattice = np.asarray(lattice, dtype=np.int64)
    msg = np.asarray(msg, dtype=np.uint8)
    n, m = len(lattice), len(msg)
    if m > n:
        raise InvalidArgumentError(f"message of {m} bits exceeds the lattice capacity of {n} elements")
    if m == 0:
        return VrcstcResult(cover, 0.0, 0, {"checks": 0, "cache_hits": 0, "cached_blocks": 0})

    if changes is None:
        changes = planned_changes(cover, lattice, p.rng_key)
    widths = block_widths(n, m, p.hh.w)
    cols = column_layout(n, m, p.hh)
    costs = cm.rho.ravel()[lattice].astype(np.float64)
    costs[(costs >= cm.wet_cap) | changes.wet] = np.inf
    block_index, offset = _block_coordinates(lattice, cover.width)

    C = p.config.C
    oracle = BlockRobustnessOracle(cover, p.config)
    n_states = 1 << p.hh.h
    inf = float("inf")

    wght: List[float] = [inf] * n_states
    wght[0] = 0.0
    imgs: List[Optional[StateImage]] = [None] * n_states
    imgs[0] = StateImage()

    pos = 0
    for i in range(m):
        for _ in range(int(widths[i])):
            x = int(changes.bits[pos])
            c = float(costs[pos])
            col = int(cols[pos])
            b = int(block_index[pos])
            change = (int(offset[pos]), int(changes.values[pos]))

            # flip_w[s]: leave state s through the transition that changes this element
            flip_w = [inf] * n_states
            flip_overlay: List[Optional[Overlay]] = [None] * n_states
            if c != inf:
                for s in range(n_states):
                    if wght[s] != inf:
                        flip_w[s] = wght[s] + c
            # the competitor of the flip leaving s lands in the same target state
            competitor = [wght[s ^ col] for s in range(n_states)]

            pending = []
            for s in range(n_states):
                if flip_w[s] == inf or flip_w[s] >= competitor[s]:
                    continue
                flip_overlay[s] = tuple(sorted(imgs[s].overlay(b) + (change,)))
                if C > 0:
                    pending.append(s)
            if pending:
                verdicts = oracle.cost_many([(b, flip_overlay[s]) for s in pending])
                for s, r in zip(pending, verdicts):
                    flip_w[s] = flip_w[s] + r

            new_wght: List[float] = [inf] * n_states
            new_imgs: List[Optional[StateImage]] = [None] * n_states
            for k in range(n_states):
                pre = k ^ col
                if x == 1:
                    w0, src0, flip0 = flip_w[k], k, True
                    w1, src1, flip1 = wght[pre], pre, False
                else:
                    w0, src0, flip0 = wght[k], k, False
                    w1, src1, flip1 = flip_w[pre], pre, True
                # ties keep the unchanged element
                if w1 < w0 or (w1 == w0 and x == 1):
                    w, src, flipped = w1, src1, flip1
                else:
                    w, src, flipped = w0, src0, flip0
                if w == inf:
                    continue
                new_wght[k] = w
                new_imgs[k] = imgs[src].with_overlay(b, flip_overlay[src]) if flipped else imgs[src]
            wght, imgs = new_wght, new_imgs
            pos += 1

        bit = int(msg[i])
        wght = prune(wght, bit, inf)
        imgs = prune(imgs, bit, None)

    best = int(np.argmin(wght))
    if wght[best] == inf:
        raise EmbedFailure("no finite-cost path satisfies the message syndrome")
    stego = imgs[best].apply(cover)
    n_changes = int(np.count_nonzero(stego.coeffs != cover.coeffs))
    stats = oracle.stats()
    logger.debug(f"VRCSTC embedded {m} bits into {n} elements: cost {wght[best]:.6g}, "
                 f"{n_changes} changes, {stats['checks']} robustness checks "
                 f"({stats['cache_hits']} cached)")
    return VrcstcResult(stego, float(wght[best]), n_changes, stats)


def verify_stego(stego: CoefficientImage, params: ChannelParams) -> ChannelReport:
    """Recompress the finished stego once and report what the channel would change."""
    report = diff_report(stego, recompress_image(stego, params))
    if report.changed_total:
        logger.warning(f"{report.changed_total} stego coefficients change under recompression "
                       f"(p_e {report.p_e:.3g})")
    return report
