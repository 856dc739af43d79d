"""Robustness cost: 0 when a modified block survives one recompression, else C."""
import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np

from channel import ChannelParams, recompress_block, recompress_blocks
from codec import BLOCK, CoefficientImage
from distortion import CostMap
from exceptions import CapacityError, InvalidArgumentError

logger = logging.getLogger(__name__)

# (offset inside the 8x8 block, new value) pairs, sorted by offset
Overlay = Tuple[Tuple[int, int], ...]


@dataclass(frozen=True)
class RobustnessConfig:
    C: float
    params: ChannelParams

    def __post_init__(self):
        if self.C < 0:
            raise InvalidArgumentError(f"C must be nonnegative, got {self.C}")


def compute_C(cm: CostMap, positions: Optional[np.ndarray] = None) -> float:
    """Largest finite cost, optionally over a subset of flat coefficient positions."""
    rho = cm.rho.ravel() if positions is None else cm.rho.ravel()[positions]
    if rho.size == 0:
        raise InvalidArgumentError("empty cost map")
    finite = rho[rho < cm.wet_cap]
    if finite.size == 0:
        raise CapacityError("every coefficient is wet; nothing can be embedded")
    return float(finite.max())


def is_block_robust(block: np.ndarray, params: ChannelParams) -> bool:
    return bool(np.array_equal(recompress_block(block, params), block))


def robustness_cost(state_img: CoefficientImage, block_index: int, config: RobustnessConfig) -> float:
    """0 when the block holding the tested coefficient survives one recompression, else C."""
    return 0.0 if is_block_robust(state_img.block(block_index), config.params) else config.C


class BlockRobustnessOracle:
    """Robustness verdicts for overlays on a fixed cover, memoized per (block, overlay).

    One instance belongs to one trellis; it is not shared between threads.
    """

    def __init__(self, cover: CoefficientImage, config: RobustnessConfig):
        self.blocks = cover.blocks().reshape(-1, BLOCK, BLOCK).astype(np.int64)
        self.config = config
        self._cache: Dict[Hashable, bool] = {}
        self.checks = 0
        self.hits = 0

    def _materialize(self, block_index: int, overlay: Overlay) -> np.ndarray:
        block = self.blocks[block_index].copy()
        flat = block.reshape(-1)
        for offset, value in overlay:
            flat[offset] = value
        return block

    def robust_many(self, requests: Sequence[Tuple[int, Overlay]]) -> List[bool]:
        """Verdicts for several (block, overlay) pairs, recompressing the misses in one batch."""
        self.checks += len(requests)
        missing = []
        for key in requests:
            if key in self._cache:
                self.hits += 1
            elif key not in missing:
                missing.append(key)
        if missing:
            stack = np.stack([self._materialize(b, overlay) for b, overlay in missing])
            out = recompress_blocks(stack, self.config.params)
            same = np.all(out == stack, axis=(1, 2))
            for key, ok in zip(missing, same):
                self._cache[key] = bool(ok)
        return [self._cache[key] for key in requests]

    def cost_many(self, requests: Sequence[Tuple[int, Overlay]]) -> List[float]:
        return [0.0 if ok else self.config.C for ok in self.robust_many(requests)]

    def stats(self) -> Dict[str, int]:
        return {"checks": self.checks, "cache_hits": self.hits, "cached_blocks": len(self._cache)}
