"""J-UNIWARD additive distortion for +-1 changes of quantized DCT coefficients."""
import logging
from dataclasses import dataclass
from typing import List, NamedTuple, Tuple

import numpy as np
import scipy.signal
from numpy.lib.stride_tricks import sliding_window_view

from codec import BLOCK, CoefficientImage, dequantized_spatial, idct2, unblockify
from exceptions import InvalidArgumentError

logger = logging.getLogger(__name__)

SIGMA = 2 ** -6
WET_COST = 1e13
MAX_ABS_COEFF = 1023
PAD = 16

# Daubechies-8 decomposition high-pass filter
DB8_HIGH = np.array([
    -0.0544158422, 0.3128715909, -0.6756307363, 0.5853546837,
    0.0158291053, -0.2840155430, -0.0004724846, 0.1287474266,
    0.0173693010, -0.0440882539, -0.0139810279, 0.0087460940,
    0.0048703530, -0.0003917404, -0.0006754494, -0.0001174768,
])
DB8_LOW = DB8_HIGH[::-1] * np.array([-1 if i % 2 else 1 for i in range(len(DB8_HIGH))])

# LH, HL, HH directional kernels
FILTERS = (
    np.outer(DB8_LOW, DB8_HIGH),
    np.outer(DB8_HIGH, DB8_LOW),
    np.outer(DB8_HIGH, DB8_HIGH),
)
KERNEL = FILTERS[0].shape[0]
# one block changes residuals on an (8 + 16 - 1)-wide footprint
FOOTPRINT = BLOCK + KERNEL - 1
# residual[y] uses pixels y-8 .. y+7
KERNEL_OFFSET = KERNEL // 2


class ResidualSet(NamedTuple):
    lh: np.ndarray
    hl: np.ndarray
    hh: np.ndarray


@dataclass(frozen=True, eq=False)
class CostMap:
    rho: np.ndarray
    wet_cap: float = WET_COST
    sigma: float = SIGMA

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidArgumentError(f"sigma must be positive, got {self.sigma}")
        rho = np.array(self.rho, dtype=np.float64)
        rho[np.isnan(rho)] = self.wet_cap
        if np.any(rho < 0):
            raise InvalidArgumentError("costs must be nonnegative")
        rho = np.minimum(rho, self.wet_cap)
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @property
    def wet(self) -> np.ndarray:
        return self.rho >= self.wet_cap

    def to_bytes(self) -> bytes:
        return self.rho.astype("<f8").tobytes()


def _correlate(plane: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Same-size correlation with zero fill, residual[y] = sum_a plane[y + a - 8] * kernel[a]."""
    full = scipy.signal.correlate2d(plane, kernel, mode="full", boundary="fill", fillvalue=0.0)
    start = KERNEL - 1 - KERNEL_OFFSET
    return full[start:start + plane.shape[0], start:start + plane.shape[1]]


def _padded_residuals(plane: np.ndarray) -> List[np.ndarray]:
    padded = np.pad(np.asarray(plane, dtype=np.float64), PAD, mode="symmetric")
    return [_correlate(padded, f) for f in FILTERS]


def wavelet_residuals(plane: np.ndarray) -> ResidualSet:
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2 or plane.shape[0] % BLOCK or plane.shape[1] % BLOCK:
        raise InvalidArgumentError(f"plane dimensions {plane.shape} are not multiples of 8")
    h, w = plane.shape
    return ResidualSet(*(r[PAD:PAD + h, PAD:PAD + w] for r in _padded_residuals(plane)))


def basis_responses(steps: np.ndarray) -> np.ndarray:
    """Signed residual change of a one-step change of every DCT mode, for the unflipped
    patch and its row, column and double mirror images: shape (2, 2, 3, 64, 23, 23)."""
    out = np.zeros((2, 2, len(FILTERS), BLOCK * BLOCK, FOOTPRINT, FOOTPRINT))
    for u in range(BLOCK):
        for v in range(BLOCK):
            unit = np.zeros((BLOCK, BLOCK))
            unit[u, v] = 1.0
            spatial = idct2(unit) * steps[u, v]
            for flip_rows in (0, 1):
                for flip_cols in (0, 1):
                    patch = spatial[::-1] if flip_rows else spatial
                    patch = patch[:, ::-1] if flip_cols else patch
                    for k, f in enumerate(FILTERS):
                        out[flip_rows, flip_cols, k, u * BLOCK + v] = scipy.signal.correlate2d(
                            patch, f, mode="full")
    return out


def _copies(index: int, count: int) -> List[Tuple[int, bool]]:
    """(canvas offset, mirrored) of every copy of a block's change along one axis.

    The symmetric padding mirrors a change in the first or last block row into the
    8 pixels just outside the image; deeper copies never reach an image residual.
    """
    copies = [(BLOCK, False)]
    if index == 0:
        copies.append((0, True))
    if index == count - 1:
        copies.append((2 * BLOCK, True))
    return copies


def _edge_block_costs(xi: List[np.ndarray], responses: np.ndarray, rows: int, cols: int,
                      cost: np.ndarray) -> None:
    """Overwrite the costs of the blocks on the image border.

    Their footprint leaves the image: only residuals inside it count, and the mirrored
    copy of the change in the padding adds to them.
    """
    lead = KERNEL - 1
    canvas_size = FOOTPRINT + 2 * BLOCK
    # canvas row 0 is image row r0 - 15; outside the image xi is zero
    xi_z = np.stack([np.pad(x, ((lead, lead + 1), (lead, lead + 1))) for x in xi])
    for bi in range(rows):
        for bj in range(cols):
            if 0 < bi < rows - 1 and 0 < bj < cols - 1:
                continue
            canvas = np.zeros((len(FILTERS), BLOCK * BLOCK, canvas_size, canvas_size))
            for r_off, r_flip in _copies(bi, rows):
                for c_off, c_flip in _copies(bj, cols):
                    response = responses[int(r_flip), int(c_flip)]
                    canvas[:, :, r_off:r_off + FOOTPRINT, c_off:c_off + FOOTPRINT] += response
            r0, c0 = bi * BLOCK, bj * BLOCK
            window = xi_z[:, r0:r0 + canvas_size, c0:c0 + canvas_size]
            cost[bi, bj] = np.einsum("kmxy,kxy->m", np.abs(canvas), window).reshape(BLOCK, BLOCK)


def juniward_costmap(ci: CoefficientImage, sigma: float = SIGMA, wet_cap: float = WET_COST) -> CostMap:
    spatial = dequantized_spatial(ci)
    residuals = _padded_residuals(spatial)
    responses = basis_responses(ci.qtable.steps)
    # |residual change| of every mode on the unflipped footprint
    impacts = np.abs(responses[0, 0]).reshape(len(FILTERS), BLOCK, BLOCK, FOOTPRINT, FOOTPRINT)
    rows, cols = ci.block_shape
    # footprint of block (bi, bj) starts 7 pixels above/left of the block in padded coordinates
    first = PAD - (KERNEL - 1 - KERNEL_OFFSET)

    cost = np.zeros((rows, cols, BLOCK, BLOCK))
    xi_inside = []
    for k, residual in enumerate(residuals):
        xi = 1.0 / (sigma + np.abs(residual))
        xi_inside.append(xi[PAD:PAD + ci.height, PAD:PAD + ci.width])
        windows = sliding_window_view(xi, (FOOTPRINT, FOOTPRINT))
        windows = windows[first::BLOCK, first::BLOCK][:rows, :cols]
        cost += np.einsum("abxy,uvxy->abuv", windows, impacts[k], optimize=True)
    _edge_block_costs(xi_inside, responses, rows, cols, cost)

    rho = unblockify(cost)
    rho[np.isnan(rho)] = wet_cap
    rho[np.abs(ci.coeffs) >= MAX_ABS_COEFF] = wet_cap
    logger.debug(f"J-UNIWARD costs for {ci.width}x{ci.height}: "
                 f"min {rho.min():.4g}, median {np.median(rho):.4g}")
    return CostMap(rho, wet_cap, sigma)


def additive_distortion(cm: CostMap, cover: CoefficientImage, stego: CoefficientImage) -> float:
    """Sum of rho over changed coefficients (the additive model's total distortion)."""
    changed = cover.coeffs != stego.coeffs
    return float(cm.rho[changed].sum())
