"""Pixel <-> quantized-DCT conversions, quantization tables and container I/O.

Everything here works on grayscale images whose sides are multiples of 8. The
coefficient plane keeps the JPEG layout: block (bi, bj) occupies rows
8*bi..8*bi+7 and columns 8*bj..8*bj+7 of the array.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import scipy.fft

from exceptions import FormatError, InvalidArgumentError

logger = logging.getLogger(__name__)

BLOCK = 8
QDCT_MAGIC = b"QDCT1\n"
INT16_MIN, INT16_MAX = -32768, 32767

# ITU T.81 Annex K, table K.1 (luminance)
ANNEX_K_LUMINANCE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class QuantTable:
    steps: np.ndarray
    quality: int

    def __post_init__(self):
        steps = np.asarray(self.steps)
        if steps.shape != (BLOCK, BLOCK):
            raise InvalidArgumentError(f"quantization table must be 8x8, got {steps.shape}")
        if np.any(steps < 1) or np.any(steps > 255):
            raise InvalidArgumentError("quantization steps must lie in [1, 255]")
        if not 1 <= int(self.quality) <= 100:
            raise InvalidArgumentError(f"quality {self.quality} outside [1, 100]")
        object.__setattr__(self, "steps", _frozen(steps.astype(np.int64)))

    def __eq__(self, other) -> bool:
        return isinstance(other, QuantTable) and np.array_equal(self.steps, other.steps)

    def __hash__(self) -> int:
        return hash(self.steps.tobytes())

    def to_dict(self):
        return {"quality": self.quality, "steps": self.steps.tolist()}


@dataclass(frozen=True, eq=False)
class SpatialImage:
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        _check_dims(pixels.shape)
        if np.any(pixels < 0) or np.any(pixels > 255):
            raise InvalidArgumentError("pixels must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(pixels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other) -> bool:
        return isinstance(other, SpatialImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class CoefficientImage:
    coeffs: np.ndarray
    qtable: QuantTable

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs)
        _check_dims(coeffs.shape)
        if coeffs.size and (coeffs.min() < INT16_MIN or coeffs.max() > INT16_MAX):
            raise InvalidArgumentError("coefficient outside the signed 16-bit range")
        object.__setattr__(self, "coeffs", _frozen(np.rint(coeffs).astype(np.int16)))

    @property
    def height(self) -> int:
        return self.coeffs.shape[0]

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    @property
    def block_shape(self) -> Tuple[int, int]:
        return self.height // BLOCK, self.width // BLOCK

    @property
    def block_count(self) -> int:
        rows, cols = self.block_shape
        return rows * cols

    def blocks(self) -> np.ndarray:
        """View as (block_rows, block_cols, 8, 8)."""
        return blockify(self.coeffs)

    def block(self, block_index: int) -> np.ndarray:
        rows, cols = divmod(block_index, self.block_shape[1])
        return self.coeffs[rows * BLOCK:(rows + 1) * BLOCK, cols * BLOCK:(cols + 1) * BLOCK]

    def nonzero_ac(self) -> int:
        return nonzero_ac(self.coeffs)

    def with_coeffs(self, coeffs: np.ndarray) -> "CoefficientImage":
        return CoefficientImage(coeffs, self.qtable)

    def __eq__(self, other) -> bool:
        return (isinstance(other, CoefficientImage)
                and self.qtable == other.qtable
                and np.array_equal(self.coeffs, other.coeffs))


def _check_dims(shape):
    if len(shape) != 2:
        raise InvalidArgumentError(f"expected a 2-D plane, got shape {shape}")
    if shape[0] % BLOCK or shape[1] % BLOCK or shape[0] == 0 or shape[1] == 0:
        raise InvalidArgumentError(f"dimensions {shape} are not positive multiples of 8")


def quant_table(quality: int) -> QuantTable:
    if not isinstance(quality, (int, np.integer)) or not 1 <= quality <= 100:
        raise InvalidArgumentError(f"quality must be an integer in [1, 100], got {quality!r}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    steps = np.clip((ANNEX_K_LUMINANCE * scale + 50) // 100, 1, 255)
    return QuantTable(steps, int(quality))


def round_half_away(x: np.ndarray) -> np.ndarray:
    """MATLAB-style rounding; numpy's rint rounds half to even."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def dct2(block: np.ndarray) -> np.ndarray:
    """Orthonormal 2-D DCT-II over the last two axes."""
    return scipy.fft.dctn(np.asarray(block, dtype=np.float64), type=2, norm="ortho", axes=(-2, -1))


def idct2(block: np.ndarray) -> np.ndarray:
    return scipy.fft.idctn(np.asarray(block, dtype=np.float64), type=2, norm="ortho", axes=(-2, -1))


def blockify(plane: np.ndarray) -> np.ndarray:
    h, w = plane.shape
    return plane.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK).swapaxes(1, 2)


def unblockify(blocks: np.ndarray) -> np.ndarray:
    rows, cols = blocks.shape[:2]
    return blocks.swapaxes(1, 2).reshape(rows * BLOCK, cols * BLOCK)


def quantize_blocks(spatial_blocks: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Pixel blocks to quantized coefficients: shift, DCT, divide, round."""
    return round_half_away(dct2(np.asarray(spatial_blocks, dtype=np.float64) - 128.0) / steps)


def dequantize_blocks(coeff_blocks: np.ndarray, steps: np.ndarray) -> np.ndarray:
    """Coefficient blocks to pixels: dequantize, IDCT, round, shift, clamp."""
    spatial = round_half_away(idct2(np.asarray(coeff_blocks, dtype=np.float64) * steps)) + 128.0
    return np.clip(spatial, 0, 255)


def compress(img: SpatialImage, q: QuantTable) -> CoefficientImage:
    coeffs = unblockify(quantize_blocks(blockify(img.pixels), q.steps))
    return CoefficientImage(coeffs, q)


def decompress(ci: CoefficientImage) -> SpatialImage:
    pixels = unblockify(dequantize_blocks(ci.blocks(), ci.qtable.steps))
    return SpatialImage(pixels.astype(np.uint8))


def dequantized_spatial(ci: CoefficientImage) -> np.ndarray:
    """Real-valued decompression: no rounding, no clamping (used by the cost model)."""
    return unblockify(idct2(ci.blocks().astype(np.float64) * ci.qtable.steps)) + 128.0


def nonzero_ac(coeffs: np.ndarray) -> int:
    coeffs = np.asarray(coeffs)
    return int(np.count_nonzero(coeffs) - np.count_nonzero(coeffs[::BLOCK, ::BLOCK]))


# -- containers --------------------------------------------------------------

def _pgm_tokens(data: bytes, count: int) -> Tuple[list, int]:
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def parse_pgm(data: bytes) -> SpatialImage:
    tokens, pos = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"malformed PGM header: {e}") from e
    if maxval != 255:
        raise FormatError(f"PGM maxval must be 255, got {maxval}")
    if width % BLOCK or height % BLOCK or width <= 0 or height <= 0:
        raise FormatError(f"PGM dimensions {width}x{height} are not multiples of 8")
    pos += 1  # single whitespace after maxval
    payload = data[pos:pos + width * height]
    if len(payload) != width * height:
        raise FormatError(f"truncated PGM payload: {len(payload)} of {width * height} bytes")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return SpatialImage(pixels)


def pgm_bytes(img: SpatialImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.astype(np.uint8).tobytes()


def read_pgm(path: Union[str, Path]) -> SpatialImage:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path: Union[str, Path], img: SpatialImage):
    Path(path).write_bytes(pgm_bytes(img))
    logger.debug(f"Wrote {img.width}x{img.height} PGM to {path}")


def qdct_bytes(ci: CoefficientImage) -> bytes:
    header = QDCT_MAGIC + f"{ci.width}\n{ci.height}\n{ci.qtable.quality}\n".encode("ascii")
    return header + ci.blocks().astype("<i2").tobytes()


def parse_qdct(data: bytes) -> CoefficientImage:
    if not data.startswith(QDCT_MAGIC):
        raise FormatError("missing QDCT1 magic")
    lines = data[len(QDCT_MAGIC):].split(b"\n", 3)
    if len(lines) < 4:
        raise FormatError("truncated QDCT header")
    try:
        width, height, quality = (int(v) for v in lines[:3])
    except ValueError as e:
        raise FormatError(f"malformed QDCT header: {e}") from e
    if width % BLOCK or height % BLOCK or width <= 0 or height <= 0:
        raise FormatError(f"QDCT dimensions {width}x{height} are not multiples of 8")
    if not 1 <= quality <= 100:
        raise FormatError(f"QDCT quality {quality} outside [1, 100]")
    payload = lines[3]
    expected = width * height * 2
    if len(payload) != expected:
        raise FormatError(f"QDCT payload has {len(payload)} bytes, expected {expected}")
    blocks = np.frombuffer(payload, dtype="<i2").reshape(height // BLOCK, width // BLOCK, BLOCK, BLOCK)
    return CoefficientImage(unblockify(blocks).astype(np.int16), quant_table(quality))


def read_qdct(path: Union[str, Path]) -> CoefficientImage:
    return parse_qdct(Path(path).read_bytes())


def write_qdct(path: Union[str, Path], ci: CoefficientImage):
    Path(path).write_bytes(qdct_bytes(ci))
    logger.debug(f"Wrote {ci.width}x{ci.height} QDCT (quality {ci.qtable.quality}) to {path}")


def crop_to_blocks(pixels: np.ndarray, size: Optional[int] = None) -> np.ndarray:
    """Center crop to size x size, or to the largest multiple of 8."""
    h, w = pixels.shape
    th, tw = (size, size) if size else (h - h % BLOCK, w - w % BLOCK)
    if th > h or tw > w or th % BLOCK or tw % BLOCK or th == 0 or tw == 0:
        raise InvalidArgumentError(f"cannot crop {w}x{h} image to {tw}x{th}")
    top, left = (h - th) // 2, (w - tw) // 2
    return pixels[top:top + th, left:left + tw]


def read_image(path: Union[str, Path], size: Optional[int] = None) -> SpatialImage:
    """Load PGM strictly, anything else through Pillow as 8-bit grayscale."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        img = read_pgm(path)
        if size is None:
            return img
        return SpatialImage(crop_to_blocks(img.pixels, size))
    from PIL import Image

    with Image.open(path) as im:
        pixels = np.asarray(im.convert("L"), dtype=np.uint8)
    return SpatialImage(crop_to_blocks(pixels, size))


def load_cover(path: Union[str, Path], quality: int) -> CoefficientImage:
    """A QDCT container as-is, or a raster image compressed at `quality`."""
    path = Path(path)
    if path.suffix.lower() == ".qdct":
        return read_qdct(path)
    return compress(read_image(path), quant_table(quality))
