import numpy as np
import pytest

from codec import CoefficientImage, SpatialImage, compress, quant_table


def textured_pixels(size: int = 64, seed: int = 0, noise: float = 20.0) -> np.ndarray:
    """Smooth waves with additive Gaussian texture, clipped to 8 bits."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    base = 128 + 30 * np.sin(x / 7.0) + 20 * np.cos(y / 5.0) + rng.normal(0, noise, (size, size))
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


def half_noisy_pixels(size: int = 64, seed: int = 1) -> np.ndarray:
    """Flat left half, strong noise on the right half."""
    rng = np.random.default_rng(seed)
    pixels = np.full((size, size), 120.0)
    pixels[:, size // 2:] += rng.normal(0, 40, (size, size - size // 2))
    return np.clip(np.rint(pixels), 0, 255).astype(np.uint8)


def stressed_pixels(size: int = 128, seed: int = 0) -> np.ndarray:
    """Heavy texture with a bright band pressed against the 8-bit ceiling."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    base = 140 + 40 * np.sin(x / 6.0 + seed) + 25 * np.cos(y / 4.0) + rng.normal(0, 35, (size, size))
    top = int(rng.integers(0, size // 2))
    base[top:top + size // 4] += 90
    return np.clip(np.rint(base), 0, 255).astype(np.uint8)


@pytest.fixture
def textured_image() -> SpatialImage:
    return SpatialImage(textured_pixels())


@pytest.fixture
def textured_cover(textured_image) -> CoefficientImage:
    return compress(textured_image, quant_table(85))


@pytest.fixture
def half_noisy_cover() -> CoefficientImage:
    return compress(SpatialImage(half_noisy_pixels()), quant_table(85))


@pytest.fixture
def flat_cover() -> CoefficientImage:
    return compress(SpatialImage(np.full((32, 32), 128, dtype=np.uint8)), quant_table(85))
