import math

import numpy as np
import pytest

from channel import (ChannelParams, ChannelReport, channel_for, diff_report, recompress_block,
                     recompress_image, simulate, tcm)
from codec import CoefficientImage, SpatialImage, compress, quant_table
from conftest import textured_pixels
from exceptions import InvalidArgumentError


def test_flat_cover_is_a_fixpoint(flat_cover):
    result = tcm(flat_cover, ChannelParams.matched(85))
    assert result.iterations == 1
    assert result.converged
    assert result.history == [0]
    assert result.image == flat_cover


def test_tcm_history_and_cap(textured_cover):
    params = channel_for(textured_cover, 85)
    result = tcm(textured_cover, params, max_iters=12)
    assert 1 <= result.iterations <= 12
    assert len(result.history) == result.iterations
    assert result.image.qtable == quant_table(85)
    # a converged image passes the channel untouched
    if result.converged:
        assert simulate(result.image, params.stationary)["cumulative"].p_e == 0


def test_tcm_reports_residual_changes(textured_cover):
    result = tcm(textured_cover, channel_for(textured_cover, 85), max_iters=1)
    again = recompress_image(result.image, ChannelParams.matched(85))
    assert result.residual_changes == int(np.count_nonzero(again.coeffs != result.image.coeffs))


def test_tcm_across_tables(textured_image):
    cover = compress(textured_image, quant_table(95))
    params = channel_for(cover, 75)
    assert params.q1 == quant_table(95) and params.q2 == quant_table(75)
    result = tcm(cover, params)
    assert result.image.qtable == quant_table(75)
    assert result.iterations >= 1


def test_tcm_rejects_zero_iterations(flat_cover):
    with pytest.raises(InvalidArgumentError):
        tcm(flat_cover, ChannelParams.matched(85), max_iters=0)


def test_recompress_block_shape():
    with pytest.raises(InvalidArgumentError):
        recompress_block(np.zeros((4, 8)), ChannelParams.matched(85))
    assert np.all(recompress_block(np.zeros((8, 8)), ChannelParams.matched(85)) == 0)


def test_clipping_block_is_not_stable():
    block = np.zeros((8, 8), dtype=np.int64)
    block[0, 0] = 2000
    out = recompress_block(block, ChannelParams.matched(100))
    assert out[0, 0] == (255 - 128) * 8


def test_diff_report_counts_modes(flat_cover):
    coeffs = np.array(flat_cover.coeffs)
    coeffs[0, 1] += 1
    coeffs[8, 9] += 1
    coeffs[3, 3] -= 2
    report = diff_report(flat_cover, flat_cover.with_coeffs(coeffs))
    assert report.changed_total == 3
    assert report.changed_by_mode[0, 1] == 2
    assert report.changed_by_mode[3, 3] == 1
    assert report.changed_by_mode.sum() == report.changed_total
    assert report.p_e == pytest.approx(3 / flat_cover.coeffs.size)


def test_diff_report_dimension_mismatch(flat_cover):
    other = CoefficientImage(np.zeros((16, 16)), quant_table(85))
    with pytest.raises(InvalidArgumentError):
        diff_report(flat_cover, other)


def test_report_addition():
    a = ChannelReport(2, np.ones((8, 8), dtype=np.int64), 100)
    total = ChannelReport.empty() + a + a
    assert total.changed_total == 4
    assert total.total_coeffs == 200
    assert total.p_e == pytest.approx(0.02)
    assert total.to_dict()["changed_by_mode"][7][7] == 2


def test_simulate_multiple_passes(textured_cover):
    out = simulate(textured_cover, channel_for(textured_cover, 75), passes=3)
    assert len(out["passes"]) == 3
    assert out["image"].qtable == quant_table(75)
    assert out["cumulative"].total_coeffs == textured_cover.coeffs.size
    with pytest.raises(InvalidArgumentError):
        simulate(textured_cover, channel_for(textured_cover, 75), passes=0)


def scalar_recompress(block, q1, q2):
    """Step-by-step reference: returns the recompressed block and whether any rounding was a near tie."""
    def c(k):
        return math.sqrt(0.125) if k == 0 else 0.5

    def half_away(x):
        frac = abs(x) - math.floor(abs(x))
        return math.copysign(math.floor(abs(x) + 0.5), x), abs(frac - 0.5) < 1e-7

    near_tie = False
    pixels = [[0.0] * 8 for _ in range(8)]
    for x in range(8):
        for y in range(8):
            s = 0.0
            for u in range(8):
                for v in range(8):
                    s += (c(u) * c(v) * block[u][v] * q1[u][v]
                          * math.cos((2 * x + 1) * u * math.pi / 16) * math.cos((2 * y + 1) * v * math.pi / 16))
            p, tie = half_away(s)
            near_tie |= tie
            pixels[x][y] = min(max(p + 128, 0), 255) - 128
    out = np.zeros((8, 8), dtype=np.int64)
    for u in range(8):
        for v in range(8):
            d = 0.0
            for x in range(8):
                for y in range(8):
                    d += (c(u) * c(v) * pixels[x][y]
                          * math.cos((2 * x + 1) * u * math.pi / 16) * math.cos((2 * y + 1) * v * math.pi / 16))
            q, tie = half_away(d / q2[u][v])
            near_tie |= tie
            out[u, v] = int(q)
    return out, near_tie


@pytest.mark.parametrize("q1,q2", [(85, 85), (95, 75)])
def test_recompress_block_matches_scalar_reference(q1, q2):
    rng = np.random.default_rng(q1 + q2)
    params = ChannelParams(quant_table(q1), quant_table(q2))
    t1, t2 = params.q1.steps.tolist(), params.q2.steps.tolist()
    compared = 0
    for _ in range(60):
        block = rng.integers(-6, 7, (8, 8))
        # wide DC range so some blocks clip at 0 or 255
        block[0, 0] = rng.integers(-200, 201)
        expected, near_tie = scalar_recompress(block.tolist(), t1, t2)
        if near_tie:
            continue
        compared += 1
        assert np.array_equal(recompress_block(block, params), expected)
    assert compared >= 50


@pytest.mark.slow
def test_tcm_converges_on_most_covers():
    params = ChannelParams.matched(85)
    converged = 0
    for seed in range(20):
        cover = compress(SpatialImage(textured_pixels(256, seed=seed)), quant_table(85))
        result = tcm(cover, params, max_iters=12)
        if not result.converged:
            continue
        converged += 1
        assert result.iterations <= 12
        assert diff_report(result.image, recompress_image(result.image, params)).p_e == 0
    assert converged >= 18
