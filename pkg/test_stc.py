import itertools

import numpy as np
import pytest

from exceptions import EmbedFailure, InvalidArgumentError
from stc import (BitCover, SubMatrix, block_widths, build_hhat, column_layout, prune, stc_embed,
                 stc_extract, stc_width)


def brute_force(bits, costs, msg, hh):
    n = len(bits)
    # parity-check matrix, one row per cover element
    H = np.array([stc_extract(np.eye(n, dtype=np.uint8)[j], hh, len(msg)) for j in range(n)], dtype=np.int64)
    candidates = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    feasible = np.all((candidates @ H) % 2 == msg, axis=1)
    totals = ((candidates != bits) * costs).sum(axis=1)
    return float(totals[feasible].min())


def random_instance(rng, n, m, h):
    bits = rng.integers(0, 2, n).astype(np.uint8)
    costs = rng.uniform(0, 1, n)
    msg = rng.integers(0, 2, m).astype(np.uint8)
    w = int(rng.integers(1, n // m + 1))
    hh = build_hhat(h, w, int(rng.integers(1 << 30)))
    return bits, costs, msg, hh


def test_trellis_matches_exhaustive_search():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 13))
        m = int(rng.integers(1, n + 1))
        h = int(rng.choice([2, 3]))
        bits, costs, msg, hh = random_instance(rng, n, m, h)
        result = stc_embed(BitCover(bits, costs), msg, hh)
        assert np.array_equal(stc_extract(result.stego, hh, m), msg)
        assert result.cost == pytest.approx(float(costs[result.stego != bits].sum()), abs=1e-12)
        assert result.cost == pytest.approx(brute_force(bits, costs, msg, hh), abs=1e-12)


def test_matching_syndrome_costs_nothing():
    rng = np.random.default_rng(5)
    bits, costs, _, hh = random_instance(rng, 40, 10, 3)
    msg = stc_extract(bits, hh, 10)
    result = stc_embed(BitCover(bits, costs), msg, hh)
    assert result.cost == 0.0
    assert np.array_equal(result.stego, bits)


def test_wet_cover_fails():
    bits = np.zeros(6, dtype=np.uint8)
    hh = build_hhat(2, 3, 0)
    with pytest.raises(EmbedFailure):
        stc_embed(BitCover(bits, np.full(6, np.inf)), [1, 0], hh)
    with pytest.raises(EmbedFailure):
        stc_embed(BitCover(bits, np.full(6, 5.0)), [1, 0], hh, wet_cap=5.0)


def test_wet_elements_are_avoided():
    bits = np.zeros(4, dtype=np.uint8)
    costs = np.array([np.inf, 1.0, 0.1, 0.2])
    hh = SubMatrix(2, (3, 3, 3, 3))
    result = stc_embed(BitCover(bits, costs), [1], hh)
    assert result.stego[0] == 0
    assert result.cost == pytest.approx(0.1)


def test_ties_keep_the_cover():
    bits = np.array([1, 0], dtype=np.uint8)
    hh = SubMatrix(2, (3, 3))
    # either change fixes the syndrome at the same price
    result = stc_embed(BitCover(bits, [0.5, 0.5]), [0], hh)
    assert result.cost == 0.5
    assert int(result.stego.sum()) in (0, 2)


def test_empty_message():
    bits = np.array([1, 0, 1], dtype=np.uint8)
    result = stc_embed(BitCover(bits, [1, 1, 1]), [], build_hhat(3, 1, 0))
    assert np.array_equal(result.stego, bits)
    assert result.cost == 0.0


def test_submatrix_validation():
    with pytest.raises(InvalidArgumentError):
        SubMatrix(1, (1,))
    with pytest.raises(InvalidArgumentError):
        SubMatrix(3, (0b011,))
    with pytest.raises(InvalidArgumentError):
        SubMatrix(3, ())
    hh = build_hhat(4, 6, 42)
    assert hh == build_hhat(4, 6, 42)
    assert all(c & 0b1001 == 0b1001 and c < 16 for c in hh.columns)


def test_block_layout():
    assert block_widths(17, 5, 3).tolist() == [3, 3, 3, 3, 5]
    assert block_widths(20, 5, 4).tolist() == [4] * 5
    assert block_widths(17, 0, 3).size == 0
    hh = build_hhat(3, 3, 1)
    cols = column_layout(17, 5, hh)
    assert len(cols) == 17
    assert cols[:3].tolist() == list(hh.columns)
    assert cols[12:].tolist() == list(hh.columns) + list(hh.columns[:2])
    with pytest.raises(InvalidArgumentError):
        block_widths(17, 5, 4)
    with pytest.raises(InvalidArgumentError):
        block_widths(17, 5, 0)


def test_width_follows_payload():
    assert stc_width(630, 50, 0.1) == 10
    assert stc_width(630, 1, 0.3) == 3
    assert stc_width(630, 2, 0.4) == 2
    # too short for round(1/payload)
    assert stc_width(630, 100, 0.1) == 6
    assert stc_width(630, 50, 0.05) == 12
    assert stc_width(630, 0, 0.1) == 1
    with pytest.raises(InvalidArgumentError):
        stc_width(3, 4, 0.1)
    with pytest.raises(InvalidArgumentError):
        stc_width(30, 4, 0.0)


def test_leftover_elements_only_touch_the_last_row():
    hh = build_hhat(3, 4, 7)
    n, m = 30, 6
    eye = np.eye(n, dtype=np.uint8)
    last = np.zeros(m, dtype=np.uint8)
    last[-1] = 1
    for j in range(4 * m, n):
        assert np.array_equal(stc_extract(eye[j], hh, m), last)
    bits = np.zeros(n, dtype=np.uint8)
    costs = np.ones(n)
    costs[4 * m:] = 0.01
    result = stc_embed(BitCover(bits, costs), last, hh)
    assert result.cost == pytest.approx(0.01)
    assert np.flatnonzero(result.stego)[0] >= 4 * m


def test_change_rate_at_half_payload():
    rng = np.random.default_rng(21)
    n, m = 400, 200
    hh_width = stc_width(n, m, 0.5)
    assert hh_width == 2
    rates = []
    for trial in range(100):
        bits = rng.integers(0, 2, n).astype(np.uint8)
        msg = rng.integers(0, 2, m).astype(np.uint8)
        hh = build_hhat(3, hh_width, trial)
        result = stc_embed(BitCover(bits, np.ones(n)), msg, hh)
        assert np.array_equal(stc_extract(result.stego, hh, m), msg)
        rates.append(np.count_nonzero(result.stego != bits) / n)
    assert np.mean(rates) < 0.5 * 0.5 * 1.2


def test_extraction_is_linear():
    rng = np.random.default_rng(8)
    hh = build_hhat(3, 5, 9)
    a = rng.integers(0, 2, 50)
    b = rng.integers(0, 2, 50)
    assert np.array_equal(stc_extract(a ^ b, hh, 10), stc_extract(a, hh, 10) ^ stc_extract(b, hh, 10))


def test_prune_keeps_matching_states():
    assert prune([0, 1, 2, 3, 4, 5, 6, 7], 1, None) == [1, 3, 5, 7, None, None, None, None]
    assert prune([0, 1, 2, 3], 0, -1) == [0, 2, -1, -1]
