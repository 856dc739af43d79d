import numpy as np
import pytest

from ecc import (GF_ORDER, HEADER_BITS, PermKey, bch_code, bch_decode, bch_encode, codewords_for,
                 depermute, frame_message, max_message_bytes, parse_bch, permute, poly_mod2,
                 unframe_message)
from exceptions import DecodeFailure, InvalidArgumentError


@pytest.fixture(scope="module")
def code():
    return bch_code(127, 64)


def test_code_parameters(code):
    assert code.t == 10
    assert code.generator.bit_length() - 1 == 63
    # the generator divides x^127 - 1
    assert poly_mod2((1 << GF_ORDER) | 1, code.generator) == 0
    assert bch_code(127, 92).t == 5
    assert code.efficiency == pytest.approx(0.5039, abs=1e-4)
    assert parse_bch("127,92") == bch_code(127, 92)


@pytest.mark.parametrize("n,k", [(63, 30), (127, 65), (127, 0), (127, 127)])
def test_unsupported_codes(n, k):
    with pytest.raises(InvalidArgumentError):
        bch_code(n, k)


def test_encode_is_systematic_and_linear(code):
    rng = np.random.default_rng(0)
    assert not bch_encode(np.zeros(64, dtype=np.uint8), code).any()
    a = rng.integers(0, 2, 64)
    b = rng.integers(0, 2, 64)
    ca, cb = bch_encode(a, code), bch_encode(b, code)
    assert np.array_equal(ca[:64], a)
    assert np.array_equal(bch_encode(a ^ b, code), ca ^ cb)
    word = int("".join(map(str, ca)), 2)
    assert poly_mod2(word, code.generator) == 0
    with pytest.raises(InvalidArgumentError):
        bch_encode(a[:63], code)


def test_corrects_up_to_t_errors(code):
    rng = np.random.default_rng(1)
    for trial in range(1000):
        msg = rng.integers(0, 2, 64).astype(np.uint8)
        word = bch_encode(msg, code)
        errors = trial % (code.t + 1)
        flips = rng.choice(code.n, errors, replace=False)
        word[flips] ^= 1
        decoded, corrected = bch_decode(word, code)
        assert np.array_equal(decoded, msg)
        assert corrected == errors


def test_detects_heavier_error_patterns(code):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(200):
        msg = rng.integers(0, 2, 64).astype(np.uint8)
        word = bch_encode(msg, code)
        word[rng.choice(code.n, int(rng.integers(11, 16)), replace=False)] ^= 1
        try:
            decoded, _ = bch_decode(word, code)
            bad += int(not np.array_equal(decoded, msg))
        except DecodeFailure:
            bad += 1
    assert bad == 200


def test_permutation_roundtrip():
    rng = np.random.default_rng(3)
    bits = rng.integers(0, 2, 381)
    key = PermKey(1234)
    assert np.array_equal(depermute(permute(bits, key), key), bits)
    assert np.array_equal(permute(np.ones(50), key), np.ones(50))
    differ = sum(not np.array_equal(PermKey(s).permutation(16), PermKey(s + 1000).permutation(16))
                 for s in range(100))
    assert differ >= 99
    with pytest.raises(InvalidArgumentError):
        permute(bits, PermKey(1, length=10))


def test_framing_roundtrip(code):
    data = b"robust stego"
    coded = frame_message(data, code)
    assert len(coded) == codewords_for(len(data), code) * code.n == 2 * 127
    decoded, stats = unframe_message(coded, code)
    assert decoded == data
    assert stats.ok and stats.blocks == 2
    assert max_message_bytes(2 * code.k) == 14
    assert max_message_bytes(HEADER_BITS - 1) == 0


def test_framing_tolerates_and_reports_errors(code):
    coded = frame_message(b"\x00" * 20, code)
    coded[[3, 50, 200, 201]] ^= 1
    decoded, stats = unframe_message(coded, code)
    assert decoded == b"\x00" * 20
    assert stats.corrected == [2, 2, 0]
    coded[:30] ^= 1
    with pytest.raises(DecodeFailure):
        unframe_message(coded, code)


def test_empty_message_frames_to_one_block(code):
    coded = frame_message(b"", code)
    assert len(coded) == code.n
    assert unframe_message(coded, code)[0] == b""
