"""Binary narrow-sense BCH codes over GF(2^7) and keyed bit permutations.

Binary polynomials are Python ints (bit d is the coefficient of x^d). Codeword
bit i carries the coefficient of x^(n-1-i), so the message occupies the first k bits.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from exceptions import DecodeFailure, InvalidArgumentError

logger = logging.getLogger(__name__)

GF_M = 7
GF_ORDER = (1 << GF_M) - 1
PRIMITIVE_POLY = 0b10001001  # x^7 + x^3 + 1
HEADER_BITS = 16


def _build_tables() -> Tuple[List[int], List[int]]:
    exp = [0] * (2 * GF_ORDER)
    log = [0] * (GF_ORDER + 1)
    value = 1
    for i in range(GF_ORDER):
        exp[i] = value
        log[value] = i
        value <<= 1
        if value >> GF_M:
            value ^= PRIMITIVE_POLY
    for i in range(GF_ORDER, 2 * GF_ORDER):
        exp[i] = exp[i - GF_ORDER]
    return exp, log


GF_EXP, GF_LOG = _build_tables()


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return GF_EXP[GF_LOG[a] + GF_LOG[b]]


def gf_div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(2^7)")
    if a == 0:
        return 0
    return GF_EXP[(GF_LOG[a] - GF_LOG[b]) % GF_ORDER]


def gf_pow_alpha(e: int) -> int:
    return GF_EXP[e % GF_ORDER]


def poly_mul2(a: int, b: int) -> int:
    """Product of two binary polynomials."""
    result = 0
    while b:
        if b & 1:
            result ^= a
        a <<= 1
        b >>= 1
    return result


def poly_mod2(a: int, g: int) -> int:
    dg = g.bit_length()
    while a.bit_length() >= dg:
        a ^= g << (a.bit_length() - dg)
    return a


def cyclotomic_coset(i: int) -> Tuple[int, ...]:
    coset, e = [], i % GF_ORDER
    while e not in coset:
        coset.append(e)
        e = (e * 2) % GF_ORDER
    return tuple(sorted(coset))


def minimal_polynomial(i: int) -> int:
    """Minimal polynomial of alpha^i over GF(2), as a binary int."""
    poly = [1]  # coefficients in GF(2^7), lowest degree first
    for e in cyclotomic_coset(i):
        root = gf_pow_alpha(e)
        nxt = [0] * (len(poly) + 1)
        for d, coef in enumerate(poly):
            nxt[d + 1] ^= coef
            nxt[d] ^= gf_mul(coef, root)
        poly = nxt
    if any(c not in (0, 1) for c in poly):
        raise ArithmeticError(f"minimal polynomial of alpha^{i} is not binary")
    return sum(c << d for d, c in enumerate(poly))


@dataclass(frozen=True)
class BchCode:
    n: int
    k: int
    t: int
    generator: int

    @property
    def efficiency(self) -> float:
        return self.k / self.n

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "k": self.k, "t": self.t, "e": self.efficiency}


@lru_cache(maxsize=None)
def bch_code(n: int = GF_ORDER, k: int = 64) -> BchCode:
    """Narrow-sense BCH code with the largest designed distance for (n, k)."""
    if n != GF_ORDER:
        raise InvalidArgumentError(f"only n = {GF_ORDER} is supported, got {n}")
    if not 1 <= k < n:
        raise InvalidArgumentError(f"k must lie in [1, {n - 1}], got {k}")
    generator, seen, best = 1, set(), None
    for t in range(1, n // 2 + 1):
        for i in (2 * t - 1, 2 * t):
            coset = cyclotomic_coset(i)
            if coset not in seen:
                seen.add(coset)
                generator = poly_mul2(generator, minimal_polynomial(i))
        degree = generator.bit_length() - 1
        if degree == n - k:
            best = BchCode(n, k, t, generator)
        elif degree > n - k:
            break
    if best is None:
        raise InvalidArgumentError(f"no binary BCH code with n={n}, k={k}")
    return best


def parse_bch(text: str) -> BchCode:
    """'127,64' -> BchCode."""
    try:
        n, k = (int(v) for v in text.split(","))
    except ValueError as e:
        raise InvalidArgumentError(f"BCH parameters must look like '127,64', got {text!r}") from e
    return bch_code(n, k)


def _bits_to_int(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | (int(b) & 1)
    return value


def _int_to_bits(value: int, length: int) -> np.ndarray:
    return np.array([(value >> (length - 1 - i)) & 1 for i in range(length)], dtype=np.uint8)


def bch_encode(msg: Sequence[int], code: BchCode) -> np.ndarray:
    if len(msg) != code.k:
        raise InvalidArgumentError(f"BCH message must have {code.k} bits, got {len(msg)}")
    shifted = _bits_to_int(msg) << (code.n - code.k)
    return _int_to_bits(shifted ^ poly_mod2(shifted, code.generator), code.n)


def syndromes(word: int, code: BchCode) -> List[int]:
    out = []
    for j in range(1, 2 * code.t + 1):
        s, d, w = 0, 0, word
        while w:
            if w & 1:
                s ^= gf_pow_alpha(j * d)
            w >>= 1
            d += 1
        out.append(s)
    return out


def berlekamp_massey(synd: Sequence[int]) -> List[int]:
    """Error locator Lambda(x), lowest degree first."""
    C, B = [1], [1]
    L, shift, b = 0, 1, 1
    for r in range(len(synd)):
        d = synd[r]
        for i in range(1, L + 1):
            if i < len(C):
                d ^= gf_mul(C[i], synd[r - i])
        if d == 0:
            shift += 1
            continue
        coef = gf_div(d, b)
        update = [0] * shift + [gf_mul(coef, x) for x in B]
        T = list(C)
        C = [(C[i] if i < len(C) else 0) ^ (update[i] if i < len(update) else 0)
             for i in range(max(len(C), len(update)))]
        if 2 * L <= r:
            L, B, b, shift = r + 1 - L, T, d, 1
        else:
            shift += 1
    while len(C) > 1 and C[-1] == 0:
        C.pop()
    return C


def chien_search(locator: Sequence[int], n: int) -> List[int]:
    """Degrees d with Lambda(alpha^-d) = 0."""
    roots = []
    for d in range(n):
        acc = 0
        for i, coef in enumerate(locator):
            if coef:
                acc ^= gf_mul(coef, gf_pow_alpha(-d * i))
        if acc == 0:
            roots.append(d)
    return roots


def bch_decode(word: Sequence[int], code: BchCode) -> Tuple[np.ndarray, int]:
    """(message bits, corrected errors); DecodeFailure beyond the correction capability."""
    if len(word) != code.n:
        raise InvalidArgumentError(f"BCH word must have {code.n} bits, got {len(word)}")
    received = _bits_to_int(word)
    synd = syndromes(received, code)
    if not any(synd):
        return _int_to_bits(received >> (code.n - code.k), code.k), 0

    locator = berlekamp_massey(synd)
    degree = len(locator) - 1
    if degree > code.t:
        raise DecodeFailure(f"error locator degree {degree} exceeds t={code.t}")
    roots = chien_search(locator, code.n)
    if len(roots) != degree:
        raise DecodeFailure(f"error locator has {len(roots)} roots, expected {degree}")
    corrected = received
    for d in roots:
        corrected ^= 1 << d
    if poly_mod2(corrected, code.generator):
        raise DecodeFailure("corrected word is not a codeword")
    return _int_to_bits(corrected >> (code.n - code.k), code.k), degree


# -- permutation ---------------------------------------------------------------

@dataclass(frozen=True)
class PermKey:
    seed: int
    length: Optional[int] = None

    def permutation(self, length: int) -> np.ndarray:
        if self.length is not None and self.length != length:
            raise InvalidArgumentError(f"permutation key is bound to length {self.length}, got {length}")
        return np.random.default_rng(self.seed).permutation(length)


def permute(bits: Sequence[int], key: PermKey) -> np.ndarray:
    bits = np.asarray(bits)
    return bits[key.permutation(len(bits))]


def depermute(bits: Sequence[int], key: PermKey) -> np.ndarray:
    bits = np.asarray(bits)
    out = np.empty_like(bits)
    out[key.permutation(len(bits))] = bits
    return out


# -- message framing -----------------------------------------------------------

@dataclass
class DecodeStats:
    blocks: int = 0
    corrected: List[int] = field(default_factory=list)
    failed_blocks: List[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed_blocks

    def to_dict(self) -> Dict[str, Any]:
        return {
            "blocks": self.blocks,
            "corrected": list(self.corrected),
            "corrected_total": int(sum(self.corrected)),
            "failed_blocks": list(self.failed_blocks),
        }


def codewords_for(nbytes: int, code: BchCode) -> int:
    return -(-(HEADER_BITS + 8 * nbytes) // code.k)


def max_message_bytes(bits: int) -> int:
    """Largest message whose length header and data fit in `bits` uncoded bits."""
    return max(0, (bits - HEADER_BITS) // 8)


def frame_message(data: bytes, code: BchCode) -> np.ndarray:
    """16-bit length header + data, zero padded to whole blocks, BCH encoded."""
    if len(data) >= 1 << HEADER_BITS:
        raise InvalidArgumentError(f"message of {len(data)} bytes does not fit the 16-bit length header")
    payload = np.unpackbits(np.frombuffer(len(data).to_bytes(2, "big") + data, dtype=np.uint8))
    blocks = codewords_for(len(data), code)
    padded = np.zeros(blocks * code.k, dtype=np.uint8)
    padded[:payload.size] = payload
    return np.concatenate([bch_encode(padded[i * code.k:(i + 1) * code.k], code) for i in range(blocks)])


def decode_blocks(coded: np.ndarray, code: BchCode) -> Tuple[np.ndarray, DecodeStats]:
    """Decode every codeword; failed blocks keep their raw systematic bits."""
    if len(coded) % code.n:
        raise InvalidArgumentError(f"coded length {len(coded)} is not a multiple of {code.n}")
    stats = DecodeStats(blocks=len(coded) // code.n)
    out = []
    for i in range(stats.blocks):
        word = coded[i * code.n:(i + 1) * code.n]
        try:
            msg, fixed = bch_decode(word, code)
            stats.corrected.append(fixed)
        except DecodeFailure:
            msg = np.asarray(word[:code.k], dtype=np.uint8)
            stats.corrected.append(0)
            stats.failed_blocks.append(i)
        out.append(msg)
    return (np.concatenate(out) if out else np.zeros(0, dtype=np.uint8)), stats


def header_length(first_block: np.ndarray) -> int:
    return int.from_bytes(np.packbits(first_block[:HEADER_BITS]).tobytes(), "big")


def unframe_message(coded: np.ndarray, code: BchCode) -> Tuple[bytes, DecodeStats]:
    bits, stats = decode_blocks(coded, code)
    if not stats.ok:
        raise DecodeFailure(f"{len(stats.failed_blocks)} of {stats.blocks} BCH blocks failed to decode")
    nbytes = header_length(bits)
    if codewords_for(nbytes, code) != stats.blocks:
        raise DecodeFailure(f"length header ({nbytes} bytes) disagrees with {stats.blocks} codewords")
    body = bits[HEADER_BITS:HEADER_BITS + 8 * nbytes]
    return np.packbits(body).tobytes(), stats
