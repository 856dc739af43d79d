"""End-to-end RSVRC embedding and extraction, subimage partitioning and evaluation.

Embedding: TCM on the cover, BCH framing of the message, keyed permutation, split
across keyed subimages, one trellis per subimage. The receiver rebuilds partitions and
lattices from the key and the image dimensions only.
"""
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from channel import (ChannelParams, TcmResult, channel_for, diff_report, recompress_image, tcm)
from codec import BLOCK, CoefficientImage, SpatialImage, blockify, compress, quant_table
from distortion import CostMap, additive_distortion, juniward_costmap
from ecc import (HEADER_BITS, BchCode, DecodeStats, PermKey, bch_code, codewords_for, decode_blocks,
                 depermute, frame_message, header_length, max_message_bytes, permute, unframe_message)
from exceptions import (CapacityError, DecodeFailure, ExtractionFailure, InvalidArgumentError)
from robustness import RobustnessConfig, compute_C
from stc import BitCover, build_hhat, stc_embed, stc_extract, stc_width
from vrcstc import VrcstcParams, planned_changes, verify_stego, vrcstc_embed

logger = logging.getLogger(__name__)

METHODS = ("rsvrc", "baseline")
AC_OFFSETS = np.array([(u, v) for u in range(BLOCK) for v in range(BLOCK) if (u, v) != (0, 0)])
MAX_PAYLOAD = 0.4

DEFAULT_EVALUATION_SETTINGS = {
    "qualities": [75, 85, 95],
    "payloads": [0.05, 0.1],
    "methods": list(METHODS),
    "bch": [[127, 64]],
    "crop": 256,
    "seed": 2024,
}


def _subseed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class StegoKey:
    partition_seed: int
    lattice_seed: int
    perm_seed: int
    hhat_seed: int
    rng_seed: int

    @classmethod
    def from_hex(cls, key_hex: str) -> "StegoKey":
        try:
            raw = bytes.fromhex(key_hex)
        except ValueError as e:
            raise InvalidArgumentError(f"key must be a hex string: {e}") from e
        if not raw:
            raise InvalidArgumentError("key must not be empty")

        def seed(label: str) -> int:
            return int.from_bytes(hashlib.sha256(raw + label.encode()).digest()[:8], "big")

        return cls(seed("partition"), seed("lattice"), seed("perm"), seed("hhat"), seed("rng"))


@dataclass(frozen=True)
class EmbedParams:
    payload: float = 0.1
    quality: int = 85
    max_iters: int = 12
    h: int = 3
    bch_n: int = 127
    bch_k: int = 64
    subimages: int = 16
    workers: int = 1
    codewords: Optional[int] = None
    sigma: float = 2 ** -6
    wet_cost: float = 1e13

    def __post_init__(self):
        if not 0 < self.payload <= MAX_PAYLOAD:
            raise InvalidArgumentError(f"payload must lie in (0, {MAX_PAYLOAD}] bpnzac, got {self.payload}")
        if self.subimages < 1:
            raise InvalidArgumentError(f"subimages must be >= 1, got {self.subimages}")
        if self.workers < 1:
            raise InvalidArgumentError(f"workers must be >= 1, got {self.workers}")
        if self.codewords is not None and self.codewords < 0:
            raise InvalidArgumentError(f"codewords must be >= 0, got {self.codewords}")

    @classmethod
    def from_config(cls, **overrides) -> "EmbedParams":
        from config import CHANNEL_CONFIG, DISTORTION_CONFIG, EMBED_CONFIG

        values = {
            "payload": EMBED_CONFIG["payload"],
            "quality": CHANNEL_CONFIG["quality"],
            "max_iters": CHANNEL_CONFIG["max_iters"],
            "h": EMBED_CONFIG["stc_height"],
            "bch_n": EMBED_CONFIG["bch_n"],
            "bch_k": EMBED_CONFIG["bch_k"],
            "subimages": EMBED_CONFIG["subimages"],
            "workers": EMBED_CONFIG["workers"],
            "sigma": DISTORTION_CONFIG["sigma"],
            "wet_cost": DISTORTION_CONFIG["wet_cost"],
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def code(self) -> BchCode:
        return bch_code(self.bch_n, self.bch_k)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "payload": self.payload, "quality": self.quality, "max_iters": self.max_iters,
            "h": self.h, "bch": [self.bch_n, self.bch_k], "subimages": self.subimages,
            "codewords": self.codewords,
        }


@dataclass
class Lattice:
    """Keyed order of the AC coefficients of one subimage."""
    positions: np.ndarray
    bits: np.ndarray
    nonzero_ac: int

    def __len__(self) -> int:
        return len(self.positions)

    def capacity(self, payload: float) -> int:
        return int(np.floor(payload * self.nonzero_ac))


@dataclass
class PreparedCover:
    """TCM-processed cover with its channel and J-UNIWARD costs."""
    tcm: TcmResult
    params: ChannelParams
    costmap: CostMap

    @property
    def image(self) -> CoefficientImage:
        return self.tcm.image

    def capacity(self, payload: float) -> int:
        return int(np.floor(payload * self.image.nonzero_ac()))

    def max_message_bytes(self, payload: float) -> int:
        return max_message_bytes(self.capacity(payload))


@dataclass
class ExtractResult:
    message: bytes
    codewords: int
    p_s: Optional[float]
    stats: DecodeStats
    success: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"success": self.success, "bytes": len(self.message), "codewords": self.codewords,
                "p_s": self.p_s, "decode": self.stats.to_dict()}


@dataclass
class EvalRecord:
    image: str
    method: str
    quality: int
    payload: float
    bch: Tuple[int, int]
    message_bits: int
    changes: int
    p_e: float
    p_s: float
    success: bool
    embed_hist: np.ndarray
    error_hist: np.ndarray

    def to_dict(self) -> Dict[str, Any]:
        return {
            "image": self.image, "method": self.method, "quality": self.quality,
            "payload": self.payload, "bch": list(self.bch), "message_bits": self.message_bits,
            "changes": self.changes, "p_e": self.p_e, "p_s": self.p_s, "success": self.success,
        }


@dataclass
class EvalResult:
    method: str
    quality: int
    payload: float
    bch: Tuple[int, int]
    records: List[EvalRecord] = field(default_factory=list)

    @property
    def images(self) -> int:
        return len(self.records)

    @property
    def p_e(self) -> float:
        return float(np.mean([r.p_e for r in self.records])) if self.records else 0.0

    @property
    def p_s(self) -> float:
        return float(np.mean([r.p_s for r in self.records])) if self.records else 0.0

    @property
    def r_s(self) -> float:
        return float(np.mean([r.success for r in self.records])) if self.records else 0.0

    @property
    def e(self) -> float:
        return self.bch[1] / self.bch[0]

    @property
    def embed_hist(self) -> np.ndarray:
        return sum((r.embed_hist for r in self.records), np.zeros((BLOCK, BLOCK), dtype=np.int64))

    @property
    def error_hist(self) -> np.ndarray:
        return sum((r.error_hist for r in self.records), np.zeros((BLOCK, BLOCK), dtype=np.int64))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method, "quality": self.quality, "payload": self.payload,
            "bch": list(self.bch), "images": self.images,
            "p_e": self.p_e, "p_s": self.p_s, "r_s": self.r_s, "e": self.e,
            "embed_hist": self.embed_hist.astype(int).tolist(),
            "error_hist": self.error_hist.astype(int).tolist(),
            "records": [r.to_dict() for r in self.records],
        }


# -- partition and lattice -------------------------------------------------------

def partition_blocks(ci: CoefficientImage, subimages: int, partition_seed: int) -> List[np.ndarray]:
    count = ci.block_count
    if subimages < 1 or count % subimages:
        raise InvalidArgumentError(f"{count} blocks cannot be split into {subimages} equal subimages")
    perm = np.random.default_rng(partition_seed).permutation(count)
    return [np.sort(group) for group in perm.reshape(subimages, -1)]


def build_lattice(blocks: np.ndarray, ci: CoefficientImage, lattice_seed: int) -> Lattice:
    blocks_per_row = ci.block_shape[1]
    brow, bcol = np.divmod(np.asarray(blocks, dtype=np.int64), blocks_per_row)
    rows = brow[:, None] * BLOCK + AC_OFFSETS[None, :, 0]
    cols = bcol[:, None] * BLOCK + AC_OFFSETS[None, :, 1]
    positions = (rows * ci.width + cols).ravel()
    positions = positions[np.random.default_rng(lattice_seed).permutation(len(positions))]
    values = ci.coeffs.ravel()[positions].astype(np.int64)
    return Lattice(positions, (np.abs(values) & 1).astype(np.uint8), int(np.count_nonzero(values)))


def subimage_lattices(ci: CoefficientImage, key: StegoKey, subimages: int) -> List[Lattice]:
    groups = partition_blocks(ci, subimages, key.partition_seed)
    return [build_lattice(g, ci, _subseed(key.lattice_seed, i)) for i, g in enumerate(groups)]


def split_sizes(total: int, parts: int) -> np.ndarray:
    sizes = np.full(parts, total // parts, dtype=np.int64)
    sizes[:total % parts] += 1
    return sizes


def _subimage_hhat(key: StegoKey, index: int, p: EmbedParams, n: int, m: int):
    return build_hhat(p.h, stc_width(n, m, p.payload), _subseed(key.hhat_seed, index))


# -- embedding -------------------------------------------------------------------

def prepare_cover(cover: Union[CoefficientImage, SpatialImage], p: EmbedParams) -> PreparedCover:
    if isinstance(cover, SpatialImage):
        cover = compress(cover, quant_table(p.quality))
    params = channel_for(cover, p.quality)
    result = tcm(cover, params, p.max_iters)
    logger.info(f"TCM at QF{p.quality}: {result.iterations} iterations, "
                f"{result.residual_changes} residual changes")
    costmap = juniward_costmap(result.image, p.sigma, p.wet_cost)
    return PreparedCover(result, params, costmap)


def _embed_subimage(index: int, prepared: PreparedCover, lattice: Lattice, bits: np.ndarray,
                    key: StegoKey, p: EmbedParams, method: str) -> Tuple[Dict[int, int], float]:
    """Changed positions of one subimage and the robustness cost C used for it."""
    cover = prepared.image
    if len(bits) == 0:
        return {}, 0.0
    C = compute_C(prepared.costmap, lattice.positions)
    hh = _subimage_hhat(key, index, p, len(lattice), len(bits))
    rng_key = _subseed(key.rng_seed, index)
    changes = planned_changes(cover, lattice.positions, rng_key)
    if method == "rsvrc":
        config = RobustnessConfig(C, prepared.params.stationary)
        result = vrcstc_embed(cover, lattice.positions, prepared.costmap, bits,
                              VrcstcParams(hh, config, rng_key), changes)
        flat = result.stego.coeffs.ravel()
        changed = np.flatnonzero(flat[lattice.positions] != cover.coeffs.ravel()[lattice.positions])
        out = {int(lattice.positions[j]): int(flat[lattice.positions[j]]) for j in changed}
    else:
        costs = prepared.costmap.rho.ravel()[lattice.positions].astype(np.float64)
        costs[changes.wet] = np.inf
        stego_bits = stc_embed(BitCover(changes.bits, costs), bits, hh, prepared.costmap.wet_cap).stego
        flipped = np.flatnonzero(stego_bits != changes.bits)
        out = {int(lattice.positions[j]): int(changes.values[j]) for j in flipped}
    logger.info(f"Subimage {index}: {len(bits)} bits into {len(lattice)} elements, "
                f"{len(out)} changes, C {C:.4g}")
    return out, C


def embed(cover: Union[CoefficientImage, SpatialImage], msg: bytes, key: StegoKey, p: EmbedParams,
          method: str = "rsvrc", prepared: Optional[PreparedCover] = None) -> Tuple[CoefficientImage, Dict[str, Any]]:
    if method not in METHODS:
        raise InvalidArgumentError(f"unknown method {method!r}, expected one of {METHODS}")
    if prepared is None:
        prepared = prepare_cover(cover, p)
    base = prepared.image
    code = p.code

    lattices = subimage_lattices(base, key, p.subimages)
    capacity = prepared.capacity(p.payload)
    if msg:
        needed = HEADER_BITS + 8 * len(msg)
        if needed > capacity:
            raise CapacityError(f"message needs {needed} bits, capacity at {p.payload} bpnzac is {capacity}")
        coded = permute(frame_message(msg, code), PermKey(key.perm_seed))
    else:
        coded = np.zeros(0, dtype=np.uint8)
    sizes = split_sizes(len(coded), p.subimages)
    for lattice, size in zip(lattices, sizes):
        if size > len(lattice):
            raise CapacityError(f"subimage needs {size} coded bits but has only {len(lattice)} elements")
    parts = np.split(coded, np.cumsum(sizes)[:-1])

    def work(i: int) -> Tuple[Dict[int, int], float]:
        return _embed_subimage(i, prepared, lattices[i], parts[i], key, p, method)

    if p.workers > 1:
        with ThreadPoolExecutor(max_workers=p.workers) as pool:
            outcomes = list(pool.map(work, range(p.subimages)))
    else:
        outcomes = [work(i) for i in range(p.subimages)]
    changes = [part for part, _ in outcomes]

    coeffs = base.coeffs.astype(np.int64).ravel()
    for part in changes:
        for pos, value in part.items():
            coeffs[pos] = value
    stego = base.with_coeffs(coeffs.reshape(base.coeffs.shape))

    verify = verify_stego(stego, prepared.params.stationary)
    embed_diff = diff_report(base, stego)
    report = {
        "method": method,
        "tcm": prepared.tcm.to_dict(),
        "capacity_bits": capacity,
        "message_bytes": len(msg),
        "coded_bits": int(len(coded)),
        "codewords": int(len(coded) // code.n),
        "changes": embed_diff.changed_total,
        "distortion": additive_distortion(prepared.costmap, base, stego),
        "C": [C for _, C in outcomes],
        "embed_hist": embed_diff.changed_by_mode.astype(int).tolist(),
        "verify": verify.to_dict(),
        "non_robust_blocks": non_robust_blocks(stego, prepared.params.stationary),
    }
    if prepared.tcm.residual_changes:
        report["warning"] = f"TCM did not converge ({prepared.tcm.residual_changes} residual changes)"
    logger.info(f"Embedded {len(msg)} bytes with {method}: {report['changes']} changes, "
                f"p_e after one recompression {verify.p_e:.3g}")
    return stego, report


def non_robust_blocks(stego: CoefficientImage, params: ChannelParams) -> int:
    changed = blockify(recompress_image(stego, params).coeffs != stego.coeffs)
    return int(np.count_nonzero(changed.any(axis=(2, 3))))


# -- extraction ------------------------------------------------------------------

def extract_coded(received: CoefficientImage, key: StegoKey, p: EmbedParams, codewords: int,
                  lattices: Optional[List[Lattice]] = None) -> np.ndarray:
    """Depermuted coded bits of `codewords` BCH blocks, before decoding."""
    code = p.code
    if lattices is None:
        lattices = subimage_lattices(received, key, p.subimages)
    total = codewords * code.n
    sizes = split_sizes(total, p.subimages)
    parts = []
    for i, (lattice, size) in enumerate(zip(lattices, sizes)):
        if size > len(lattice):
            raise CapacityError(f"subimage {i} cannot hold {size} coded bits")
        if size == 0:
            continue
        hh = _subimage_hhat(key, i, p, len(lattice), int(size))
        parts.append(stc_extract(lattice.bits, hh, int(size)))
    coded = np.concatenate(parts) if parts else np.zeros(0, dtype=np.uint8)
    return depermute(coded, PermKey(key.perm_seed))


def _search_codewords(received: CoefficientImage, key: StegoKey, p: EmbedParams,
                      lattices: List[Lattice]) -> Optional[int]:
    """Smallest codeword count whose first block decodes to a consistent length header."""
    code = p.code
    lattice_bits = sum(len(lat) for lat in lattices)
    ceiling = int(np.ceil(MAX_PAYLOAD * received.nonzero_ac() / code.k)) + 1
    limit = min(lattice_bits // code.n, ceiling)
    for count in range(1, limit + 1):
        coded = extract_coded(received, key, p, count, lattices)
        bits, stats = decode_blocks(coded[:code.n], code)
        if not stats.ok:
            continue
        if codewords_for(header_length(bits), code) == count:
            logger.debug(f"Length search settled on {count} codewords")
            return count
    return None


def extract(received: CoefficientImage, key: StegoKey, p: EmbedParams, strict: bool = True) -> ExtractResult:
    """Recover the message; with strict=False a failure comes back as success=False instead of raising."""
    code = p.code
    lattices = subimage_lattices(received, key, p.subimages)
    if p.codewords == 0:
        return ExtractResult(b"", 0, 0.0, DecodeStats(), True)
    count = p.codewords if p.codewords is not None else _search_codewords(received, key, p, lattices)
    if count is None:
        if not strict:
            return ExtractResult(b"", 0, None, DecodeStats(), False)
        raise ExtractionFailure("no codeword count yields a consistent length header",
                                {"searched": True})

    coded = extract_coded(received, key, p, count, lattices)
    try:
        message, stats = unframe_message(coded, code)
    except DecodeFailure as e:
        _, stats = decode_blocks(coded, code)
        logger.warning(f"BCH decoding failed: {e}")
        if not strict:
            return ExtractResult(b"", count, None, stats, False)
        raise ExtractionFailure(str(e), {"codewords": count, "decode": stats.to_dict()}) from e

    reencoded = frame_message(message, code)
    p_s = float(np.count_nonzero(reencoded != coded)) / len(coded)
    logger.info(f"Extracted {len(message)} bytes from {count} codewords, "
                f"{sum(stats.corrected)} bit errors corrected")
    return ExtractResult(message, count, p_s, stats, True)


# -- evaluation ------------------------------------------------------------------

def pe_min(cover_scores: Sequence[float], stego_scores: Sequence[float]) -> float:
    """min over thresholds of (P_FA + P_MD) / 2; a score >= threshold is called stego."""
    cover = np.asarray(cover_scores, dtype=np.float64)
    stego = np.asarray(stego_scores, dtype=np.float64)
    if cover.size == 0 or stego.size == 0:
        raise InvalidArgumentError("pe_min needs nonempty cover and stego score lists")
    thresholds = np.append(np.unique(np.concatenate([cover, stego])), np.inf)
    p_fa = (cover[None, :] >= thresholds[:, None]).mean(axis=1)
    p_md = (stego[None, :] < thresholds[:, None]).mean(axis=1)
    return float(np.min((p_fa + p_md) / 2))


def _message_for(name: str, nbytes: int, seed: int) -> bytes:
    digest = hashlib.sha256(f"{seed}:{name}".encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big")).bytes(nbytes)


def evaluate(covers: Iterable[Tuple[str, Union[CoefficientImage, SpatialImage]]], p: EmbedParams,
             key: StegoKey, methods: Sequence[str] = METHODS, qualities: Optional[Sequence[int]] = None,
             payloads: Optional[Sequence[float]] = None, codes: Optional[Sequence[Tuple[int, int]]] = None,
             seed: int = 0, progress: Optional[Callable[[Dict[str, Any]], None]] = None) -> List[EvalResult]:
    """Embed, one channel pass, extract; aggregate per (method, quality, payload, code)."""
    covers = list(covers)
    if not covers:
        raise InvalidArgumentError("evaluation needs at least one cover")
    for method in methods:
        if method not in METHODS:
            raise InvalidArgumentError(f"unknown method {method!r}")
    qualities = list(qualities or [p.quality])
    payloads = list(payloads or [p.payload])
    codes = [tuple(c) for c in (codes or [(p.bch_n, p.bch_k)])]

    results: Dict[Tuple, EvalResult] = {}
    total = len(covers) * len(qualities) * len(payloads) * len(codes) * len(methods)
    done = 0
    for name, cover in covers:
        for quality in qualities:
            prepared = prepare_cover(cover, replace(p, quality=quality))
            for payload in payloads:
                nbytes = prepared.max_message_bytes(payload)
                msg = _message_for(name, nbytes, seed)
                for n, k in codes:
                    run = replace(p, quality=quality, payload=payload, bch_n=n, bch_k=k)
                    for method in methods:
                        record = _evaluate_one(name, prepared, msg, key, run, method)
                        slot = (method, quality, payload, (n, k))
                        results.setdefault(slot, EvalResult(method, quality, payload, (n, k))).records.append(record)
                        done += 1
                        if progress:
                            progress({"done": done, "total": total, **record.to_dict()})
    return list(results.values())


def _evaluate_one(name: str, prepared: PreparedCover, msg: bytes, key: StegoKey, p: EmbedParams,
                  method: str) -> EvalRecord:
    code = p.code
    stego, report = embed(prepared.image, msg, key, p, method, prepared=prepared)
    received = recompress_image(stego, prepared.params.stationary)
    channel = diff_report(stego, received)

    count = report["codewords"]
    truth = frame_message(msg, code) if msg else np.zeros(0, dtype=np.uint8)
    coded = extract_coded(received, key, p, count) if count else truth
    p_s = float(np.count_nonzero(coded != truth)) / len(truth) if len(truth) else 0.0
    if count:
        result = extract(received, key, replace(p, codewords=count), strict=False)
        success = result.success and result.message == msg
    else:
        success = True
    logger.info(f"{name} {method} QF{p.quality} {p.payload} bpnzac BCH({code.n},{code.k}): "
                f"p_e {channel.p_e:.3g}, p_s {p_s:.3g}, {'ok' if success else 'FAILED'}")
    return EvalRecord(
        image=name, method=method, quality=p.quality, payload=p.payload, bch=(code.n, code.k),
        message_bits=8 * len(msg), changes=report["changes"], p_e=channel.p_e, p_s=p_s,
        success=bool(success), embed_hist=np.asarray(report["embed_hist"], dtype=np.int64),
        error_hist=channel.changed_by_mode,
    )


def write_report(path: Union[str, Path], results: Sequence[EvalResult],
                 config: Optional[Dict[str, Any]] = None, version: int = 1):
    data = {
        "version": version,
        "generated_at": datetime.now().isoformat(timespec="seconds"),
        "config": config or {},
        "results": [r.to_dict() for r in results],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
    logger.info(f"Wrote evaluation report with {len(results)} rows to {path}")


def load_evaluation_settings(path: Union[str, Path]) -> Dict[str, Any]:
    settings = dict(DEFAULT_EVALUATION_SETTINGS)
    try:
        with open(path, "r", encoding="utf-8") as f:
            settings.update(json.load(f))
        logger.info(f"Evaluation settings loaded from {path}")
    except FileNotFoundError:
        logger.info("No evaluation settings file found, using defaults")
    return settings
