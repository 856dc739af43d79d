#!/usr/bin/env python3
"""Command-line entry point: tcm, embed, extract, simulate, evaluate, costmap, pe-min."""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from channel import channel_for, simulate, tcm
from codec import load_cover, read_image, read_qdct, write_qdct
from config import CHANNEL_CONFIG, EMBED_CONFIG, EVALUATION_CONFIG, LOGGING_CONFIG
from distortion import juniward_costmap
from ecc import parse_bch
from exceptions import RsvrcError
from pipeline import (METHODS, EmbedParams, StegoKey, embed, evaluate, extract, load_evaluation_settings,
                      pe_min, write_report)

logger = logging.getLogger(__name__)

CORPUS_SUFFIXES = {".pgm", ".png", ".bmp", ".tif", ".tiff", ".jpg", ".jpeg", ".qdct"}


def _print_json(data):
    print(json.dumps(data, indent=2, ensure_ascii=False))


def _csv(cast):
    def parse(value: str):
        try:
            return [cast(v) for v in value.split(",") if v.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from e
    return parse


def _bch_pair(value: str) -> Tuple[int, int]:
    code = parse_bch(value)
    return code.n, code.k


def _params(ns: argparse.Namespace) -> EmbedParams:
    bch = getattr(ns, "bch", None)
    n, k = bch if bch else (None, None)
    return EmbedParams.from_config(
        payload=getattr(ns, "payload", None),
        quality=getattr(ns, "quality", None),
        max_iters=getattr(ns, "max_iters", None),
        h=getattr(ns, "height", None),
        bch_n=n,
        bch_k=k,
        subimages=getattr(ns, "subimages", None),
        workers=getattr(ns, "workers", None),
        codewords=getattr(ns, "codewords", None),
    )


def handle_tcm(ns: argparse.Namespace):
    ci = load_cover(ns.input, ns.quality)
    result = tcm(ci, channel_for(ci, ns.quality), ns.max_iters)
    write_qdct(ns.output, result.image)
    _print_json(result.to_dict())


def handle_embed(ns: argparse.Namespace):
    p = _params(ns)
    cover = load_cover(ns.cover, p.quality)
    msg = Path(ns.msg).read_bytes()
    stego, report = embed(cover, msg, StegoKey.from_hex(ns.key), p, ns.method)
    write_qdct(ns.output, stego)
    if ns.report:
        Path(ns.report).write_text(json.dumps(report, indent=2), encoding="utf-8")
    _print_json({k: v for k, v in report.items() if k not in ("embed_hist", "verify")}
                | {"p_e": report["verify"]["p_e"]})


def handle_extract(ns: argparse.Namespace):
    result = extract(read_qdct(ns.stego), StegoKey.from_hex(ns.key), _params(ns))
    Path(ns.output).write_bytes(result.message)
    _print_json(result.to_dict())


def handle_simulate(ns: argparse.Namespace):
    ci = load_cover(ns.input, ns.quality)
    out = simulate(ci, channel_for(ci, ns.quality), ns.passes)
    if ns.output:
        write_qdct(ns.output, out["image"])
    _print_json({
        "passes": [r.to_dict() for r in out["passes"]],
        "cumulative": out["cumulative"].to_dict(),
    })


def load_corpus(directory: Path, crop: Optional[int]) -> List[Tuple[str, object]]:
    paths = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in CORPUS_SUFFIXES)
    corpus = []
    for path in paths:
        try:
            cover = read_qdct(path) if path.suffix.lower() == ".qdct" else read_image(path, crop)
        except RsvrcError as e:
            logger.warning(f"Skipping {path.name}: {e}")
            continue
        corpus.append((path.name, cover))
    logger.info(f"Loaded {len(corpus)} covers from {directory}")
    return corpus


def handle_evaluate(ns: argparse.Namespace):
    settings = load_evaluation_settings(ns.settings)
    qualities = ns.quality or settings["qualities"]
    payloads = ns.payload or settings["payloads"]
    methods = ns.methods or settings["methods"]
    codes = ns.bch or [tuple(c) for c in settings["bch"]]
    crop = ns.crop if ns.crop is not None else settings.get("crop")

    corpus = load_corpus(ns.corpus, crop)
    p = EmbedParams.from_config(quality=qualities[0], payload=payloads[0], workers=ns.workers)
    results = evaluate(corpus, p, StegoKey.from_hex(ns.key), methods, qualities, payloads, codes,
                       seed=settings.get("seed", 0))
    config = {"corpus": str(ns.corpus), "images": len(corpus), "methods": methods,
              "qualities": qualities, "payloads": payloads, "bch": [list(c) for c in codes],
              "crop": crop}
    write_report(ns.out, results, config, EVALUATION_CONFIG["report_version"])
    _print_json([{k: v for k, v in r.to_dict().items() if k not in ("records", "embed_hist", "error_hist")}
                 for r in results])


def handle_costmap(ns: argparse.Namespace):
    ci = load_cover(ns.input, ns.quality)
    cm = juniward_costmap(ci)
    Path(ns.output).write_bytes(cm.to_bytes())
    finite = cm.rho[~cm.wet]
    _print_json({"width": ci.width, "height": ci.height, "wet": int(cm.wet.sum()),
                 "min": float(finite.min()) if finite.size else None,
                 "max": float(finite.max()) if finite.size else None})


def _read_scores(path: Path) -> np.ndarray:
    return np.array(Path(path).read_text(encoding="utf-8").split(), dtype=np.float64)


def handle_pe_min(ns: argparse.Namespace):
    _print_json({"pe_min": pe_min(_read_scores(ns.cover_scores), _read_scores(ns.stego_scores))})


def build_parser() -> argparse.ArgumentParser:
    base = argparse.ArgumentParser(add_help=False)
    base.add_argument("-v", "--verbose", dest="verbosity", action="count", default=0,
                      help="increase verbosity level")

    parser = argparse.ArgumentParser(prog="rsvrc", allow_abbrev=False,
                                     description="Recompression-robust JPEG steganography")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("tcm", parents=[base], help="transport channel matching")
    p.add_argument("input", type=Path, metavar="IMG", help="PGM/raster image or QDCT container")
    p.add_argument("--quality", type=int, default=CHANNEL_CONFIG["quality"])
    p.add_argument("--max-iters", dest="max_iters", type=int, default=CHANNEL_CONFIG["max_iters"])
    p.add_argument("-o", "--output", type=Path, required=True, metavar="OUT.qdct")
    p.set_defaults(handler=handle_tcm)

    p = sub.add_parser("embed", parents=[base], help="embed a message")
    p.add_argument("cover", type=Path, metavar="COVER")
    p.add_argument("--msg", type=Path, required=True, metavar="FILE")
    p.add_argument("--key", required=True, metavar="HEX")
    p.add_argument("--payload", type=float, default=EMBED_CONFIG["payload"], help="bits per nonzero AC")
    p.add_argument("--quality", type=int, default=CHANNEL_CONFIG["quality"], help="channel quality factor")
    p.add_argument("--max-iters", dest="max_iters", type=int, default=CHANNEL_CONFIG["max_iters"])
    p.add_argument("--bch", type=_bch_pair, metavar="N,K")
    p.add_argument("--height", type=int, help="STC constraint height")
    p.add_argument("--subimages", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--method", choices=METHODS, default="rsvrc")
    p.add_argument("--report", type=Path, metavar="JSON", help="write the full embedding report")
    p.add_argument("-o", "--output", type=Path, required=True, metavar="STEGO.qdct")
    p.set_defaults(handler=handle_embed)

    p = sub.add_parser("extract", parents=[base], help="extract a message")
    p.add_argument("stego", type=Path, metavar="STEGO.qdct")
    p.add_argument("--key", required=True, metavar="HEX")
    p.add_argument("--payload", type=float, default=EMBED_CONFIG["payload"],
                   help="payload the sender embedded at; sets the STC width")
    p.add_argument("--bch", type=_bch_pair, metavar="N,K")
    p.add_argument("--height", type=int)
    p.add_argument("--subimages", type=int)
    p.add_argument("--codewords", type=int, help="skip the length search")
    p.add_argument("-o", "--output", type=Path, required=True, metavar="MSG")
    p.set_defaults(handler=handle_extract)

    p = sub.add_parser("simulate", parents=[base], help="push an image through the channel")
    p.add_argument("input", type=Path, metavar="IMG")
    p.add_argument("--quality", type=int, default=CHANNEL_CONFIG["quality"])
    p.add_argument("--passes", type=int, default=1)
    p.add_argument("-o", "--output", type=Path, metavar="OUT.qdct")
    p.set_defaults(handler=handle_simulate)

    p = sub.add_parser("evaluate", parents=[base], help="corpus evaluation of rsvrc and baseline")
    p.add_argument("--corpus", type=Path, required=True, metavar="DIR")
    p.add_argument("--key", default="00", metavar="HEX")
    p.add_argument("--methods", type=_csv(str))
    p.add_argument("--quality", type=_csv(int))
    p.add_argument("--payload", type=_csv(float))
    p.add_argument("--bch", type=_bch_pair, action="append", metavar="N,K")
    p.add_argument("--crop", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--settings", type=Path, default=Path(EVALUATION_CONFIG["settings_file"]))
    p.add_argument("--out", type=Path, required=True, metavar="REPORT.json")
    p.set_defaults(handler=handle_evaluate)

    p = sub.add_parser("costmap", parents=[base], help="dump J-UNIWARD costs as float64")
    p.add_argument("input", type=Path, metavar="IMG")
    p.add_argument("--quality", type=int, default=CHANNEL_CONFIG["quality"])
    p.add_argument("-o", "--output", type=Path, required=True, metavar="COSTS.bin")
    p.set_defaults(handler=handle_costmap)

    p = sub.add_parser("pe-min", parents=[base], help="minimal average detection error")
    p.add_argument("cover_scores", type=Path)
    p.add_argument("stego_scores", type=Path)
    p.set_defaults(handler=handle_pe_min)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    ns = build_parser().parse_args(argv)
    level = [LOGGING_CONFIG["level"], "INFO", "DEBUG"][min(ns.verbosity, 2)]
    logging.basicConfig(level=level, format=LOGGING_CONFIG["format"], stream=sys.stderr)
    try:
        ns.handler(ns)
    except RsvrcError as e:
        logger.error(f"{ns.cmd} failed: {e}")
        if getattr(e, "stats", None):
            _print_json({"success": False, "message": str(e), "stats": e.stats})
        return e.exit_code
    except OSError as e:
        logger.error(f"{ns.cmd} failed: {e}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
