import os

from dotenv import load_dotenv

load_dotenv()


def _env_int(name: str, default: int) -> int:
    value = os.getenv(name)
    return int(value) if value not in (None, "") else default


def _env_float(name: str, default: float) -> float:
    value = os.getenv(name)
    return float(value) if value not in (None, "") else default


def _env_bool(name: str, default: bool) -> bool:
    value = os.getenv(name)
    if value in (None, ""):
        return default
    return value.strip().lower() in ("1", "true", "yes", "on")


CHANNEL_CONFIG = {
    "quality": _env_int("RSVRC_QUALITY", 85),
    "max_iters": _env_int("RSVRC_MAX_ITERS", 12),
}

EMBED_CONFIG = {
    "payload": _env_float("RSVRC_PAYLOAD", 0.1),
    "stc_height": _env_int("RSVRC_STC_HEIGHT", 3),
    "subimages": _env_int("RSVRC_SUBIMAGES", 16),
    "bch_n": _env_int("RSVRC_BCH_N", 127),
    "bch_k": _env_int("RSVRC_BCH_K", 64),
    "workers": _env_int("RSVRC_WORKERS", 4),
    # payloads above this are not supported; also bounds the receiver's length search
    "max_payload": 0.4,
}

DISTORTION_CONFIG = {
    "sigma": _env_float("RSVRC_SIGMA", 2 ** -6),
    "wet_cost": _env_float("RSVRC_WET_COST", 1e13),
    "max_abs_coeff": 1023,
}

WEBSERVER_CONFIG = {
    "host": os.getenv("WEBSERVER_HOST", "0.0.0.0"),
    "port": _env_int("WEBSERVER_PORT", 8000),
    "debug": _env_bool("WEBSERVER_DEBUG", False),
}

LOGGING_CONFIG = {
    "level": os.getenv("RSVRC_LOG_LEVEL", "INFO").upper(),
    "format": "%(asctime)s %(levelname)s %(name)s: %(message)s",
}

EVALUATION_CONFIG = {
    "settings_file": os.getenv("RSVRC_EVAL_SETTINGS", "evaluation_settings.json"),
    "report_version": 1,
    # /api/evaluate only writes plain file names inside this directory
    "report_dir": os.getenv("RSVRC_REPORT_DIR", "reports"),
}
