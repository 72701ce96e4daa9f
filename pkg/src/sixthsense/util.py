"""Shared plumbing: seeded RNG streams, canonical JSON, logging.

Every run derives all randomness from one master seed.  Named sub-streams
keep the modules independent: drawing more numbers in one stream never
shifts another.  The canonical JSON writer pins float formatting to 17
significant digits so artifacts are byte-stable across runs.
"""

from __future__ import annotations

import logging
import math
import os
import zlib

import numpy as np


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for (master seed, stream name)."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def format_float(value: float) -> str:
    """17-significant-digit decimal form, exact under float round-trip."""
    if math.isnan(value) or math.isinf(value):
        raise ValueError(f"cannot serialize non-finite float {value!r}")
    return f"{value:.17g}"


def canon_dumps(obj) -> str:
    """Serialize to JSON with deterministic float formatting.

    Dict key order is preserved as inserted; callers construct dicts in a
    fixed order.  Accepts numpy scalars and arrays (arrays become lists).
    NaN floats become null (the no-return marker in scan records);
    infinities are rejected.
    """
    parts: list[str] = []
    _write_json(obj, parts)
    return "".join(parts)


def _write_json(obj, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif obj is True:
        parts.append("true")
    elif obj is False:
        parts.append("false")
    elif isinstance(obj, (int, np.integer)):
        parts.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        f = float(obj)
        parts.append("null" if math.isnan(f) else format_float(f))
    elif isinstance(obj, str):
        parts.append(_escape_string(obj))
    elif isinstance(obj, np.ndarray):
        _write_json(obj.tolist(), parts)
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _write_json(item, parts)
        parts.append("]")
    elif isinstance(obj, dict):
        parts.append("{")
        for i, (key, value) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be str, got {type(key)}")
            if i:
                parts.append(",")
            parts.append(_escape_string(key))
            parts.append(":")
            _write_json(value, parts)
        parts.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj)} to canonical JSON")


_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
    "\b": "\\b",
    "\f": "\\f",
}


def _escape_string(s: str) -> str:
    out = ['"']
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20:
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(f"sixthsense.{name}")


def setup_logging(level: str | None = None) -> None:
    """Configure the root package logger; SIXTHSENSE_LOG overrides."""
    chosen = level or os.environ.get("SIXTHSENSE_LOG", "INFO")
    numeric = getattr(logging, chosen.upper(), None)
    if not isinstance(numeric, int):
        raise ValueError(f"unknown log level {chosen!r}")
    logger = logging.getLogger("sixthsense")
    logger.setLevel(numeric)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
