"""Content hashing for run provenance and cache keys."""
import hashlib
import json
from typing import Any

CODE_VERSION = "1.0.0"


def stable_hash(payload: Any, length: int = 16) -> str:
    """sha256 over canonical JSON (sorted keys, no whitespace)."""
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]
