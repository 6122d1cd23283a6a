"""
Utility functions shared across the package: logging setup, seeded random
generators and JSON file helpers.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Union

import numpy as np

SeedLike = Union[int, np.random.Generator]

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str = "INFO") -> None:
    """
    Configure root logging for an entry point.

    Library modules only create module loggers; the CLI, the graph script and
    the evaluation harness call this once at startup. Everything goes to
    stderr so that stdout stays free for data.

    Args:
        level: Logging level name (DEBUG, INFO, WARNING, ...)
    """
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


def make_rng(seed: SeedLike) -> np.random.Generator:
    """
    Build a counter-based (Philox) generator from an integer seed.

    Passing an existing Generator returns it unchanged, so functions can accept
    either a seed or a caller-owned stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def spawn_rngs(seed: int, count: int) -> list:
    """Independent child generators derived from one seed (one per stream)."""
    children = np.random.SeedSequence(int(seed)).spawn(count)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def write_json(path: Union[str, Path], payload: Any) -> Path:
    """Write JSON with sorted keys and a trailing newline (byte-stable output)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_json(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
