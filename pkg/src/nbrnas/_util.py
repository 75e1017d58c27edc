"""Internal helpers: deterministic sub-seed derivation and ordered thread maps."""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

T = TypeVar("T")
U = TypeVar("U")


def derive_seed(root_seed: int, *labels: str) -> int:
    """Hash a root seed together with string labels into a 64-bit sub-seed.

    The derivation is SHA-256 over ``"{root}:{label}:{label}:..."``, so distinct
    label tuples give independent, platform-stable streams.
    """
    text = ":".join([str(int(root_seed)), *labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(root_seed: int, *labels: str) -> np.random.Generator:
    """Seeded generator for the stream identified by ``(root_seed, *labels)``."""
    return np.random.default_rng(derive_seed(root_seed, *labels))


def as_rng(rng: np.random.Generator | int) -> np.random.Generator:
    """Accept either a ready generator or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))


def ordered_thread_map(fn: Callable[[T], U], items: Iterable[T], threads: int = 1) -> list[U]:
    """``map`` that may fan out to worker threads but always joins in input order.

    Because results are reduced in input order, callers get bit-identical
    results for any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def env_thread_default() -> int:
    """Thread cap taken from the NBRNAS_THREADS env var; 1 when unset or bad."""
    raw = os.environ.get("NBRNAS_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
