"""Small shared helpers: determinism, hashing, batching."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "HYPKOB_THREADS"

_QUANTUM = 1e-12


def thread_count() -> int:
    """Batch width for parallel evaluation, from ``HYPKOB_THREADS``.

    Defaults to 1 (fully sequential). Values are clamped to [1, 64]; garbage
    is treated as 1 so a bad environment never changes results, only speed.
    """
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, min(64, n))


def map_chunks(fn, n_items: int, n_chunks: int | None = None):
    """Apply ``fn(lo, hi)`` over a partition of ``range(n_items)``.

    Results are concatenated in index order regardless of how many worker
    threads ran, so output is independent of the thread count.
    """
    width = thread_count() if n_chunks is None else n_chunks
    width = max(1, min(width, n_items)) if n_items else 1
    bounds = np.linspace(0, n_items, width + 1).astype(int)
    jobs = [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(jobs) <= 1:
        return [fn(lo, hi) for lo, hi in jobs]
    with ThreadPoolExecutor(max_workers=len(jobs)) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in jobs]
        return [f.result() for f in futures]


def pair_key(x: np.ndarray, y: np.ndarray) -> bytes:
    """Symmetric cache key for a point pair, quantized to a 1e-12 grid."""
    qx = np.round(np.asarray(x, dtype=float) / _QUANTUM).astype(np.int64).tobytes()
    qy = np.round(np.asarray(y, dtype=float) / _QUANTUM).astype(np.int64).tobytes()
    return qx + qy if qx <= qy else qy + qx


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dump_json(obj, path) -> None:
    """Write deterministic JSON: sorted keys, fixed separators, no timestamp."""
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def canonical_json(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    """Stable hex digest of a configuration mapping."""
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def rng_from(seed) -> np.random.Generator:
    return np.random.default_rng(seed)
