"""Small shared helpers: worker-pool mapping and stable per-item seeding."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(requested=None):
    """Worker count for data-parallel maps.

    GDAN_THREADS caps the count; with no request and no env var the map runs
    sequentially (deterministic and usually fastest at this scale).
    """
    cap = int(os.environ.get("GDAN_THREADS", "0") or "0")
    n = requested if requested is not None else (cap if cap > 0 else 1)
    if cap > 0:
        n = min(n, cap)
    return max(1, n)


def parallel_map(fn, items, threads=None):
    """Order-preserving map over items, optionally on a thread pool."""
    n = resolve_threads(threads)
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def stable_seed(*parts):
    """Deterministic 64-bit seed from heterogeneous parts, stable across runs."""
    text = "|".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
