"""Chunked thread-pool mapping with a deterministic result order"""
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

DEFAULT_CHUNK_SIZE = 64


def resolve_workers(n_workers: Optional[int] = None) -> int:
    """Explicit value, else CYHMM_THREADS, else the CPU count"""
    if n_workers is None:
        env = os.environ.get("CYHMM_THREADS")
        n_workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(n_workers))


def chunk_ranges(n: int, chunk_size: int = DEFAULT_CHUNK_SIZE) -> List[range]:
    """Split 0..n-1 into contiguous ranges; independent of the worker count"""
    chunk_size = max(1, int(chunk_size))
    return [range(start, min(start + chunk_size, n)) for start in range(0, n, chunk_size)]


def ordered_map(fn: Callable[[T], R], items: Sequence[T], n_workers: Optional[int] = None) -> List[R]:
    """``[fn(x) for x in items]`` evaluated on a thread pool, results in input order"""
    workers = resolve_workers(n_workers)
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
