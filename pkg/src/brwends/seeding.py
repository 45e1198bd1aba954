"""Named, order-independent random substreams and deterministic parallel maps."""

import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def substream(seed, name, index=0):
    """Generator for replica `index` of check `name`; adding checks never shifts other streams."""
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key, int(index)]))


def parallel_map(fn, items, jobs=1):
    """map(fn, items) in order, across `jobs` worker processes when jobs > 1."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def blocks(total, size):
    """(block index, start, stop) covering range(total) in fixed-size pieces."""
    return [(b, s, min(s + size, total)) for b, s in enumerate(range(0, total, size))]
