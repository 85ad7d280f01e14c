"""Counter-based seed derivation.

Replicas are grouped in fixed-size blocks; block ``k`` of stream ``s`` under
base seed ``b`` draws from ``PCG64(SeedSequence([b, s, k]))`` and replicas are
consumed sequentially inside a block. Changing the replica count therefore
never reshuffles earlier replicas.
"""

from __future__ import annotations

import numpy as np

BLOCK = 1024


def block_rng(seed: int, stream: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream), int(block)])))


def blocks(n: int, block: int = BLOCK):
    """Yield ``(block_index, start, count)`` covering ``range(n)``."""
    for k, start in enumerate(range(0, n, block)):
        yield k, start, min(block, n - start)


def run_blocks(kernel, n: int, seed: int, stream: int, *args, block: int = BLOCK):
    """Call ``kernel(rng, count, *args)`` per block and concatenate the returned arrays.

    ``kernel`` returns an array or a tuple of arrays whose first axis is the
    replica axis.
    """
    parts = []
    for k, _, count in blocks(n, block):
        parts.append(kernel(block_rng(seed, stream, k), count, *args))
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)


def sum_blocks(kernel, n: int, seed: int, stream: int, *args, block: int = BLOCK):
    """Like :func:`run_blocks` but sums accumulator arrays across blocks (order-insensitive up to rounding)."""
    total = None
    for k, _, count in blocks(n, block):
        out = kernel(block_rng(seed, stream, k), count, *args)
        if total is None:
            total = tuple(np.array(o, dtype=float) for o in out) if isinstance(out, tuple) else np.array(out, float)
        elif isinstance(out, tuple):
            total = tuple(t + o for t, o in zip(total, out))
        else:
            total = total + out
    return total


def replica_seed(seed: int, stream: int, index: int) -> np.random.Generator:
    """Generator dedicated to one replica (used for single-path operations)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(stream), 1 << 20, int(index)])))


def run_blocks_with_starts(kernel, starts, seed: int, stream: int, *args, reduce: str = "concat",
                           block: int = BLOCK):
    """Like :func:`run_blocks` for kernels taking per-replica starts: ``kernel(rng, count, starts_block, *args)``.

    ``reduce="sum"`` adds accumulator outputs instead of concatenating them.
    """
    starts = np.ascontiguousarray(starts, dtype=float)
    parts = []
    for k, start, count in blocks(starts.shape[0], block):
        parts.append(kernel(block_rng(seed, stream, k), count, starts[start:start + count], *args))
    if reduce == "sum":
        if isinstance(parts[0], tuple):
            return tuple(sum(np.asarray(p[i], float) for p in parts) for i in range(len(parts[0])))
        return sum(np.asarray(p, float) for p in parts)
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))
    return np.concatenate(parts)
