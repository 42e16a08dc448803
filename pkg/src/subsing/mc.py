"""Chunked Monte Carlo engine with order-independent aggregation.

Samples are produced in blocks, one derived random stream per block, and the
block partials are combined in fixed block order.  This makes every estimate
reproducible regardless of how blocks are scheduled, and the block structure
doubles as the median-of-means partition for heavy-tailed integrands.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .rng import stream

DEFAULT_BLOCKS = 32


@dataclass(frozen=True)
class MCEstimate:
    """A Monte Carlo statistic with its uncertainty and tail diagnostics.

    ``std_error`` is sample-sd/sqrt(n) for a plain mean; for median-of-means it
    is sqrt(pi/(2B)) * sd(block means), the asymptotic SE of a median of B
    nearly Gaussian block means.  ``heavy_tail_flag`` is set when the empirical
    second moment keeps growing across doubling sample sizes.
    """

    n_samples: int
    mean: float
    std_error: float
    heavy_tail_flag: bool = False
    method: str = "plain"  # "plain" | "median_of_means"

    def agrees_with(self, target: float, n_se: float = 3.0) -> bool:
        if not math.isfinite(self.mean) or not math.isfinite(target):
            return self.mean == target
        return abs(self.mean - target) <= n_se * self.std_error


def _worker_count() -> int:
    raw = os.environ.get("SUBSING_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def block_values(sampler, n_samples: int, seed: int, *, blocks: int = DEFAULT_BLOCKS,
                 max_chunk: int = 4096):
    """Run ``sampler(rng, m) -> (m,) array`` over ``blocks`` derived streams.

    Returns (block_sums, block_sumsq, block_counts) in block order.  Within a
    block the stream is consumed sequentially, so the chunk size does not
    affect the values drawn.
    """
    counts = np.full(blocks, n_samples // blocks, dtype=np.int64)
    counts[: n_samples % blocks] += 1

    def run_block(b: int):
        rng = stream(seed, b)
        left = int(counts[b])
        s = 0.0
        s2 = 0.0
        while left > 0:
            m = min(left, max_chunk)
            v = np.asarray(sampler(rng, m), dtype=float)
            s += float(np.sum(v))
            s2 += float(np.sum(v * v))
            left -= m
        return s, s2

    width = _worker_count()
    if width > 1:
        with ThreadPoolExecutor(max_workers=width) as pool:
            out = list(pool.map(run_block, range(blocks)))
    else:
        out = [run_block(b) for b in range(blocks)]
    sums = np.array([o[0] for o in out])
    sumsq = np.array([o[1] for o in out])
    return sums, sumsq, counts


def _heavy_tail(sums: np.ndarray, sumsq: np.ndarray, counts: np.ndarray) -> bool:
    # second moment over the first quarter, half and all blocks; non-stabilizing
    # growth marks an (effectively) infinite-variance integrand
    b = len(sums)
    if b < 4:
        return False
    marks = [b // 4, b // 2, b]
    m2 = []
    for k in marks:
        n = counts[:k].sum()
        m2.append(sumsq[:k].sum() / n if n else math.nan)
    if any(not math.isfinite(v) for v in m2):
        return True
    return bool(m2[0] < m2[1] < m2[2] and m2[2] > 1.5 * m2[0])


def estimate_from_blocks(sums, sumsq, counts, method: str = "plain") -> MCEstimate:
    n = int(counts.sum())
    flag = _heavy_tail(sums, sumsq, counts)
    if method == "median_of_means":
        means = sums / counts
        mom = float(np.median(means))
        se = math.sqrt(math.pi / (2 * len(means))) * float(np.std(means, ddof=1))
        if not np.all(np.isfinite(means)):
            flag = True
        return MCEstimate(n, mom, se, flag, "median_of_means")
    mean = float(sums.sum()) / n
    if not math.isfinite(mean):
        return MCEstimate(n, mean, math.inf, True, "plain")
    var = max(float(sumsq.sum()) / n - mean * mean, 0.0)
    se = math.sqrt(var / n)
    return MCEstimate(n, mean, se, flag, "plain")


def run_mc(sampler, n_samples: int, seed: int, *, method: str = "plain",
           blocks: int = DEFAULT_BLOCKS, max_chunk: int = 4096) -> MCEstimate:
    if n_samples <= 0:
        raise ValueError("need a positive sample count")
    blocks = min(blocks, n_samples)
    sums, sumsq, counts = block_values(sampler, n_samples, seed,
                                       blocks=blocks, max_chunk=max_chunk)
    return estimate_from_blocks(sums, sumsq, counts, method)


def wilson_interval(successes: int, n: int, z: float = 2.5758293035489004):
    """Wilson score interval; default z is the two-sided 99% quantile."""
    if n == 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, center - half), min(1.0, center + half)
