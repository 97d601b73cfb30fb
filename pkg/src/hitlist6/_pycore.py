"""Pure-Python kernels; reference semantics for the compiled ``_core``."""

from __future__ import annotations

from typing import Iterable, Sequence

BACKEND = "python"


def cluster_runs(addrs: Iterable[int], min_size: int, max_gap: int) -> list[list[int]]:
    """Maximal runs of sorted addresses whose neighbour gaps are <= ``max_gap``,
    keeping runs with at least ``min_size`` members."""
    ordered = sorted(set(addrs))
    out: list[list[int]] = []
    start = 0
    n = len(ordered)
    for i in range(1, n + 1):
        if i == n or ordered[i] - ordered[i - 1] > max_gap:
            if i - start >= min_size:
                out.append(ordered[start:i])
            start = i
    return out


def dense_prefixes(addrs: Iterable[int], lengths: Sequence[int], threshold: int) -> dict[int, list[int]]:
    """For each prefix length, the sorted bases of prefixes holding >= ``threshold`` addresses."""
    unique = set(addrs)
    out: dict[int, list[int]] = {}
    for length in lengths:
        shift = 128 - length
        counts: dict[int, int] = {}
        for a in unique:
            key = a >> shift
            counts[key] = counts.get(key, 0) + 1
        out[length] = sorted(k << shift for k, c in counts.items() if c >= threshold)
    return out
