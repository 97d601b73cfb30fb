"""Distance-clustering target generation.

Dense numeric runs of known addresses (at least ``min_size`` members, each
neighbour at most ``max_gap`` apart) are filled in with every address of
the run's span that is not known yet.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

from . import kernels
from .addr import ADDR_MAX, Prefix, PrefixSet, format_addr

MIN_SIZE = 10
MAX_GAP = 64
SPAN_CAP = 1 << 16


class ClusterTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]

    @property
    def span_min(self) -> int:
        return self.members[0]

    @property
    def span_max(self) -> int:
        return self.members[-1]

    @property
    def span_size(self) -> int:
        return self.span_max - self.span_min + 1

    def __str__(self) -> str:
        return f"[{format_addr(self.span_min)} .. {format_addr(self.span_max)}] ({len(self.members)} members)"


def find_clusters(addrs: Iterable[int], min_size: int = MIN_SIZE, max_gap: int = MAX_GAP) -> list[Cluster]:
    if min_size < 2:
        raise ValueError("min_size must be >= 2")
    if max_gap < 1:
        raise ValueError("max_gap must be >= 1")
    return [Cluster(tuple(run)) for run in kernels.cluster_runs(addrs, min_size, max_gap)]


def expand_cluster(c: Cluster, known: Iterable[int] = (), cap: int = SPAN_CAP) -> set[int]:
    if c.span_size > cap:
        raise ClusterTooLarge(f"cluster {c} spans {c.span_size} addresses, above the cap of {cap}")
    if not 0 <= c.span_min <= c.span_max <= ADDR_MAX:
        raise ValueError(f"cluster {c} leaves the address space")
    known = known if isinstance(known, (set, frozenset)) else set(known)
    out = set(range(c.span_min, c.span_max + 1))
    out.difference_update(c.members)
    out.difference_update(known)
    return out


def generate(
    addrs: Iterable[int],
    aliased: Iterable[Prefix] = (),
    min_size: int = MIN_SIZE,
    max_gap: int = MAX_GAP,
    cap: int = SPAN_CAP,
) -> set[int]:
    """New candidates from every cluster, minus known and aliased-covered addresses."""
    addrs = set(addrs)
    covered = PrefixSet(aliased)
    out: set[int] = set()
    for c in find_clusters(addrs, min_size, max_gap):
        out |= expand_cluster(c, addrs, cap)
    if len(covered):
        out = {a for a in out if a not in covered}
    return out
