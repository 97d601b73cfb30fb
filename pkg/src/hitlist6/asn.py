"""Origin-AS lookup over a flattened RIB dump and per-AS distributions."""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Iterable

from .addr import AddrParseError, Prefix, PrefixMap

log = logging.getLogger(__name__)

UNMAPPED = "unmapped"


class RibFormatError(ValueError):
    pass


class RibTable:
    """Immutable prefix -> origin ASN table with longest-prefix match."""

    def __init__(self, entries: Iterable[tuple[Prefix, int]] = ()) -> None:
        self._map: PrefixMap[int] = PrefixMap()
        for prefix, asn in entries:
            kept = self._map.setdefault(prefix, asn)
            if kept != asn:
                log.warning("duplicate RIB prefix %s: keeping AS%d, ignoring AS%d", prefix, kept, asn)

    def __len__(self) -> int:
        return len(self._map)

    def entries(self) -> list[tuple[Prefix, int]]:
        return list(self._map.items())

    def lookup_origin(self, a: int) -> int | None:
        hit = self._map.longest_match(a)
        return hit[1] if hit else None

    def lookup_prefix(self, a: int) -> tuple[Prefix, int] | None:
        return self._map.longest_match(a)


def parse_rib_lines(lines: Iterable[str], source: str = "<rib>") -> RibTable:
    entries = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 2:
            raise RibFormatError(f"{source}:{lineno}: expected '<prefix> <asn>', got {raw.rstrip()!r}")
        prefix_text, asn_text = fields
        try:
            prefix = Prefix.parse(prefix_text)
        except AddrParseError as exc:
            raise RibFormatError(f"{source}:{lineno}: {exc}") from None
        # AS-set origins such as "{64500,64501}" or "64500_64501": first origin wins
        origins = asn_text.strip("{}").replace("_", ",").split(",")
        if len(origins) > 1:
            log.warning("%s:%d: multi-origin prefix %s, using AS%s", source, lineno, prefix, origins[0])
        asn_token = origins[0].upper().removeprefix("AS")
        if not asn_token.isdigit() or int(asn_token) >= 1 << 32:
            raise RibFormatError(f"{source}:{lineno}: invalid ASN {asn_text!r}")
        entries.append((prefix, int(asn_token)))
    return RibTable(entries)


def load_rib(path) -> RibTable:
    with open(path, encoding="utf-8") as fh:
        return parse_rib_lines(fh, str(path))


def lookup_origin(table: RibTable, a: int) -> int | None:
    return table.lookup_origin(a)


@dataclass(frozen=True)
class AsRow:
    asn: int | str  # UNMAPPED for addresses without a covering route
    count: int
    share: float
    cumulative_share: float


@dataclass
class AsDistribution:
    rows: list[AsRow]

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            self.to_csv(fh)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asn", "count", "share", "cumulative_share"])
        for r in self.rows:
            w.writerow([r.asn, r.count, f"{r.share:.9f}", f"{r.cumulative_share:.9f}"])


def distribution_from_counts(counts: Counter, unmapped: int = 0) -> AsDistribution:
    total = sum(counts.values()) + unmapped
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if unmapped:
        ordered.append((UNMAPPED, unmapped))
    rows = []
    running = 0
    for asn, n in ordered:
        running += n
        rows.append(AsRow(asn, n, n / total, running / total))
    return AsDistribution(rows)


def as_cdf(table: RibTable, addrs: Iterable[int]) -> AsDistribution:
    counts: Counter = Counter()
    unmapped = 0
    for a in addrs:
        asn = table.lookup_origin(a)
        if asn is None:
            unmapped += 1
        else:
            counts[asn] += 1
    return distribution_from_counts(counts, unmapped)
