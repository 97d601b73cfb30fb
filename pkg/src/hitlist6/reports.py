"""Read-only reports over scan records, the store and the RIB."""

from __future__ import annotations

import csv
import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .addr import SCAN_PROTOCOLS, AddrParseError, MacAddr, Prefix, PrefixSet, eui64_extract, parse_addr
from .apd import collapse
from .asn import UNMAPPED, RibTable
from .records import ScanRecord


class ReportInputError(ValueError):
    pass


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


# Responsiveness per protocol


@dataclass(frozen=True)
class ResponsivenessRow:
    protocol: str
    addr_count: int
    as_count: int
    unmapped: int


def responsiveness_table(record: ScanRecord | None, rib: RibTable) -> list[ResponsivenessRow]:
    """One row per protocol plus ``total`` (addresses answering at least one protocol)."""
    sets = [(p.value, record.resp(p) if record else set()) for p in SCAN_PROTOCOLS]
    sets.append(("total", record.responsive_any() if record else set()))
    rows = []
    for name, addrs in sets:
        ases = set()
        unmapped = 0
        for a in addrs:
            asn = rib.lookup_origin(a)
            if asn is None:
                unmapped += 1
            else:
                ases.add(asn)
        rows.append(ResponsivenessRow(name, len(addrs), len(ases), unmapped))
    return rows


def write_responsiveness(fh, rows: Sequence[ResponsivenessRow]) -> None:
    w = _writer(fh)
    w.writerow(["protocol", "addresses", "ases", "unmapped"])
    for r in rows:
        w.writerow([r.protocol, r.addr_count, r.as_count, r.unmapped])


# Overlap between address sets


def overlap_matrix(sets: Sequence[tuple[str, set[int]]]) -> list[list[float | None]]:
    """Row-relative overlap in percent; ``None`` where the row set is empty."""
    out = []
    for _, si in sets:
        row: list[float | None] = []
        for _, sj in sets:
            row.append(None if not si else 100.0 * len(si & sj) / len(si))
        out.append(row)
    return out


def write_overlap(fh, sets: Sequence[tuple[str, set[int]]], matrix: list[list[float | None]]) -> None:
    w = _writer(fh)
    w.writerow([""] + [name for name, _ in sets])
    for (name, _), row in zip(sets, matrix):
        w.writerow([name] + ["undefined" if v is None else f"{v:.4f}" for v in row])


# Aliased share of announced space per AS


@dataclass(frozen=True)
class AliasedFractionRow:
    asn: int | str
    aliased_addresses: int
    announced_addresses: int

    @property
    def aliased_log2(self) -> float:
        return math.log2(self.aliased_addresses)

    @property
    def fraction(self) -> Fraction | None:
        if not self.announced_addresses:
            return None
        return Fraction(self.aliased_addresses, self.announced_addresses)

    @property
    def inconsistent(self) -> bool:
        return self.announced_addresses == 0


def _space(prefixes: Iterable[Prefix]) -> int:
    return sum(p.num_addresses for p in collapse(prefixes))


def aliased_fraction_report(aliased: Iterable[Prefix], rib: RibTable) -> list[AliasedFractionRow]:
    """Per AS, aliased address count against announced address count.

    An aliased prefix belongs to the origin of its first address. ASes with
    aliased space but nothing announced (including the unmapped bucket) are
    reported with ``announced_addresses == 0`` and flagged inconsistent.
    """
    by_as: dict[int | str, list[Prefix]] = defaultdict(list)
    for p in collapse(aliased):
        asn = rib.lookup_origin(p.base)
        by_as[UNMAPPED if asn is None else asn].append(p)
    announced: dict[int, list[Prefix]] = defaultdict(list)
    for p, asn in rib.entries():
        announced[asn].append(p)
    rows = [
        AliasedFractionRow(asn, _space(ps), _space(announced.get(asn, ())) if asn != UNMAPPED else 0)
        for asn, ps in by_as.items()
    ]
    rows.sort(key=lambda r: (-r.aliased_addresses, str(r.asn)))
    return rows


def write_aliased_fraction(fh, rows: Sequence[AliasedFractionRow]) -> None:
    w = _writer(fh)
    w.writerow(["asn", "aliased_addresses", "aliased_log2", "announced_addresses", "fraction", "inconsistent"])
    for r in rows:
        frac = "" if r.fraction is None else f"{float(r.fraction):.12g}"
        w.writerow(
            [r.asn, r.aliased_addresses, f"{r.aliased_log2:.6f}", r.announced_addresses, frac, int(r.inconsistent)]
        )


# Domains hosted in aliased prefixes


def read_resolutions(path) -> list[tuple[str, int]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ReportInputError(f"{path}:{lineno}: expected '<domain><TAB><address>'")
            try:
                out.append((parts[0].rstrip(".").lower(), parse_addr(parts[1])))
            except AddrParseError as exc:
                raise ReportInputError(f"{path}:{lineno}: {exc}") from None
    return out


def domains_in_aliased(
    resolutions: Iterable[tuple[str, int]], aliased: Iterable[Prefix], rib: RibTable | None = None
) -> tuple[dict[Prefix, int], dict[int | str, int]]:
    """Distinct domains per aliased prefix, and those counts summed per origin AS."""
    index = PrefixSet(aliased)
    domains: dict[Prefix, set[str]] = defaultdict(set)
    for domain, a in resolutions:
        for p in index.matches(a):
            domains[p].add(domain)
    per_prefix = {p: len(ds) for p, ds in sorted(domains.items())}
    per_as: Counter = Counter()
    for p, n in per_prefix.items():
        asn = rib.lookup_origin(p.base) if rib is not None else None
        per_as[UNMAPPED if asn is None else asn] += n
    return per_prefix, dict(per_as)


# EUI-64 groups


def read_oui_table(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            prefix, sep, vendor = line.partition("\t")
            prefix = prefix.strip().replace(":", "").replace("-", "").lower()
            if not sep or len(prefix) != 6 or any(c not in "0123456789abcdef" for c in prefix):
                raise ReportInputError(f"{path}:{lineno}: expected '<6-hex-prefix><TAB><vendor>'")
            out.setdefault(prefix, vendor.strip())
    return out


@dataclass(frozen=True)
class Eui64Group:
    mac: MacAddr
    address_count: int
    vendor: str


def eui64_report(addrs: Iterable[int], oui_table: Mapping[str, str]) -> list[Eui64Group]:
    counts: Counter = Counter()
    for a in addrs:
        mac = eui64_extract(a)
        if mac is not None:
            counts[mac] += 1
    groups = [Eui64Group(mac, n, oui_table.get(mac.oui, "unknown")) for mac, n in counts.items()]
    groups.sort(key=lambda g: (-g.address_count, g.mac))
    return groups


def write_eui64(fh, groups: Sequence[Eui64Group]) -> None:
    w = _writer(fh)
    w.writerow(["mac", "addresses", "vendor"])
    for g in groups:
        w.writerow([str(g.mac), g.address_count, g.vendor])
