"""Scan records and the longitudinal candidate store, with their file formats.

Store snapshot, one address per line::

    addr<TAB>sources<TAB>first_seen<TAB>last_probed<TAB>proto:scan,...<TAB>gfw_flag

``sources`` is a comma list of labels, ``last_probed`` is ``-`` for never
probed addresses and the responsiveness column is ``-`` when empty.

Scan record file: ``# scan_id <n>`` and ``# timestamp <iso>`` header lines,
then ``addr<TAB>proto,...`` for every probed address (``-`` when it did not
answer anything).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .addr import SCAN_PROTOCOLS, Protocol, format_addr, parse_addr


class RecordFormatError(ValueError):
    pass


@dataclass
class ScanRecord:
    scan_id: int
    timestamp: str = ""
    probed: set[int] = field(default_factory=set)
    responsive: dict[Protocol, set[int]] = field(default_factory=dict)
    # DNS verdicts for every raw UDP53-responsive address, when known
    verdicts: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        for p in SCAN_PROTOCOLS:
            self.responsive.setdefault(p, set())

    def resp(self, proto: Protocol) -> set[int]:
        return self.responsive[proto]

    def responsive_any(self) -> set[int]:
        out: set[int] = set()
        for s in self.responsive.values():
            out |= s
        return out

    def check(self) -> None:
        for p, s in self.responsive.items():
            if not s <= self.probed:
                raise RecordFormatError(f"scan {self.scan_id}: {p} set is not a subset of probed")

    def copy(self) -> ScanRecord:
        return ScanRecord(
            self.scan_id,
            self.timestamp,
            set(self.probed),
            {p: set(s) for p, s in self.responsive.items()},
            dict(self.verdicts),
        )

    def protocols_of(self, a: int) -> list[Protocol]:
        return [p for p in SCAN_PROTOCOLS if a in self.responsive[p]]


def write_scan_record(path, rec: ScanRecord) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# scan_id {rec.scan_id}\n# timestamp {rec.timestamp}\n")
        for a in sorted(rec.probed):
            protos = ",".join(p.value for p in rec.protocols_of(a)) or "-"
            fh.write(f"{format_addr(a)}\t{protos}\n")


def read_scan_record(path) -> ScanRecord:
    scan_id = None
    timestamp = ""
    probed: set[int] = set()
    responsive: dict[Protocol, set[int]] = {p: set() for p in SCAN_PROTOCOLS}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                if key == "scan_id":
                    scan_id = int(value)
                elif key == "timestamp":
                    timestamp = value.strip()
                continue
            if not line.strip():
                continue
            try:
                addr_text, protos = line.split("\t")
                a = parse_addr(addr_text)
                probed.add(a)
                if protos != "-":
                    for t in protos.split(","):
                        responsive[Protocol.parse(t)].add(a)
            except ValueError as exc:
                raise RecordFormatError(f"{path}:{lineno}: {exc}") from None
    if scan_id is None:
        raise RecordFormatError(f"{path}: missing '# scan_id' header")
    return ScanRecord(scan_id, timestamp, probed, responsive)


@dataclass
class AddrRecord:
    sources: set[str] = field(default_factory=set)
    first_seen: int = 0
    last_probed: int | None = None
    last_responsive: dict[Protocol, int] = field(default_factory=dict)
    gfw_filtered: bool = False

    def last_responsive_any(self) -> int | None:
        return max(self.last_responsive.values(), default=None)


class CandidateStore:
    """Cumulative per-address state; single writer."""

    def __init__(self) -> None:
        self.records: dict[int, AddrRecord] = {}

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, a: object) -> bool:
        return a in self.records

    def __getitem__(self, a: int) -> AddrRecord:
        return self.records[a]

    def __iter__(self) -> Iterator[int]:
        return iter(self.records)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CandidateStore) and self.records == other.records

    def addresses(self) -> set[int]:
        return set(self.records)

    def add(self, a: int, label: str, scan_id: int = 0) -> None:
        rec = self.records.get(a)
        if rec is None:
            self.records[a] = AddrRecord({label}, scan_id)
        else:
            rec.sources.add(label)
            rec.first_seen = min(rec.first_seen, scan_id)

    def apply_scan(self, rec: ScanRecord) -> None:
        """Fold a (cleaned) scan record into the per-address history."""
        for a in rec.probed:
            r = self.records.get(a)
            if r is None:
                r = self.records[a] = AddrRecord({"scan"}, rec.scan_id)
            r.last_probed = rec.scan_id if r.last_probed is None else max(r.last_probed, rec.scan_id)
        for p, addrs in rec.responsive.items():
            for a in addrs:
                lr = self.records[a].last_responsive
                lr[p] = max(lr.get(p, rec.scan_id), rec.scan_id)

    def latest_scan(self) -> int | None:
        return max((r.last_probed for r in self.records.values() if r.last_probed is not None), default=None)

    def ever_responsive(self) -> set[int]:
        return {a for a, r in self.records.items() if r.last_responsive}

    def copy(self) -> CandidateStore:
        out = CandidateStore()
        for a, r in self.records.items():
            out.records[a] = AddrRecord(
                set(r.sources), r.first_seen, r.last_probed, dict(r.last_responsive), r.gfw_filtered
            )
        return out

    # Snapshot format

    def dump_lines(self) -> Iterator[str]:
        for a in sorted(self.records):
            r = self.records[a]
            resp = ",".join(f"{p.value}:{r.last_responsive[p]}" for p in SCAN_PROTOCOLS if p in r.last_responsive)
            yield "\t".join(
                [
                    format_addr(a),
                    ",".join(sorted(r.sources)),
                    str(r.first_seen),
                    "-" if r.last_probed is None else str(r.last_probed),
                    resp or "-",
                    "1" if r.gfw_filtered else "0",
                ]
            )

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            for line in self.dump_lines():
                fh.write(line + "\n")
        os.replace(tmp, path)

    @classmethod
    def parse_lines(cls, lines: Iterable[str], source: str = "<store>") -> CandidateStore:
        store = cls()
        for lineno, raw in enumerate(lines, 1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            try:
                addr_text, sources, first, last, resp, flag = line.split("\t")
                r = AddrRecord(
                    sources=set(sources.split(",")) if sources else set(),
                    first_seen=int(first),
                    last_probed=None if last == "-" else int(last),
                    gfw_filtered=flag == "1",
                )
                if resp != "-":
                    for item in resp.split(","):
                        proto, _, sid = item.partition(":")
                        r.last_responsive[Protocol.parse(proto)] = int(sid)
                if flag not in ("0", "1"):
                    raise ValueError(f"bad gfw flag {flag!r}")
                store.records[parse_addr(addr_text)] = r
            except ValueError as exc:
                raise RecordFormatError(f"{source}:{lineno}: {exc}") from None
        return store

    @classmethod
    def load(cls, path) -> CandidateStore:
        with open(path, encoding="utf-8") as fh:
            return cls.parse_lines(fh, str(path))
