"""Hitlist pipeline: ingestion, the filter stages, scanning and churn.

Stage order per scan: blocklist, injected-DNS filter, aliased-prefix filter,
30-day unresponsive filter, then the five-protocol scan. Every stage's
input/removed/output counts are kept in a :class:`StageLedger`.
"""

from __future__ import annotations

import csv
import datetime as dt
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import _prng, apd, gfw
from .addr import SCAN_PROTOCOLS, Prefix, PrefixSet, Protocol, read_addr_file
from .asn import RibTable
from .probe import DEFAULT_QNAME, probe_batch, request_for
from .records import CandidateStore, ScanRecord

STAGES = ("blocklist", "gfw", "aliased", "thirty_day")
STALE_DAYS = 30
READMIT_SLICES = 30


class ManifestError(ValueError):
    pass


# Ingestion


def read_manifest(path) -> list[tuple[str, str]]:
    """``file<TAB>label`` lines; relative paths resolve against the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) != 2:
                raise ManifestError(f"{path}:{lineno}: expected '<file><TAB><label>'")
            file, label = parts
            out.append((file if os.path.isabs(file) else os.path.join(base, file), label.strip()))
    return out


def ingest(
    manifest: Iterable[tuple[str, str]], store: CandidateStore | None = None, scan_id: int = 0
) -> CandidateStore:
    """Add every address of every (file, label) entry; re-ingesting is a no-op."""
    store = CandidateStore() if store is None else store
    for path, label in manifest:
        for a in sorted(read_addr_file(path)):
            store.add(a, label, scan_id)
    return store


# Filter stages


def apply_blocklist(addrs: Iterable[int], blocklist: Iterable[Prefix]) -> tuple[set[int], set[int]]:
    blocked = PrefixSet(blocklist)
    kept: set[int] = set()
    removed: set[int] = set()
    for a in addrs:
        (removed if a in blocked else kept).add(a)
    return kept, removed


def read_calendar(path) -> dict[int, dt.date]:
    cal = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                sid, date = line.split()
                cal[int(sid)] = dt.date.fromisoformat(date)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
    return cal


def write_calendar(path, cal: Mapping[int, dt.date]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sid in sorted(cal):
            fh.write(f"{sid}\t{cal[sid].isoformat()}\n")


def _date(cal: Mapping[int, dt.date], scan_id: int) -> dt.date:
    try:
        return cal[scan_id]
    except KeyError:
        raise KeyError(f"scan {scan_id} has no date in the scan calendar") from None


def is_stale(rec, now: dt.date, cal: Mapping[int, dt.date], days: int = STALE_DAYS) -> bool:
    """Probed since it last answered (or since first seen) and that was over ``days`` ago."""
    if rec.last_probed is None:
        return False
    ref = rec.last_responsive_any()
    if ref is None:
        ref = rec.first_seen
        probed_since = rec.last_probed >= ref
    else:
        probed_since = rec.last_probed > ref
    return probed_since and (now - _date(cal, ref)).days > days


def thirty_day_filter(
    store: CandidateStore,
    now_scan_id: int,
    calendar: Mapping[int, dt.date],
    addrs: Iterable[int] | None = None,
) -> tuple[set[int], set[int]]:
    """Split ``addrs`` (default: the whole store) into (targets, excluded)."""
    now = _date(calendar, now_scan_id)
    targets: set[int] = set()
    excluded: set[int] = set()
    for a in store.addresses() if addrs is None else addrs:
        rec = store.records.get(a)
        if rec is None:
            targets.add(a)
        elif rec.gfw_filtered or is_stale(rec, now, calendar):
            excluded.add(a)
        else:
            targets.add(a)
    return targets, excluded


def readmit(excluded: Iterable[int], scan_id: int, slices: int = READMIT_SLICES) -> set[int]:
    """The rotating 1/``slices`` share of excluded addresses that is scanned again this time."""
    if slices <= 0:
        return set()
    turn = scan_id % slices
    return {a for a in excluded if _prng.keyed_index(slices, "readmit", a) == turn}


# Scanning


def run_scan(
    targets: Iterable[int],
    engine,
    scan_id: int,
    timestamp: str = "",
    qname: str = DEFAULT_QNAME,
    rate_limit: float = 10_000.0,
) -> ScanRecord:
    """Probe every target on all five protocols and record the cleaned result.

    UDP53 replies are classified and injected ones removed before the record
    is returned; the verdicts stay attached to it. Engine errors propagate and
    nothing is recorded.
    """
    targets = sorted(set(targets))
    raw = ScanRecord(scan_id, timestamp, set(targets))
    dns_replies = {}
    for proto in SCAN_PROTOCOLS:
        reqs = [request_for(t, proto, qname) for t in targets]
        replies = probe_batch(engine, reqs, rate_limit, scan_id)
        for req in reqs:
            resp = replies[req]
            if any(not r.is_timeout for r in resp):
                raw.responsive[proto].add(req.target)
                if proto is Protocol.UDP53:
                    dns_replies[req.target] = resp
    verdicts = {a: gfw.classify_dns_response(qname, resp) for a, resp in dns_replies.items()}
    return gfw.clean_scan(raw, verdicts)


def raw_udp53(record: ScanRecord) -> set[int]:
    """UDP53 responders before cleaning (verdicts cover all of them)."""
    return set(record.verdicts) | record.resp(Protocol.UDP53)


# Ledger


@dataclass(frozen=True)
class StageCount:
    stage: str
    input_count: int
    removed_count: int
    output_count: int


@dataclass
class StageLedger:
    scan_id: int
    stages: list[StageCount] = field(default_factory=list)

    def add(self, stage: str, input_count: int, removed_count: int, output_count: int) -> StageCount:
        """Record measured counts; raises if they do not conserve or chain."""
        if output_count != input_count - removed_count:
            raise ValueError(f"stage {stage}: {input_count} - {removed_count} != {output_count}")
        if self.stages and self.stages[-1].output_count != input_count:
            raise ValueError(f"stage {stage}: input {input_count} != previous output {self.stages[-1].output_count}")
        row = StageCount(stage, input_count, removed_count, output_count)
        self.stages.append(row)
        return row

    def conserved(self) -> bool:
        chain = all(a.output_count == b.input_count for a, b in zip(self.stages, self.stages[1:]))
        return chain and all(s.output_count == s.input_count - s.removed_count for s in self.stages)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scan_id", "stage", "input", "removed", "output"])
            for s in self.stages:
                w.writerow([self.scan_id, s.stage, s.input_count, s.removed_count, s.output_count])


# Churn


@dataclass(frozen=True)
class ChurnReport:
    new_ever: int
    recurring: int
    lost: int


def churn(prev: ScanRecord, cur: ScanRecord, store: CandidateStore) -> ChurnReport:
    """Turnover between two scans.

    ``store`` must reflect the history up to (not including) ``cur``: a
    gained address counts as recurring when the store has seen it respond.
    """
    if prev.scan_id >= cur.scan_id:
        raise ValueError("prev must precede cur")
    latest = store.latest_scan()
    if latest is not None and latest >= cur.scan_id:
        raise ValueError(f"store already holds scan {latest}; churn needs the state before scan {cur.scan_id}")
    before = prev.responsive_any()
    now = cur.responsive_any()
    gained = now - before
    recurring = sum(1 for a in gained if a in store.records and store.records[a].last_responsive)
    return ChurnReport(len(gained) - recurring, recurring, len(before - now))


def churn_series(records: Sequence[ScanRecord]) -> list[tuple[int, ChurnReport]]:
    """Churn for each consecutive pair of a chronological record history."""
    store = CandidateStore()
    out = []
    for i, rec in enumerate(records):
        if i:
            out.append((rec.scan_id, churn(records[i - 1], rec, store)))
        store.apply_scan(rec)
    return out


# Orchestration


@dataclass
class ScanOutcome:
    record: ScanRecord
    ledger: StageLedger
    aliased: set[Prefix]
    apd_results: list
    readmitted: set[int]
    churn: ChurnReport | None


class Pipeline:
    """Single-writer driver for repeated scans over a candidate store."""

    def __init__(
        self,
        store: CandidateStore,
        seed: int,
        calendar: Mapping[int, dt.date],
        rib: RibTable | None = None,
        blocklist: Iterable[Prefix] = (),
        taint: gfw.TaintState | None = None,
        detector: apd.ApdDetector | None = None,
        readmit_slices: int = READMIT_SLICES,
        qname: str = DEFAULT_QNAME,
        rate_limit: float = 10_000.0,
    ) -> None:
        self.store = store
        self.seed = seed
        self.calendar = dict(calendar)
        self.rib = rib
        self.blocklist = list(blocklist)
        self.taint = taint if taint is not None else gfw.TaintState()
        self.detector = detector if detector is not None else apd.ApdDetector(seed)
        self.readmit_slices = readmit_slices
        self.qname = qname
        self.rate_limit = rate_limit
        self.records: list[ScanRecord] = []

    def scan(self, engine, scan_id: int) -> ScanOutcome:
        if self.records and scan_id <= self.records[-1].scan_id:
            raise ValueError(f"scan {scan_id} does not follow scan {self.records[-1].scan_id}")
        timestamp = _date(self.calendar, scan_id).isoformat()
        ledger = StageLedger(scan_id)
        current = self.store.addresses()

        n_in = len(current)
        current, removed = apply_blocklist(current, self.blocklist)
        ledger.add("blocklist", n_in, len(removed), len(current))

        n_in = len(current)
        dropped = {a for a in current if self.taint.filtered(a) or self.store[a].gfw_filtered}
        current = current - dropped
        ledger.add("gfw", n_in, len(dropped), len(current))

        n_in = len(current)
        candidates = {c.prefix for c in apd.enumerate_candidates(current, self.rib)}
        results = self.detector.scan(candidates, engine, scan_id, self.rate_limit)
        aliased = apd.collapse(r.prefix for r in results if r.aliased)
        current, removed = apd.filter_addresses(current, aliased)
        ledger.add("aliased", n_in, len(removed), len(current))

        n_in = len(current)
        targets, excluded = thirty_day_filter(self.store, scan_id, self.calendar, current)
        back = readmit(excluded, scan_id, self.readmit_slices)
        targets |= back
        ledger.add("thirty_day", n_in, len(excluded - back), len(targets))

        record = run_scan(targets, engine, scan_id, timestamp, self.qname, self.rate_limit)
        report = churn(self.records[-1], record, self.store) if self.records else None
        gfw.update_taint(self.taint, record, record.verdicts)
        for a in record.probed:
            self.store[a].gfw_filtered = self.taint.filtered(a)
        self.store.apply_scan(record)
        self.records.append(record)
        return ScanOutcome(record, ledger, aliased, results, back, report)
