"""Detection and removal of injected DNS responses.

Censoring middleboxes answer AAAA queries for blocked names on behalf of
addresses that do not exist, which makes dead addresses look DNS-responsive.
This module classifies the replies to one probe, strips injected ones from
scan records and tracks which addresses only ever "responded" that way.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .addr import Protocol, format_addr, is_teredo, parse_addr
from .probe import DnsReply, ProbeResponse, ResourceRecord, Timeout
from .records import ScanRecord


class Verdict(str, enum.Enum):
    VALID_AAAA = "valid_aaaa"
    ERROR_STATUS = "error_status"
    REFERRAL = "referral"
    INJECTED_A_RECORD = "injected_a_record"
    INJECTED_TEREDO = "injected_teredo"
    INJECTED_MULTI = "injected_multi"
    INCORRECT_OTHER = "incorrect_other"

    @property
    def injected(self) -> bool:
        return self in (Verdict.INJECTED_A_RECORD, Verdict.INJECTED_TEREDO, Verdict.INJECTED_MULTI)

    @property
    def keeps_udp53(self) -> bool:
        return self in (Verdict.VALID_AAAA, Verdict.ERROR_STATUS, Verdict.REFERRAL)

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class DnsVerdict:
    verdict: Verdict
    evidence: tuple[ResourceRecord, ...] = ()

    @property
    def injected(self) -> bool:
        return self.verdict.injected


class MissingVerdictError(KeyError):
    pass


def classify_dns_response(
    qname: str,
    responses: Sequence[ProbeResponse],
    expected_aaaa: Iterable[int] | None = None,
) -> DnsVerdict:
    """Classify all replies received for one AAAA query.

    Precedence is teredo > A record > multiple replies. ``expected_aaaa``
    models a control domain whose true answers are known: any other AAAA
    value then makes the reply incorrect.
    """
    replies: list[DnsReply] = []
    for r in responses:
        if isinstance(r.kind, DnsReply):
            replies.append(r.kind)
        elif not isinstance(r.kind, Timeout):
            raise TypeError(f"non-DNS response for {qname!r}: {type(r.kind).__name__}")
    if not replies:
        raise ValueError(f"no DNS reply to classify for {qname!r}")
    answers = tuple(rr for rep in replies for rr in rep.answers)
    teredo = tuple(rr for rr in answers if rr.rtype == "AAAA" and is_teredo(rr.value))
    if teredo:
        return DnsVerdict(Verdict.INJECTED_TEREDO, teredo)
    a_records = tuple(rr for rr in answers if rr.rtype == "A")
    if a_records:
        return DnsVerdict(Verdict.INJECTED_A_RECORD, a_records)
    if len(replies) > 1:
        return DnsVerdict(Verdict.INJECTED_MULTI, answers)
    (rep,) = replies
    aaaa = tuple(rr for rr in rep.answers if rr.rtype == "AAAA")
    if rep.rcode == 0 and aaaa:
        if expected_aaaa is not None and not {rr.value for rr in aaaa} <= set(expected_aaaa):
            return DnsVerdict(Verdict.INCORRECT_OTHER, aaaa)
        return DnsVerdict(Verdict.VALID_AAAA, aaaa)
    if rep.rcode != 0:
        return DnsVerdict(Verdict.ERROR_STATUS, rep.answers)
    if rep.referral:
        return DnsVerdict(Verdict.REFERRAL, rep.answers)
    return DnsVerdict(Verdict.INCORRECT_OTHER, rep.answers)


def clean_scan(record: ScanRecord, verdicts: Mapping[int, DnsVerdict]) -> ScanRecord:
    """Drop UDP53 responders whose replies were not genuine; other protocols untouched."""
    kept = set()
    for a in record.resp(Protocol.UDP53):
        v = verdicts.get(a)
        if v is None:
            raise MissingVerdictError(f"scan {record.scan_id}: no DNS verdict for {format_addr(a)}")
        if v.verdict.keeps_udp53:
            kept.add(a)
    out = record.copy()
    out.responsive[Protocol.UDP53] = kept
    out.verdicts = dict(verdicts)
    return out


class TaintState:
    """Per-address (ever_injected, ever_other_protocol_responsive); both flags are sticky."""

    def __init__(self) -> None:
        self.flags: dict[int, tuple[bool, bool]] = {}

    def filtered(self, a: int) -> bool:
        injected, other = self.flags.get(a, (False, False))
        return injected and not other

    def filtered_set(self) -> set[int]:
        return {a for a, (inj, other) in self.flags.items() if inj and not other}

    def mark(self, a: int, injected: bool = False, other: bool = False) -> None:
        old_inj, old_other = self.flags.get(a, (False, False))
        self.flags[a] = (old_inj or injected, old_other or other)

    def copy(self) -> TaintState:
        out = TaintState()
        out.flags = dict(self.flags)
        return out

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TaintState) and self.flags == other.flags


def update_taint(state: TaintState, record: ScanRecord, verdicts: Mapping[int, DnsVerdict]) -> TaintState:
    """Fold one scan into ``state`` (in place) and return it."""
    for a in record.resp(Protocol.UDP53):
        if a not in verdicts:
            raise MissingVerdictError(f"scan {record.scan_id}: no DNS verdict for {format_addr(a)}")
    for a, v in verdicts.items():
        if v.injected:
            state.mark(a, injected=True)
    for p, addrs in record.responsive.items():
        if p is Protocol.UDP53:
            continue
        for a in addrs:
            state.mark(a, other=True)
    return state


def historical_clean(
    records: Sequence[ScanRecord], verdicts_per_scan: Sequence[Mapping[int, DnsVerdict]]
) -> list[ScanRecord]:
    if len(records) != len(verdicts_per_scan):
        raise ValueError("one verdict map is needed per scan record")
    ids = [r.scan_id for r in records]
    if ids != sorted(ids):
        raise ValueError("records must be in chronological order")
    return [clean_scan(r, v) for r, v in zip(records, verdicts_per_scan)]


def write_filter_list(path, state: TaintState) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in sorted(state.filtered_set()):
            fh.write(format_addr(a) + "\n")


def write_verdict_log(path, verdicts: Mapping[int, DnsVerdict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["addr", "class"])
        for a in sorted(verdicts):
            w.writerow([format_addr(a), verdicts[a].verdict.value])


def read_verdict_log(path) -> dict[int, DnsVerdict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {parse_addr(row["addr"]): DnsVerdict(Verdict(row["class"])) for row in csv.DictReader(fh)}
