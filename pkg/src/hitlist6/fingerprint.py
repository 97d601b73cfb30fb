"""Alias fingerprinting: TCP SYN/ACK features and the Too-Big Trick.

The Too-Big Trick sends one ICMPv6 Packet Too Big to a single address of a
prefix and counts how many other addresses start fragmenting large echo
replies; addresses served by the same host share its path-MTU cache.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

from . import _prng
from .addr import Prefix
from .probe import EchoReply, IcmpEcho, IcmpPtb, ProbeRequest, ProbeResponse, SynAck, probe_batch

ITTL_CLASSES = (32, 64, 128, 255)
TBT_ADDRESSES = 8
TBT_ECHO_SIZE = 1300
TBT_PTB_MTU = 1280


def ittl(ttl: int) -> int:
    """Initial TTL class: smallest of 32, 64, 128, 255 that is >= ``ttl``."""
    if not 1 <= ttl <= 255:
        raise ValueError(f"TTL {ttl} outside [1, 255]")
    for c in ITTL_CLASSES:
        if ttl <= c:
            return c
    raise AssertionError("unreachable")


@dataclass(frozen=True)
class TcpFingerprint:
    ittl: int
    options_order: str
    window: int
    wscale: int | None
    mss: int | None


def fingerprint_from_synack(r: ProbeResponse | SynAck) -> TcpFingerprint:
    kind = r.kind if isinstance(r, ProbeResponse) else r
    if not isinstance(kind, SynAck):
        raise TypeError(f"expected a syn_ack response, got {type(kind).__name__}")
    return TcpFingerprint(ittl(kind.ttl), kind.options_order, kind.window, kind.wscale, kind.mss)


FP_FIELDS = ("ittl", "mss", "wscale", "options_order", "window")
STRONG_FIELDS = ("ittl", "mss", "wscale", "options_order")


@dataclass(frozen=True)
class ConsistencyReport:
    fields: dict  # field name -> "uniform" | "differs"
    overall: str  # "uniform" | "weakly_differs" | "differs"


def prefix_consistency(fps: Sequence[TcpFingerprint]) -> ConsistencyReport:
    if len(fps) < 2:
        raise ValueError("consistency needs at least two fingerprints")
    # None is a value of its own, so an absent option differs from a present one
    per_field = {
        name: "uniform" if len({getattr(fp, name) for fp in fps}) == 1 else "differs" for name in FP_FIELDS
    }
    if any(per_field[n] == "differs" for n in STRONG_FIELDS):
        overall = "differs"
    elif per_field["window"] == "differs":
        overall = "weakly_differs"
    else:
        overall = "uniform"
    return ConsistencyReport(per_field, overall)


@dataclass(frozen=True)
class TbtOutcome:
    prefix: Prefix
    tested: tuple[int, ...]
    step1_ok: bool
    step2_ok: bool
    fragmented_without_ptb: int

    @property
    def cls(self) -> str:
        if not (self.step1_ok and self.step2_ok):
            return "inconclusive"
        if self.fragmented_without_ptb == TBT_ADDRESSES - 1:
            return "full_alias"
        if self.fragmented_without_ptb == 0:
            return "no_shared_cache"
        return "partial"

    @property
    def label(self) -> str:
        c = self.cls
        return f"partial({self.fragmented_without_ptb})" if c == "partial" else c


def tbt_addresses(prefix: Prefix, scan_id: int, seed: int) -> list[int]:
    """The 8 distinct keyed-random addresses tested in ``prefix``.

    The all-zeros address is skipped unless the prefix has only 8 addresses.
    """
    if prefix.length > 125:
        raise ValueError(f"{prefix} holds fewer than {TBT_ADDRESSES} addresses")
    skip_zero = prefix.num_addresses > TBT_ADDRESSES
    out: list[int] = []
    j = 0
    while len(out) < TBT_ADDRESSES:
        a = prefix.base | _prng.keyed_bits(prefix.host_bits, seed, "tbt", scan_id, prefix, j)
        j += 1
        if (skip_zero and a == prefix.base) or a in out:
            continue
        out.append(a)
    return out


_prefix_locks: dict[Prefix, threading.Lock] = {}
_prefix_guard = threading.Lock()


def _echo(engine, targets: Sequence[int], scan_id: int, rate: float) -> list[EchoReply | None]:
    reqs = [ProbeRequest(t, IcmpEcho(TBT_ECHO_SIZE)) for t in targets]
    replies = probe_batch(engine, reqs, rate, scan_id)
    out = []
    for req in reqs:
        echo = next((r.kind for r in replies[req] if isinstance(r.kind, EchoReply)), None)
        out.append(echo)
    return out


def tbt_run(prefix: Prefix, engine, scan_id: int, seed: int, rate_limit: float = 10_000.0) -> TbtOutcome:
    """Three-step Too-Big Trick against ``prefix``.

    1. echo(1300) to all 8 addresses, every reply must come back unfragmented;
    2. Packet Too Big (MTU 1280) to address 0, its next echo reply must be fragmented;
    3. echo(1300) to addresses 1..7 and count fragmented replies.
    """
    addrs = tbt_addresses(prefix, scan_id, seed)
    with _prefix_guard:
        lock = _prefix_locks.setdefault(prefix, threading.Lock())
    with lock:
        first = _echo(engine, addrs, scan_id, rate_limit)
        step1_ok = all(e is not None and not e.fragmented for e in first)
        if not step1_ok:
            return TbtOutcome(prefix, tuple(addrs), False, False, 0)
        probe_batch(engine, [ProbeRequest(addrs[0], IcmpPtb(TBT_PTB_MTU))], rate_limit, scan_id)
        (again,) = _echo(engine, addrs[:1], scan_id, rate_limit)
        step2_ok = again is not None and again.fragmented
        if not step2_ok:
            return TbtOutcome(prefix, tuple(addrs), True, False, 0)
        rest = _echo(engine, addrs[1:], scan_id, rate_limit)
        count = sum(1 for e in rest if e is not None and e.fragmented)
    return TbtOutcome(prefix, tuple(addrs), True, True, count)


def write_tbt_log(path, outcomes: Iterable[TbtOutcome]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prefix", "class", "fragmented_count", "step1_ok"])
        for o in sorted(outcomes, key=lambda o: o.prefix):
            w.writerow([str(o.prefix), o.label, o.fragmented_without_ptb, int(o.step1_ok)])
