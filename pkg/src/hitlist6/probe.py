"""Probe request/response model and the engine contract.

An engine is anything with a ``probe(scan_id, request)`` method returning
the list of responses for one request. ``probe_batch`` wraps an engine with
de-duplication, rate limiting and deterministic result ordering.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Protocol as TypingProtocol
from typing import Sequence, Union

from .addr import Protocol, format_addr

MIN_IPV6_MTU = 1280
DEFAULT_QNAME = "www.google.com"


class EngineError(RuntimeError):
    pass


# Request kinds


@dataclass(frozen=True, order=True)
class IcmpEcho:
    size: int = 64

    def __post_init__(self) -> None:
        if not 8 <= self.size <= 65535:
            raise ValueError(f"icmp_echo size {self.size} outside [8, 65535]")


@dataclass(frozen=True, order=True)
class TcpSyn:
    port: int = 80

    def __post_init__(self) -> None:
        if self.port not in (80, 443):
            raise ValueError(f"tcp_syn port must be 80 or 443, got {self.port}")


@dataclass(frozen=True, order=True)
class DnsAaaa:
    qname: str = DEFAULT_QNAME


@dataclass(frozen=True, order=True)
class QuicInitial:
    pass


@dataclass(frozen=True, order=True)
class IcmpPtb:
    reported_mtu: int = MIN_IPV6_MTU

    def __post_init__(self) -> None:
        if self.reported_mtu < MIN_IPV6_MTU:
            raise ValueError(f"icmp_ptb reported_mtu {self.reported_mtu} below {MIN_IPV6_MTU}")


RequestKind = Union[IcmpEcho, TcpSyn, DnsAaaa, QuicInitial, IcmpPtb]


def kind_name(kind: object) -> str:
    return {
        IcmpEcho: "icmp_echo",
        TcpSyn: "tcp_syn",
        DnsAaaa: "dns_aaaa",
        QuicInitial: "quic_initial",
        IcmpPtb: "icmp_ptb",
        EchoReply: "echo_reply",
        SynAck: "syn_ack",
        DnsReply: "dns_reply",
        QuicReply: "quic_reply",
        Timeout: "timeout",
    }[type(kind)]


def _kind_sort_key(kind: object) -> tuple:
    return (kind_name(kind), tuple(getattr(kind, f) for f in kind.__dataclass_fields__))


@dataclass(frozen=True)
class ProbeRequest:
    target: int
    kind: RequestKind

    def sort_key(self) -> tuple:
        return (self.target, _kind_sort_key(self.kind))

    def __str__(self) -> str:
        return f"{kind_name(self.kind)}({format_addr(self.target)})"


def request_for(target: int, proto: Protocol, qname: str = DEFAULT_QNAME) -> ProbeRequest:
    """Standard scan probe for one of the five protocols."""
    kind: RequestKind
    if proto is Protocol.ICMP:
        kind = IcmpEcho()
    elif proto is Protocol.TCP80:
        kind = TcpSyn(80)
    elif proto is Protocol.TCP443:
        kind = TcpSyn(443)
    elif proto is Protocol.UDP53:
        kind = DnsAaaa(qname)
    else:
        kind = QuicInitial()
    return ProbeRequest(target, kind)


def request_protocol(req: ProbeRequest) -> Protocol | None:
    kind = req.kind
    if isinstance(kind, IcmpEcho):
        return Protocol.ICMP
    if isinstance(kind, TcpSyn):
        return Protocol.TCP80 if kind.port == 80 else Protocol.TCP443
    if isinstance(kind, DnsAaaa):
        return Protocol.UDP53
    if isinstance(kind, QuicInitial):
        return Protocol.UDP443
    return None


# Response kinds


@dataclass(frozen=True)
class ResourceRecord:
    rtype: str  # "A", "AAAA", "NS" or "other"
    value: int | str

    def __post_init__(self) -> None:
        if self.rtype in ("A", "AAAA"):
            limit = 1 << (32 if self.rtype == "A" else 128)
            if not isinstance(self.value, int) or not 0 <= self.value < limit:
                raise ValueError(f"{self.rtype} record value out of range: {self.value!r}")
        elif self.rtype in ("NS", "other"):
            if not isinstance(self.value, str):
                raise ValueError(f"{self.rtype} record value must be a string")
        else:
            raise ValueError(f"unknown record type {self.rtype!r}")


@dataclass(frozen=True)
class EchoReply:
    fragmented: bool = False


@dataclass(frozen=True)
class SynAck:
    ttl: int
    window: int
    wscale: int | None = None
    mss: int | None = None
    options_order: str = ""


@dataclass(frozen=True)
class DnsReply:
    rcode: int = 0
    answers: tuple[ResourceRecord, ...] = ()
    referral: bool = False


@dataclass(frozen=True)
class QuicReply:
    pass


@dataclass(frozen=True)
class Timeout:
    pass


ResponseKind = Union[EchoReply, SynAck, DnsReply, QuicReply, Timeout]


@dataclass(frozen=True)
class ProbeResponse:
    target: int
    kind: ResponseKind
    arrival_index: int = 0

    @property
    def is_timeout(self) -> bool:
        return isinstance(self.kind, Timeout)


class Engine(TypingProtocol):
    realtime: bool

    def probe(self, scan_id: int, request: ProbeRequest) -> list[ProbeResponse]: ...


@dataclass
class RateLimiter:
    """Paces dispatches to at most ``rate`` per second."""

    rate: float
    _next: float = field(default=0.0, repr=False)

    def wait(self) -> None:
        now = time.monotonic()
        if self._next > now:
            time.sleep(self._next - now)
            now = self._next
        self._next = now + 1.0 / self.rate


_engine_locks: dict[int, threading.Lock] = {}
_locks_guard = threading.Lock()


def _lock_for(engine: object) -> threading.Lock:
    with _locks_guard:
        return _engine_locks.setdefault(id(engine), threading.Lock())


def probe_batch(
    engine: Engine,
    requests: Sequence[ProbeRequest],
    rate_limit: float = 10_000.0,
    scan_id: int = 0,
) -> dict[ProbeRequest, list[ProbeResponse]]:
    """Dispatch ``requests`` and return responses keyed by request.

    Identical requests are sent once. Keys come back sorted by request and
    each response list by ``arrival_index``; timeouts are explicit responses.
    """
    if rate_limit <= 0:
        raise ValueError("rate_limit must be positive")
    unique = list(dict.fromkeys(requests))
    limiter = RateLimiter(rate_limit) if getattr(engine, "realtime", False) else None
    results: dict[ProbeRequest, list[ProbeResponse]] = {}
    with _lock_for(engine):
        for req in unique:
            if limiter is not None:
                limiter.wait()
            responses = engine.probe(scan_id, req)
            if not responses:
                responses = [ProbeResponse(req.target, Timeout())]
            results[req] = sorted(responses, key=lambda r: r.arrival_index)
    return {req: results[req] for req in sorted(results, key=ProbeRequest.sort_key)}
