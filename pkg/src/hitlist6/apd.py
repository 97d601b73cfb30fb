"""Multi-level aliased prefix detection.

A candidate prefix is split into its 16 next-nibble subprefixes and one
pseudo-random address in each is probed on ICMP and TCP/80. Results are
OR-merged over both protocols and a sliding window of the current and
three previous scans; when every subprefix answered at least once the
prefix is aliased.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from . import _prng, kernels
from .addr import Prefix, PrefixSet, Protocol
from .asn import RibTable
from .probe import EchoReply, IcmpEcho, ProbeRequest, ProbeResponse, SynAck, TcpSyn, probe_batch

log = logging.getLogger(__name__)

SUBPREFIXES = 16
WINDOW = 4
DENSE_THRESHOLD = 100
DENSE_LENGTHS = tuple(range(68, 125, 4))
APD_PROTOCOLS = (Protocol.ICMP, Protocol.TCP80)
FULL_MASK = (1 << SUBPREFIXES) - 1


@dataclass(frozen=True, order=True)
class ApdCandidate:
    prefix: Prefix
    origin: str  # "bgp", "slash64" or "dense_longer"


def enumerate_candidates(
    addrs: Iterable[int], rib: RibTable | None = None, threshold: int = DENSE_THRESHOLD
) -> set[ApdCandidate]:
    addrs = set(addrs)
    out: set[ApdCandidate] = set()
    if rib is not None:
        for prefix, _asn in rib.entries():
            if prefix.length > 124:
                log.warning("skipping BGP prefix %s: longer than /124", prefix)
                continue
            out.add(ApdCandidate(prefix, "bgp"))
    for a in addrs:
        out.add(ApdCandidate(Prefix.containing(a, 64), "slash64"))
    for length, bases in kernels.dense_prefixes(addrs, DENSE_LENGTHS, threshold).items():
        for base in bases:
            out.add(ApdCandidate(Prefix(base, length), "dense_longer"))
    return out


def generate_probe_targets(prefix: Prefix, scan_id: int, seed: int) -> list[int]:
    """One keyed pseudo-random address inside each of the 16 next-nibble subprefixes."""
    if prefix.length > 124:
        raise ValueError(f"{prefix} is longer than /124 and has no 16 subprefixes")
    targets = []
    for i in range(SUBPREFIXES):
        sub = prefix.subprefix(i)
        targets.append(sub.base | _prng.keyed_bits(sub.host_bits, seed, "apd", scan_id, prefix, i))
    return targets


@dataclass(frozen=True)
class ScanGrid:
    """Responsiveness of the 16 subprefix targets in one scan, one bitmask per protocol."""

    scan_id: int
    masks: Mapping[Protocol, int]

    def cell(self, index: int, proto: Protocol) -> bool:
        return bool((self.masks.get(proto, 0) >> index) & 1)

    def merged(self) -> int:
        out = 0
        for m in self.masks.values():
            out |= m
        return out


@dataclass(frozen=True)
class ApdResult:
    prefix: Prefix
    grid: tuple[ScanGrid, ...]  # oldest first, at most WINDOW entries
    aliased: bool
    scan_id: int
    tcp_replies: Mapping[int, SynAck] = field(default_factory=dict, compare=False)

    @property
    def merged_mask(self) -> int:
        out = 0
        for g in self.grid:
            out |= g.merged()
        return out


def evaluate(prefix: Prefix, history: Sequence[ScanGrid]) -> ApdResult:
    """Verdict over the latest ``WINDOW`` grids in ``history`` (oldest first)."""
    window = tuple(history[-WINDOW:])
    merged = 0
    for g in window:
        merged |= g.merged()
    scan_id = window[-1].scan_id if window else -1
    return ApdResult(prefix, window, merged == FULL_MASK, scan_id)


def collapse(aliased: Iterable[Prefix]) -> set[Prefix]:
    """Drop every prefix strictly contained in another one of the set."""
    kept: set[Prefix] = set()
    index = PrefixSet()
    # shortest first: anything containing p is already indexed when p is visited
    for p in sorted(set(aliased), key=lambda q: (q.length, q.base)):
        if any(q.length < p.length for q in index.matches(p.base)):
            continue
        kept.add(p)
        index.add(p)
    return kept


def filter_addresses(addrs: Iterable[int], aliased: Iterable[Prefix]) -> tuple[set[int], set[int]]:
    covered = PrefixSet(aliased)
    kept: set[int] = set()
    removed: set[int] = set()
    if not len(covered):
        return set(addrs), removed
    for a in addrs:
        (removed if a in covered else kept).add(a)
    return kept, removed


def representatives(aliased: Iterable[Prefix], addrs: Iterable[int], seed: int) -> dict[Prefix, int]:
    """Known input address per prefix (the lowest), else a keyed random member."""
    prefixes = sorted(set(aliased))
    index = PrefixSet(prefixes)
    best: dict[Prefix, int] = {}
    for a in addrs:
        for p in index.matches(a):
            if p not in best or a < best[p]:
                best[p] = a
    for p in prefixes:
        if p not in best:
            best[p] = p.base | _prng.keyed_bits(p.host_bits, seed, "representative", p)
    return {p: best[p] for p in prefixes}


class ApdDetector:
    """Runs detection scans and keeps the per-prefix sliding window."""

    def __init__(self, seed: int, window: int = WINDOW) -> None:
        self.seed = seed
        self.window = window
        self.history: dict[Prefix, deque[ScanGrid]] = {}

    def scan(
        self,
        prefixes: Iterable[Prefix],
        engine,
        scan_id: int,
        rate_limit: float = 10_000.0,
    ) -> list[ApdResult]:
        prefixes = sorted({p for p in prefixes if p.length <= 124})
        targets = {p: generate_probe_targets(p, scan_id, self.seed) for p in prefixes}
        requests = []
        for p in prefixes:
            for t in targets[p]:
                requests.append(ProbeRequest(t, IcmpEcho()))
                requests.append(ProbeRequest(t, TcpSyn(80)))
        replies = probe_batch(engine, requests, rate_limit, scan_id)
        results = []
        for p in prefixes:
            icmp = tcp = 0
            synacks: dict[int, SynAck] = {}
            for i, t in enumerate(targets[p]):
                if _answered(replies[ProbeRequest(t, IcmpEcho())], EchoReply):
                    icmp |= 1 << i
                tcp_resp = replies[ProbeRequest(t, TcpSyn(80))]
                if _answered(tcp_resp, SynAck):
                    tcp |= 1 << i
                    synacks[t] = next(r.kind for r in tcp_resp if isinstance(r.kind, SynAck))
            hist = self.history.setdefault(p, deque(maxlen=self.window))
            hist.append(ScanGrid(scan_id, {Protocol.ICMP: icmp, Protocol.TCP80: tcp}))
            res = evaluate(p, list(hist))
            results.append(
                ApdResult(res.prefix, res.grid[-self.window :], res.aliased, scan_id, synacks)
            )
        return results

    # JSON persistence of the window

    def to_json(self) -> str:
        data = {
            "seed": self.seed,
            "window": self.window,
            "history": {
                str(p): [[g.scan_id, g.masks.get(Protocol.ICMP, 0), g.masks.get(Protocol.TCP80, 0)] for g in hist]
                for p, hist in sorted(self.history.items())
            },
        }
        return json.dumps(data, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ApdDetector:
        data = json.loads(text)
        det = cls(data["seed"], data["window"])
        for p_text, rows in data["history"].items():
            hist: deque[ScanGrid] = deque(maxlen=det.window)
            for sid, icmp, tcp in rows:
                hist.append(ScanGrid(sid, {Protocol.ICMP: icmp, Protocol.TCP80: tcp}))
            det.history[Prefix.parse(p_text)] = hist
        return det


def _answered(responses: list[ProbeResponse], kind: type) -> bool:
    return any(isinstance(r.kind, kind) for r in responses)


def detect(
    addrs: Iterable[int],
    rib: RibTable | None,
    engine,
    scan_ids: Sequence[int],
    seed: int,
    rate_limit: float = 10_000.0,
) -> set[Prefix]:
    """Run detection over ``scan_ids`` and return the collapsed aliased set of the last scan."""
    candidates = {c.prefix for c in enumerate_candidates(addrs, rib)}
    det = ApdDetector(seed)
    results: list[ApdResult] = []
    for sid in scan_ids:
        results = det.scan(candidates, engine, sid, rate_limit)
    return collapse(r.prefix for r in results if r.aliased)


def write_aliased(path, aliased: Iterable[Prefix]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in sorted(set(aliased)):
            fh.write(f"{p}\n")
