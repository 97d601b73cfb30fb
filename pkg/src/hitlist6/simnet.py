"""Deterministic simulated IPv6 network.

A :class:`Scenario` declares the ground truth: plain hosts, aliased
(fully responsive) prefixes backed by one host or by several hosts with
separate path-MTU caches, an on-path DNS injector, EUI-64 CPE fleets with
rotating prefixes, and reply loss. :class:`SimNetwork` answers probes from
it and implements the engine contract of :mod:`hitlist6.probe`.

Scenario file grammar (UTF-8, ``#`` comments, one stanza per line)::

    seed <int>
    loss <float in [0, 1)>
    host <addr> protos=<p,...> [fingerprint]
    aliased <prefix> mode=single|multi protos=<p,...> [groups=singleton|one|nibble:<n>] [inputs=<n>] [fingerprint]
    group <entity-prefix> addrs=<addr,...> [fingerprint]
    gfw covered=<prefix,...> qnames=<name,...> replies=<n> pool=<A:v4|AAAA:v6,...>
    cpe macs=<mac,...> pool=<prefix/64,...> [period=<scans>] [protos=<p,...>]
    input <addr>|<prefix> [count=<n>]

    fingerprint := [ttl=<n>] [window=<n>] [wscale=<n|->] [mss=<n|->] [opts=<text>]

Protocol names are ``icmp tcp80 tcp443 udp53 udp443``. ``group`` lines
declare explicit PMTU-cache groups inside a multi-host entity; addresses not
listed fall back to the entity's ``groups=`` rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import _prng
from .addr import (
    AddrParseError,
    MacAddr,
    Prefix,
    PrefixMap,
    Protocol,
    eui64_extract,
    eui64_iid,
    format_addr,
    format_v4,
    parse_addr,
    parse_v4,
)
from .probe import (
    DnsAaaa,
    DnsReply,
    EchoReply,
    IcmpEcho,
    IcmpPtb,
    ProbeRequest,
    ProbeResponse,
    QuicInitial,
    QuicReply,
    ResourceRecord,
    SynAck,
    TcpSyn,
    Timeout,
)

DEFAULT_PMTU = 1500
GENUINE_AAAA = parse_addr("2a00:1450:4001:82a::2004")


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    ttl: int = 57
    window: int = 64800
    wscale: int | None = 7
    mss: int | None = 1440
    options: str = "MSTNW"

    def syn_ack(self) -> SynAck:
        return SynAck(self.ttl, self.window, self.wscale, self.mss, self.options)


DEFAULT_FP = Fingerprint()


@dataclass(frozen=True)
class Host:
    addr: int
    protocols: frozenset[Protocol]
    fp: Fingerprint = DEFAULT_FP


@dataclass(frozen=True)
class PmtuGroup:
    addrs: frozenset[int]
    fp: Fingerprint | None = None


@dataclass(frozen=True)
class AliasedEntity:
    prefix: Prefix
    mode: str  # "single" or "multi"
    protocols: frozenset[Protocol]
    default_groups: str = "singleton"  # multi mode: singleton | one | nibble:<n>
    groups: tuple[PmtuGroup, ...] = ()
    fp: Fingerprint = DEFAULT_FP
    inputs: int = 4

    def group_key(self, a: int) -> tuple:
        if self.mode == "single":
            return ("entity", self.prefix)
        for i, g in enumerate(self.groups):
            if a in g.addrs:
                return ("entity", self.prefix, "explicit", i)
        rule = self.default_groups
        if rule == "one":
            return ("entity", self.prefix, "rest")
        if rule.startswith("nibble:"):
            pos = int(rule.split(":", 1)[1])
            return ("entity", self.prefix, "nibble", (a >> (4 * (31 - pos))) & 0xF)
        return ("entity", self.prefix, "addr", a)

    def fingerprint_for(self, a: int) -> Fingerprint:
        if self.mode == "multi":
            for g in self.groups:
                if a in g.addrs and g.fp is not None:
                    return g.fp
        return self.fp


@dataclass(frozen=True)
class GfwSpec:
    covered: tuple[Prefix, ...]
    blocked_qnames: frozenset[str]
    answer_pool: tuple[ResourceRecord, ...]
    replies_per_query: int = 2


@dataclass(frozen=True)
class CpeFleet:
    macs: tuple[MacAddr, ...]
    prefix_pool: tuple[Prefix, ...]
    rotation_period: int = 1
    protocols: frozenset[Protocol] = frozenset({Protocol.ICMP})

    def assignment(self, seed: int, scan_id: int) -> dict[int, MacAddr]:
        """Address -> MAC for every CPE in this fleet during ``scan_id``."""
        epoch = scan_id // self.rotation_period
        out = {}
        for mac in self.macs:
            idx = _prng.keyed_index(len(self.prefix_pool), seed, "cpe", mac.value, epoch)
            out[self.prefix_pool[idx].base | eui64_iid(mac)] = mac
        return out


@dataclass
class Scenario:
    seed: int = 0
    loss_rate: float = 0.0
    hosts: list[Host] = field(default_factory=list)
    aliased: list[AliasedEntity] = field(default_factory=list)
    injector: GfwSpec | None = None
    cpe_fleets: list[CpeFleet] = field(default_factory=list)
    inputs: list[tuple[Prefix, int]] = field(default_factory=list)

    def validate(self) -> Scenario:
        if not 0.0 <= self.loss_rate < 1.0:
            raise ScenarioError(f"loss_rate must be in [0, 1), got {self.loss_rate}")
        spaces: list[tuple[Prefix, str]] = [(Prefix(h.addr, 128), f"host {format_addr(h.addr)}") for h in self.hosts]
        spaces += [(e.prefix, f"aliased {e.prefix}") for e in self.aliased]
        for i, fleet in enumerate(self.cpe_fleets):
            if not fleet.macs or not fleet.prefix_pool:
                raise ScenarioError(f"cpe fleet {i} needs at least one MAC and one pool prefix")
            if fleet.rotation_period < 1:
                raise ScenarioError("cpe rotation period must be >= 1")
            if len(set(fleet.macs)) != len(fleet.macs):
                raise ScenarioError(f"cpe fleet {i} lists a MAC twice")
            for p in fleet.prefix_pool:
                if p.length != 64:
                    raise ScenarioError(f"cpe pool prefix {p} is not a /64")
                spaces.append((p, f"cpe pool {p}"))
        spaces.sort(key=lambda item: (item[0].base, item[0].length))
        # sorted by base: any overlap shows up between a prefix and a later one it contains
        open_: list[tuple[Prefix, str]] = []
        for p, label in spaces:
            while open_ and p.base > open_[-1][0].last:
                open_.pop()
            if open_:
                raise ScenarioError(f"overlapping entities: {open_[-1][1]} and {label}")
            open_.append((p, label))
        for e in self.aliased:
            if e.mode not in ("single", "multi"):
                raise ScenarioError(f"aliased {e.prefix}: unknown mode {e.mode!r}")
            seen: set[int] = set()
            for g in e.groups:
                if e.mode != "multi":
                    raise ScenarioError(f"aliased {e.prefix}: groups need mode=multi")
                if not g.addrs:
                    raise ScenarioError(f"aliased {e.prefix}: empty PMTU group")
                for a in g.addrs:
                    if a not in e.prefix:
                        raise ScenarioError(f"group address {format_addr(a)} outside {e.prefix}")
                    if a in seen:
                        raise ScenarioError(f"group address {format_addr(a)} listed in two groups")
                    seen.add(a)
            rule = e.default_groups
            if rule not in ("singleton", "one") and not (
                rule.startswith("nibble:") and rule[7:].isdigit() and int(rule[7:]) < 32
            ):
                raise ScenarioError(f"aliased {e.prefix}: bad groups rule {rule!r}")
        inj = self.injector
        if inj is not None:
            if inj.covered and not inj.answer_pool:
                raise ScenarioError("gfw answer pool must not be empty")
            if inj.replies_per_query < 1:
                raise ScenarioError("gfw replies must be >= 1")
        return self

    # Ground truth helpers

    def ground_truth_aliased(self) -> set[Prefix]:
        return {e.prefix for e in self.aliased}

    def candidate_input(self) -> set[int]:
        """Deterministic hitlist input: hosts, samples of aliased prefixes,
        CPE addresses seen at scan 0, and ``input`` stanzas."""
        out = {h.addr for h in self.hosts}
        for e in self.aliased:
            out.update(random_addrs_in(e.prefix, e.inputs, self.seed, "input", e.prefix))
        for fleet in self.cpe_fleets:
            out.update(fleet.assignment(self.seed, 0))
        for p, count in self.inputs:
            out.update(random_addrs_in(p, count, self.seed, "extra-input", p))
        return out


def random_addrs_in(prefix: Prefix, count: int, *key) -> list[int]:
    """``count`` distinct keyed-random addresses inside ``prefix`` (fewer if it is smaller)."""
    count = min(count, prefix.num_addresses)
    out: list[int] = []
    seen: set[int] = set()
    j = 0
    while len(out) < count:
        a = prefix.base | _prng.keyed_bits(prefix.host_bits, *key, j)
        j += 1
        if a not in seen:
            seen.add(a)
            out.append(a)
    return out


# Parsing


def _protocols(text: str) -> frozenset[Protocol]:
    if text in ("", "-", "none"):
        return frozenset()
    return frozenset(Protocol.parse(t) for t in text.split(","))


def _opt_int(text: str) -> int | None:
    return None if text == "-" else int(text)


_FP_KEYS = {"ttl", "window", "wscale", "mss", "opts"}


def _fingerprint(kv: dict[str, str], base: Fingerprint = DEFAULT_FP) -> Fingerprint:
    return Fingerprint(
        ttl=int(kv.get("ttl", base.ttl)),
        window=int(kv.get("window", base.window)),
        wscale=_opt_int(kv["wscale"]) if "wscale" in kv else base.wscale,
        mss=_opt_int(kv["mss"]) if "mss" in kv else base.mss,
        options=kv.get("opts", base.options),
    )


def _record(text: str) -> ResourceRecord:
    rtype, _, value = text.partition(":")
    rtype = rtype.upper()
    if rtype == "A":
        return ResourceRecord("A", parse_v4(value))
    if rtype == "AAAA":
        return ResourceRecord("AAAA", parse_addr(value))
    raise ScenarioError(f"pool entry {text!r} must be A:<v4> or AAAA:<v6>")


def _split_kv(tokens: list[str], allowed: set[str], where: str) -> dict[str, str]:
    kv = {}
    for tok in tokens:
        key, sep, value = tok.partition("=")
        if not sep or key not in allowed:
            raise ScenarioError(f"{where}: unexpected field {tok!r}")
        kv[key] = value
    return kv


def parse_scenario(lines: Iterable[str], source: str = "<scenario>") -> Scenario:
    scn = Scenario()
    pending_groups: list[tuple[Prefix, PmtuGroup, str]] = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        word, *rest = line.split()
        try:
            if word == "seed":
                scn.seed = int(rest[0])
            elif word == "loss":
                scn.loss_rate = float(rest[0])
            elif word == "host":
                kv = _split_kv(rest[1:], {"protos"} | _FP_KEYS, where)
                scn.hosts.append(Host(parse_addr(rest[0]), _protocols(kv.get("protos", "icmp")), _fingerprint(kv)))
            elif word == "aliased":
                kv = _split_kv(rest[1:], {"mode", "protos", "groups", "inputs"} | _FP_KEYS, where)
                scn.aliased.append(
                    AliasedEntity(
                        prefix=Prefix.parse(rest[0]),
                        mode=kv.get("mode", "single"),
                        protocols=_protocols(kv.get("protos", "icmp,tcp80")),
                        default_groups=kv.get("groups", "singleton"),
                        fp=_fingerprint(kv),
                        inputs=int(kv.get("inputs", 4)),
                    )
                )
            elif word == "group":
                kv = _split_kv(rest[1:], {"addrs"} | _FP_KEYS, where)
                addrs = frozenset(parse_addr(t) for t in kv.get("addrs", "").split(",") if t)
                fp = _fingerprint(kv) if _FP_KEYS & kv.keys() else None
                pending_groups.append((Prefix.parse(rest[0]), PmtuGroup(addrs, fp), where))
            elif word == "gfw":
                if scn.injector is not None:
                    raise ScenarioError("only one gfw stanza is allowed")
                kv = _split_kv(rest, {"covered", "qnames", "replies", "pool"}, where)
                scn.injector = GfwSpec(
                    covered=tuple(Prefix.parse(t) for t in kv.get("covered", "").split(",") if t),
                    blocked_qnames=frozenset(t for t in kv.get("qnames", "www.google.com").split(",") if t),
                    answer_pool=tuple(_record(t) for t in kv.get("pool", "").split(",") if t),
                    replies_per_query=int(kv.get("replies", 2)),
                )
            elif word == "cpe":
                kv = _split_kv(rest, {"macs", "pool", "period", "protos"}, where)
                scn.cpe_fleets.append(
                    CpeFleet(
                        macs=tuple(MacAddr.parse(t) for t in kv.get("macs", "").split(",") if t),
                        prefix_pool=tuple(Prefix.parse(t) for t in kv.get("pool", "").split(",") if t),
                        rotation_period=int(kv.get("period", 1)),
                        protocols=_protocols(kv.get("protos", "icmp")),
                    )
                )
            elif word == "input":
                kv = _split_kv(rest[1:], {"count"}, where)
                target = rest[0]
                p = Prefix.parse(target) if "/" in target else Prefix(parse_addr(target), 128)
                scn.inputs.append((p, int(kv.get("count", 1))))
            else:
                raise ScenarioError(f"unknown stanza {word!r}")
        except (IndexError, ValueError, AddrParseError) as exc:
            if isinstance(exc, ScenarioError) and str(exc).startswith(source):
                raise
            raise ScenarioError(f"{where}: {exc or 'missing field'}") from None
    for prefix, group, where in pending_groups:
        for i, e in enumerate(scn.aliased):
            if e.prefix == prefix:
                scn.aliased[i] = AliasedEntity(
                    e.prefix, e.mode, e.protocols, e.default_groups, e.groups + (group,), e.fp, e.inputs
                )
                break
        else:
            raise ScenarioError(f"{where}: group refers to unknown aliased prefix {prefix}")
    return scn.validate()


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh, str(path))


def _fp_fields(fp: Fingerprint) -> str:
    if fp == DEFAULT_FP:
        return ""
    ws = "-" if fp.wscale is None else fp.wscale
    mss = "-" if fp.mss is None else fp.mss
    return f" ttl={fp.ttl} window={fp.window} wscale={ws} mss={mss} opts={fp.options}"


def _protos_text(protos: frozenset[Protocol]) -> str:
    return ",".join(p.value for p in sorted(protos, key=list(Protocol).index)) or "-"


def dump_scenario(scn: Scenario) -> str:
    """Serialize ``scn`` in the scenario file grammar."""
    out = [f"seed {scn.seed}", f"loss {scn.loss_rate!r}"]
    for h in scn.hosts:
        out.append(f"host {format_addr(h.addr)} protos={_protos_text(h.protocols)}{_fp_fields(h.fp)}")
    for e in scn.aliased:
        extra = f" groups={e.default_groups}" if e.mode == "multi" else ""
        out.append(
            f"aliased {e.prefix} mode={e.mode} protos={_protos_text(e.protocols)}{extra} inputs={e.inputs}{_fp_fields(e.fp)}"
        )
        for g in e.groups:
            addrs = ",".join(format_addr(a) for a in sorted(g.addrs))
            out.append(f"group {e.prefix} addrs={addrs}{_fp_fields(g.fp) if g.fp else ''}")
    if scn.injector is not None:
        inj = scn.injector
        pool = ",".join(
            f"A:{format_v4(r.value)}" if r.rtype == "A" else f"AAAA:{format_addr(r.value)}" for r in inj.answer_pool
        )
        out.append(
            f"gfw covered={','.join(str(p) for p in inj.covered)} qnames={','.join(sorted(inj.blocked_qnames))}"
            f" replies={inj.replies_per_query} pool={pool}"
        )
    for f in scn.cpe_fleets:
        out.append(
            f"cpe macs={','.join(str(m) for m in f.macs)} pool={','.join(str(p) for p in f.prefix_pool)}"
            f" period={f.rotation_period} protos={_protos_text(f.protocols)}"
        )
    for p, count in scn.inputs:
        out.append(f"input {p} count={count}")
    return "\n".join(out) + "\n"


# Engine


class SimNetwork:
    """Probe engine backed by a :class:`Scenario`.

    Path-MTU state is kept per ``scan_id``; a new scan id starts with every
    cache at the default MTU.
    """

    realtime = False

    def __init__(self, scenario: Scenario, log_requests: bool = False) -> None:
        self.scenario = scenario.validate()
        self._hosts = {h.addr: h for h in scenario.hosts}
        self._aliased: PrefixMap[AliasedEntity] = PrefixMap((e.prefix, e) for e in scenario.aliased)
        inj = scenario.injector
        self._covered: PrefixMap[None] = PrefixMap((p, None) for p in (inj.covered if inj else ()))
        self._pmtu: dict[int, dict[tuple, int]] = {}
        self._cpe_cache: dict[int, dict[int, tuple[CpeFleet, MacAddr]]] = {}
        self.log_requests = log_requests
        self.request_log: list[tuple[int, ProbeRequest]] = []

    # Entity resolution

    def _cpe_at(self, scan_id: int) -> dict[int, tuple[CpeFleet, MacAddr]]:
        table = self._cpe_cache.get(scan_id)
        if table is None:
            table = {}
            for fleet in self.scenario.cpe_fleets:
                for a, mac in fleet.assignment(self.scenario.seed, scan_id).items():
                    table[a] = (fleet, mac)
            self._cpe_cache[scan_id] = table
        return table

    def _resolve(self, scan_id: int, a: int) -> tuple[frozenset[Protocol], tuple, Fingerprint] | None:
        host = self._hosts.get(a)
        if host is not None:
            return host.protocols, ("host", a), host.fp
        hit = self._aliased.longest_match(a)
        if hit is not None:
            e = hit[1]
            return e.protocols, e.group_key(a), e.fingerprint_for(a)
        if self.scenario.cpe_fleets and eui64_extract(a) is not None:
            cpe = self._cpe_at(scan_id).get(a)
            if cpe is not None:
                return cpe[0].protocols, ("cpe", cpe[1].value), DEFAULT_FP
        return None

    def responsive_protocols(self, scan_id: int, a: int) -> frozenset[Protocol]:
        """Ground truth: protocols ``a`` answers during ``scan_id`` (ignoring loss)."""
        found = self._resolve(scan_id, a)
        return found[0] if found else frozenset()

    def pmtu_group(self, scan_id: int, a: int) -> tuple | None:
        found = self._resolve(scan_id, a)
        return found[1] if found else None

    def is_injected(self, a: int, qname: str) -> bool:
        inj = self.scenario.injector
        return inj is not None and qname in inj.blocked_qnames and self._covered.covers(a)

    # Probing

    def _lost(self, scan_id: int, req: ProbeRequest, j: int) -> bool:
        rate = self.scenario.loss_rate
        if rate <= 0.0:
            return False
        return _prng.keyed_uniform(self.scenario.seed, "loss", scan_id, req.target, repr(req.kind), j) < rate

    def answer(self, scan_id: int, req: ProbeRequest) -> list[ProbeResponse]:
        if self.log_requests:
            self.request_log.append((scan_id, req))
        a = req.target
        kind = req.kind
        found = self._resolve(scan_id, a)
        protos, group, fp = found if found else (frozenset(), None, DEFAULT_FP)
        replies: list = []
        if isinstance(kind, IcmpEcho):
            if Protocol.ICMP in protos:
                mtu = self._pmtu.get(scan_id, {}).get(group, DEFAULT_PMTU)
                replies.append(EchoReply(fragmented=kind.size > mtu))
        elif isinstance(kind, IcmpPtb):
            if group is not None:
                cache = self._pmtu.setdefault(scan_id, {})
                cache[group] = min(cache.get(group, DEFAULT_PMTU), kind.reported_mtu)
        elif isinstance(kind, TcpSyn):
            if (Protocol.TCP80 if kind.port == 80 else Protocol.TCP443) in protos:
                replies.append(fp.syn_ack())
        elif isinstance(kind, DnsAaaa):
            if Protocol.UDP53 in protos:
                replies.append(DnsReply(0, (ResourceRecord("AAAA", GENUINE_AAAA),)))
            if self.is_injected(a, kind.qname):
                inj = self.scenario.injector
                for j in range(inj.replies_per_query):
                    pick = _prng.keyed_index(len(inj.answer_pool), self.scenario.seed, "gfw", a, kind.qname, j)
                    replies.append(DnsReply(0, (inj.answer_pool[pick],)))
        elif isinstance(kind, QuicInitial):
            if Protocol.UDP443 in protos:
                replies.append(QuicReply())
        out = []
        for j, r in enumerate(replies):
            if not self._lost(scan_id, req, j):
                out.append(ProbeResponse(a, r, len(out)))
        return out or [ProbeResponse(a, Timeout(), 0)]

    probe = answer

    def reset(self) -> None:
        self._pmtu.clear()
        self.request_log.clear()


def answer(net: SimNetwork, scan_id: int, req: ProbeRequest) -> list[ProbeResponse]:
    return net.answer(scan_id, req)


def iter_requests(log: list[tuple[int, ProbeRequest]], scan_id: int) -> Iterator[ProbeRequest]:
    return (req for sid, req in log if sid == scan_id)
