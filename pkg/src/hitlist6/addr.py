"""IPv6 address and prefix arithmetic.

Addresses are plain ``int`` values in ``[0, 2**128)``; bit 0 is the most
significant bit, so integer ordering is address ordering.
"""

from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass
from typing import Generic, Iterable, Iterator, TypeVar

ADDR_BITS = 128
ADDR_MAX = (1 << ADDR_BITS) - 1

TEREDO_PREFIX_BASE = 0x20010000 << 96


class AddrParseError(ValueError):
    pass


class Protocol(str, enum.Enum):
    ICMP = "icmp"
    TCP80 = "tcp80"
    TCP443 = "tcp443"
    UDP53 = "udp53"
    UDP443 = "udp443"

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, text: str) -> Protocol:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown protocol {text!r}") from None


# Fixed probing order within one scan.
SCAN_PROTOCOLS = (Protocol.ICMP, Protocol.TCP80, Protocol.TCP443, Protocol.UDP53, Protocol.UDP443)


def parse_addr(text: str) -> int:
    """Parse any RFC 4291 textual form into an integer address."""
    token = text.strip()
    if "%" in token:
        raise AddrParseError(f"invalid IPv6 address {token!r}: scope identifiers are not supported")
    try:
        return int(ipaddress.IPv6Address(token))
    except ipaddress.AddressValueError as exc:
        raise AddrParseError(f"invalid IPv6 address {token!r}: {exc}") from None


def format_addr(a: int) -> str:
    """RFC 5952 canonical text."""
    return ipaddress.IPv6Address(a).compressed


def addr_distance(a: int, b: int) -> int:
    return a - b if a >= b else b - a


def _mask(length: int) -> int:
    return (ADDR_MAX << (ADDR_BITS - length)) & ADDR_MAX


@dataclass(frozen=True, order=True)
class Prefix:
    """CIDR prefix in canonical form (host bits must be zero)."""

    base: int
    length: int

    def __post_init__(self) -> None:
        if not 0 <= self.length <= ADDR_BITS:
            raise ValueError(f"prefix length {self.length} outside [0, 128]")
        if not 0 <= self.base <= ADDR_MAX:
            raise ValueError(f"prefix base {self.base:#x} outside the address space")
        if self.base & ~_mask(self.length):
            raise ValueError(f"{format_addr(self.base)}/{self.length} has host bits set")

    @classmethod
    def parse(cls, text: str) -> Prefix:
        token = text.strip()
        addr_text, sep, len_text = token.partition("/")
        if not sep:
            raise AddrParseError(f"invalid prefix {token!r}: missing '/length'")
        if not len_text.isdigit():
            raise AddrParseError(f"invalid prefix {token!r}: bad length {len_text!r}")
        length = int(len_text)
        if length > ADDR_BITS:
            raise AddrParseError(f"invalid prefix {token!r}: length {length} exceeds 128")
        base = parse_addr(addr_text)
        try:
            return cls(base, length)
        except ValueError as exc:
            raise AddrParseError(f"invalid prefix {token!r}: {exc}") from None

    @classmethod
    def containing(cls, a: int, length: int) -> Prefix:
        """The length-``length`` prefix that holds address ``a``."""
        return cls(a & _mask(length), length)

    @property
    def mask(self) -> int:
        return _mask(self.length)

    @property
    def host_bits(self) -> int:
        return ADDR_BITS - self.length

    @property
    def num_addresses(self) -> int:
        return 1 << self.host_bits

    @property
    def last(self) -> int:
        return self.base | (self.num_addresses - 1)

    def __contains__(self, a: object) -> bool:
        if isinstance(a, Prefix):
            return a.length >= self.length and (a.base & self.mask) == self.base
        return isinstance(a, int) and (a & self.mask) == self.base

    def contains(self, a: int) -> bool:
        return (a & self.mask) == self.base

    def subprefix(self, index: int, bits: int = 4) -> Prefix:
        if self.length + bits > ADDR_BITS:
            raise ValueError(f"{self} cannot be split by {bits} more bits")
        if not 0 <= index < (1 << bits):
            raise ValueError(f"subprefix index {index} out of range")
        length = self.length + bits
        return Prefix(self.base | (index << (ADDR_BITS - length)), length)

    def supernet(self, length: int) -> Prefix:
        if length > self.length:
            raise ValueError(f"/{length} is longer than {self}")
        return Prefix.containing(self.base, length)

    def __str__(self) -> str:
        return f"{format_addr(self.base)}/{self.length}"

    def __repr__(self) -> str:
        return f"Prefix({self})"


@dataclass(frozen=True, order=True)
class MacAddr:
    value: int  # 48-bit

    def __post_init__(self) -> None:
        if not 0 <= self.value < 1 << 48:
            raise ValueError("MAC address must fit in 48 bits")

    @classmethod
    def parse(cls, text: str) -> MacAddr:
        digits = text.strip().replace(":", "").replace("-", "").replace(".", "")
        if len(digits) != 12:
            raise ValueError(f"invalid MAC address {text!r}")
        try:
            return cls(int(digits, 16))
        except ValueError:
            raise ValueError(f"invalid MAC address {text!r}") from None

    @property
    def octets(self) -> bytes:
        return self.value.to_bytes(6, "big")

    @property
    def oui(self) -> str:
        return f"{self.value >> 24:06x}"

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)


def eui64_iid(mac: MacAddr) -> int:
    """64-bit interface identifier for ``mac`` (ff:fe inserted, U/L bit flipped)."""
    o = bytearray(mac.octets)
    o[0] ^= 0x02
    return int.from_bytes(bytes(o[:3]) + b"\xff\xfe" + bytes(o[3:]), "big")


def eui64_extract(a: int) -> MacAddr | None:
    iid = (a & ((1 << 64) - 1)).to_bytes(8, "big")
    if iid[3] != 0xFF or iid[4] != 0xFE:
        return None
    o = bytearray(iid[:3] + iid[5:])
    o[0] ^= 0x02
    return MacAddr(int.from_bytes(bytes(o), "big"))


def is_teredo(a: int) -> bool:
    return (a >> 96) == 0x20010000


def teredo_decode(a: int) -> tuple[int, int, int] | None:
    """Return ``(client_v4, client_port, server_v4)`` for 2001:0::/32 addresses."""
    if not is_teredo(a):
        return None
    server = (a >> 64) & 0xFFFFFFFF
    port = ((a >> 32) & 0xFFFF) ^ 0xFFFF
    client = (a & 0xFFFFFFFF) ^ 0xFFFFFFFF
    return client, port, server


def format_v4(v: int) -> str:
    return str(ipaddress.IPv4Address(v))


def parse_v4(text: str) -> int:
    return int(ipaddress.IPv4Address(text.strip()))


V = TypeVar("V")


class PrefixMap(Generic[V]):
    """Prefix-keyed map with longest-prefix-match lookup.

    One hash table per prefix length present; a lookup probes the lengths
    longest first, so cost is bounded by the number of distinct lengths.
    """

    def __init__(self, items: Iterable[tuple[Prefix, V]] = ()) -> None:
        self._by_len: dict[int, dict[int, V]] = {}
        self._lengths: list[int] = []
        self._size = 0
        for p, v in items:
            self.setdefault(p, v)

    def setdefault(self, p: Prefix, value: V) -> V:
        """Insert unless ``p`` is present; return the stored value."""
        table = self._by_len.get(p.length)
        if table is None:
            table = self._by_len[p.length] = {}
            self._lengths = sorted(self._by_len, reverse=True)
        if p.base in table:
            return table[p.base]
        table[p.base] = value
        self._size += 1
        return value

    def __len__(self) -> int:
        return self._size

    def __contains__(self, p: object) -> bool:
        return isinstance(p, Prefix) and p.base in self._by_len.get(p.length, ())

    def __getitem__(self, p: Prefix) -> V:
        return self._by_len[p.length][p.base]

    def __iter__(self) -> Iterator[Prefix]:
        for length in sorted(self._by_len):
            for base in sorted(self._by_len[length]):
                yield Prefix(base, length)

    def items(self) -> Iterator[tuple[Prefix, V]]:
        for p in self:
            yield p, self[p]

    def longest_match(self, a: int) -> tuple[Prefix, V] | None:
        for length in self._lengths:
            base = a & _mask(length)
            table = self._by_len[length]
            if base in table:
                return Prefix(base, length), table[base]
        return None

    def all_matches(self, a: int) -> list[tuple[Prefix, V]]:
        """Every containing prefix, longest first."""
        out = []
        for length in self._lengths:
            base = a & _mask(length)
            table = self._by_len[length]
            if base in table:
                out.append((Prefix(base, length), table[base]))
        return out

    def covers(self, a: int) -> bool:
        return self.longest_match(a) is not None


class PrefixSet:
    """Set of prefixes answering "is this address covered?"."""

    def __init__(self, prefixes: Iterable[Prefix] = ()) -> None:
        self._map: PrefixMap[None] = PrefixMap((p, None) for p in prefixes)

    def add(self, p: Prefix) -> None:
        self._map.setdefault(p, None)

    def __len__(self) -> int:
        return len(self._map)

    def __iter__(self) -> Iterator[Prefix]:
        return iter(self._map)

    def __contains__(self, a: object) -> bool:
        if isinstance(a, Prefix):
            return a in self._map
        return isinstance(a, int) and self._map.covers(a)

    def match(self, a: int) -> Prefix | None:
        hit = self._map.longest_match(a)
        return hit[0] if hit else None

    def matches(self, a: int) -> list[Prefix]:
        return [p for p, _ in self._map.all_matches(a)]


def _content_lines(lines: Iterable[str]) -> Iterator[tuple[int, str]]:
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_addr_lines(lines: Iterable[str], source: str = "<input>") -> set[int]:
    out = set()
    for lineno, line in _content_lines(lines):
        try:
            out.add(parse_addr(line))
        except AddrParseError as exc:
            raise AddrParseError(f"{source}:{lineno}: {exc}") from None
    return out


def read_addr_file(path) -> set[int]:
    with open(path, encoding="utf-8") as fh:
        return read_addr_lines(fh, str(path))


def write_addr_file(path, addrs: Iterable[int]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a in sorted(addrs):
            fh.write(format_addr(a) + "\n")


def read_prefix_file(path) -> list[Prefix]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in _content_lines(fh):
            try:
                out.append(Prefix.parse(line))
            except AddrParseError as exc:
                raise AddrParseError(f"{path}:{lineno}: {exc}") from None
    return out


def write_prefix_file(path, prefixes: Iterable[Prefix]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in sorted(prefixes):
            fh.write(f"{p}\n")
