import ipaddress

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hitlist6.addr import (
    ADDR_MAX,
    AddrParseError,
    MacAddr,
    Prefix,
    PrefixMap,
    PrefixSet,
    Protocol,
    eui64_extract,
    eui64_iid,
    format_addr,
    is_teredo,
    parse_addr,
    read_addr_lines,
    read_prefix_file,
    teredo_decode,
    write_addr_file,
    write_prefix_file,
)

addrs = st.integers(0, ADDR_MAX)
lengths = st.integers(0, 128)


@st.composite
def prefixes(draw):
    length = draw(lengths)
    return Prefix.containing(draw(addrs), length)


@given(addrs)
def test_format_is_rfc5952_compressed(a):
    assert format_addr(a) == ipaddress.IPv6Address(a).compressed
    assert parse_addr(format_addr(a)) == a


@pytest.mark.parametrize("text", ["", "1.2.3.4", "fe80::1%eth0", "2001:db8::/64", "gggg::", "1:2:3:4:5:6:7:8:9"])
def test_parse_rejects(text):
    with pytest.raises(AddrParseError):
        parse_addr(text)


def test_parse_accepts_uppercase_and_whitespace():
    assert parse_addr(" 2001:DB8::1 ") == parse_addr("2001:db8::1")


def test_prefix_rejects_host_bits():
    with pytest.raises(ValueError):
        Prefix.parse("2001:db8::1/64")
    with pytest.raises(ValueError):
        Prefix(0, 129)


@given(prefixes(), addrs)
def test_prefix_membership_matches_ipaddress(p, a):
    net = ipaddress.IPv6Network((p.base, p.length))
    assert (a in p) == (ipaddress.IPv6Address(a) in net)
    assert p.num_addresses == net.num_addresses
    assert p.last == int(net.broadcast_address)
    assert Prefix.parse(str(p)) == p


@given(prefixes())
def test_subprefixes_partition(p):
    if p.length > 124:
        return
    subs = [p.subprefix(i) for i in range(16)]
    assert subs[0].base == p.base and subs[-1].last == p.last
    assert all(s.length == p.length + 4 and s in p for s in subs)
    assert all(a.last + 1 == b.base for a, b in zip(subs, subs[1:]))


def test_prefix_containment_of_prefixes():
    p48 = Prefix.parse("2001:db8:1::/48")
    assert Prefix.parse("2001:db8:1:2::/64") in p48
    assert p48 not in Prefix.parse("2001:db8:1:2::/64")
    assert p48.supernet(32) == Prefix.parse("2001:db8::/32")


@given(st.integers(0, (1 << 48) - 1), st.integers(0, (1 << 64) - 1))
def test_eui64_round_trip(raw, net):
    mac = MacAddr(raw)
    a = (net << 64) | eui64_iid(mac)
    assert eui64_extract(a) == mac
    assert MacAddr.parse(str(mac)) == mac


def test_eui64_known_vector():
    mac = MacAddr.parse("00:1a:2b:3c:4d:5e")
    assert format_addr(parse_addr("fe80::") | eui64_iid(mac)) == "fe80::21a:2bff:fe3c:4d5e"
    assert mac.oui == "001a2b"
    assert eui64_extract(parse_addr("2001:db8::1")) is None


def test_teredo_known_vector():
    # RFC 4380 example: server 65.54.227.120, client 192.0.2.45 port 40000
    a = parse_addr("2001:0:4136:e378:8000:63bf:3fff:fdd2")
    assert is_teredo(a)
    client, port, server = teredo_decode(a)
    assert (client, port, server) == (0xC000022D, 40000, 0x4136E378)
    assert teredo_decode(parse_addr("2001:db8::1")) is None


def test_protocol_parse():
    assert Protocol.parse("TCP80") is Protocol.TCP80
    with pytest.raises(ValueError):
        Protocol.parse("tcp22")


def _linear(entries, a):
    hits = [(p, v) for p, v in entries if a in p]
    return max(hits, key=lambda pv: pv[0].length) if hits else None


@given(st.lists(st.tuples(prefixes(), st.integers()), max_size=30), st.lists(addrs, max_size=20))
def test_prefix_map_longest_match(entries, queries):
    m = PrefixMap(entries)
    first = {}
    for p, v in entries:
        first.setdefault(p, v)
    listed = list(first.items())
    for p, _ in listed:
        queries.append(p.base)
    for a in queries:
        assert m.longest_match(a) == _linear(listed, a)
        assert [p for p, _ in m.all_matches(a)] == sorted((p for p, _ in listed if a in p), key=lambda p: -p.length)


def test_prefix_set_and_default_route():
    s = PrefixSet([Prefix.parse("::/0"), Prefix.parse("2001:db8::/32")])
    assert s.match(parse_addr("2001:db8::1")) == Prefix.parse("2001:db8::/32")
    assert s.match(1) == Prefix.parse("::/0")
    # a Prefix operand tests exact membership, an int tests coverage
    assert Prefix.parse("2001:db8::/32") in s
    assert Prefix.parse("2001:db8:1::/48") not in s
    assert parse_addr("2001:db8:1::") in s


def test_addr_files_round_trip(tmp_path):
    got = read_addr_lines(["# header", "2001:db8::2  # note", "", "2001:DB8::1"])
    assert got == {parse_addr("2001:db8::1"), parse_addr("2001:db8::2")}
    with pytest.raises(AddrParseError, match=":2"):
        read_addr_lines(["::1", "nope"], "f")
    path = tmp_path / "a.txt"
    write_addr_file(path, got)
    assert path.read_text() == "2001:db8::1\n2001:db8::2\n"
    ppath = tmp_path / "p.txt"
    ps = [Prefix.parse("2001:db8::/32"), Prefix.parse("::/0")]
    write_prefix_file(ppath, ps)
    assert sorted(read_prefix_file(ppath)) == sorted(ps)
