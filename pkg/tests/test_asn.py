import io
import logging

import pytest

from hitlist6.addr import Prefix, parse_addr
from hitlist6.asn import UNMAPPED, RibFormatError, RibTable, as_cdf, load_rib, parse_rib_lines


def rib(*lines):
    return parse_rib_lines(lines)


def test_longest_match_and_unmapped():
    t = rib("2001:db8::/32 64496", "2001:db8:1::/48 64500", "::/0 1")
    assert t.lookup_origin(parse_addr("2001:db8:1::5")) == 64500
    assert t.lookup_origin(parse_addr("2001:db8:2::5")) == 64496
    assert t.lookup_origin(parse_addr("2a00::1")) == 1
    assert rib("2001:db8::/32 64496").lookup_origin(parse_addr("2a00::1")) is None


def test_host_route_and_prefix_lookup():
    t = rib("2001:db8::1/128 7", "2001:db8::/64 8")
    assert t.lookup_prefix(parse_addr("2001:db8::1")) == (Prefix.parse("2001:db8::1/128"), 7)
    assert t.lookup_origin(parse_addr("2001:db8::2")) == 8


def test_multi_origin_first_wins(caplog):
    with caplog.at_level(logging.WARNING):
        t = rib("2001:db8::/32 {64500,64501}", "2001:db9::/32 AS7_8")
    assert t.lookup_origin(parse_addr("2001:db8::1")) == 64500
    assert t.lookup_origin(parse_addr("2001:db9::1")) == 7
    assert "multi-origin" in caplog.text


def test_duplicate_prefix_keeps_first(caplog):
    with caplog.at_level(logging.WARNING):
        t = rib("2001:db8::/32 1", "2001:db8::/32 2")
    assert len(t) == 1 and t.lookup_origin(parse_addr("2001:db8::")) == 1
    assert "duplicate" in caplog.text


@pytest.mark.parametrize(
    "line", ["2001:db8::/32", "2001:db8::/32 1 2", "2001:db8::1/32 5", "2001:db8::/32 AS", "2001:db8::/32 4294967296"]
)
def test_malformed_lines(line):
    with pytest.raises(RibFormatError, match=":2:"):
        rib("# header", line)


def test_as_cdf_ordering_and_shares(tmp_path):
    path = tmp_path / "rib.txt"
    path.write_text("2001:db8::/32 20\n2001:db9::/32 10\n2001:dba::/32 30\n")
    t = load_rib(path)
    addrs = [parse_addr(x) for x in ["2001:db8::1", "2001:db8::2", "2001:db9::1", "2001:db9::2", "2001:dba::1", "::1"]]
    dist = as_cdf(t, addrs)
    assert [(r.asn, r.count) for r in dist.rows] == [(10, 2), (20, 2), (30, 1), (UNMAPPED, 1)]
    assert dist.total == 6
    assert dist.rows[-1].cumulative_share == 1.0
    out = io.StringIO()
    dist.to_csv(out)
    assert out.getvalue().splitlines()[1] == "10,2,0.333333333,0.333333333"


def test_empty_table():
    assert RibTable().lookup_origin(0) is None
    assert as_cdf(RibTable(), []).rows == []
