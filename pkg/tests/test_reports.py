import io
from fractions import Fraction

from hitlist6 import reports
from hitlist6.addr import MacAddr, Prefix, Protocol, eui64_iid, parse_addr
from hitlist6.asn import UNMAPPED, parse_rib_lines
from hitlist6.records import ScanRecord

RIB = parse_rib_lines(["2001:db8::/32 10", "2001:db8:1::/48 20", "2001:dba::/48 30"])


def csv_lines(write, *args):
    buf = io.StringIO()
    write(buf, *args)
    return buf.getvalue().splitlines()


def test_responsiveness_rows_and_empty():
    rec = ScanRecord(1, probed={parse_addr(x) for x in ("2001:db8::1", "2001:db8:1::1", "2a00::1")})
    rec.responsive[Protocol.ICMP] = set(rec.probed)
    rec.responsive[Protocol.TCP80] = {parse_addr("2001:db8::1")}
    rows = {r.protocol: r for r in reports.responsiveness_table(rec, RIB)}
    assert (rows["icmp"].addr_count, rows["icmp"].as_count, rows["icmp"].unmapped) == (3, 2, 1)
    assert rows["total"].addr_count == 3
    assert rows["udp53"].addr_count == 0
    empty = reports.responsiveness_table(None, RIB)
    assert all(r.addr_count == 0 for r in empty) and len(empty) == 6


def test_overlap_matrix_is_row_relative():
    a = {1, 2, 3, 4}
    b = {3, 4}
    m = reports.overlap_matrix([("a", a), ("b", b), ("empty", set())])
    assert m[0] == [100.0, 50.0, 0.0]
    assert m[1] == [100.0, 100.0, 0.0]
    assert m[2] == [None, None, None]
    lines = csv_lines(reports.write_overlap, [("a", a), ("b", b), ("empty", set())], m)
    assert lines[3] == "empty,undefined,undefined,undefined"


def test_aliased_fraction_exact():
    aliased = [Prefix.parse("2001:db8:1:5::/64"), Prefix.parse("2001:db8:1:5::/68"), Prefix.parse("2001:db9::/64")]
    rows = {r.asn: r for r in reports.aliased_fraction_report(aliased, RIB)}
    assert rows[20].fraction == Fraction(1, 1 << 16)
    assert rows[20].aliased_log2 == 64.0
    assert rows[UNMAPPED].inconsistent and rows[UNMAPPED].fraction is None
    assert 30 not in rows


def test_domains_counted_once_per_prefix():
    res = [("a.example", parse_addr("2001:db8:1::1")), ("a.example", parse_addr("2001:db8:1::2")),
           ("b.example", parse_addr("2001:db8:1::3")), ("c.example", parse_addr("2001:db8:2::1"))]
    aliased = [Prefix.parse("2001:db8:1::/64"), Prefix.parse("2001:db8:2::/64")]
    per_prefix, per_as = reports.domains_in_aliased(res, aliased, RIB)
    assert per_prefix == {Prefix.parse("2001:db8:1::/64"): 2, Prefix.parse("2001:db8:2::/64"): 1}
    assert per_as == {20: 2, 10: 1}


def test_resolution_and_oui_readers(tmp_path):
    (tmp_path / "r.tsv").write_text("Example.COM. 2001:db8::1\n")
    assert reports.read_resolutions(tmp_path / "r.tsv") == [("example.com", parse_addr("2001:db8::1"))]
    (tmp_path / "o.tsv").write_text("00-1A-2B\tAcme\n")
    assert reports.read_oui_table(tmp_path / "o.tsv") == {"001a2b": "Acme"}


def test_eui64_grouping():
    mac = MacAddr.parse("00:1a:2b:00:00:01")
    addrs = [parse_addr(f"2001:db8:{i}::") | eui64_iid(mac) for i in range(3)] + [parse_addr("2001:db8::1")]
    groups = reports.eui64_report(addrs, {"001a2b": "Acme"})
    assert [(g.mac, g.address_count, g.vendor) for g in groups] == [(mac, 3, "Acme")]
