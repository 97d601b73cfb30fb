import pytest
from hypothesis import given
from hypothesis import strategies as st

from hitlist6 import apd
from hitlist6.addr import Prefix, Protocol, parse_addr
from hitlist6.asn import parse_rib_lines
from hitlist6.simnet import SimNetwork, parse_scenario

P64 = Prefix.parse("2001:db8:1:2::/64")


def grid(sid, icmp=0, tcp=0):
    return apd.ScanGrid(sid, {Protocol.ICMP: icmp, Protocol.TCP80: tcp})


def test_targets_one_per_subprefix_and_keyed():
    targets = apd.generate_probe_targets(P64, 3, 1)
    assert [P64.subprefix(i).contains(t) for i, t in enumerate(targets)] == [True] * 16
    assert targets == apd.generate_probe_targets(P64, 3, 1)
    assert targets != apd.generate_probe_targets(P64, 4, 1)
    assert targets != apd.generate_probe_targets(P64, 3, 2)
    with pytest.raises(ValueError):
        apd.generate_probe_targets(Prefix.parse("2001:db8::/125"), 0, 0)


def test_window_merges_icmp_and_tcp_cells():
    half = 0x00FF
    assert apd.evaluate(P64, [grid(1, icmp=half), grid(2, tcp=0xFF00)]).aliased
    assert not apd.evaluate(P64, [grid(1, icmp=half), grid(2, icmp=half)]).aliased
    # cells older than the window no longer count
    history = [grid(1, icmp=0xFF00)] + [grid(s, icmp=half) for s in (2, 3, 4, 5)]
    assert not apd.evaluate(P64, history).aliased
    assert apd.evaluate(P64, history[1:4] + [grid(5, tcp=0xFF00)]).aliased


@given(st.lists(st.tuples(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF)), min_size=1, max_size=8))
def test_evaluate_matches_bitwise_definition(masks):
    hist = [grid(i, a, b) for i, (a, b) in enumerate(masks)]
    merged = 0
    for a, b in masks[-apd.WINDOW :]:
        merged |= a | b
    assert apd.evaluate(P64, hist).aliased == (merged == 0xFFFF)


def test_candidates_include_bgp_slash64_and_dense():
    rib = parse_rib_lines(["2001:db8::/32 1", "2001:db8::1/128 2"])
    addrs = [parse_addr("2001:db8:1:2::") + i for i in range(100)]
    got = apd.enumerate_candidates(addrs, rib)
    origins = {(c.prefix, c.origin) for c in got}
    assert (Prefix.parse("2001:db8::/32"), "bgp") in origins
    assert (P64, "slash64") in origins
    assert (Prefix.parse("2001:db8:1:2::/120"), "dense_longer") in origins
    assert (Prefix.parse("2001:db8:1:2::/124"), "dense_longer") not in origins
    assert all(c.prefix.length <= 124 for c in got)


def test_collapse_keeps_only_outermost():
    ps = [Prefix.parse(x) for x in ("2001:db8::/32", "2001:db8:1::/48", "2001:db9::/64", "2001:db9::/68")]
    assert apd.collapse(ps) == {Prefix.parse("2001:db8::/32"), Prefix.parse("2001:db9::/64")}


@given(st.lists(st.tuples(st.integers(0, 255), st.sampled_from([56, 60, 64, 68])), max_size=20))
def test_collapse_properties(items):
    ps = {Prefix.containing(parse_addr("2001:db8::") | (b << 64), n) for b, n in items}
    out = apd.collapse(ps)
    assert out <= ps
    assert all(not (p != q and p in q) for p in out for q in out)
    assert all(any(p in q for q in out) for p in ps)


def test_filter_and_representatives():
    inside, outside = parse_addr("2001:db8:1:2::5"), parse_addr("2001:db8::5")
    kept, removed = apd.filter_addresses({inside, outside, inside + 1}, [P64])
    assert kept == {outside} and removed == {inside, inside + 1}
    other = Prefix.parse("2001:db8:9::/64")
    reps = apd.representatives([P64, other], [inside + 1, inside, outside], seed=3)
    assert reps[P64] == inside
    assert reps[other] in other
    assert reps == apd.representatives([other, P64], [inside, inside + 1], seed=3)


def test_detector_over_simnet_and_json_round_trip():
    scn = parse_scenario(["seed 4", "aliased 2001:db8:1:2::/64 protos=icmp", "host 2001:db8:5::1 protos=icmp,tcp80"])
    net = SimNetwork(scn)
    det = apd.ApdDetector(4)
    cands = [P64, Prefix.parse("2001:db8:5::/64")]
    results = {r.prefix: r for r in det.scan(cands, net, 1)}
    assert results[P64].aliased and not results[Prefix.parse("2001:db8:5::/64")].aliased
    again = apd.ApdDetector.from_json(det.to_json())
    assert again.to_json() == det.to_json()
    assert [r.aliased for r in again.scan(cands, net, 2)] == [r.aliased for r in det.scan(cands, net, 2)]


def test_tcp_only_prefix_is_aliased():
    net = SimNetwork(parse_scenario(["aliased 2001:db8:1:2::/64 protos=tcp80"]))
    (res,) = apd.ApdDetector(0).scan([P64], net, 1)
    assert res.aliased and len(res.tcp_replies) == 16
