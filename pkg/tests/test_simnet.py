from pathlib import Path

import pytest

from hitlist6.addr import MacAddr, Prefix, Protocol, eui64_extract, parse_addr
from hitlist6.probe import DnsAaaa, DnsReply, EchoReply, IcmpEcho, IcmpPtb, ProbeRequest, SynAck, TcpSyn
from hitlist6.simnet import GENUINE_AAAA, ScenarioError, SimNetwork, dump_scenario, load_scenario, parse_scenario

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def scn(*lines):
    return parse_scenario(lines)


def kinds(net, sid, target, kind):
    return [r.kind for r in net.answer(sid, ProbeRequest(target, kind))]


def test_fixture_round_trips_through_dump():
    s = load_scenario(FIXTURES / "basic.scn")
    again = parse_scenario(dump_scenario(s).splitlines())
    assert dump_scenario(again) == dump_scenario(s)
    assert again.candidate_input() == s.candidate_input()


@pytest.mark.parametrize(
    "lines, message",
    [
        (["aliased 2001:db8::/48", "aliased 2001:db8:0:1::/64"], "overlapping"),
        (["host 2001:db8::1", "aliased 2001:db8::/64"], "overlapping"),
        (["loss 1.0"], "loss_rate"),
        (["bogus 1"], "unknown stanza"),
        (["host 2001:db8::1 protos=tcp22"], "tcp22"),
        (["aliased 2001:db8::/64 mode=single", "group 2001:db8::/64 addrs=2001:db8::1"], "mode=multi"),
        (["aliased 2001:db8::/64 mode=multi", "group 2001:db8::/64 addrs=2001:db9::1"], "outside"),
        (["group 2001:db8::/64 addrs=2001:db8::1"], "unknown aliased"),
        (["aliased 2001:db8::/64 mode=multi groups=nibble:40"], "groups rule"),
        (["gfw covered=2001:db8::/32 pool="], "pool"),
        (["host 2001:db8::1 colour=red"], "colour"),
    ],
)
def test_invalid_scenarios(lines, message):
    with pytest.raises(ScenarioError, match=message):
        scn(*lines)


def test_host_protocols_and_fingerprint():
    net = SimNetwork(scn("host 2001:db8::1 protos=icmp,tcp80 ttl=120 window=8192 wscale=- opts=MNST"))
    a = parse_addr("2001:db8::1")
    assert kinds(net, 0, a, IcmpEcho()) == [EchoReply(False)]
    (syn,) = kinds(net, 0, a, TcpSyn(80))
    assert syn == SynAck(120, 8192, None, 1440, "MNST")
    assert net.answer(0, ProbeRequest(a, TcpSyn(443)))[0].is_timeout
    assert net.answer(0, ProbeRequest(a + 1, IcmpEcho()))[0].is_timeout


def test_aliased_prefix_answers_everywhere():
    net = SimNetwork(scn("aliased 2001:db8:a::/48 protos=icmp"))
    for a in (parse_addr("2001:db8:a::"), parse_addr("2001:db8:a:ffff:ffff:ffff:ffff:ffff")):
        assert kinds(net, 0, a, IcmpEcho()) == [EchoReply(False)]
    assert net.responsive_protocols(0, parse_addr("2001:db8:b::")) == frozenset()


def test_ptb_shrinks_shared_cache_per_scan():
    net = SimNetwork(scn("aliased 2001:db8:a::/64 mode=multi protos=icmp groups=nibble:31"))
    a, same, other = (parse_addr(x) for x in ("2001:db8:a::11", "2001:db8:a::21", "2001:db8:a::12"))
    assert net.answer(1, ProbeRequest(a, IcmpPtb(1280)))[0].is_timeout
    assert kinds(net, 1, same, IcmpEcho(1300)) == [EchoReply(True)]
    assert kinds(net, 1, other, IcmpEcho(1300)) == [EchoReply(False)]
    assert kinds(net, 1, same, IcmpEcho(1200)) == [EchoReply(False)]
    # a new scan id starts with fresh caches
    assert kinds(net, 2, same, IcmpEcho(1300)) == [EchoReply(False)]


def test_injector_replies_even_for_dead_addresses():
    net = SimNetwork(
        scn(
            "gfw covered=2001:db8:c::/48 qnames=www.google.com replies=3 pool=A:1.2.3.4,A:5.6.7.8",
            "host 2001:db8:d::53 protos=udp53",
        )
    )
    dead = parse_addr("2001:db8:c::99")
    replies = kinds(net, 0, dead, DnsAaaa())
    assert len(replies) == 3 and all(isinstance(r, DnsReply) and r.answers[0].rtype == "A" for r in replies)
    assert net.answer(0, ProbeRequest(dead, DnsAaaa("example.org")))[0].is_timeout
    (genuine,) = kinds(net, 0, parse_addr("2001:db8:d::53"), DnsAaaa())
    assert genuine.answers[0].value == GENUINE_AAAA


def test_cpe_rotation_follows_period():
    text = (
        "seed 3",
        "cpe macs=00:1a:2b:00:00:01,00:1a:2b:00:00:02 pool=2001:db8:e:1::/64,2001:db8:e:2::/64,2001:db8:e:3::/64 period=2",
    )
    s = scn(*text)
    fleet = s.cpe_fleets[0]
    assert fleet.assignment(3, 0) == fleet.assignment(3, 1)
    for sid in range(8):
        table = fleet.assignment(3, sid)
        assert sorted(table.values()) == sorted(fleet.macs)
        assert all(eui64_extract(a) == mac for a, mac in table.items())
    net = SimNetwork(s)
    for a in fleet.assignment(3, 5):
        assert net.responsive_protocols(5, a) == frozenset({Protocol.ICMP})
    assert MacAddr.parse("00:1a:2b:00:00:01") in fleet.macs


def test_loss_is_deterministic_and_roughly_calibrated():
    s = scn("seed 9", "loss 0.3", "aliased 2001:db8:a::/64 protos=icmp")
    base = parse_addr("2001:db8:a::")
    reqs = [ProbeRequest(base + i, IcmpEcho()) for i in range(2000)]
    first = [SimNetwork(s).answer(1, r)[0].is_timeout for r in reqs]
    second = [SimNetwork(s).answer(1, r)[0].is_timeout for r in reqs]
    assert first == second
    assert 0.25 < sum(first) / len(first) < 0.35


def test_candidate_input_contains_samples():
    s = scn("seed 1", "host 2001:db8::1", "aliased 2001:db8:a::/64 inputs=5", "input 2001:db8:f::/64 count=7")
    got = s.candidate_input()
    assert parse_addr("2001:db8::1") in got
    assert sum(a in Prefix.parse("2001:db8:a::/64") for a in got) == 5
    assert sum(a in Prefix.parse("2001:db8:f::/64") for a in got) == 7
    assert s.ground_truth_aliased() == {Prefix.parse("2001:db8:a::/64")}
