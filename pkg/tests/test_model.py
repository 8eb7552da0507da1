import json

import pytest
from hypothesis import given, settings, strategies as st

from sdnlb import scenarios
from sdnlb.model import (
    ArrivalLaw,
    ConfigError,
    Topology,
    derive_sets,
    load_scenario,
    parse_document,
    to_document,
    uniform_law_for_mean,
    validate_topology,
)


def topo(links, hops, sinks, delta=100, switches=None, dests=None):
    caps = {(i, j): c for i, j, c in links}
    hs = {k: frozenset(v) for k, v in hops.items()}
    dcap = {(i, d): b for i, d, b in sinks}
    S = frozenset(switches or {x for l in caps for x in l} | {i for i, _ in hs})
    D = frozenset(dests or {d for _, d in hs} | {d for _, d in dcap})
    return Topology(S, D, caps, dcap, hs, delta)


def fig4_fragment(extra_hops=None):
    links = [(9, 13, 10), (9, 14, 10), (10, 13, 10), (10, 14, 10), (13, 11, 10), (13, 12, 10),
             (14, 11, 10), (14, 12, 10), (11, 8, 10), (12, 8, 10), (9, 10, 10), (10, 9, 10)]
    hops = {(9, 8): {13, 14}, (10, 8): {13, 14}, (13, 8): {11, 12}, (14, 8): {11, 12},
            (11, 8): {8}, (12, 8): {8}}
    hops.update(extra_hops or {})
    return topo(links, hops, [(8, 8, 20)])


def line4():
    links = [(1, 2, 10), (2, 3, 10), (3, 4, 10)]
    hops = {(i, d): {i + 1} for i in (1, 2, 3) for d in (1, 2)}
    return topo(links, hops, [(4, 1, 10), (4, 2, 10)])


def test_prev_hops_fig4():
    ds = derive_sets(fig4_fragment())
    assert 9 in ds.prev_hops[(13, 8)] and 9 in ds.prev_hops[(14, 8)]
    assert ds.all_next[9] == {13, 14}


def test_empty_topology():
    ds = derive_sets(Topology(frozenset({1}), frozenset(), {}, {}, {}, 1))
    assert ds.prev_hops == {} and ds.link_commodities == {} and ds.all_next == {1: frozenset()}


def test_line_sets():
    ds = derive_sets(line4())
    assert ds.prev_hops[(4, 1)] == {3} and ds.prev_hops[(4, 2)] == {3}
    assert ds.link_commodities[(1, 2)] == {1, 2}


def test_validate_legal():
    assert validate_topology(fig4_fragment()) == []
    assert validate_topology(line4()) == []


def test_validate_cycle():
    bad = fig4_fragment({(9, 8): {10, 13}, (10, 8): {9}})
    rules = {v.rule for v in validate_topology(bad)}
    assert "cycle" in rules
    assert any(v.rule == "cycle" and v.element == 8 for v in validate_topology(bad))


def test_validate_bound_and_links():
    t = topo([(1, 2, 11)], {(1, 1): {2}}, [(2, 1, 5)], delta=10)
    assert [v.rule for v in validate_topology(t)] == ["bound"]
    t = topo([(1, 2, 3)], {(1, 1): {3}}, [(2, 1, 5)], switches={1, 2, 3})
    assert "no-link" in {v.rule for v in validate_topology(t)}
    t = topo([(1, 1, 3)], {}, [], switches={1})
    assert "self-loop" in {v.rule for v in validate_topology(t)}


def test_validate_unreachable():
    t = topo([(1, 2, 3), (2, 3, 3)], {(1, 1): {2}, (2, 1): {3}}, [], switches={1, 2, 3}, dests={1})
    assert {v.rule for v in validate_topology(t)} == {"unreachable"}


def test_without_links():
    t = fig4_fragment().without_links([(9, 14)])
    assert t.hops(9, 8) == {13} and t.capacity(9, 14) == 0
    t = fig4_fragment().without_links([(13, 11), (13, 12)])
    assert t.hops(13, 8) == frozenset() and t.hops(9, 8) == {14} and t.hops(10, 8) == {14}


@settings(max_examples=100)
@given(st.integers(2, 8), st.integers(1, 3), st.data())
def test_membership_equivalence(n, m, data):
    # random DAG routing: hops only towards larger ids
    links, hops = [], {}
    for i in range(1, n):
        for j in range(i + 1, n + 1):
            if data.draw(st.booleans()):
                links.append((i, j, 1))
    for d in range(1, m + 1):
        for (i, j, _) in links:
            if data.draw(st.booleans()):
                hops.setdefault((i, d), set()).add(j)
    t = topo(links, hops, [(n, d, 1) for d in range(1, m + 1)], switches=set(range(1, n + 1)),
             dests=set(range(1, m + 1)))
    ds = derive_sets(t)
    for (i, j, _) in links:
        for d in range(1, m + 1):
            a = d in ds.link_commodities.get((i, j), ())
            b = j in t.hops(i, d)
            c = i in ds.prev_hops.get((j, d), ())
            assert a == b == c
    assert not any(v.rule == "cycle" for v in validate_topology(t))
    assert derive_sets(t) == ds


MINIMAL = {
    "topology": {"switches": [1, 2], "destinations": [1], "links": [[1, 2, 4]],
                 "dest_capacity": [[2, 1, 4]], "next_hops": [[1, 1, [2]]]},
    "arrivals": [{"switch": 1, "commodity": 1, "kind": "constant", "value": 1}],
}


def test_defaults():
    cfg = load_scenario(json.dumps(MINIMAL))
    assert cfg.T == 100 and cfg.K == 10 and cfg.alpha == 5
    assert cfg.horizon % cfg.T == 0 and cfg.algorithm == "algorithm1"
    assert cfg.topology.bound == 4


def test_horizon_not_multiple():
    doc = dict(MINIMAL, run={"T": 100, "horizon": 150})
    with pytest.raises(ConfigError, match="horizon"):
        parse_document(doc)


def test_unknown_key_and_parse_location():
    with pytest.raises(ConfigError, match="unknown"):
        parse_document(dict(MINIMAL, extra=1))
    with pytest.raises(ConfigError, match="unknown"):
        parse_document(dict(MINIMAL, run={"TT": 3}))
    with pytest.raises(ConfigError, match="line 2 column"):
        load_scenario('{"topology":\n  [,]}')


def test_bad_mean_and_law():
    doc = dict(MINIMAL, arrivals=[{"switch": 1, "commodity": 1, "kind": "uniform", "lo": 0, "hi": 4, "mean": 3}])
    with pytest.raises(ConfigError, match="mean"):
        parse_document(doc)
    with pytest.raises(ConfigError):
        ArrivalLaw("poisson").check()
    assert uniform_law_for_mean(2) == ArrivalLaw("uniform", lo=0, hi=4)


def test_flow_algorithm_needs_flows():
    with pytest.raises(ConfigError, match="flows"):
        parse_document(dict(MINIMAL, run={"algorithm": "ecmp"}))


def test_shipped_fig7():
    cfg = scenarios.load_shipped("fig7_intra_dc")
    t = cfg.topology
    assert t.switches == frozenset(range(1, 15)) and t.destinations == frozenset(range(1, 10))
    for i in range(1, 9):
        for d in range(1, 9):
            assert cfg.arrivals[(i, d)].mean == 2
        assert cfg.arrivals[(i, 9)].mean == 1
    assert t.hops(1, 8) == {9, 10} and t.hops(9, 8) == {13, 14}
    assert t.hops(13, 8) == {11, 12} and t.hops(11, 8) == {8} and t.hops(1, 9) == {9, 10}
    assert t.dest_capacity[(8, 8)] == 20
    assert validate_topology(t) == []


@pytest.mark.parametrize("name", sorted(scenarios.SHIPPED))
def test_shipped_configs_valid_and_current(name):
    cfg = scenarios.load_shipped(name)
    assert validate_topology(cfg.topology) == []
    assert cfg == scenarios.build(name)


@pytest.mark.parametrize("name", sorted(scenarios.SHIPPED))
def test_round_trip(name):
    cfg = scenarios.load_shipped(name)
    again = parse_document(json.loads(json.dumps(to_document(cfg))))
    assert again == cfg
    assert again.digest() == cfg.digest()
    assert derive_sets(again.topology) == derive_sets(cfg.topology)
