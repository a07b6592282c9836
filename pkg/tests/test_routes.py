"""Attack-route enumeration, admission models, and coverage accounting."""

import itertools

import pytest

from difcnet.netcl import compile_program, parse
from difcnet.routes import (
    DEFAULT_COVERAGE_ROWS,
    allowlist_firewall,
    build_coverage_policy,
    build_reachability_policy,
    chain_exists,
    coverage_report,
    hosts_reaching,
    iter_routes,
    make_firewall_admit,
    make_policy_admit,
    reachability_table,
    route_blocked,
    route_count,
)
from difcnet.topology import FirewallRule, topology_from_dict


def make_flat(n_hosts=5, target="T"):
    """n pivot hosts plus one target, all on a single access switch."""
    hosts = [
        {"name": f"H{i}", "ip": f"10.9.0.{10 + i}", "switch": "S2"}
        for i in range(1, n_hosts + 1)
    ]
    hosts.append({"name": target, "ip": "10.9.0.200", "switch": "S2"})
    return topology_from_dict(
        {
            "name": "flat",
            "switches": ["S1", "S2"],
            "links": [["S1", "S2"]],
            "hosts": hosts,
        }
    )


# -- counting --------------------------------------------------------------


@pytest.mark.parametrize("n", range(0, 7))
@pytest.mark.parametrize("k", range(0, 7))
def test_route_count_matches_enumeration(n, k):
    brute = sum(1 for _ in itertools.permutations(range(n), k))
    assert route_count(n, k) == brute


def test_iter_routes_is_ordered_and_distinct():
    routes = list(iter_routes(["a", "b", "c"], 2))
    assert len(routes) == 6
    assert ("a", "b") in routes and ("b", "a") in routes
    assert all(len(set(r)) == 2 for r in routes)


# -- admission functions ---------------------------------------------------


def test_allowlist_firewall_shape():
    topo = make_flat()
    rules = allowlist_firewall(topo, "T", 2)
    assert rules[0].action == "allow"
    assert rules[0].src == frozenset({"10.9.0.11", "10.9.0.12"})
    assert rules[0].dst == frozenset({"10.9.0.200"})
    assert rules[1].action == "deny"
    assert rules[1].src is None
    assert rules[1].dst == frozenset({"10.9.0.200"})


def test_firewall_admit_guards_only_target():
    topo = make_flat()
    admit = make_firewall_admit(allowlist_firewall(topo, "T", 1))
    ok, bits = admit("10.9.0.11", "10.9.0.200", 0)
    assert ok
    ok, _ = admit("10.9.0.12", "10.9.0.200", 0)
    assert not ok
    # traffic between pivots is out of the filter's scope
    ok, _ = admit("10.9.0.12", "10.9.0.13", 0)
    assert ok
    # label passes through untouched
    _, bits = admit("10.9.0.11", "10.9.0.200", 0b1011)
    assert bits == 0b1011


# -- chain search ----------------------------------------------------------


def _pair_admit(blocked_pairs):
    def admit(src_ip, dst_ip, bits):
        return (src_ip, dst_ip) not in blocked_pairs, bits
    return admit


def test_chain_direct_and_pivot():
    topo = make_flat(3)
    ip = {h.name: h.ip for h in topo.hosts}
    # H1 cannot hit T directly but H2 can
    admit = _pair_admit({(ip["H1"], ip["T"])})
    label = lambda h: 0
    assert chain_exists(topo, "H2", "T", 1, admit, label)
    assert not chain_exists(topo, "H1", "T", 1, admit, label)
    # one pivot is enough once two steps are allowed
    assert chain_exists(topo, "H1", "T", 2, admit, label)


def test_chain_respects_step_budget():
    topo = make_flat(3)
    ip = {h.name: h.ip for h in topo.hosts}
    # only the corridor H1 -> H2 -> H3 -> T is open
    open_pairs = {
        (ip["H1"], ip["H2"]),
        (ip["H2"], ip["H3"]),
        (ip["H3"], ip["T"]),
    }

    def admit(src_ip, dst_ip, bits):
        return (src_ip, dst_ip) in open_pairs, bits

    label = lambda h: 0
    assert not chain_exists(topo, "H1", "T", 2, admit, label)
    assert chain_exists(topo, "H1", "T", 3, admit, label)


def test_chain_hosts_are_distinct():
    topo = make_flat(2)
    ip = {h.name: h.ip for h in topo.hosts}
    # H1 <-> H2 ping-pong is open, T is only reachable from H3 (absent)
    open_pairs = {(ip["H1"], ip["H2"]), (ip["H2"], ip["H1"])}

    def admit(src_ip, dst_ip, bits):
        return (src_ip, dst_ip) in open_pairs, bits

    assert not chain_exists(topo, "H1", "T", 50, admit, lambda h: 0)


def test_label_accumulation_blocks_relay():
    """The filter stops the direct route only; the label policy survives a
    pivot because the origin's tag rides along."""
    topo = make_flat(3)
    compiled = compile_program(
        parse(build_reachability_policy(topo, {"T": ["H2"]})), topo
    )
    policy_admit = make_policy_admit(compiled, topo)
    label = {h.name: compiled.label_of_ip(h.ip).bits for h in topo.hosts}

    fw = make_firewall_admit(
        (
            FirewallRule("allow", frozenset({"10.9.0.12"}), frozenset({"10.9.0.200"})),
            FirewallRule("deny", None, frozenset({"10.9.0.200"})),
        )
    )
    assert hosts_reaching(topo, "T", 1, fw, lambda h: 0) == {"H2"}
    # two steps let everyone pivot through H2 past the filter
    assert hosts_reaching(topo, "T", 3, fw, lambda h: 0) == {"H1", "H2", "H3"}
    # the label policy pins the sender set no matter how many steps
    for steps in (1, 2, 3):
        assert hosts_reaching(
            topo, "T", steps, policy_admit, label.__getitem__
        ) == {"H2"}


def test_reachability_table_rows():
    topo = make_flat(3)
    ip = {h.name: h.ip for h in topo.hosts}
    admit = _pair_admit({(ip["H1"], ip["T"])})
    cells = reachability_table(topo, ["T"], [1, 2], admit, lambda h: 0)
    assert [(c.target, c.steps, c.count) for c in cells] == [
        ("T", 1, 2),
        ("T", 2, 3),
    ]
    assert cells[0].hosts == ("H2", "H3")
    assert cells[1].hosts == ("H1", "H2", "H3")


# -- generated policies ----------------------------------------------------


def test_coverage_policy_closes_every_route():
    topo = make_flat(4)
    compiled = compile_program(parse(build_coverage_policy(topo, "T")), topo)
    admit = make_policy_admit(compiled, topo)
    label = {h.name: compiled.label_of_ip(h.ip).bits for h in topo.hosts}
    candidates = [h.name for h in topo.hosts if h.name != "T"]
    for k in (1, 2, 3):
        for route in iter_routes(candidates, k):
            assert route_blocked(route, "T", topo, admit, label.__getitem__), route
    # and it only guards the target: pivot hops still work
    ok, _ = admit("10.9.0.11", "10.9.0.12", label["H1"])
    assert ok


def test_route_blocked_midway():
    topo = make_flat(3)
    ip = {h.name: h.ip for h in topo.hosts}
    admit = _pair_admit({(ip["H1"], ip["H2"])})
    assert route_blocked(("H1", "H2"), "T", topo, admit, lambda h: 0)
    assert not route_blocked(("H2", "H1"), "T", topo, admit, lambda h: 0)


def test_route_blocked_accumulates_labels():
    topo = make_flat(2)
    # block any packet whose label has bit 0 set, regardless of endpoints
    def admit(src_ip, dst_ip, bits):
        return not (bits & 1), bits

    labels = {"H1": 1, "H2": 0, "T": 0}
    # H2 alone is clean, but picking up H1's taint en route is fatal
    assert not route_blocked(("H2",), "T", topo, admit, labels.__getitem__)
    assert route_blocked(("H2", "H1"), "T", topo, admit, labels.__getitem__)
    assert route_blocked(("H1", "H2"), "T", topo, admit, labels.__getitem__)


# -- coverage report -------------------------------------------------------


def test_coverage_report_exact():
    topo = make_flat(5)
    rows = coverage_report(topo, "T", ((2, 3), (3, 2)))
    assert [r.steps for r in rows] == [2, 3]
    assert [r.routes for r in rows] == [20, 60]
    assert all(not r.sampled and r.evaluated == r.routes for r in rows)
    # the filter admits `allowed` of the 5 candidates, so a route dies
    # exactly when its last pivot is outside that set
    assert rows[0].allowed == 3 and rows[0].firewall_coverage == pytest.approx(40.0)
    assert rows[1].allowed == 2 and rows[1].firewall_coverage == pytest.approx(60.0)
    assert all(r.policy_coverage == 100.0 for r in rows)
    assert rows[0].topology == "flat"


def test_coverage_report_sampling_path():
    topo = make_flat(5)
    kwargs = dict(sample_threshold=10, sample_size=400, seed=3)
    rows = coverage_report(topo, "T", ((2, 3),), **kwargs)
    (row,) = rows
    assert row.sampled
    assert row.routes == 20  # the true total is still reported
    assert row.evaluated == 400
    assert row.policy_coverage == 100.0
    assert abs(row.firewall_coverage - 40.0) < 10.0
    again = coverage_report(topo, "T", ((2, 3),), **kwargs)
    assert again == rows  # same seed, same estimate


def test_coverage_report_vacuous_row():
    topo = make_flat(2)  # 2 candidates, so no routes of length 3 exist
    (row,) = coverage_report(topo, "T", ((3, 1),))
    assert row.routes == 0 and row.evaluated == 0
    assert row.firewall_coverage == 100.0 and row.policy_coverage == 100.0


def test_default_rows_present():
    assert set(DEFAULT_COVERAGE_ROWS) == {"enterprise", "cisco", "stanford"}
    for rows in DEFAULT_COVERAGE_ROWS.values():
        ks = [k for k, _ in rows]
        assert ks == sorted(ks, reverse=True)
