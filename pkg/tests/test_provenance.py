"""Provenance slicing over agent event logs.

The reference model is a versioned dependency graph: every event that moves
state appends a new version of its target whose parents are the source's
current version and (for weak updates) the target's previous version. The
ancestor set of an entity's latest version, projected back onto entities,
is what backward_slice must return.
"""

import random

from difcnet.hostagent import HostAgent, SeqSource
from difcnet.labels import Label, tag_bit
from difcnet.packets import PROTO_TCP, SimPacket, TcpFlags
from difcnet.provenance import (
    ancestors_of_file,
    backward_slice,
    file_entity,
    flow_entity,
    format_entity,
    host_entity,
    merged_events,
    pid_entity,
)


class VersionedGraph:
    """Reference model. Entities are whatever hashable ids the caller uses."""

    def __init__(self):
        self.version = {}
        self.parents = {}

    def _cur(self, e):
        v = self.version.get(e, 0)
        self.version.setdefault(e, 0)
        self.parents.setdefault((e, v), set())
        return (e, v)

    def _bump(self, e):
        v = self.version.get(e, 0) + 1
        self.version[e] = v
        node = (e, v)
        self.parents[node] = set()
        return node

    def weak(self, src, dst):
        s = self._cur(src)
        d_prev = self._cur(dst)
        d = self._bump(dst)
        self.parents[d] = {d_prev, s}

    def strong(self, src, dst):
        s = self._cur(src)
        d = self._bump(dst)
        self.parents[d] = {s}

    def ancestors(self, e):
        start = self._cur(e)
        seen = {start}
        stack = [start]
        while stack:
            node = stack.pop()
            for p in self.parents.get(node, ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return {ent for ent, _ in seen}


# -- hand-built cases ------------------------------------------------------


def _two_hosts():
    seq = SeqSource()
    a = HostAgent("HA", "10.0.0.1", seq_source=seq)
    b = HostAgent("HB", "10.0.0.2", seq_source=seq)
    a.initialize(Label(tag_bit(0)), (("/a/secret", 1),))
    b.initialize(Label(tag_bit(1)))
    return a, b


def _transfer(a, b, pid_a, pid_b, sport, t):
    """One labeled packet from a to b, delivered and accepted."""
    pkt = SimPacket(
        src_ip=a.ip, dst_ip=b.ip, src_port=sport, dst_port=80,
        protocol=PROTO_TCP, tcp_flags=TcpFlags.SYN,
    )
    pkt = a.label_outgoing(pid_a, pkt, now_ns=t)
    b.deliver(pkt, now_ns=t + 1)
    b.accept(pid_b, pkt.flow_key, now_ns=t + 2)
    return pkt.flow_key


def test_cross_host_chain():
    a, b = _two_hosts()
    a.spawn(100, now_ns=10)
    a.read(100, a.inode_of("/a/secret"), now_ns=20)
    b.spawn(200, now_ns=30)
    key = _transfer(a, b, 100, 200, 41000, t=40)
    b.create(200, "/b/copy", now_ns=50)

    events = merged_events(a.events, b.events)
    result = ancestors_of_file(events, "HB", b.inode_of("/b/copy"))
    assert result == {
        file_entity("HB", b.inode_of("/b/copy")),
        pid_entity("HB", 200),
        host_entity("HB"),
        flow_entity(str(key)),
        pid_entity("HA", 100),
        host_entity("HA"),
        file_entity("HA", a.inode_of("/a/secret")),
    }


def test_unrelated_activity_is_excluded():
    a, b = _two_hosts()
    a.spawn(100, now_ns=10)
    a.spawn(101, now_ns=11)
    a.create(101, "/a/noise", now_ns=12)  # different pid, no edge to sink
    a.create(100, "/a/out", now_ns=20)

    result = ancestors_of_file(a.events, "HA", a.inode_of("/a/out"))
    assert pid_entity("HA", 101) not in result
    assert file_entity("HA", a.inode_of("/a/noise")) not in result


def test_respawned_pid_does_not_leak_old_incarnation():
    a, _ = _two_hosts()
    a.spawn(100, now_ns=10)
    a.read(100, a.inode_of("/a/secret"), now_ns=20)
    a.exit(100, now_ns=30)
    a.spawn(100, now_ns=40)  # same number, new incarnation
    a.create(100, "/a/clean", now_ns=50)

    result = ancestors_of_file(a.events, "HA", a.inode_of("/a/clean"))
    # the secret was only touched by the first incarnation
    assert file_entity("HA", a.inode_of("/a/secret")) not in result
    # but the pid itself (current incarnation) is part of the answer
    assert pid_entity("HA", 100) in result
    assert result == {
        file_entity("HA", a.inode_of("/a/clean")),
        pid_entity("HA", 100),
        host_entity("HA"),
    }


def test_until_seq_cuts_late_edges():
    a, _ = _two_hosts()
    a.spawn(100, now_ns=10)
    a.create(100, "/a/out", now_ns=20)
    cut = a.events[-1].seq
    a.read(100, a.inode_of("/a/secret"), now_ns=30)
    a.write(100, a.inode_of("/a/out"), now_ns=40)

    sink = file_entity("HA", a.inode_of("/a/out"))
    early = backward_slice(a.events, sink, until_seq=cut)
    assert file_entity("HA", a.inode_of("/a/secret")) not in early
    late = backward_slice(a.events, sink)
    assert file_entity("HA", a.inode_of("/a/secret")) in late


def test_merged_events_total_order():
    a, b = _two_hosts()
    a.spawn(1, now_ns=100)
    b.spawn(1, now_ns=100)  # same time, seq breaks the tie
    ev = merged_events(a.events, b.events)
    assert [e.seq for e in ev] == sorted(e.seq for e in ev)


def test_format_entity():
    assert format_entity(host_entity("H")) == "host:H"
    assert format_entity(pid_entity("H", 3)) == "pid:H/3"
    assert format_entity(file_entity("H", 9)) == "file:H/inode9"
    assert format_entity(flow_entity("k")) == "flow:k"


# -- randomized comparison against the versioned graph ---------------------


def _random_trace(seed):
    """Drive two agents with random operations, mirroring each operation
    into the reference graph as it happens."""
    rng = random.Random(seed)
    seq = SeqSource()
    agents = {}
    graph = VersionedGraph()
    live = {}
    files = {}
    for name, ip, tag in (("HA", "10.0.0.1", 0), ("HB", "10.0.0.2", 1)):
        ag = HostAgent(name, ip, seq_source=seq)
        ag.initialize(Label(tag_bit(tag)), ((f"/{name}/seed", 0),))
        graph.weak(("host", name), ("file", name, ag.inode_of(f"/{name}/seed")))
        agents[name] = ag
        live[name] = []
        files[name] = [ag.inode_of(f"/{name}/seed")]
    next_pid = {"HA": 100, "HB": 500}
    dead = {"HA": [], "HB": []}
    next_port = 40000
    t = 0

    for _ in range(rng.randrange(20, 80)):
        t += 10
        host = rng.choice(("HA", "HB"))
        ag = agents[host]
        op = rng.choice(
            ("spawn", "read", "write", "create", "transfer", "exit", "spawn", "read")
        )
        if op == "spawn":
            if dead[host] and rng.random() < 0.5:
                pid = dead[host].pop()  # reuse a retired number
            else:
                pid = next_pid[host]
                next_pid[host] += 1
            ag.spawn(pid, now_ns=t)
            graph.strong(("host", host), ("pid", host, pid))
            live[host].append(pid)
        elif op == "exit" and live[host]:
            pid = rng.choice(live[host])
            ag.exit(pid, now_ns=t)
            live[host].remove(pid)
            dead[host].append(pid)
        elif op == "read" and live[host]:
            pid = rng.choice(live[host])
            inode = rng.choice(files[host])
            ag.read(pid, inode, now_ns=t)
            graph.weak(("file", host, inode), ("pid", host, pid))
        elif op == "write" and live[host]:
            pid = rng.choice(live[host])
            inode = rng.choice(files[host])
            ag.write(pid, inode, now_ns=t)
            graph.weak(("pid", host, pid), ("file", host, inode))
        elif op == "create" and live[host]:
            pid = rng.choice(live[host])
            inode = ag.create(pid, f"/{host}/f{t}", now_ns=t)
            graph.weak(("pid", host, pid), ("file", host, inode))
            files[host].append(inode)
        elif op == "transfer":
            other = "HB" if host == "HA" else "HA"
            if not live[host] or not live[other]:
                continue
            src_pid = rng.choice(live[host])
            dst_pid = rng.choice(live[other])
            next_port += 1
            key = _transfer(ag, agents[other], src_pid, dst_pid, next_port, t)
            graph.weak(("pid", host, src_pid), ("flow", str(key)))
            graph.weak(("flow", str(key)), ("pid", other, dst_pid))
    return agents, graph, live, files


def test_random_traces_match_versioned_graph():
    for seed in range(40):
        agents, graph, live, files = _random_trace(seed)
        events = merged_events(*(a.events for a in agents.values()))
        for host, ag in agents.items():
            for pid in live[host]:
                got = backward_slice(events, pid_entity(host, pid))
                assert got == graph.ancestors(("pid", host, pid)), (seed, host, pid)
            for inode in files[host]:
                got = backward_slice(events, file_entity(host, inode))
                assert got == graph.ancestors(("file", host, inode)), (seed, host, inode)
