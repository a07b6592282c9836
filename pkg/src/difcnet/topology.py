"""Network topology: hosts, switches, links, name bindings, forwarding.

Loaded from a YAML document:

    name: enterprise
    switches: [S1, S2]
    links:
      - [S1, S2]            # optional third element: latency in ns
    hosts:
      - {name: Host1, ip: 10.0.2.11, switch: S2}
    external:
      name: external
      ip: 203.0.113.10
      gateway: S1
    groups:
      Servers_Floor: [Server1, Server2]
    firewall:                # optional, ordered, first match wins, default allow
      - {action: allow, src: [Host2], dst: Server1}
      - {action: deny, dst: Server1}

Every host attaches to exactly one switch. The binding `external_network`
always resolves to the external endpoint's address. Forwarding tables are
shortest-path over the switch graph, computed at load time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import yaml

from .errors import DifcnetError, UnknownHost, UnknownName

DEFAULT_LINK_LATENCY_NS = 100_000  # 0.1 ms per link


@dataclass(frozen=True)
class Host:
    name: str
    ip: str
    switch: str


@dataclass(frozen=True)
class FirewallRule:
    """Stateless 5-tuple-level allow/deny. None matches anything."""

    action: str  # "allow" | "deny"
    src: frozenset[str] | None = None  # ips
    dst: frozenset[str] | None = None


@dataclass
class Topology:
    name: str
    switches: list[str]
    hosts: list[Host]
    links: list[tuple[str, str, int]]  # switch-switch, latency ns
    external_name: str = "external"
    external_ip: str = "203.0.113.10"
    gateway: str = ""
    groups: dict[str, tuple[str, ...]] = field(default_factory=dict)
    firewall: list[FirewallRule] = field(default_factory=list)

    def __post_init__(self):
        self.host_by_name = {h.name: h for h in self.hosts}
        self.host_by_ip = {h.ip: h for h in self.hosts}
        if len(self.host_by_name) != len(self.hosts) or len(self.host_by_ip) != len(self.hosts):
            raise DifcnetError("duplicate host name or ip")
        for h in self.hosts:
            if h.switch not in self.switches:
                raise DifcnetError(f"host {h.name} attached to unknown switch {h.switch}")
        if not self.gateway:
            self.gateway = self.switches[0]
        for group, members in self.groups.items():
            for m in members:
                if m not in self.host_by_name:
                    raise DifcnetError(f"group {group} member {m} is not a host")
        self._ports: dict[str, list[str]] = {}
        self._forwarding: dict[str, dict[str, int]] = {}
        self._build_ports()
        self._build_forwarding()

    # --- name resolution -------------------------------------------------

    def resolve(self, name: str) -> tuple[str, ...]:
        """Resolve a policy-source name to one or more addresses."""
        if name == "external_network" or name == self.external_name:
            return (self.external_ip,)
        if name in self.host_by_name:
            return (self.host_by_name[name].ip,)
        if name in self.groups:
            return tuple(self.host_by_name[m].ip for m in self.groups[name])
        if _looks_like_ip(name):
            return (name,)
        raise UnknownName(f"cannot resolve {name!r} in topology {self.name!r}")

    def switch_of_ip(self, ip: str) -> str:
        if ip in self.host_by_ip:
            return self.host_by_ip[ip].switch
        if ip == self.external_ip:
            return self.gateway
        raise UnknownHost(f"no switch attached to {ip}")

    def host_ips(self) -> list[str]:
        return [h.ip for h in self.hosts]

    def hosts_on(self, switch: str) -> list[Host]:
        return [h for h in self.hosts if h.switch == switch]

    def host_switches(self) -> list[str]:
        """Switches with at least one attached host, in topology order."""
        return [s for s in self.switches if any(h.switch == s for h in self.hosts)]

    def enforced_ips(self, switch: str) -> set[str]:
        ips = {h.ip for h in self.hosts_on(switch)}
        if switch == self.gateway:
            ips.add(self.external_ip)
        return ips

    # --- ports and forwarding -------------------------------------------

    def _build_ports(self):
        neighbors: dict[str, list[str]] = {s: [] for s in self.switches}
        for a, b, _lat in self.links:
            neighbors[a].append(b)
            neighbors[b].append(a)
        for s in self.switches:
            endpoints = list(neighbors[s]) + [h.name for h in self.hosts_on(s)]
            if s == self.gateway:
                endpoints.append(self.external_name)
            self._ports[s] = endpoints

    def ports(self, switch: str) -> list[str]:
        return self._ports[switch]

    def _build_forwarding(self):
        # next-hop switch toward every other switch, by BFS
        adj: dict[str, list[str]] = {s: [] for s in self.switches}
        for a, b, _lat in self.links:
            adj[a].append(b)
            adj[b].append(a)
        next_hop: dict[str, dict[str, str]] = {}
        for src in self.switches:
            prev: dict[str, str] = {src: src}
            q = deque([src])
            while q:
                cur = q.popleft()
                for nb in adj[cur]:
                    if nb not in prev:
                        prev[nb] = cur
                        q.append(nb)
            hops = {}
            for dst in self.switches:
                if dst == src or dst not in prev:
                    continue
                node = dst
                while prev[node] != src:
                    node = prev[node]
                hops[dst] = node
            next_hop[src] = hops
        missing = [
            (a, b)
            for a in self.switches
            for b in self.switches
            if a != b and b not in next_hop[a]
        ]
        if missing:
            raise DifcnetError(f"switch graph is not connected: {missing[:3]}")

        for s in self.switches:
            table: dict[str, int] = {}
            ports = self._ports[s]
            for h in self.hosts:
                if h.switch == s:
                    table[h.ip] = ports.index(h.name)
                else:
                    table[h.ip] = ports.index(next_hop[s][h.switch])
            if s == self.gateway:
                table[self.external_ip] = ports.index(self.external_name)
            else:
                table[self.external_ip] = ports.index(next_hop[s][self.gateway])
            self._forwarding[s] = table

    def forwarding(self, switch: str) -> dict[str, int]:
        return self._forwarding[switch]

    def port_target(self, switch: str, port: int) -> str:
        """Device name (switch, host, or external endpoint) behind a port."""
        return self._ports[switch][port]

    def link_latency(self, a: str, b: str) -> int:
        for x, y, lat in self.links:
            if {x, y} == {a, b}:
                return lat
        return DEFAULT_LINK_LATENCY_NS


def _looks_like_ip(name: str) -> bool:
    parts = name.split(".")
    return len(parts) == 4 and all(p.isdigit() and int(p) < 256 for p in parts)


def _resolve_fw_side(value, topo_hosts, groups, external_ip) -> frozenset[str] | None:
    if value is None:
        return None
    names = value if isinstance(value, list) else [value]
    ips: set[str] = set()
    for n in names:
        if n in groups:
            for member in groups[n]:
                ips.add(topo_hosts[member])
        elif n in topo_hosts:
            ips.add(topo_hosts[n])
        elif n in ("external", "external_network"):
            ips.add(external_ip)
        elif _looks_like_ip(n):
            ips.add(n)
        else:
            raise UnknownName(f"firewall rule references unknown name {n!r}")
    return frozenset(ips)


def load_topology(path: str) -> Topology:
    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    return topology_from_dict(doc)


def topology_from_dict(doc: dict) -> Topology:
    links = []
    for entry in doc.get("links", []):
        if len(entry) == 2:
            a, b = entry
            lat = DEFAULT_LINK_LATENCY_NS
        else:
            a, b, lat = entry
        links.append((a, b, int(lat)))
    hosts = [Host(h["name"], h["ip"], h["switch"]) for h in doc.get("hosts", [])]
    ext = doc.get("external", {})
    groups = {k: tuple(v) for k, v in doc.get("groups", {}).items()}

    topo = Topology(
        name=doc.get("name", "unnamed"),
        switches=list(doc["switches"]),
        hosts=hosts,
        links=links,
        external_name=ext.get("name", "external"),
        external_ip=ext.get("ip", "203.0.113.10"),
        gateway=ext.get("gateway", ""),
        groups=groups,
    )

    host_ips = {h.name: h.ip for h in hosts}
    fw = []
    for r in doc.get("firewall", []):
        fw.append(
            FirewallRule(
                action=r["action"],
                src=_resolve_fw_side(r.get("src"), host_ips, groups, topo.external_ip),
                dst=_resolve_fw_side(r.get("dst"), host_ips, groups, topo.external_ip),
            )
        )
    topo.firewall = fw
    return topo


def firewall_admits(rules: list[FirewallRule], src_ip: str, dst_ip: str) -> bool:
    """First matching rule wins; no match means allow."""
    for r in rules:
        if (r.src is None or src_ip in r.src) and (r.dst is None or dst_ip in r.dst):
            return r.action == "allow"
    return True
