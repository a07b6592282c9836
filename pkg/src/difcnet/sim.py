"""Deterministic packet-level event simulator.

Single-threaded discrete event loop over integer nanosecond timestamps.
Ties break on insertion order, packet ids restart at zero per run, and
trace lines never include packet ids, so two runs of the same scenario
produce byte-identical traces.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from .controlplane import ControlPlane, PendingInstall, label_init_plan
from .dataplane import Switch
from .header import FlowKey
from .hostagent import HostAgent, SeqSource
from .labels import Label
from .netcl.compiler import CompiledPolicy
from .packets import (
    PROTO_ICMP,
    PROTO_TCP,
    PROTO_UDP,
    IcmpKind,
    SimPacket,
    TcpFlags,
    reset_packet_ids,
)
from .topology import DEFAULT_LINK_LATENCY_NS, Topology

_PROTO_BY_NAME = {"tcp": PROTO_TCP, "udp": PROTO_UDP, "icmp": PROTO_ICMP}


@dataclass
class SimParams:
    rtt_ns: int = 10_000_000
    recirc_delay_ns: int | None = None  # defaults to 1.5x rtt, always > rtt
    recirc_limit: int = 3
    index_bits: int = 16
    conn_dec_capacity: int = 220_000
    rate_limit: int = 128
    rate_window_ns: int = 1_000_000_000
    udp_label_prefix: int = 3
    packet_gap_ns: int = 200_000

    @property
    def effective_recirc_delay_ns(self) -> int:
        if self.recirc_delay_ns is not None:
            return self.recirc_delay_ns
        return self.rtt_ns * 3 // 2


@dataclass
class FlowRecord:
    flow_id: str
    src: str
    dst: str
    key: object
    accept_pid: int | None = None
    sent: int = 0
    delivered: int = 0
    dropped: int = 0
    outcomes: list[tuple[int, str, str]] = field(default_factory=list)  # seq, status, where

    @property
    def verdict(self) -> str:
        return "allow" if self.delivered > 0 else "drop"

    def outcome_of_seq(self, seq: int) -> tuple[str, str] | None:
        for s, status, where in self.outcomes:
            if s == seq:
                return status, where
        return None


class Network:
    def __init__(
        self,
        topology: Topology,
        compiled: CompiledPolicy,
        params: SimParams | None = None,
    ) -> None:
        reset_packet_ids()
        self.topology = topology
        self.compiled = compiled
        self.params = params or SimParams()
        p = self.params
        self.seq_source = SeqSource()
        self.agents: dict[str, HostAgent] = {
            h.name: HostAgent(
                h.name,
                h.ip,
                seq_source=self.seq_source,
                udp_label_prefix=p.udp_label_prefix,
            )
            for h in topology.hosts
        }
        self.switches: dict[str, Switch] = {
            s: Switch(
                s,
                topology,
                compiled.configs[s],
                index_bits=p.index_bits,
                conn_dec_capacity=p.conn_dec_capacity,
                recirc_limit=p.recirc_limit,
                recirc_delay_ns=p.effective_recirc_delay_ns,
                rate_limit=p.rate_limit,
                rate_window_ns=p.rate_window_ns,
            )
            for s in topology.switches
        }
        self.control = ControlPlane(topology, compiled, p.rtt_ns)
        self.now = 0
        self._heap: list = []
        self._evseq = 0
        self.trace: list[str] = []
        self.flows: dict[str, FlowRecord] = {}
        self._flow_by_key: dict = {}
        self.external_deliveries: list[SimPacket] = []
        self._bootstrap_agents()

    # -- wiring -----------------------------------------------------------

    def _bootstrap_agents(self) -> None:
        for name, label, files in label_init_plan(self.compiled, self.topology):
            agent = self.agents[name]
            agent.initialize(label or Label(0), files)
            shown = self.compiled.registry.format_label(label) if label else "{}"
            self.trace.append(f"t=0 label-init host={name} label={shown}")
            for path, tracker in files:
                self.trace.append(
                    f"t=0 label-file host={name} path={path} tracker={tracker}"
                )

    def _push(self, at_ns: int, kind: str, payload) -> None:
        self._evseq += 1
        heapq.heappush(self._heap, (at_ns, self._evseq, kind, payload))

    def _log(self, at_ns: int, text: str) -> None:
        self.trace.append(f"t={at_ns} {text}")

    def schedule_call(self, at_ns: int, label: str, fn) -> None:
        self._push(at_ns, "call", (label, fn))

    # -- traffic entry ----------------------------------------------------

    def send_flow(
        self,
        *,
        flow_id: str,
        src: str,
        dst: str,
        at_ns: int,
        protocol: str = "tcp",
        src_port: int = 41000,
        dst_port: int = 80,
        pid: int | None = None,
        accept_pid: int | None = None,
        packets: int = 3,
        payload_len: int = 512,
        gap_ns: int | None = None,
    ) -> FlowRecord:
        proto = _PROTO_BY_NAME[protocol]
        gap = self.params.packet_gap_ns if gap_ns is None else gap_ns
        src_ip = self._endpoint_ip(src)
        dst_ip = self._endpoint_ip(dst)
        key = FlowKey(src_ip, src_port, dst_ip, dst_port, proto)
        rec = FlowRecord(flow_id, src, dst, key, accept_pid=accept_pid)
        self.flows[flow_id] = rec
        self._flow_by_key[key] = rec
        for i in range(packets):
            flags = TcpFlags.NONE
            if proto == PROTO_TCP:
                flags = TcpFlags.SYN if i == 0 else TcpFlags.ACK
            base = dict(
                src_ip=src_ip,
                dst_ip=dst_ip,
                src_port=src_port,
                dst_port=dst_port,
                protocol=proto,
                tcp_flags=flags,
                icmp_kind=IcmpKind.REQUEST if proto == PROTO_ICMP else None,
                payload_len=0 if (proto == PROTO_TCP and i == 0) else payload_len,
                seq=i,
            )
            self._push(at_ns + i * gap, "send", (src, pid, flow_id, base))
        return rec

    def _endpoint_ip(self, name: str) -> str:
        if name in (self.topology.external_name, "external"):
            return self.topology.external_ip
        if name in self.topology.host_by_name:
            return self.topology.host_by_name[name].ip
        return name  # raw address (spoofed or out of inventory)

    def gc_conn_dec(self, idle_ns: int) -> int:
        removed = 0
        for sw in self.switches.values():
            removed += sw.conn_dec.gc(self.now, idle_ns)
        return removed

    # -- event loop -------------------------------------------------------

    def run(self, until_ns: int | None = None) -> None:
        while self._heap:
            if until_ns is not None and self._heap[0][0] > until_ns:
                break
            at, _, kind, payload = heapq.heappop(self._heap)
            self.now = at
            getattr(self, f"_on_{kind}")(at, payload)

    def _on_send(self, at: int, payload) -> None:
        src, pid, flow_id, base = payload
        pkt = SimPacket(**base)
        agent = self.agents.get(src)
        if agent is not None and pid is not None:
            pkt = agent.label_outgoing(pid, pkt, now_ns=at)
        rec = self.flows.get(flow_id)
        if rec is not None:
            rec.sent += 1
        self._log(at, f"send host={src} {pkt.describe()}")
        entry = self._entry_switch(src)
        self._push(at + DEFAULT_LINK_LATENCY_NS, "switch", (entry, pkt))

    def _entry_switch(self, endpoint: str) -> str:
        if endpoint in self.topology.host_by_name:
            return self.topology.host_by_name[endpoint].switch
        return self.topology.gateway

    def _on_switch(self, at: int, payload) -> None:
        sid, pkt = payload
        sw = self.switches[sid]
        result = sw.process_packet(pkt, at)
        for line in result.log:
            self._log(at, line)
        for req in result.install_requests:
            for pending in self.control.serve_conndec(req):
                self._push(pending.due_ns, "install", pending)
        for gen in result.generated:
            self._push(at, "switch", (sid, gen))
        if result.verdict == "drop":
            self._record_outcome(result.packet, "dropped", f"{sid}:{result.decision_source}")
        elif result.verdict == "recirculate":
            self._push(
                at + result.recirculate_delay_ns, "switch", (sid, result.packet)
            )
        else:
            out = result.packet
            target = self.topology.port_target(sid, result.egress_port)
            latency = self.topology.link_latency(sid, target)
            if target in self.switches:
                self._push(at + latency, "switch", (target, out))
            else:
                self._push(at + latency, "deliver", (target, out))

    def _on_deliver(self, at: int, payload) -> None:
        target, pkt = payload
        if target in self.agents:
            agent = self.agents[target]
            agent.deliver(pkt, now_ns=at)
            rec = self._flow_by_key.get(pkt.flow_key)
            if (
                rec is not None
                and rec.accept_pid is not None
                and pkt.flow_key in agent.in_labels
            ):
                agent.accept(rec.accept_pid, pkt.flow_key, now_ns=at)
        else:
            self.external_deliveries.append(pkt)
        if pkt.control is None:
            self._record_outcome(pkt, "delivered", target)
        self._log(at, f"deliver host={target} {pkt.describe()}")

    def _on_install(self, at: int, pending: PendingInstall) -> None:
        ok = self.control.perform_install(self.switches, pending)
        state = "conn-dec" if ok else "conn-dec-failed"
        self._log(
            at,
            f"install {state} switch={pending.switch_id} key={pending.key} "
            f"decision={pending.decision.value}",
        )

    def _on_call(self, at: int, payload) -> None:
        label, fn = payload
        if label:
            self._log(at, label)
        fn()

    def _record_outcome(self, pkt: SimPacket, status: str, where: str) -> None:
        rec = self._flow_by_key.get(pkt.flow_key)
        if rec is None:
            return
        rec.outcomes.append((pkt.seq, status, where))
        if status == "delivered":
            rec.delivered += 1
        else:
            rec.dropped += 1
