"""Simulation packet model.

A SimPacket is the unit moved between hosts and switches. The reserved bit
of the IP fragment field (the "evil bit") marks the presence of the label
header; the invariant evil_bit <=> difc-present is enforced on every
mutation helper here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntFlag

from .header import DifcHeader, FlowKey

PROTO_TCP = 6
PROTO_UDP = 17
PROTO_ICMP = 1


class TcpFlags(IntFlag):
    NONE = 0
    SYN = 1
    ACK = 2
    FIN = 4


class IcmpKind(Enum):
    REQUEST = "request"
    REPLY = "reply"


class ControlKind(Enum):
    """Switch- or controller-generated packets that bypass policy lookup."""

    LABEL_ACK = "label_ack"
    LABEL_INIT = "label_init"


_next_packet_id = 0


def _fresh_packet_id() -> int:
    global _next_packet_id
    _next_packet_id += 1
    return _next_packet_id


def reset_packet_ids() -> None:
    """Restart the id counter so repeated runs produce identical packets."""
    global _next_packet_id
    _next_packet_id = 0


@dataclass
class SimPacket:
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    protocol: int
    tcp_flags: TcpFlags = TcpFlags.NONE
    icmp_kind: IcmpKind | None = None
    evil_bit: bool = False
    ttl: int = 64
    difc: DifcHeader | None = None
    payload_len: int = 0
    seq: int = 0  # per-flow packet ordinal
    control: ControlKind | None = None
    recirc_count: int = 0
    packet_id: int = field(default_factory=_fresh_packet_id)

    def __post_init__(self):
        if self.evil_bit != (self.difc is not None):
            raise ValueError("evil bit must mirror label-header presence")
        if self.protocol == PROTO_ICMP and self.icmp_kind is None and self.control is None:
            raise ValueError("icmp packet needs a kind")

    @property
    def flow_key(self) -> FlowKey:
        return FlowKey(self.src_ip, self.src_port, self.dst_ip, self.dst_port, self.protocol)

    @property
    def is_syn(self) -> bool:
        return self.protocol == PROTO_TCP and bool(self.tcp_flags & TcpFlags.SYN)

    @property
    def is_initial(self) -> bool:
        """True when this packet opens policy evaluation for its flow: the
        TCP handshake start, any ICMP message, or a UDP packet that carries
        a label header (UDP has no handshake to anchor on)."""
        if self.control is not None:
            return False
        if self.protocol == PROTO_TCP:
            return self.is_syn
        if self.protocol == PROTO_ICMP:
            return True
        return self.evil_bit

    def with_header(self, header: DifcHeader) -> SimPacket:
        return replace(self, difc=header, evil_bit=True)

    def without_header(self) -> SimPacket:
        return replace(self, difc=None, evil_bit=False)

    def describe(self) -> str:
        tag = {PROTO_TCP: "tcp", PROTO_UDP: "udp", PROTO_ICMP: "icmp"}.get(
            self.protocol, str(self.protocol)
        )
        marks = []
        if self.is_syn:
            marks.append("syn")
        if self.evil_bit:
            marks.append("labeled")
        if self.control is not None:
            marks.append(self.control.value)
        suffix = "+".join(marks)
        return f"{self.flow_key}[{tag}{('/' + suffix) if suffix else ''}#{self.seq}]"
