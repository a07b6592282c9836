"""On-wire label header codec and flow identity.

Wire layout, fixed by this implementation:

    byte 0        flags (bit 0 = tracker id present; other bits reserved, must be 0)
    bytes 1..32   tag bitmap, big-endian; tag index 0 = MSB of byte 1
    bytes 33..36  tracker id, big-endian u32, present iff flags bit 0 set

Serialized length is therefore exactly 33 or 37 bytes.

FlowKey hashing uses CRC-32 (reflected polynomial 0xEDB88320, the zlib
variant) over the canonical 13-byte serialization
src_ip . dst_ip . src_port . dst_port . protocol, all big-endian.
"""

from __future__ import annotations

import ipaddress
import struct
import zlib
from dataclasses import dataclass

from .errors import MalformedHeader
from .labels import LABEL_MASK, Label

FLAG_TRACKER = 0x01
_KNOWN_FLAGS = FLAG_TRACKER

HEADER_LEN_BARE = 33
HEADER_LEN_TRACKED = 37


@dataclass(frozen=True)
class DifcHeader:
    """The label carrier attached to a flow's initial packets."""

    label: Label = Label(0)
    tracker_id: int = 0  # 0 means absent

    def __post_init__(self):
        if not 0 <= self.tracker_id <= 0xFFFFFFFF:
            raise ValueError("tracker id out of u32 range")

    @property
    def has_tracker(self) -> bool:
        return self.tracker_id != 0


def encode_header(h: DifcHeader) -> bytes:
    flags = FLAG_TRACKER if h.has_tracker else 0
    out = bytes([flags]) + h.label.bits.to_bytes(32, "big")
    if h.has_tracker:
        out += struct.pack(">I", h.tracker_id)
    return out


def decode_header(data: bytes) -> DifcHeader:
    if len(data) < HEADER_LEN_BARE:
        raise MalformedHeader(f"truncated header: {len(data)} bytes")
    flags = data[0]
    if flags & ~_KNOWN_FLAGS:
        raise MalformedHeader(f"unknown flag bits 0x{flags:02x}")
    bits = int.from_bytes(data[1:33], "big")
    if bits > LABEL_MASK:
        raise MalformedHeader("bitmap out of range")  # unreachable for 32 bytes
    tracker = 0
    if flags & FLAG_TRACKER:
        if len(data) < HEADER_LEN_TRACKED:
            raise MalformedHeader("tracker flag set but header truncated")
        if len(data) != HEADER_LEN_TRACKED:
            raise MalformedHeader(f"bad header length {len(data)}")
        (tracker,) = struct.unpack(">I", data[33:37])
        if tracker == 0:
            raise MalformedHeader("tracker flag set but tracker id is 0")
    elif len(data) != HEADER_LEN_BARE:
        raise MalformedHeader(f"bad header length {len(data)}")
    return DifcHeader(Label(bits), tracker)


def _ip_to_u32(ip: str) -> int:
    return int(ipaddress.IPv4Address(ip))


@dataclass(frozen=True)
class FlowKey:
    """5-tuple identity of a connection."""

    src_ip: str
    src_port: int
    dst_ip: str
    dst_port: int
    protocol: int  # IP protocol number: 6 tcp, 17 udp, 1 icmp

    def canonical_bytes(self) -> bytes:
        return struct.pack(
            ">IIHHB",
            _ip_to_u32(self.src_ip),
            _ip_to_u32(self.dst_ip),
            self.src_port,
            self.dst_port,
            self.protocol,
        )

    def crc32(self) -> int:
        return zlib.crc32(self.canonical_bytes()) & 0xFFFFFFFF

    def reversed(self) -> FlowKey:
        return FlowKey(self.dst_ip, self.dst_port, self.src_ip, self.src_port, self.protocol)

    def __str__(self) -> str:
        return (
            f"{self.src_ip}:{self.src_port}>{self.dst_ip}:{self.dst_port}"
            f"/{self.protocol}"
        )


def buffer_slot(key: FlowKey, index_bits: int) -> int:
    """Direct-mapped slot index for a flow: low bits of the CRC."""
    return key.crc32() & ((1 << index_bits) - 1)
