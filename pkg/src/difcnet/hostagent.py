"""Host-side reference monitor. Tracks per-process and per-file labels,
stamps outgoing initial packets with the sender's label header, and folds
received labels into processes when they accept the data.

The agent never blocks traffic itself; admission is the switches' job. Its
obligations are (a) truthful labeling of what leaves the host and (b) label
bookkeeping for what arrives, so taint survives file and process hops.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import (
    CorruptSnapshot,
    PidReuseViolation,
    UnknownEntry,
    UnknownInode,
)
from .header import DifcHeader, FlowKey
from .labels import (
    CapabilitySet,
    Label,
    declassify_label,
    endorse_label,
)
from .packets import (
    PROTO_ICMP,
    PROTO_TCP,
    PROTO_UDP,
    ControlKind,
    SimPacket,
)

SNAPSHOT_MAGIC = b"DNA1"
FIRST_AUTO_INODE = 10_001
DEFAULT_UDP_LABEL_PREFIX = 3


class SeqSource:
    """Shared monotonically increasing sequence for a total event order
    across all agents in one run."""

    def __init__(self) -> None:
        self._n = 0

    def next(self) -> int:
        self._n += 1
        return self._n


@dataclass(frozen=True)
class AgentEvent:
    seq: int
    time_ns: int
    host: str
    kind: str
    pid: int = 0
    inode: int = 0
    path: str = ""
    flow: str = ""
    label_bits: int = 0
    tracker: int = 0


class HostAgent:
    def __init__(
        self,
        host: str,
        ip: str,
        *,
        seq_source: SeqSource | None = None,
        udp_label_prefix: int = DEFAULT_UDP_LABEL_PREFIX,
    ) -> None:
        self.host = host
        self.ip = ip
        self.host_label = Label(0)
        self.host_caps = CapabilitySet(0, 0)
        self.pid_labels: dict[int, Label] = {}
        self.pid_caps: dict[int, CapabilitySet] = {}
        self.pid_trackers: dict[int, int] = {}
        self.file_labels: dict[int, Label] = {}
        self.file_trackers: dict[int, int] = {}
        self.file_paths: dict[str, int] = {}
        self.in_labels: dict[FlowKey, tuple[Label, int]] = {}
        self.udp_sent: dict[FlowKey, int] = {}
        self.udp_acked: set[FlowKey] = set()
        self.udp_label_prefix = udp_label_prefix
        self._next_inode = FIRST_AUTO_INODE
        self._seq = seq_source or SeqSource()
        self.events: list[AgentEvent] = []

    # -- bookkeeping ------------------------------------------------------

    def _emit(self, time_ns: int, kind: str, **fields) -> None:
        self.events.append(
            AgentEvent(self._seq.next(), time_ns, self.host, kind, **fields)
        )

    def initialize(
        self,
        label: Label,
        files: tuple[tuple[str, int], ...] = (),
        caps: CapabilitySet | None = None,
        now_ns: int = 0,
    ) -> None:
        self.host_label = label
        if caps is not None:
            self.host_caps = caps
        for path, tracker in files:
            inode = self._bind(path)
            self.file_labels[inode] = self.file_labels.get(inode, Label(0)) | label
            self.file_trackers[inode] = tracker
            self._emit(
                now_ns, "label-file", inode=inode, path=path,
                label_bits=self.file_labels[inode].bits, tracker=tracker,
            )
        self._emit(now_ns, "label-init", label_bits=label.bits)

    def _bind(self, path: str) -> int:
        inode = self.file_paths.get(path)
        if inode is None:
            inode = self._next_inode
            self._next_inode += 1
            self.file_paths[path] = inode
            self.file_labels.setdefault(inode, Label(0))
            self.file_trackers.setdefault(inode, 0)
        return inode

    def inode_of(self, path: str) -> int:
        inode = self.file_paths.get(path)
        if inode is None:
            raise UnknownInode(f"{self.host}: no file at {path}")
        return inode

    # -- process lifecycle ------------------------------------------------

    def spawn(self, pid: int, now_ns: int = 0) -> None:
        if pid in self.pid_labels:
            raise PidReuseViolation(f"{self.host}: pid {pid} is already live")
        self.pid_labels[pid] = self.host_label
        self.pid_caps[pid] = self.host_caps
        self.pid_trackers[pid] = 0
        self._emit(now_ns, "spawn", pid=pid, label_bits=self.host_label.bits)

    def exit(self, pid: int, now_ns: int = 0) -> None:
        self._require_pid(pid)
        self._emit(now_ns, "exit", pid=pid, label_bits=self.pid_labels[pid].bits)
        del self.pid_labels[pid]
        del self.pid_caps[pid]
        del self.pid_trackers[pid]

    def _require_pid(self, pid: int) -> None:
        if pid not in self.pid_labels:
            raise UnknownEntry(f"{self.host}: pid {pid} is not live")

    def _require_inode(self, inode: int) -> None:
        if inode not in self.file_labels:
            raise UnknownInode(f"{self.host}: inode {inode} does not exist")

    # -- file i/o ---------------------------------------------------------

    def read(self, pid: int, inode: int, now_ns: int = 0) -> None:
        self._require_pid(pid)
        self._require_inode(inode)
        self.pid_labels[pid] = self.pid_labels[pid] | self.file_labels[inode]
        if self.file_trackers.get(inode, 0):
            self.pid_trackers[pid] = self.file_trackers[inode]
        self._emit(
            now_ns, "read", pid=pid, inode=inode,
            label_bits=self.file_labels[inode].bits,
            tracker=self.file_trackers.get(inode, 0),
        )

    def write(self, pid: int, inode: int, now_ns: int = 0) -> None:
        self._require_pid(pid)
        self._require_inode(inode)
        self.file_labels[inode] = self.file_labels[inode] | self.pid_labels[pid]
        if self.pid_trackers.get(pid, 0):
            self.file_trackers[inode] = self.pid_trackers[pid]
        self._emit(
            now_ns, "write", pid=pid, inode=inode,
            label_bits=self.pid_labels[pid].bits,
            tracker=self.pid_trackers.get(pid, 0),
        )

    def create(self, pid: int, path: str, now_ns: int = 0) -> int:
        self._require_pid(pid)
        inode = self._bind(path)
        self.file_labels[inode] = self.file_labels[inode] | self.pid_labels[pid]
        if self.pid_trackers.get(pid, 0):
            self.file_trackers[inode] = self.pid_trackers[pid]
        self._emit(
            now_ns, "create", pid=pid, inode=inode, path=path,
            label_bits=self.file_labels[inode].bits,
            tracker=self.file_trackers.get(inode, 0),
        )
        return inode

    # -- privileges -------------------------------------------------------

    def declassify(self, pid: int, mask: int, now_ns: int = 0) -> None:
        self._require_pid(pid)
        self.pid_labels[pid] = declassify_label(
            self.pid_labels[pid], mask, self.pid_caps[pid]
        )
        self._emit(now_ns, "declassify", pid=pid, label_bits=self.pid_labels[pid].bits)

    def endorse(self, pid: int, mask: int, now_ns: int = 0) -> None:
        self._require_pid(pid)
        self.pid_labels[pid] = endorse_label(
            self.pid_labels[pid], mask, self.pid_caps[pid]
        )
        self._emit(now_ns, "endorse", pid=pid, label_bits=self.pid_labels[pid].bits)

    # -- network tx/rx ----------------------------------------------------

    def label_outgoing(self, pid: int, pkt: SimPacket, now_ns: int = 0) -> SimPacket:
        """Attach a label header when the packet opens a flow (or, for UDP,
        while the switch has not acknowledged the decision). Hosts without
        any label send bare packets."""
        self._require_pid(pid)
        label = self.pid_labels[pid]
        tracker = self.pid_trackers.get(pid, 0)
        key = pkt.flow_key
        wants_header = False
        if pkt.protocol == PROTO_TCP:
            wants_header = pkt.is_syn
        elif pkt.protocol == PROTO_ICMP:
            wants_header = True
        elif pkt.protocol == PROTO_UDP:
            if key not in self.udp_acked:
                sent = self.udp_sent.get(key, 0)
                if sent < self.udp_label_prefix:
                    wants_header = True
                    self.udp_sent[key] = sent + 1
        if wants_header and (label.bits or tracker):
            pkt = pkt.with_header(DifcHeader(label, tracker))
        self._emit(
            now_ns, "send", pid=pid, flow=str(key),
            label_bits=label.bits if pkt.evil_bit else 0,
            tracker=tracker if pkt.evil_bit else 0,
        )
        return pkt

    def deliver(self, pkt: SimPacket, now_ns: int = 0) -> None:
        if pkt.control is ControlKind.LABEL_ACK:
            self.udp_acked.add(pkt.flow_key.reversed())
            self._emit(now_ns, "label-ack", flow=str(pkt.flow_key.reversed()))
            return
        key = pkt.flow_key
        if pkt.difc is not None:
            label, tracker = self.in_labels.get(key, (Label(0), 0))
            label = label | pkt.difc.label
            if pkt.difc.tracker_id:
                tracker = pkt.difc.tracker_id
            self.in_labels[key] = (label, tracker)
        self._emit(
            now_ns, "deliver", flow=str(key),
            label_bits=pkt.difc.label.bits if pkt.difc else 0,
            tracker=pkt.difc.tracker_id if pkt.difc else 0,
        )

    def accept(self, pid: int, key: FlowKey, now_ns: int = 0) -> None:
        """The receiving process takes ownership of data from `key`; its
        label absorbs whatever arrived."""
        self._require_pid(pid)
        if key not in self.in_labels:
            raise UnknownEntry(f"{self.host}: nothing pending on {key}")
        label, tracker = self.in_labels.pop(key)
        self.pid_labels[pid] = self.pid_labels[pid] | label
        if tracker:
            self.pid_trackers[pid] = tracker
        self._emit(
            now_ns, "accept", pid=pid, flow=str(key),
            label_bits=label.bits, tracker=tracker,
        )

    # -- persistence ------------------------------------------------------

    def snapshot(self) -> bytes:
        out = [SNAPSHOT_MAGIC]
        out.append(self.host_label.bits.to_bytes(32, "big"))
        out.append(self.host_caps.plus.to_bytes(32, "big"))
        out.append(self.host_caps.minus.to_bytes(32, "big"))
        inode_path = {inode: path for path, inode in self.file_paths.items()}
        out.append(struct.pack(">I", len(self.file_labels)))
        for inode in sorted(self.file_labels):
            path = inode_path.get(inode, "").encode("utf-8")
            out.append(struct.pack(">Q", inode))
            out.append(self.file_labels[inode].bits.to_bytes(32, "big"))
            out.append(struct.pack(">I", self.file_trackers.get(inode, 0)))
            out.append(struct.pack(">H", len(path)))
            out.append(path)
        return b"".join(out)

    def restore(self, blob: bytes, now_ns: int = 0) -> None:
        try:
            if blob[:4] != SNAPSHOT_MAGIC:
                raise CorruptSnapshot("bad snapshot magic")
            off = 4
            self.host_label = Label(int.from_bytes(blob[off : off + 32], "big"))
            off += 32
            plus = int.from_bytes(blob[off : off + 32], "big")
            off += 32
            minus = int.from_bytes(blob[off : off + 32], "big")
            off += 32
            self.host_caps = CapabilitySet(plus, minus)
            (count,) = struct.unpack_from(">I", blob, off)
            off += 4
            self.file_labels = {}
            self.file_trackers = {}
            self.file_paths = {}
            max_inode = FIRST_AUTO_INODE - 1
            for _ in range(count):
                (inode,) = struct.unpack_from(">Q", blob, off)
                off += 8
                bits = int.from_bytes(blob[off : off + 32], "big")
                off += 32
                (tracker,) = struct.unpack_from(">I", blob, off)
                off += 4
                (plen,) = struct.unpack_from(">H", blob, off)
                off += 2
                path = blob[off : off + plen].decode("utf-8")
                if len(blob[off : off + plen]) != plen:
                    raise CorruptSnapshot("truncated snapshot entry")
                off += plen
                self.file_labels[inode] = Label(bits)
                self.file_trackers[inode] = tracker
                if path:
                    self.file_paths[path] = inode
                max_inode = max(max_inode, inode)
            if off != len(blob):
                raise CorruptSnapshot("trailing bytes in snapshot")
            self._next_inode = max_inode + 1
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise CorruptSnapshot(str(exc)) from None
        self.pid_labels = {}
        self.pid_caps = {}
        self.pid_trackers = {}
        self.in_labels = {}
        self.udp_sent = {}
        self.udp_acked = set()
        self._emit(now_ns, "restore")

    def reboot(self, now_ns: int = 0) -> None:
        """Power cycle: file labels persist on disk, every live process and
        in-flight label bucket is gone."""
        blob = self.snapshot()
        self.restore(blob, now_ns=now_ns)
        self._emit(now_ns, "reboot")

    crash = reboot
