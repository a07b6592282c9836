"""Label algebra: tags, labels, capabilities, and the flow rules over them.

A label is a set of up to 256 tags, stored as a bitmap. Tag index 0 maps to
the most significant bit of the first byte of the wire encoding, so the
bitmap is kept as a plain int with bit i of the *tag space* at integer bit
(255 - i). All operations are pure; labels are immutable values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import CapabilityViolation, UnknownTag

TAG_SPACE = 256
LABEL_MASK = (1 << TAG_SPACE) - 1


class TagKind(Enum):
    SECRECY = "secrecy"
    INTEGRITY = "integrity"


def tag_bit(index: int) -> int:
    """Bitmap value of a single tag index (bit 0 = MSB of byte 0)."""
    if not 0 <= index < TAG_SPACE:
        raise ValueError(f"tag index {index} out of range [0, {TAG_SPACE})")
    return 1 << (TAG_SPACE - 1 - index)


@dataclass(frozen=True)
class Label:
    """An immutable set of tags, represented as a 256-bit bitmap."""

    bits: int = 0

    def __post_init__(self):
        if not 0 <= self.bits <= LABEL_MASK:
            raise ValueError("label bitmap out of range")

    @classmethod
    def of(cls, *indexes: int) -> Label:
        bits = 0
        for i in indexes:
            bits |= tag_bit(i)
        return cls(bits)

    def union(self, other: Label) -> Label:
        return Label(self.bits | other.bits)

    def intersection(self, other: Label) -> Label:
        return Label(self.bits & other.bits)

    def without(self, mask: int) -> Label:
        return Label(self.bits & ~mask & LABEL_MASK)

    def issubset(self, other: Label) -> bool:
        return self.bits & ~other.bits == 0

    def issuperset(self, other: Label) -> bool:
        return other.bits & ~self.bits == 0

    def contains_all(self, mask: int) -> bool:
        return self.bits & mask == mask

    def has(self, index: int) -> bool:
        return bool(self.bits & tag_bit(index))

    def indexes(self) -> list[int]:
        return [i for i in range(TAG_SPACE) if self.has(i)]

    def __bool__(self) -> bool:
        return self.bits != 0

    def __or__(self, other: Label) -> Label:
        return self.union(other)

    def __and__(self, other: Label) -> Label:
        return self.intersection(other)


EMPTY_LABEL = Label(0)


@dataclass(frozen=True)
class CapabilitySet:
    """Tags the holder may add (plus) or remove (minus), as bitmaps.

    The two sets are independent: a tag may appear in both, either, or
    neither.
    """

    plus: int = 0
    minus: int = 0


@dataclass
class TagRegistry:
    """Deployment-wide mapping of tag names to bit indexes and kinds.

    A (name, index, kind) triple never changes once assigned. Indexes are
    handed out in registration order, which makes compilation deterministic
    for a fixed policy source.
    """

    name_to_id: dict[str, int] = field(default_factory=dict)
    kind: dict[int, TagKind] = field(default_factory=dict)
    next_free: int = 0

    def register(self, name: str, kind: TagKind) -> int:
        if name in self.name_to_id:
            idx = self.name_to_id[name]
            if self.kind[idx] is not kind:
                raise UnknownTag(
                    f"tag {name!r} already registered as {self.kind[idx].value}, "
                    f"cannot re-register as {kind.value}"
                )
            return idx
        if self.next_free >= TAG_SPACE:
            raise UnknownTag(f"tag space exhausted registering {name!r}")
        idx = self.next_free
        self.name_to_id[name] = idx
        self.kind[idx] = kind
        self.next_free += 1
        return idx

    def lookup(self, name: str) -> int:
        try:
            return self.name_to_id[name]
        except KeyError:
            raise UnknownTag(f"unknown tag {name!r}") from None

    def name_of(self, index: int) -> str:
        for name, idx in self.name_to_id.items():
            if idx == index:
                return name
        raise UnknownTag(f"no tag registered at index {index}")

    def label_of(self, names) -> Label:
        bits = 0
        for name in names:
            bits |= tag_bit(self.lookup(name))
        return Label(bits)

    def kind_of(self, name: str) -> TagKind:
        return self.kind[self.lookup(name)]

    def secrecy_part(self, label: Label) -> Label:
        return Label(label.bits & self._kind_mask(TagKind.SECRECY))

    def integrity_part(self, label: Label) -> Label:
        return Label(label.bits & self._kind_mask(TagKind.INTEGRITY))

    def _kind_mask(self, kind: TagKind) -> int:
        mask = 0
        for idx, k in self.kind.items():
            if k is kind:
                mask |= tag_bit(idx)
        return mask

    def format_label(self, label: Label) -> str:
        names = sorted(self.name_of(i) for i in label.indexes())
        return "{" + ", ".join(names) + "}"


def merge(sender: Label, receiver: Label) -> Label:
    """Implicit label change on message receipt: the receiver absorbs the
    sender's tags. Plain union over the whole bitmap."""
    return sender.union(receiver)


def safe_message(sender: Label, receiver: Label, registry: TagRegistry) -> bool:
    """Check the explicit-flow rules: secrecy tags may only flow to a
    superset, integrity tags only to a subset."""
    s_p = registry.secrecy_part(sender)
    s_q = registry.secrecy_part(receiver)
    i_p = registry.integrity_part(sender)
    i_q = registry.integrity_part(receiver)
    return s_p.issubset(s_q) and i_p.issuperset(i_q)


def message_deliverable(sender: Label, message: Label, receiver: Label) -> bool:
    """A message labeled L_m is deliverable iff L_p <= L_m <= L_q."""
    return sender.issubset(message) and message.issubset(receiver)


def declassify_label(l: Label, mask: int, caps: CapabilitySet) -> Label:
    """Remove the tags in mask. Every removed tag must be authorized by a
    minus capability."""
    if mask & ~caps.minus:
        raise CapabilityViolation("declassification mask exceeds minus capabilities")
    return l.without(mask)


def endorse_label(l: Label, mask: int, caps: CapabilitySet) -> Label:
    """Add the tags in mask. Every added tag must be authorized by a plus
    capability."""
    if mask & ~caps.plus:
        raise CapabilityViolation("endorsement mask exceeds plus capabilities")
    return Label((l.bits | mask) & LABEL_MASK)


def external_label() -> Label:
    """Remote, agent-less hosts are modeled as an untrusted process with an
    empty label."""
    return EMPTY_LABEL
