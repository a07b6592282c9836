"""Compiles a parsed policy program into per-switch configurations.

Placement: a rule lands only on the switch(es) directly attached to the
rule's destination address(es); a destination of `any` (or no destination
conjunct) places the rule on every host-attached switch plus the gateway.
Intermediate switches never hold policy state.

Table selection: a rule whose predicate constrains the packet label (via
`contains`, or via a source name that carries a host-label assignment)
compiles to a ternary entry; a rule keyed on a tracker id compiles to a
tracker entry; everything else is exact-match. A ternary entry may also
carry exact field values, so mixed predicates stay a single entry.

Source semantics: `src_ip==X` where X has a `label_host` assignment matches
on the packet label (label must cover X's assigned tags), because the label
is what identifies traffic that originated from, or was relayed through, X.
A raw address or unlabeled name matches the source address field exactly.
Destinations always match the address field.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from ..errors import CompileError, PlacementError, UnknownName
from ..labels import Label, TagKind, TagRegistry, tag_bit
from ..topology import Topology
from .ast import (
    Action,
    Allow,
    Alert,
    Comparison,
    Contains,
    Declassify,
    Drop,
    Endorse,
    LabelFile,
    LabelHost,
    Modify,
    Program,
    Reroute,
    Rule,
)

MODIFIABLE_FIELDS = ("ttl", "options")


@dataclass(frozen=True)
class FieldMatch:
    """Exact match over an address field: membership in `values`, inverted
    when `negate` is set."""

    values: frozenset[str]
    negate: bool = False

    def matches(self, ip: str) -> bool:
        return (ip in self.values) != self.negate


@dataclass(frozen=True)
class MatchSpec:
    """One compiled match pattern over label bits, tracker id, and exact
    address fields. label semantics are ternary: hits iff
    (pkt_bits & label_mask) == label_value."""

    label_mask: int = 0
    label_value: int = 0
    tracker_match: int = 0  # 0 = no tracker predicate
    src: FieldMatch | None = None
    dst: FieldMatch | None = None

    def matches(self, label_bits: int, tracker: int, src_ip: str, dst_ip: str) -> bool:
        if label_bits & self.label_mask != self.label_value:
            return False
        if self.tracker_match and tracker != self.tracker_match:
            return False
        if self.src is not None and not self.src.matches(src_ip):
            return False
        if self.dst is not None and not self.dst.matches(dst_ip):
            return False
        return True

    @property
    def is_ternary(self) -> bool:
        return self.label_mask != 0

    @property
    def is_tracker(self) -> bool:
        return self.label_mask == 0 and self.tracker_match != 0


@dataclass(frozen=True)
class TableEntry:
    match: MatchSpec
    action: Action
    priority: int
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PrivilegeEntry:
    """Declassify/endorse stage entry: on match, clear or set `mask` bits in
    the packet label. The tracker id is never touched."""

    match: MatchSpec
    mask: int
    direction: str  # "declassify" | "endorse"
    priority: int
    source_line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class SwitchConfig:
    switch_id: str
    ternary_entries: tuple[TableEntry, ...] = ()
    exact_entries: tuple[TableEntry, ...] = ()
    tracker_entries: tuple[TableEntry, ...] = ()
    privilege_entries: tuple[PrivilegeEntry, ...] = ()
    init_packets: tuple[tuple[str, Label], ...] = ()  # (host ip, label)

    def entry_count(self) -> int:
        return (
            len(self.ternary_entries)
            + len(self.exact_entries)
            + len(self.tracker_entries)
            + len(self.privilege_entries)
        )

    def all_entries(self) -> tuple[TableEntry, ...]:
        return self.ternary_entries + self.exact_entries + self.tracker_entries


@dataclass
class CompiledPolicy:
    program: Program
    registry: TagRegistry
    configs: dict[str, SwitchConfig]
    host_labels: dict[str, Label]  # ip -> assigned label
    file_trackers: dict[tuple[str, str], int]  # (host name, path) -> tracker id
    rule_count: int = 0

    def label_of_ip(self, ip: str) -> Label:
        return self.host_labels.get(ip, Label(0))


def _register_tags(program: Program, registry: TagRegistry) -> None:
    # Kind inference: a tag endorsed anywhere is integrity, everything else
    # (labeled, contained, declassified) is secrecy. A tag pulled both ways
    # by privilege actions is a contradiction. Bit positions follow first
    # appearance in source order, independent of kind.
    required: dict[str, TagKind] = {}
    for stmt in program.statements:
        if not isinstance(stmt, Rule):
            continue
        if isinstance(stmt.action, Endorse):
            kind = TagKind.INTEGRITY
        elif isinstance(stmt.action, Declassify):
            kind = TagKind.SECRECY
        else:
            continue
        for t in stmt.action.tags:
            if required.setdefault(t, kind) is not kind:
                raise CompileError(
                    f"tag {t!r} cannot be both declassified and endorsed"
                )

    def kind_for(t: str) -> TagKind:
        return required.get(t, TagKind.SECRECY)

    for stmt in program.statements:
        if isinstance(stmt, LabelHost):
            for t in stmt.tags:
                registry.register(t, kind_for(t))
        elif isinstance(stmt, Rule):
            for c in stmt.conjuncts:
                if isinstance(c, Contains):
                    for t in c.tags:
                        registry.register(t, kind_for(t))
            if isinstance(stmt.action, (Endorse, Declassify)):
                for t in stmt.action.tags:
                    registry.register(t, kind_for(t))


def _tag_mask(tags, registry: TagRegistry) -> int:
    mask = 0
    for t in tags:
        mask |= tag_bit(registry.lookup(t))
    return mask


def _check_privilege_kinds(action, registry: TagRegistry) -> None:
    if isinstance(action, Declassify):
        for t in action.tags:
            if registry.kind_of(t) is not TagKind.SECRECY:
                raise CompileError(f"declassify({t}) requires a secrecy tag")
    elif isinstance(action, Endorse):
        for t in action.tags:
            if registry.kind_of(t) is not TagKind.INTEGRITY:
                raise CompileError(f"endorse({t}) requires an integrity tag")


def compile_program(program: Program, topology: Topology) -> CompiledPolicy:
    registry = TagRegistry()
    _register_tags(program, registry)

    # Host label assignments. Directive names may be hosts or groups; in the
    # group case every member receives the label. Multiple directives for
    # the same host union.
    host_labels: dict[str, Label] = {}
    directive_labels: dict[str, Label] = {}  # directive name -> tag set
    file_trackers: dict[tuple[str, str], int] = {}
    next_tracker = 1
    for stmt in program.labelings:
        if isinstance(stmt, LabelHost):
            label = registry.label_of(stmt.tags)
            directive_labels[stmt.host] = directive_labels.get(stmt.host, Label(0)) | label
            for ip in topology.resolve(stmt.host):
                host_labels[ip] = host_labels.get(ip, Label(0)) | label
        elif isinstance(stmt, LabelFile):
            key = (stmt.host, stmt.path)
            if key not in file_trackers:
                file_trackers[key] = next_tracker
                next_tracker += 1

    all_placements = tuple(topology.host_switches()) + (
        (topology.gateway,) if topology.gateway not in topology.host_switches() else ()
    )

    ternary: dict[str, list[TableEntry]] = {s: [] for s in topology.switches}
    exact: dict[str, list[TableEntry]] = {s: [] for s in topology.switches}
    tracker_tab: dict[str, list[TableEntry]] = {s: [] for s in topology.switches}
    privilege: dict[str, list[PrivilegeEntry]] = {s: [] for s in topology.switches}

    for rule in program.rules:
        label_mask = 0
        tracker_match = 0
        src_field: FieldMatch | None = None
        dst_field: FieldMatch | None = None
        placements: tuple[str, ...] | None = None

        for c in rule.conjuncts:
            if isinstance(c, Contains):
                label_mask |= _tag_mask(c.tags, registry)
                continue
            assert isinstance(c, Comparison)
            if c.lhs == "tracker_id":
                if c.op != "==":
                    raise CompileError(
                        f"line {rule.line}: tracker predicates support == only"
                    )
                if "@" not in c.rhs:
                    raise CompileError(
                        f"line {rule.line}: tracker value must be <path>@<host>"
                    )
                path, host = c.rhs.rsplit("@", 1)
                key = (host, path)
                if key not in file_trackers:
                    raise CompileError(
                        f"line {rule.line}: no tracker assigned for {c.rhs}"
                    )
                tracker_match = file_trackers[key]
                continue
            if c.lhs == "src_ip":
                if c.rhs == "any":
                    continue
                if c.op == "==" and c.rhs in directive_labels:
                    # labeled source: match provenance via the label bits
                    label_mask |= directive_labels[c.rhs].bits
                    continue
                if c.op == "!=" and c.rhs in directive_labels:
                    raise CompileError(
                        f"line {rule.line}: != is not supported on labeled source {c.rhs!r}"
                    )
                try:
                    ips = topology.resolve(c.rhs)
                except UnknownName as exc:
                    raise CompileError(f"line {rule.line}: {exc}") from None
                src_field = FieldMatch(frozenset(ips), negate=(c.op == "!="))
                continue
            # dst_ip
            if c.rhs == "any":
                placements = all_placements
                continue
            try:
                ips = topology.resolve(c.rhs)
            except UnknownName as exc:
                raise CompileError(f"line {rule.line}: {exc}") from None
            dst_field = FieldMatch(frozenset(ips), negate=(c.op == "!="))
            if c.op == "==":
                try:
                    placements = tuple(
                        dict.fromkeys(topology.switch_of_ip(ip) for ip in ips)
                    )
                except Exception:
                    raise PlacementError(
                        f"line {rule.line}: destination {c.rhs!r} has no attached switch"
                    ) from None
            else:
                # negated destination can match traffic to any switch
                placements = all_placements

        if placements is None:
            placements = all_placements

        if isinstance(rule.action, Reroute):
            for s in placements:
                if rule.action.port >= len(topology.ports(s)):
                    raise CompileError(
                        f"line {rule.line}: switch {s} has no egress port {rule.action.port}"
                    )
        if isinstance(rule.action, Modify) and rule.action.field_name not in MODIFIABLE_FIELDS:
            raise CompileError(
                f"line {rule.line}: field {rule.action.field_name!r} is not modifiable"
            )

        spec = MatchSpec(
            label_mask=label_mask,
            label_value=label_mask,
            tracker_match=tracker_match,
            src=src_field,
            dst=dst_field,
        )

        if isinstance(rule.action, (Declassify, Endorse)):
            _check_privilege_kinds(rule.action, registry)
            mask = _tag_mask(rule.action.tags, registry)
            direction = "declassify" if isinstance(rule.action, Declassify) else "endorse"
            entry = PrivilegeEntry(spec, mask, direction, rule.priority, rule.line)
            for s in placements:
                privilege[s].append(entry)
            continue

        entry = TableEntry(spec, rule.action, rule.priority, rule.line)
        if spec.is_ternary:
            target = ternary
        elif spec.is_tracker:
            target = tracker_tab
        else:
            target = exact
        for s in placements:
            target[s].append(entry)

    init: dict[str, list[tuple[str, Label]]] = {s: [] for s in topology.switches}
    for ip in sorted(host_labels):
        init[topology.switch_of_ip(ip)].append((ip, host_labels[ip]))

    configs = {
        s: SwitchConfig(
            switch_id=s,
            ternary_entries=tuple(ternary[s]),
            exact_entries=tuple(exact[s]),
            tracker_entries=tuple(tracker_tab[s]),
            privilege_entries=tuple(privilege[s]),
            init_packets=tuple(init[s]),
        )
        for s in topology.switches
    }
    return CompiledPolicy(
        program=program,
        registry=registry,
        configs=configs,
        host_labels=host_labels,
        file_trackers=file_trackers,
        rule_count=len(program.rules),
    )


def merge_to_single_switch(compiled: CompiledPolicy, switch_id: str) -> SwitchConfig:
    """Collapse a deployment onto one switch holding every entry, used to
    check that distribution never changes verdicts."""
    tern: list[TableEntry] = []
    exact: list[TableEntry] = []
    track: list[TableEntry] = []
    priv: list[PrivilegeEntry] = []
    init: list[tuple[str, Label]] = []
    for cfg in compiled.configs.values():
        for e in cfg.ternary_entries:
            if e not in tern:
                tern.append(e)
        for e in cfg.exact_entries:
            if e not in exact:
                exact.append(e)
        for e in cfg.tracker_entries:
            if e not in track:
                track.append(e)
        for e in cfg.privilege_entries:
            if e not in priv:
                priv.append(e)
        init.extend(cfg.init_packets)
    return SwitchConfig(
        switch_id=switch_id,
        ternary_entries=tuple(sorted(tern, key=lambda e: e.priority)),
        exact_entries=tuple(sorted(exact, key=lambda e: e.priority)),
        tracker_entries=tuple(sorted(track, key=lambda e: e.priority)),
        privilege_entries=tuple(sorted(priv, key=lambda e: e.priority)),
        init_packets=tuple(init),
    )


# --- dynamic update ------------------------------------------------------

TABLE_KINDS = ("ternary", "exact", "tracker", "privilege", "init")


@dataclass(frozen=True)
class SwitchUpdate:
    adds: tuple[tuple[str, object], ...]  # (table kind, entry)
    removes: tuple[tuple[str, object], ...]

    @property
    def empty(self) -> bool:
        return not self.adds and not self.removes


@dataclass(frozen=True)
class UpdatePlan:
    per_switch: dict[str, SwitchUpdate]

    @property
    def empty(self) -> bool:
        return all(u.empty for u in self.per_switch.values())

    def counts(self) -> tuple[int, int]:
        adds = sum(len(u.adds) for u in self.per_switch.values())
        removes = sum(len(u.removes) for u in self.per_switch.values())
        return adds, removes


def _config_items(cfg: SwitchConfig):
    for kind, entries in (
        ("ternary", cfg.ternary_entries),
        ("exact", cfg.exact_entries),
        ("tracker", cfg.tracker_entries),
        ("privilege", cfg.privilege_entries),
        ("init", cfg.init_packets),
    ):
        for e in entries:
            yield (kind, e)


def diff_configs(old: dict[str, SwitchConfig], new: dict[str, SwitchConfig]) -> UpdatePlan:
    """Entries common to both sides (structurally equal match, action, and
    priority) are untouched; the plan lists only real adds and removes."""
    plan: dict[str, SwitchUpdate] = {}
    for s in dict.fromkeys(list(old) + list(new)):
        old_items = list(_config_items(old[s])) if s in old else []
        new_items = list(_config_items(new[s])) if s in new else []
        old_set = set(old_items)
        new_set = set(new_items)
        adds = tuple(i for i in new_items if i not in old_set)
        removes = tuple(i for i in old_items if i not in new_set)
        plan[s] = SwitchUpdate(adds=adds, removes=removes)
    return UpdatePlan(plan)


def apply_plan(cfg: SwitchConfig, update: SwitchUpdate) -> SwitchConfig:
    """Pure application of one switch's update; raises KeyError style errors
    via the control plane wrapper instead (see controlplane.apply_update)."""
    buckets: dict[str, list] = {k: [] for k in TABLE_KINDS}
    for kind, entry in _config_items(cfg):
        buckets[kind].append(entry)
    for kind, entry in update.removes:
        buckets[kind].remove(entry)
    for kind, entry in update.adds:
        buckets[kind].append(entry)
    for kind in ("ternary", "exact", "tracker", "privilege"):
        buckets[kind].sort(key=lambda e: e.priority)
    return replace(
        cfg,
        ternary_entries=tuple(buckets["ternary"]),
        exact_entries=tuple(buckets["exact"]),
        tracker_entries=tuple(buckets["tracker"]),
        privilege_entries=tuple(buckets["privilege"]),
        init_packets=tuple(buckets["init"]),
    )
