"""Syntax tree for the policy language.

Statements are kept in source order; rule priority is the rule's ordinal in
that order (earlier = higher priority, lower number wins). All nodes are
frozen so they can be compared structurally and used in sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class LabelHost:
    """label_host(ip=<name>, label={T1, T2, ...})"""

    host: str
    tags: tuple[str, ...]
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class LabelFile:
    """label_file(ip=<name>, file=<path>) - assigns a fresh tracker id."""

    host: str
    path: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Comparison:
    """<field> == <value> or <field> != <value>"""

    lhs: str  # src_ip | dst_ip | tracker_id
    op: str  # "==" | "!="
    rhs: str  # name, dotted ip, "any", or "<path>@<host>" for tracker_id


@dataclass(frozen=True)
class Contains:
    """pkt_label contains <tag> or pkt_label contains {T1, T2}"""

    tags: tuple[str, ...]


Conjunct = Comparison | Contains


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class Allow:
    pass


@dataclass(frozen=True)
class Alert:
    pass


@dataclass(frozen=True)
class Reroute:
    port: int


@dataclass(frozen=True)
class Modify:
    field_name: str
    value: str


@dataclass(frozen=True)
class Declassify:
    tags: tuple[str, ...]


@dataclass(frozen=True)
class Endorse:
    tags: tuple[str, ...]


Action = Drop | Allow | Alert | Reroute | Modify | Declassify | Endorse


@dataclass(frozen=True)
class Rule:
    """if match(<conjunct && conjunct ...>) then <action>"""

    conjuncts: tuple[Conjunct, ...]
    action: Action
    priority: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Program:
    """A parsed policy source. An implicit drop-all rule with the lowest
    priority always follows the explicit rules; it is represented by the
    matching stage, not by a node here."""

    statements: tuple[LabelHost | LabelFile | Rule, ...]

    @property
    def labelings(self) -> tuple[LabelHost | LabelFile, ...]:
        return tuple(s for s in self.statements if not isinstance(s, Rule))

    @property
    def rules(self) -> tuple[Rule, ...]:
        return tuple(s for s in self.statements if isinstance(s, Rule))


def format_tags(tags: tuple[str, ...]) -> str:
    return "{" + ", ".join(tags) + "}"


def format_conjunct(c: Conjunct) -> str:
    if isinstance(c, Contains):
        if len(c.tags) == 1:
            return f"pkt_label contains {c.tags[0]}"
        return f"pkt_label contains {format_tags(c.tags)}"
    return f"{c.lhs}{c.op}{c.rhs}"


def format_action(a: Action) -> str:
    if isinstance(a, Drop):
        return "drop"
    if isinstance(a, Allow):
        return "allow"
    if isinstance(a, Alert):
        return "alert"
    if isinstance(a, Reroute):
        return f"reroute({a.port})"
    if isinstance(a, Modify):
        return f"modify({a.field_name}={a.value})"
    if isinstance(a, Declassify):
        return f"declassify({format_tags(a.tags)})"
    return f"endorse({format_tags(a.tags)})"


def format_program(program: Program) -> str:
    """Render a program back to policy text. Reparsing the result yields a
    structurally equal program."""
    lines = []
    for stmt in program.statements:
        if isinstance(stmt, LabelHost):
            lines.append(f"label_host(ip={stmt.host}, label={format_tags(stmt.tags)})")
        elif isinstance(stmt, LabelFile):
            lines.append(f"label_file(ip={stmt.host}, file={stmt.path})")
        else:
            pred = " && ".join(format_conjunct(c) for c in stmt.conjuncts)
            lines.append(f"if match({pred}) then {format_action(stmt.action)}")
    return "\n".join(lines) + "\n"
