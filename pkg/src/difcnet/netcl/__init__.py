"""Policy language: parser, AST, and compiler to switch table entries."""

from .ast import (
    Action,
    Alert,
    Allow,
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
    format_program,
)
from .compiler import (
    CompiledPolicy,
    FieldMatch,
    MatchSpec,
    PrivilegeEntry,
    SwitchConfig,
    TableEntry,
    UpdatePlan,
    apply_plan,
    compile_program,
    diff_configs,
    merge_to_single_switch,
)
from .parser import parse, parse_files

__all__ = [
    "Action",
    "Alert",
    "Allow",
    "Comparison",
    "Contains",
    "Declassify",
    "Drop",
    "Endorse",
    "LabelFile",
    "LabelHost",
    "Modify",
    "Program",
    "Reroute",
    "Rule",
    "format_program",
    "CompiledPolicy",
    "FieldMatch",
    "MatchSpec",
    "PrivilegeEntry",
    "SwitchConfig",
    "TableEntry",
    "UpdatePlan",
    "apply_plan",
    "compile_program",
    "diff_configs",
    "merge_to_single_switch",
    "parse",
    "parse_files",
]
