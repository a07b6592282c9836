"""Control plane: connection install service, config rollout, placement.

The data plane never blocks on the controller. A switch that decides a new
connection keeps serving from its decision buffer; the controller turns the
install request into exact conn_dec entries (forward key at the deciding
switch, reversed key at the switch next to the connection source) that land
one round trip later.
"""

from __future__ import annotations

from dataclasses import dataclass

from .dataplane import Decision, InstallRequest, Switch
from .errors import CapacityExceeded
from .netcl.compiler import (
    CompiledPolicy,
    SwitchConfig,
    UpdatePlan,
    apply_plan,
    diff_configs,
    merge_to_single_switch,
)
from .header import FlowKey
from .topology import Topology


@dataclass(frozen=True)
class PendingInstall:
    switch_id: str
    key: FlowKey
    decision: Decision
    due_ns: int


@dataclass
class PlacementReport:
    per_switch: dict[str, int]
    single_switch_total: int
    reductions: dict[str, float]
    average_reduction: float

    def format(self) -> str:
        lines = [f"single switch deployment: {self.single_switch_total} entries"]
        for s, n in self.per_switch.items():
            red = self.reductions.get(s)
            extra = f" (reduction {red * 100:.1f}%)" if red is not None else ""
            lines.append(f"  {s}: {n} entries{extra}")
        lines.append(
            f"average reduction across enforcing switches: "
            f"{self.average_reduction * 100:.1f}%"
        )
        return "\n".join(lines)


class ControlPlane:
    def __init__(self, topology: Topology, compiled: CompiledPolicy, rtt_ns: int) -> None:
        self.topology = topology
        self.compiled = compiled
        self.rtt_ns = rtt_ns
        self.install_failures = 0
        self.log: list[str] = []

    def serve_conndec(self, req: InstallRequest) -> list[PendingInstall]:
        """One request fans out to the deciding switch and, for admitted
        connections, the reversed key near the source so return traffic is
        covered without a second decision."""
        due = req.created_ns + self.rtt_ns
        out = [PendingInstall(req.switch_id, req.key, req.decision, due)]
        if req.decision is Decision.ALLOW:
            try:
                src_switch = self.topology.switch_of_ip(req.key.src_ip)
            except Exception:
                src_switch = None
            if src_switch is not None:
                rev = PendingInstall(src_switch, req.key.reversed(), req.decision, due)
                if rev.switch_id != req.switch_id or rev.key != req.key:
                    out.append(rev)
        return out

    def perform_install(self, switches: dict[str, Switch], pending: PendingInstall) -> bool:
        sw = switches[pending.switch_id]
        try:
            sw.install_conn_dec(pending.key, pending.decision, pending.due_ns)
        except CapacityExceeded:
            self.install_failures += 1
            self.log.append(
                f"install-failed switch={pending.switch_id} key={pending.key}"
            )
            return False
        return True

    def plan_update(self, new_compiled: CompiledPolicy) -> UpdatePlan:
        return diff_configs(
            {s: c for s, c in self.compiled.configs.items()},
            {s: c for s, c in new_compiled.configs.items()},
        )

    def apply_update(self, switches: dict[str, Switch], new_compiled: CompiledPolicy) -> UpdatePlan:
        """Applies only the difference; untouched entries keep their state.
        Each switch's tables swap in one step so no packet observes a half
        applied config."""
        plan = self.plan_update(new_compiled)
        for sid, update in plan.per_switch.items():
            if update.empty or sid not in switches:
                continue
            switches[sid].set_config(apply_plan(switches[sid].config, update))
        self.compiled = new_compiled
        adds, removes = plan.counts()
        self.log.append(f"update applied adds={adds} removes={removes}")
        return plan

    def placement_report(self) -> PlacementReport:
        single = merge_to_single_switch(self.compiled, "all-in-one").entry_count()
        per_switch = {
            s: cfg.entry_count()
            for s, cfg in self.compiled.configs.items()
        }
        reductions = {
            s: 1.0 - (n / single)
            for s, n in per_switch.items()
            if n > 0 and single > 0
        }
        avg = sum(reductions.values()) / len(reductions) if reductions else 0.0
        return PlacementReport(
            per_switch=per_switch,
            single_switch_total=single,
            reductions=reductions,
            average_reduction=avg,
        )


def label_init_plan(compiled: CompiledPolicy, topology: Topology):
    """Start-of-day agent initialization: (host name, label, file bindings).
    Deterministic order by host name."""
    by_host: dict[str, dict] = {}
    for ip, label in compiled.host_labels.items():
        host = topology.host_by_ip[ip]
        by_host.setdefault(host.name, {"label": None, "files": []})
        by_host[host.name]["label"] = label
    for (host, path), tracker in sorted(compiled.file_trackers.items()):
        by_host.setdefault(host, {"label": None, "files": []})
        by_host[host]["files"].append((path, tracker))
    return [
        (name, entry["label"], tuple(entry["files"]))
        for name, entry in sorted(by_host.items())
    ]
