"""Command line front end."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .controlplane import ControlPlane
from .errors import DifcnetError
from .netcl import compile_program, diff_configs, parse_files
from .routes import DEFAULT_COVERAGE_ROWS, coverage_report
from .scenario import load_scenario, run_scenario
from .topology import load_topology


@click.group()
def main() -> None:
    """Network-level information flow control: policy tools and simulator."""


@main.command()
@click.argument("scenario", type=click.Path(exists=True))
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the full event trace to this file.")
@click.option("--quiet", is_flag=True, help="Only print failing checks.")
def run(scenario: str, trace_path: str | None, quiet: bool) -> None:
    """Run a scenario file and evaluate its expectations."""
    try:
        result = run_scenario(load_scenario(scenario))
    except DifcnetError as exc:
        raise click.ClickException(str(exc))
    for name, ok, detail in result.checks:
        if quiet and ok:
            continue
        status = "PASS" if ok else "FAIL"
        click.echo(f"[{status}] {name}: {detail}")
    if trace_path:
        Path(trace_path).write_text(result.trace)
        click.echo(f"trace written to {trace_path} ({len(result.network.trace)} lines)")
    if not result.ok:
        sys.exit(1)


@main.command()
@click.argument("topology", type=click.Path(exists=True))
@click.option("--target", default=None, help="Target host (default: first host).")
@click.option("--row", "rows", multiple=True,
              help="steps:allowed pair, e.g. 4:2 (repeatable). Defaults depend on the topology name.")
def routes(topology: str, target: str | None, rows: tuple[str, ...]) -> None:
    """Count lateral attack routes and report blocked fractions."""
    topo = load_topology(topology)
    target = target or topo.hosts[0].name
    if rows:
        row_spec = tuple(
            (int(r.split(":")[0]), int(r.split(":")[1])) for r in rows
        )
    else:
        row_spec = DEFAULT_COVERAGE_ROWS.get(topo.name)
        if row_spec is None:
            raise click.ClickException(
                f"no default rows for topology {topo.name!r}; pass --row steps:allowed"
            )
    n = len(topo.hosts) - 1
    click.echo(f"topology={topo.name} hosts={len(topo.hosts)} target={target} candidates={n}")
    report = coverage_report(topo, target, row_spec)
    click.echo(f"{'steps':>5} {'allowed':>7} {'routes':>12} {'filter%':>8} {'labels%':>8}  basis")
    for row in report:
        basis = f"sampled {row.evaluated}" if row.sampled else "exhaustive"
        click.echo(
            f"{row.steps:>5} {row.allowed:>7} {row.routes:>12} "
            f"{row.firewall_coverage:>8.1f} {row.policy_coverage:>8.1f}  {basis}"
        )


@main.command()
@click.argument("policies", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
def check(policies: tuple[str, ...], topology_path: str) -> None:
    """Parse and compile policies; report table usage per switch."""
    topo = load_topology(topology_path)
    try:
        program = parse_files(list(policies))
        compiled = compile_program(program, topo)
    except DifcnetError as exc:
        raise click.ClickException(str(exc))
    click.echo(
        f"{compiled.rule_count} rules, {len(compiled.host_labels)} labeled hosts, "
        f"{len(compiled.file_trackers)} tracked files, "
        f"{len(compiled.registry.name_to_id)} tags"
    )
    for sid, cfg in compiled.configs.items():
        if cfg.entry_count() == 0:
            continue
        click.echo(
            f"  {sid}: ternary={len(cfg.ternary_entries)} exact={len(cfg.exact_entries)} "
            f"tracker={len(cfg.tracker_entries)} privilege={len(cfg.privilege_entries)}"
        )


@main.command()
@click.argument("policies", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
def report(policies: tuple[str, ...], topology_path: str) -> None:
    """Show where entries land and the storage saved by placement."""
    topo = load_topology(topology_path)
    try:
        compiled = compile_program(parse_files(list(policies)), topo)
    except DifcnetError as exc:
        raise click.ClickException(str(exc))
    cp = ControlPlane(topo, compiled, rtt_ns=0)
    click.echo(cp.placement_report().format())


@main.command()
@click.option("--topology", "topology_path", required=True, type=click.Path(exists=True))
@click.option("--old", "old_paths", multiple=True, required=True, type=click.Path(exists=True))
@click.option("--new", "new_paths", multiple=True, required=True, type=click.Path(exists=True))
def apply(topology_path: str, old_paths: tuple[str, ...], new_paths: tuple[str, ...]) -> None:
    """Plan the incremental table update from one policy set to another."""
    topo = load_topology(topology_path)
    try:
        old = compile_program(parse_files(list(old_paths)), topo)
        new = compile_program(parse_files(list(new_paths)), topo)
    except DifcnetError as exc:
        raise click.ClickException(str(exc))
    plan = diff_configs(old.configs, new.configs)
    adds, removes = plan.counts()
    click.echo(f"plan: +{adds} entries, -{removes} entries")
    for sid, update in plan.per_switch.items():
        if update.empty:
            continue
        click.echo(f"  {sid}: +{len(update.adds)} -{len(update.removes)}")
        for kind, entry in update.adds:
            click.echo(f"    + [{kind}] {entry}")
        for kind, entry in update.removes:
            click.echo(f"    - [{kind}] {entry}")


if __name__ == "__main__":
    main()
