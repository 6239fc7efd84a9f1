"""`dada` command line: compile MUD profiles, run/replay scenarios, serve
the gateway, and export/import shared profiles.

Exit codes for `dada compile`: 0 clean, 2 compiled with warnings only,
1 on errors (malformed document, validation violations).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .. import compiler, mud, simulator
from ..netcontext import load_context
from ..profiler import ProfileStore, import_profile, merge_profiles
from .config import load_config


@click.group()
def main():
    """Human-centred home-network security gateway (desk scale)."""


@main.command("compile")
@click.argument("mud_path", type=click.Path(exists=True))
@click.option("--context", "context_path", required=True, type=click.Path(exists=True))
@click.option("--device", "device_mac", default=None,
              help="Device MAC; default: the context device bound to this MUD URL.")
@click.option("--out", "out_path", default=None, type=click.Path(),
              help="Write rules as JSON lines instead of stdout.")
@click.option("--diff", "diff_path", default=None, type=click.Path(exists=True),
              help="Diff against a previously exported rule file.")
def cli_compile(mud_path, context_path, device_mac, out_path, diff_path):
    """Compile a MUD profile against a network context."""
    try:
        profile = mud.load_mud_file(mud_path)
    except mud.MudError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    violations = mud.validate_profile(profile)
    if violations:
        for v in violations:
            click.echo(f"violation: {v.path}: {v.rule} {v.detail}", err=True)
        sys.exit(1)

    ctx = load_context(context_path)
    if device_mac is None:
        matches = [d for d in ctx.devices if d.mud_url == profile.mud_url]
        if not matches:
            click.echo(f"error: no context device bound to {profile.mud_url}", err=True)
            sys.exit(1)
        device = matches[0]
    else:
        device = ctx.device_by_mac(device_mac)
        if device is None:
            click.echo(f"error: device {device_mac} not in context", err=True)
            sys.exit(1)

    ruleset, warnings = compiler.compile(profile, ctx, device)
    lines = [json.dumps(r.to_json()) for r in ruleset.rules]
    lines.append(json.dumps({"default_verdict": ruleset.default_verdict,
                             "device_mac": ruleset.device_mac}))
    if out_path:
        Path(out_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        for line in lines:
            click.echo(line)

    if diff_path:
        old_rules = []
        with open(diff_path, "r", encoding="utf-8") as fh:
            for i, line in enumerate(fh):
                d = json.loads(line)
                if "default_verdict" in d:
                    continue
                old_rules.append(compiler.ConcreteRule(
                    priority=d["priority"], direction=d["direction"],
                    remote_ips=tuple(d["remote_ips"]), protocol=d["protocol"],
                    remote_port=mud.PortRange(*d["remote_port"]) if d["remote_port"] else None,
                    local_port=mud.PortRange(*d["local_port"]) if d["local_port"] else None,
                    verdict_kind=d["verdict_kind"],
                    rate=mud.RateSpec(**d["rate"]) if d["rate"] else None,
                    provenance=d["provenance"]))
        old = compiler.RuleSet(device_mac=ruleset.device_mac, rules=old_rules)
        delta = compiler.diff_rulesets(old, ruleset)
        click.echo(f"delta: +{len(delta.added)} -{len(delta.removed)}", err=True)
        for r in delta.added:
            click.echo("+ " + json.dumps(r.to_json()), err=True)
        for r in delta.removed:
            click.echo("- " + json.dumps(r.to_json()), err=True)

    for w in warnings:
        click.echo(f"warning: {w.code}: {w.detail}", err=True)
    sys.exit(2 if warnings else 0)


@main.command("simulate")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out-dir", type=click.Path(), default=None,
              help="Write events.jsonl / verdicts.jsonl / metrics.json here.")
@click.option("--assert", "check", is_flag=True,
              help="Check scenario-embedded expectations (CI mode).")
def cli_simulate(scenario_path, seed, out_dir, check):
    """Run a scenario and print the metrics summary."""
    try:
        scenario = simulator.load_scenario(scenario_path)
    except (simulator.InvalidScenario, OSError, ValueError, KeyError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    if seed is not None:
        scenario.seed = seed
    result = simulator.run_scenario(scenario)
    click.echo(json.dumps(result.metrics.to_json(), indent=2))

    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        simulator.write_trace(out / "events.jsonl", result.events)
        result.datapath.export_verdicts(out / "verdicts.jsonl")
        result.datapath.export_latency_csv(out / "latency.csv")
        (out / "metrics.json").write_text(
            json.dumps(result.metrics.to_json(), indent=2), encoding="utf-8")

    if check:
        failures = simulator.check_expectations(result.metrics, scenario.expectations)
        for f in failures:
            click.echo(f"ASSERT FAIL: {f}", err=True)
        if failures:
            sys.exit(1)
        click.echo("all expectations hold", err=True)


@main.command("replay")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.argument("trace_path", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), default=None)
def cli_replay(scenario_path, trace_path, out_path):
    """Replay a recorded event trace through the pipeline."""
    scenario = simulator.load_scenario(scenario_path)
    try:
        result = simulator.replay(scenario, trace_path)
    except simulator.SchemaError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(json.dumps(result.metrics.to_json(), indent=2))
    if out_path:
        result.datapath.export_verdicts(out_path)


@main.command("serve")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def cli_serve(config_path):
    """Run the HTTP API, event stream, and bus client until shutdown."""
    import uvicorn

    from .api import create_app
    from .bus import InMemoryBus

    config = load_config(config_path)
    app = create_app(config)
    app.state.gateway.attach_bus(InMemoryBus())
    host, _, port = config.http_listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8420))


@main.group("profiles")
def cli_profiles():
    """Export or import shared pseudonymous device profiles."""


@cli_profiles.command("export")
@click.argument("class_id")
@click.option("--store", "store_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def cli_profiles_export(class_id, store_dir, out_path):
    store = ProfileStore(store_dir)
    profile = store.load(class_id)
    if profile is None:
        click.echo(f"error: no profile for class {class_id}", err=True)
        sys.exit(1)
    from ..profiler import export_profile
    Path(out_path).write_text(json.dumps(export_profile(profile), indent=2),
                              encoding="utf-8")
    click.echo(f"exported {class_id}")


@cli_profiles.command("import")
@click.argument("doc_path", type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path())
def cli_profiles_import(doc_path, store_dir):
    store = ProfileStore(store_dir)
    incoming = import_profile(json.loads(Path(doc_path).read_text(encoding="utf-8")))
    local = store.load(incoming.class_id)
    merged = incoming if local is None else merge_profiles(local, incoming)
    store.save(merged)
    click.echo(f"imported {incoming.class_id} (sample_count={merged.sample_count})")


if __name__ == "__main__":
    main()
