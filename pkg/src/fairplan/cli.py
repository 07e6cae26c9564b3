"""Command line mirror of the planning service: solve, kpi, export, bench, serve."""

from __future__ import annotations

import json
import os
import sys

import click

from .demo import OBJECTIVE_PARAMETRIZATIONS
from .generator import GeneratorConfig, generate
from .lineplan import SolveBudget
from .mdp import REWARD_PARAMETRIZATIONS
from .model import load_instance_from_files
from .report import radar_csv, radar_data, kpis
from .service import STRATEGIES, PolicyCache, build_record, create_app, run_allocation

_DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def _resolve_paths(orders: str | None, context: str | None) -> tuple[str, str]:
    orders = orders or os.path.join(_DATA_DIR, "demo_orders.csv")
    context = context or os.path.join(_DATA_DIR, "demo_context.json")
    return orders, context


@click.group()
def main():
    """Two-layer production planning: line schedule plus worker allocation."""


@main.command()
@click.option("--orders", type=click.Path(exists=True), default=None, help="Orders CSV (default: bundled demo).")
@click.option("--context", type=click.Path(exists=True), default=None, help="Static context JSON (default: bundled demo).")
@click.option("--objective", type=click.Choice(sorted(OBJECTIVE_PARAMETRIZATIONS)), default="balanced")
@click.option("--reward", type=click.Choice(sorted(REWARD_PARAMETRIZATIONS)), default="balanced")
@click.option("--strategy", type=click.Choice(sorted(STRATEGIES)), default="greedy")
@click.option("--days", "days_to_plan", type=click.IntRange(1, 14), default=5)
@click.option("--seed", type=int, default=0)
@click.option("--out", type=click.Path(), default=None, help="Write the full record JSON here.")
def solve(orders, context, objective, reward, strategy, days_to_plan, seed, out):
    """Run both planning layers and print the KPI headline."""
    orders, context = _resolve_paths(orders, context)
    instance = load_instance_from_files(orders, context, horizon_days=days_to_plan)
    with open(orders, encoding="utf-8") as fh:
        orders_csv = fh.read()
    schedule, _, result = run_allocation(
        instance, objective, reward, strategy, seed, SolveBudget(), PolicyCache()
    )
    record = build_record(
        instance, orders_csv, objective, reward, strategy, days_to_plan, seed, schedule, result
    )
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=1)
        click.echo(f"record written to {out}")
    click.echo(
        f"{objective}/{reward}/{strategy}: status={schedule.status} C_max={schedule.makespan} "
        f"tardiness={schedule.total_tardiness} Z={schedule.objective} "
        f"return={result.total_return:.3f} unfilled={result.unfilled_slots}"
    )
    if record["kpis"]:
        k = record["kpis"]
        click.echo(
            f"KPIs: xi={k['mean_xi']:.3f} pi={k['mean_pi']:.3f} rho={k['mean_rho']:.3f} "
            f"fairness={k['fairness']:.3f}"
        )


@main.command()
@click.argument("record_path", type=click.Path(exists=True))
def kpi(record_path):
    """Print the KPI block of a stored record as CSV."""
    with open(record_path, encoding="utf-8") as fh:
        record = json.load(fh)
    record = record.get("record", record)
    summary = record["kpis"]
    if summary is None:
        click.echo("record carries no assignments", err=True)
        sys.exit(1)
    click.echo("metric,value")
    for key in ("mean_xi", "mean_pi", "mean_rho", "fairness", "assignments"):
        click.echo(f"{key},{summary[key]}")


@main.command()
@click.argument("record_path", type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write timeboxes JSON here (default: stdout).")
def export(record_path, out):
    """Emit the timebox list of a stored record."""
    with open(record_path, encoding="utf-8") as fh:
        record = json.load(fh)
    record = record.get("record", record)
    payload = json.dumps(record["timeboxes"], indent=1)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
        click.echo(f"timeboxes written to {out}")
    else:
        click.echo(payload)


@main.command()
@click.option("--instances", type=int, default=10, help="Number of random instances.")
@click.option("--seed", type=int, default=0)
@click.option("--strategy", type=click.Choice(sorted(STRATEGIES)), default="greedy")
@click.option("--out", type=click.Path(), default=None, help="Write the radar CSV here (default: stdout).")
def bench(instances, seed, strategy, out):
    """Sweep the reward parametrizations over random instances."""
    policies = PolicyCache()
    sums: dict[str, list[float]] = {name: [0.0, 0.0, 0.0] for name in REWARD_PARAMETRIZATIONS}
    for i in range(instances):
        instance = generate(GeneratorConfig(seed=seed + i))
        for reward in REWARD_PARAMETRIZATIONS:
            _, _, result = run_allocation(
                instance, "balanced", reward, strategy, seed + i, SolveBudget(), policies
            )
            if not result.env.assignments():
                continue
            summary = kpis(result)
            sums[reward][0] += summary.mean_xi
            sums[reward][1] += summary.mean_pi
            sums[reward][2] += summary.mean_rho
    from .report import KpiSummary

    table = {
        (strategy, reward): KpiSummary(
            mean_xi=acc[0] / instances,
            mean_pi=acc[1] / instances,
            mean_rho=acc[2] / instances,
            fairness=0.0,
            assignments=0,
            worker_mean_preference={},
        )
        for reward, acc in sums.items()
    }
    payload = radar_csv(radar_data(table))
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(payload)
        click.echo(f"radar CSV written to {out}")
    else:
        click.echo(payload, nl=False)


@main.command()
@click.option("--port", type=int, default=None, help="Port (default: FAIRPLAN_PORT or PORT or 8000).")
@click.option("--host", default="127.0.0.1")
@click.option("--context", type=click.Path(exists=True), default=None, help="Static context JSON.")
@click.option("--records-dir", type=click.Path(), default=None)
def serve(port, host, context, records_dir):
    """Run the HTTP planning service."""
    import uvicorn

    if port is None:
        port = int(os.environ.get("FAIRPLAN_PORT", os.environ.get("PORT", "8000")))
    ctx = None
    if context:
        with open(context, encoding="utf-8") as fh:
            ctx = json.load(fh)
    app = create_app(context=ctx, records_dir=records_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
