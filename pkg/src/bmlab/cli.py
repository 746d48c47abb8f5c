import sys

import click

from .errors import BMLabError, ConfigurationError
from .lab import emit_report, load_scenario, run_scenario
from .suites import SUITES, run_suite


def _summary(report):
    for r in report.records:
        status = "PASS" if r.passed else "FAIL"
        where = f" n={r.n}" if r.n is not None else ""
        extra = f"  ({r.error})" if r.error else ""
        click.echo(f"{status}  {r.name}{where}{extra}")
    click.echo(f"{sum(r.passed for r in report.records)}/{len(report.records)} checks passed")


@click.group()
def main():
    """Brunn-Minkowski stability lab."""


@main.command()
@click.argument("scenario", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Overrides the sampler seed.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports", show_default=True)
@click.option("--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def run(scenario, seed, out_dir, fmt):
    """Run a scenario file and write its report."""
    try:
        sc = load_scenario(scenario)
    except ConfigurationError as exc:
        raise click.UsageError(str(exc))
    report = run_scenario(sc, seed)
    paths = emit_report(report, out_dir, fmt)
    _summary(report)
    click.echo(f"report: {paths[0]}")
    sys.exit(0 if report.passed else 1)


@main.command()
@click.argument("suite", type=click.Choice(sorted(SUITES)))
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=0, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default="reports", show_default=True)
def check(suite, seed, out_dir):
    """Run a built-in suite."""
    try:
        report = run_suite(suite, seed)
        paths = emit_report(report, out_dir, "json")
    except (BMLabError, OSError) as exc:
        raise click.ClickException(str(exc))
    _summary(report)
    click.echo(f"report: {paths[0]}")
    sys.exit(0 if report.passed else 1)


@main.command("list-suites")
def list_suites():
    for name in sorted(SUITES):
        doc = (SUITES[name].__doc__ or "").strip().splitlines()
        click.echo(name + (f"  {doc[0]}" if doc else ""))


if __name__ == "__main__":
    main()
