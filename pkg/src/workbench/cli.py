"""Command line entry points: ``workbench serve`` and ``workbench eval run``."""

from __future__ import annotations

import sys

import click

from .config import load_config


@click.group()
def main():
    """Human-intervenable agent workbench."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; WORKBENCH_* env vars override it.")
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
def serve(config_path, host, port):
    """Run the gateway server."""
    from dataclasses import replace

    from .gateway import serve as run_server

    cfg = load_config(config_path)
    if host:
        cfg = replace(cfg, host=host)
    if port:
        cfg = replace(cfg, port=port)
    run_server(cfg)


@main.group(name="eval")
def eval_group():
    """Offline evaluation commands."""


@eval_group.command(name="run")
@click.option("--suite", "suite_dir", required=True, type=click.Path(exists=True, file_okay=False),
              help="Directory of JSON case files.")
@click.option("--report", "report_path", required=True, type=click.Path(),
              help="Where to write the JSON report.")
@click.option("--jobs", type=int, default=4, show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def eval_run(suite_dir, report_path, jobs, config_path):
    """Replay a fixture suite and score exact match per level."""
    from .evalharness import load_suite, render_table, run_suite, write_report

    cfg = load_config(config_path)
    cases = load_suite(suite_dir)
    report = run_suite(cases, cfg, jobs=jobs)
    write_report(report, report_path)
    click.echo(render_table(report))
    click.echo(f"report written to {report_path}")
    failed = [c for c in report.cases if not c.passed]
    if failed:
        click.echo(f"{len(failed)} case(s) failed", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
