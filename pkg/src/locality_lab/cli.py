"""Command-line entry point: ``locality-lab run <config>``, ``verify-all``, ``--list``."""
from __future__ import annotations

import sys

import click

from . import runner
from . import checks
from .checks import DEFAULT_TOL
from .config import load_config
from .errors import ConfigError


def _print_registry():
    if not checks.REGISTRY:
        click.echo("no experiments")
        return
    width = max(len(n) for n in checks.REGISTRY)
    for name in checks.REGISTRY:
        click.echo(f"{name:<{width}}  {checks.DESCRIPTIONS.get(name, '')}")


def _fmt(v):
    if isinstance(v, complex):
        return f"{v.real:.6g}{v.imag:+.6g}j"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _print_result(res):
    click.echo(f"{res.name}: {'PASS' if res.passed else 'FAIL'}")
    if res.metrics:
        width = max(len(k) for k in res.metrics)
        for k, v in res.metrics.items():
            click.echo(f"  {k:<{width}}  {_fmt(v)}")
    for f in res.failures():
        click.echo(f"  failed: {f}")


@click.group(invoke_without_command=True)
@click.option("--list", "list_", is_flag=True, help="List the registered experiments and exit.")
@click.pass_context
def main(ctx, list_):
    """Locality and semi-classical cluster-decomposition experiments."""
    if list_:
        _print_registry()
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


@main.command()
@click.argument("config", required=False, type=click.Path(dir_okay=False))
@click.option("--list", "list_", is_flag=True, help="List the registered experiments and exit.")
@click.option("--out", "out_dir", default=None, help="Output directory (overrides the environment and config).")
def run(config, list_, out_dir):
    """Run the experiment described by CONFIG (a TOML file)."""
    if list_:
        _print_registry()
        sys.exit(0)
    if config is None:
        raise click.UsageError("missing CONFIG")
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(2)
    out = runner.resolve_out_dir(out_dir, cfg.output_dir)
    res = runner.execute(cfg, out)
    path = runner.write_result(res, out)
    _print_result(res)
    click.echo(f"wrote {path}")
    if res.error:
        click.echo(res.error, err=True)
    sys.exit(0 if res.passed else 1)


@main.command("verify-all")
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(1, None), help="Experiments run concurrently.")
@click.option("--out", "out_dir", default=None, help="Output directory (overrides the environment).")
@click.option("--solver-tol", default=DEFAULT_TOL, show_default=True, type=float, help="Newton residual tolerance.")
def verify_all(jobs, out_dir, solver_tol):
    """Run every registered experiment and oracle suite."""
    if not solver_tol > 0:
        raise click.BadParameter("must be positive", param_hint="--solver-tol")
    out = runner.resolve_out_dir(out_dir)
    try:
        summary, results, timings = runner.verify_all(out, jobs=jobs, solver_tol=solver_tol, registry=checks.REGISTRY)
    except LookupError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    width = max(len(n) for n in results)
    for name, res in results.items():
        click.echo(f"{name:<{width}}  {'PASS' if res.passed else 'FAIL'}  {timings[name]:6.2f}s")
    failed = [n for n, r in results.items() if not r.passed]
    for name in failed:
        for f in results[name].failures():
            click.echo(f"FAILED {name}: {f}", err=True)
    click.echo(f"{len(results) - len(failed)}/{len(results)} passed; results in {out}")
    sys.exit(0 if not failed else 1)


if __name__ == "__main__":
    main()
