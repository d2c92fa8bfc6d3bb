"""Batch command line runner.

One subcommand per experiment kind; each loads a JSON document, runs it
through the engines and writes reports.  The orchestrator itself is
single threaded, ``--threads`` only widens the quadrature grid pool.

Exit codes: 0 ok, 2 schema error, 3 engine error, 4 failed check.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import ENGINE_VERSION
from .checks import DEFAULT_SEED, SUITES
from .exactcore import EngineError
from .experiments import SchemaError, run_experiment

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_ENGINE = 3
EXIT_CHECK = 4


def _common(f):
    opts = [
        click.option("--config", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="Experiment document (JSON)."),
        click.option("--seed", type=int, default=None,
                     help="Override the document seed."),
        click.option("--out", type=click.Path(file_okay=False), default=None,
                     help="Directory for report files."),
        click.option("--threads", type=int, default=None,
                     help="Quadrature worker threads."),
        click.option("--tol", type=float, default=None,
                     help="Override the grid refinement tolerance."),
        click.option("--budget", type=int, default=None,
                     help="Override the grid node budget."),
        click.option("--no-cache", is_flag=True, default=False,
                     help="Bypass the report cache."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
@click.version_option(ENGINE_VERSION, prog_name="residua")
def main() -> None:
    """Exact and numerical Coleff-Herrera product experiments."""


def _load_doc(kind: str, config: str | None) -> dict:
    if config is None:
        raise SchemaError(f"the {kind} subcommand needs --config")
    try:
        doc = json.loads(Path(config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{config} is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise SchemaError("experiment document must be a JSON object")
    if doc.get("kind") != kind:
        raise SchemaError(
            f"document kind {doc.get('kind')!r} does not match subcommand {kind!r}"
        )
    return doc


def _execute(kind: str, config, seed, out, threads, tol, budget, no_cache,
             doc: dict | None = None) -> dict:
    try:
        if doc is None:
            doc = _load_doc(kind, config)
        rr = run_experiment(
            doc,
            out_dir=out,
            seed=seed,
            tol=tol,
            budget=budget,
            threads=threads,
            use_cache=not no_cache,
        )
    except SchemaError as e:
        click.echo(f"schema error: {e}", err=True)
        sys.exit(EXIT_SCHEMA)
    except EngineError as e:
        click.echo(f"engine error: {e}", err=True)
        sys.exit(EXIT_ENGINE)
    except OSError as e:
        click.echo(f"io error: {e}", err=True)
        sys.exit(1)
    if rr.cached:
        click.echo("cache hit", err=True)
    for p in rr.files:
        click.echo(f"wrote {p}", err=True)
    return rr.report


@main.command()
@_common
def pair(config, seed, out, threads, tol, budget, no_cache):
    """Exact sequential product of a step list."""
    rep = _execute("pair", config, seed, out, threads, tol, budget, no_cache)
    res = rep["result"]
    click.echo(res["current"])
    if "pairing" in res:
        click.echo(f"pairing: {res['pairing']['render']}")


@main.command()
@_common
def mellin(config, seed, out, threads, tol, budget, no_cache):
    """Closed-form parametric value, limits and pole lines."""
    rep = _execute("mellin", config, seed, out, threads, tol, budget, no_cache)
    res = rep["result"]
    click.echo(f"closed form: {res['closed_form']}")
    click.echo(f"iterated limit: {res['iterated']['render']}")
    for line in res["pole_lines"]:
        click.echo(f"pole line {line}")
    if not res["pole_lines"]:
        click.echo("no pole lines")


@main.command()
@_common
def sweep(config, seed, out, threads, tol, budget, no_cache):
    """Evaluate the regularized integral along an epsilon ladder."""
    rep = _execute("sweep", config, seed, out, threads, tol, budget, no_cache)
    res = rep["result"]
    rows = res["rows"]
    click.echo(f"{len(rows)} rows; last value {rows[-1]['re']:.9g}"
               f"{rows[-1]['im']:+.9g}i, uncertainty {rows[-1]['uncertainty']:.3g}")
    if "fit" in res:
        f = res["fit"]
        click.echo(f"rate fit: omega {f['omega']:.4f}, R^2 {f['r_squared']:.5f}")


@main.command()
@_common
def limit(config, seed, out, threads, tol, budget, no_cache):
    """Iterated-limit estimate of the regularized product."""
    rep = _execute("limit", config, seed, out, threads, tol, budget, no_cache)
    res = rep["result"]
    click.echo(f"value {res['value']['re']:.12g}{res['value']['im']:+.12g}i "
               f"+/- {res['uncertainty']:.3g} "
               f"({'converged' if res['converged'] else 'not converged'})")


@main.command()
@_common
def cfl(config, seed, out, threads, tol, budget, no_cache):
    """Cauchy-Fantappie-Leray product limit."""
    rep = _execute("cfl", config, seed, out, threads, tol, budget, no_cache)
    res = rep["result"]
    click.echo(f"value {res['value']['re']:.12g}{res['value']['im']:+.12g}i "
               f"+/- {res['uncertainty']:.3g} "
               f"({'converged' if res['converged'] else 'not converged'})")


@main.command()
@_common
@click.option("--suite", "suites", multiple=True, type=click.Choice(SUITES),
              help="Suite to run (repeatable; default all).")
def check(config, seed, out, threads, tol, budget, no_cache, suites):
    """Run self-check suites; exit 0 only if everything passes."""
    if config is None:
        doc = {
            "kind": "check",
            "name": "check",
            "suites": list(suites) if suites else list(SUITES),
            "seed": seed if seed is not None else DEFAULT_SEED,
        }
    else:
        doc = None
    rep = _execute("check", config, seed, out, threads, tol, budget, no_cache,
                   doc=doc)
    res = rep["result"]
    for s in res["suites"]:
        click.echo(f"{'PASS' if s['passed'] else 'FAIL'} {s['suite']}")
        if not s["passed"]:
            for d in s["details"]:
                if d.startswith("FAIL"):
                    click.echo(f"  {d}")
    if not res["passed"]:
        sys.exit(EXIT_CHECK)


if __name__ == "__main__":
    main()
