"""
CLI module for gapmor.
Main Click command interface with all subcommands.
"""

import json
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import click
import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.panel import Panel
from rich.table import Table

from . import __version__, config, models, norms, runner, sysfile
from .linalg import NumericalError, spectral_abscissa
from .logs import LEVELS, setup_logging
from .lti import StateSpace, closed_loop_pole_residue, coprime_factorize
from .reduction import BALANCINGS, INITS, METHODS

console = Console()
err_console = Console(stderr=True)

EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


# ============== Error handling ==============

def _fail(error: Exception, code: int) -> None:
    err_console.print(
        f"[bold red]error:[/] {type(error).__name__}: {escape(str(error))}",
        soft_wrap=True,
    )
    sys.exit(code)


@contextmanager
def _handle_errors():
    """Map gapmor exceptions to stable exit codes."""
    try:
        yield
    except sysfile.SystemFileError as e:
        _fail(e, EXIT_IO)
    except (NumericalError, np.linalg.LinAlgError) as e:
        _fail(e, EXIT_NUMERICAL)
    except (config.ConfigError, runner.RunnerError, ValueError) as e:
        _fail(e, EXIT_USAGE)
    except OSError as e:
        _fail(e, EXIT_IO)


def _settings(ctx: click.Context, **overrides) -> Dict[str, Any]:
    return config.resolve_settings(ctx.obj["config"], overrides)


def _write_text(text: str, output: str) -> None:
    if output == "-":
        click.echo(text, nl=False)
    else:
        Path(output).write_text(text)


# ============== Main CLI Group ==============

@click.group()
@click.version_option(__version__, prog_name="gapmor")
@click.option("--log-level", type=click.Choice(LEVELS, case_sensitive=False),
              help="Log verbosity (overrides GAPMOR_LOG)")
@click.option("--config", "config_path", type=click.Path(dir_okay=False),
              help="Configuration file (default: ./gapmor.toml if present)")
@click.pass_context
def cli(ctx, log_level: Optional[str], config_path: Optional[str]):
    """
    gapmor: model reduction of unstable LTI systems measured in the H2-gap.

    Generate benchmark systems, reduce them with IRKA, gap-IRKA or LQG
    balanced truncation, and compare the results.
    """
    with _handle_errors():
        cfg = config.load_config(config_path)
        for warning in config.validate_config(cfg):
            err_console.print(f"[yellow]Warning:[/] {escape(warning)}", soft_wrap=True)
        setup_logging(log_level, cfg.get("log_level"))
    ctx.obj = {"config": cfg}


# ============== generate Command ==============

@cli.group()
def generate():
    """Generate benchmark systems."""
    pass


@generate.command("convdiff")
@click.option("--nx", type=click.IntRange(min=3), help="Interior grid points per axis (default 20)")
@click.option("--diffusion", type=float, default=1.0, show_default=True)
@click.option("--convection", type=float, default=20.0, show_default=True)
@click.option("--reaction", type=float, default=50.0, show_default=True)
@click.option("--scheme", type=click.Choice(models.SCHEMES), default="central", show_default=True,
              help="Stencil of the convection term")
@click.option("--output-weight", type=click.Choice(models.OUTPUT_WEIGHTS), default="indicator",
              show_default=True, help="Observation weights: unit or h^2 quadrature")
@click.option("--output", "-o", default="-", help="Output file ('-' for stdout)")
@click.pass_context
def generate_convdiff(ctx, nx: Optional[int], diffusion: float, convection: float,
                      reaction: float, scheme: str, output_weight: str, output: str):
    """
    Convection-diffusion-reaction benchmark on the unit square.

    Examples:

        gapmor generate convdiff --nx 20 -o sys.coo
    """
    with _handle_errors():
        settings = _settings(ctx, nx=nx)
        cfg = models.ConvDiffConfig(nx=settings["nx"], diffusion=diffusion, convection=convection,
                                    reaction=reaction, scheme=scheme,
                                    output_weight=output_weight)
        system = models.convection_diffusion(cfg)
        comment = (f"convection-diffusion nx={cfg.nx} diffusion={diffusion:g} "
                   f"convection={convection:g} reaction={reaction:g} scheme={scheme} "
                   f"output={output_weight}")
        sysfile.write_system(system, output, comment)
    if output != "-":
        err_console.print(f"[bold green]✓[/] Wrote system of order {system.n} to {output}")


@generate.command("random")
@click.option("--n", "n", type=click.IntRange(min=1), required=True, help="State dimension")
@click.option("--m", "m", type=click.IntRange(min=1), default=1, show_default=True, help="Inputs")
@click.option("--p", "p", type=click.IntRange(min=1), default=1, show_default=True, help="Outputs")
@click.option("--unstable", type=click.IntRange(min=0), default=0, show_default=True,
              help="Number of unstable eigenvalues")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (default 0)")
@click.option("--output", "-o", default="-", help="Output file ('-' for stdout)")
@click.pass_context
def generate_random(ctx, n: int, m: int, p: int, unstable: int, seed: Optional[int], output: str):
    """
    Seeded random stabilizable system.

    Examples:

        gapmor generate random --n 8 --unstable 2 --seed 7 -o rand.coo
    """
    with _handle_errors():
        settings = _settings(ctx, seed=seed)
        system = models.random_stabilizable(n, m, p, unstable, settings["seed"])
        sysfile.write_system(system, output, f"random n={n} m={m} p={p} unstable={unstable} seed={settings['seed']}")
    if output != "-":
        err_console.print(f"[bold green]✓[/] Wrote system of order {n} to {output}")


# ============== reduce Command ==============

def _default_rom_path(system_path: str, method: str, r: int) -> str:
    path = Path(system_path)
    return str(path.with_name(f"{path.stem}.{method}.r{r}{path.suffix or '.coo'}"))


@cli.command()
@click.argument("system_path", metavar="SYSTEM")
@click.option("--method", "-m", type=click.Choice(METHODS), default="gap-irka", show_default=True)
@click.option("-r", "--order", "order", type=click.IntRange(min=1), required=True, help="Reduced order")
@click.option("--tol", type=float, help="Relative shift-change tolerance (default 1e-6)")
@click.option("--max-iter", type=click.IntRange(min=1), help="Iteration cap (default 100)")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (default 0)")
@click.option("--init", type=click.Choice(INITS), help="Shift initialization for IRKA and gap-IRKA (default spectrum)")
@click.option("--balancing", type=click.Choice(BALANCINGS), help="LQG-BT balancing (default lc-lo)")
@click.option("--output", "-o", help="Reduced system file (default: next to SYSTEM)")
@click.option("--diagnostics", "diagnostics_path", help="Diagnostics JSON file (default: OUTPUT.json)")
@click.option("--format", "-f", "fmt", type=click.Choice(["table", "json"]), default="table",
              help="Summary format")
@click.pass_context
def reduce(ctx, system_path: str, method: str, order: int, tol: Optional[float],
           max_iter: Optional[int], seed: Optional[int], init: Optional[str], balancing: Optional[str],
           output: Optional[str], diagnostics_path: Optional[str], fmt: str):
    """
    Reduce a system and write the reduced model plus diagnostics.

    Examples:

        gapmor reduce --method gap-irka -r 3 --tol 1e-6 sys.coo

        gapmor reduce --method lqgbt -r 1 sys.coo -o rom.coo
    """
    with _handle_errors():
        settings = _settings(ctx, tol=tol, max_iter=max_iter, seed=seed, init=init, balancing=balancing)
        system = sysfile.read_system(system_path)
        if order >= system.n:
            raise click.UsageError(f"Reduced order must be smaller than {system.n}, got {order}")

        result = runner.run_reduction(system, method, order, settings["tol"], settings["max_iter"],
                                      settings["seed"], settings["init"], settings["balancing"])
        record = result.to_dict()
        record["source"] = system_path

        output = output or _default_rom_path(system_path, method, order)
        sysfile.write_system(result.rom, output, f"{method} reduction of {system_path} to order {order}")
        if diagnostics_path is None and output != "-":
            diagnostics_path = str(Path(output).with_suffix(".json"))
        if diagnostics_path:
            Path(diagnostics_path).write_text(json.dumps(record, indent=2) + "\n")

    if output == "-":
        return
    if fmt == "json":
        print(json.dumps(record, indent=2))
        return

    table = Table(title=f"{method} r={order}")
    table.add_column("Field", style="cyan")
    table.add_column("Value", style="green")
    table.add_row("reduced system", output)
    table.add_row("diagnostics", str(diagnostics_path))
    if "iterations" in record:
        table.add_row("iterations", str(record["iterations"]))
        table.add_row("converged", str(record["converged"]))
        shifts = ", ".join(f"{re:.4g}{im:+.4g}j" if im else f"{re:.4g}" for re, im in record["final_shifts"])
        table.add_row("final shifts", shifts)
    else:
        table.add_row("error bound", f"{record['error_bound']:.6e}")
        table.add_row("leading values", ", ".join(f"{x:.3e}" for x in record["characteristic_values"][:order + 2]))
    console.print(table)


# ============== gap Command ==============

@cli.command()
@click.argument("system_path", metavar="SYSTEM")
@click.argument("rom_path", metavar="ROM")
@click.option("--metric", "metrics", multiple=True, type=click.Choice(config.METRICS),
              help="Metric to compute (repeatable, default h2gap)")
@click.option("--h2-method", type=click.Choice(["gramian", "pole-residue", "theorem1"]),
              default="gramian", show_default=True, help="Formula used for h2gap")
@click.option("--bound", is_flag=True, help="Also report the L2 error bound")
@click.option("--format", "-f", "fmt", type=click.Choice(["table", "json"]), default="table",
              help="Output format")
@click.pass_context
def gap(ctx, system_path: str, rom_path: str, metrics: Tuple[str, ...], h2_method: str,
        bound: bool, fmt: str):
    """
    Compute gap metrics between a system and a reduced model.

    Examples:

        gapmor gap sys.coo sys.gap-irka.r3.coo

        gapmor gap sys.coo rom.coo --metric h2gap --metric linfgap -f json
    """
    with _handle_errors():
        settings = _settings(ctx, metrics=list(metrics) or None)
        system = sysfile.read_system(system_path)
        rom = sysfile.read_system(rom_path)
        results: Dict[str, Any] = {}
        for metric in config.parse_list(settings["metrics"]):
            if metric == "h2gap":
                res = _h2_gap(system, rom, h2_method)
                results["h2gap"] = res.value
                results["h2gap_method"] = res.method
                results["h2gap_resolved"] = res.resolved
            elif metric == "linfgap":
                res = norms.linf_gap(system, rom)
                results["linfgap"] = res.value
                results["linfgap_frequency"] = res.peak_frequency
            else:
                raise config.ConfigError(f"Unknown metric '{metric}'")
        if bound:
            results["l2_bound"] = norms.l2_error_bound(system, rom)

    if fmt == "json":
        print(json.dumps(results, indent=2))
        return
    table = Table(title="Gap metrics")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right", style="green")
    for key, value in results.items():
        if value is None:
            text = "-"
        elif isinstance(value, (bool, str)):
            text = str(value).lower()
        else:
            text = f"{value:.6e}"
        table.add_row(key, text)
    console.print(table)


def _h2_gap(system: StateSpace, rom: StateSpace, method: str) -> norms.NormResult:
    if method == "gramian":
        return norms.h2_gap(system, rom)
    if method == "theorem1":
        return norms.h2_gap_theorem1(system, rom)
    return norms.h2_gap_pole_residue(
        closed_loop_pole_residue(coprime_factorize(system)),
        closed_loop_pole_residue(coprime_factorize(rom)),
    )


# ============== sweep Command ==============

@cli.command()
@click.argument("system_path", metavar="[SYSTEM]", required=False)
@click.option("--method", "methods", multiple=True, type=click.Choice(METHODS),
              help="Method to run (repeatable, default all)")
@click.option("--orders", help="Reduced orders, e.g. 1-12 or 1,2,4")
@click.option("--metric", "metrics", multiple=True, type=click.Choice(config.METRICS),
              help="Metric to compute (repeatable, default h2gap)")
@click.option("--tol", type=float, help="Relative shift-change tolerance")
@click.option("--max-iter", type=click.IntRange(min=1), help="Iteration cap")
@click.option("--seed", type=click.IntRange(min=0), help="Random seed")
@click.option("--balancing", type=click.Choice(BALANCINGS), help="LQG-BT balancing")
@click.option("--init", type=click.Choice(INITS), help="Shift initialization for IRKA and gap-IRKA")
@click.option("--nx", type=click.IntRange(min=3), help="Grid size of the generated benchmark")
@click.option("--workers", type=click.IntRange(min=1), help="Parallel sweep cells")
@click.option("--format", "-f", "fmt", type=click.Choice(config.FORMATS), help="Table format")
@click.option("--output", "-o", default="-", help="Output file ('-' for stdout)")
@click.option("--no-timestamp", is_flag=True, help="Omit the timestamp line and wall-clock times")
@click.pass_context
def sweep(ctx, system_path: Optional[str], methods, orders: Optional[str], metrics, tol, max_iter,
          seed, balancing, init, nx, workers, fmt, output: str, no_timestamp: bool):
    """
    Reduce a system for a range of orders and tabulate the gap metrics.

    Without SYSTEM the convection-diffusion benchmark is generated.
    Exits 0 when at least one row produced a value.

    Examples:

        gapmor sweep --orders 1-12 --no-timestamp

        gapmor sweep sys.coo --method gap-irka --method lqgbt --orders 1-6 -f markdown
    """
    with _handle_errors():
        settings = _settings(
            ctx, methods=list(methods) or None, orders=orders, metrics=list(metrics) or None,
            tol=tol, max_iter=max_iter, seed=seed, balancing=balancing, init=init, nx=nx,
            workers=workers, format=fmt,
        )
        if system_path is not None:
            system = sysfile.read_system(system_path)
        else:
            system = models.convection_diffusion(models.ConvDiffConfig(nx=settings["nx"]))
        try:
            spec = config.build_sweep_spec(settings, system.n, system_path)
        except config.InvalidSweepError as e:
            raise click.UsageError(str(e))

        total = len(spec.orders) * len(spec.methods)
        with err_console.status(f"Running {total} reductions...") as status:
            done = []

            def progress(r: int, method: str):
                done.append((r, method))
                status.update(f"Finished {len(done)}/{total} ({method} r={r})")

            rows = runner.run_sweep(system, spec, progress)

        timestamp = None if no_timestamp else datetime.now(timezone.utc).isoformat(timespec="seconds")
        if spec.fmt == "markdown":
            text = runner.format_markdown(rows, timestamp)
        else:
            text = runner.format_csv(rows, timestamp)
        _write_text(text, output)

    if not any(row.succeeded for row in rows):
        err_console.print("[bold red]error:[/] SweepFailed: no row produced a value", soft_wrap=True)
        sys.exit(EXIT_NUMERICAL)


# ============== info Command ==============

@cli.command()
@click.argument("system_path", metavar="SYSTEM")
@click.option("--format", "-f", "fmt", type=click.Choice(["table", "json"]), default="table",
              help="Output format")
def info(system_path: str, fmt: str):
    """Show dimensions and stability of a system file."""
    with _handle_errors():
        system = sysfile.read_system(system_path)
        eigenvalues = np.linalg.eigvals(system.a) if system.n else np.zeros(0)
        details = {
            "order": system.n,
            "inputs": system.m,
            "outputs": system.p,
            "spectral_abscissa": spectral_abscissa(system.a) if system.n else None,
            "unstable_eigenvalues": int(np.sum(eigenvalues.real > 0)),
            "feedthrough": system.has_feedthrough(),
        }

    if fmt == "json":
        print(json.dumps(details, indent=2))
        return
    console.print(Panel(f"[bold cyan]{escape(system_path)}[/]", expand=False))
    for key, value in details.items():
        label = key.replace("_", " ").capitalize()
        if isinstance(value, float):
            value = f"{value:.6e}"
        console.print(f"[bold]{label}:[/] {value}")


# ============== Entry Point ==============

def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
