from __future__ import annotations

import logging
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, Optional

import click
import typer
from dotenv import load_dotenv

from .config import RunConfig, load_hyperpriors
from .data_loader import parse_probability_track, parse_probe_table, parse_region_bed
from .ecm import check_design, run_ecm
from .errors import TileHmmError
from .mcmc import merge_summaries, run_chains, run_mcmc
from .model import ModelVariant, default_hyperpriors, median_spacing, thin_track
from .regions import ProbabilityTrack, call_regions, rank_regions
from .simulate import preset_config, sample_genome
from .viz.charts import plot_objective_trace, plot_probability_tracks
from .writers import (
    load_diagnostics,
    save_diagnostics,
    write_draw_trace,
    write_parameter_report,
    write_probability_track,
    write_probe_table,
    write_region_bed,
    write_truth,
)

# Load environment variables from .env file
load_dotenv()

logger = logging.getLogger(__name__)

app = typer.Typer(no_args_is_help=True, help="Segment tiling-array tracks into peak regions.")

SeedOption = typer.Option(0, envvar="TILEHMM_SEED", min=0, help="Random seed.")
OutDirOption = typer.Option(Path("outputs"), envvar="TILEHMM_OUTPUT_DIR", help="Output directory.")
PLOT_WINDOW = 2000


@contextmanager
def _exit_on_error() -> Iterator[None]:
    try:
        yield
    except (TileHmmError, OSError) as e:
        typer.echo(f"error: {e}", err=True)
        raise typer.Exit(code=1) from e


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress at INFO.")) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@app.command()
def simulate(
    n_probes: int = typer.Option(100_000, min=1),
    preset: str = typer.Option("S1C1", help="S1 | 3S | S1C1 | S3C3"),
    n_chromosomes: int = typer.Option(1, min=1),
    mean_spacing: float = 35.0,
    spacing_jitter: float = 0.2,
    peak_length: Optional[float] = None,
    variant: str = typer.Option("auto", help="auto | hierarchical | pooled"),
    probe_length: int = 25,
    seed: int = SeedOption,
    out_dir: Path = OutDirOption,
) -> None:
    """Write a synthetic probe table plus ground-truth sidecar files."""
    with _exit_on_error():
        config = preset_config(
            preset,
            n_probes=n_probes,
            mean_spacing=mean_spacing,
            spacing_jitter=spacing_jitter,
            seed=seed,
            peak_length=peak_length,
        )
        if variant != "auto":
            config = replace(config, variant=ModelVariant.from_name(variant, config.n_t, config.n_c))
        datasets = sample_genome(config, n_chromosomes)
        probes = write_probe_table([d.track for d in datasets], out_dir / "probes.tsv")
        bed, _ = write_truth(datasets, out_dir, probe_length=probe_length)
    typer.echo(f"Saved simulated probes to {probes} and truth to {bed}")


def _truth_intervals(path: Path | None) -> list[tuple[str, int, int]]:
    if path is None:
        return []
    df = parse_region_bed(path)
    return [(str(c), int(s), int(e)) for c, s, e in zip(df["chrom"], df["start"], df["end"])]


@app.command()
def fit(
    probes: Path = typer.Argument(..., exists=True, dir_okay=False, help="Probe table TSV."),
    algorithm: str = typer.Option("ecm", help="ecm | mcmc | both"),
    variant: str = typer.Option("auto", help="auto | hierarchical | pooled"),
    tol: float = 1e-3,
    max_iter: int = 200,
    n_iter: int = 10_500,
    burn_in: int = 500,
    thin: int = 1,
    chains: int = 1,
    every: int = typer.Option(1, help="Keep every k-th probe."),
    hyperpriors: Optional[Path] = typer.Option(None, exists=True, dir_okay=False),
    plot: bool = typer.Option(False, help="Save a probability-track figure."),
    truth: Optional[Path] = typer.Option(None, exists=True, dir_okay=False, help="Truth BED to shade in --plot."),
    threads: int = typer.Option(1, envvar="TILEHMM_THREADS"),
    seed: int = SeedOption,
    out_dir: Path = OutDirOption,
) -> None:
    """Fit the model by ECM and/or MCMC; write probability tracks and a parameter report."""
    with _exit_on_error():
        config = RunConfig(
            input_path=probes,
            out_dir=out_dir,
            algorithm=algorithm,
            variant=variant,
            hyperpriors_path=hyperpriors,
            tol=tol,
            max_iter=max_iter,
            n_iter=n_iter,
            burn_in=burn_in,
            thin=thin,
            chains=chains,
            seed=seed,
            threads=threads,
            every=every,
        ).validate()
        tracks = parse_probe_table(config.input_path)
        if config.every > 1:
            tracks = [thin_track(t, config.every) for t in tracks]
        n_t, n_c = check_design(tracks)
        model_variant = config.model_variant(n_t, n_c)
        hyper = load_hyperpriors(config.hyperpriors_path, default_hyperpriors(median_spacing(tracks)))

        fits = {}
        by_fit: dict[str, list[ProbabilityTrack]] = {}
        diagnostics: dict[str, Any] = {
            "input": str(config.input_path),
            "variant": model_variant.mode.value,
            "chromosomes": [t.chromosome_id for t in tracks],
            "n_probes": sum(t.n_probes for t in tracks),
        }
        if config.algorithm in ("ecm", "both"):
            result = run_ecm(tracks, hyper, config.ecm_options(model_variant))
            by_fit["ecm"] = result.probability_tracks(tracks)
            write_probability_track(by_fit["ecm"], config.out_dir / "track_ecm.tsv")
            fits["ecm"] = (result.params, model_variant)
            diagnostics["ecm"] = {
                "iterations": result.iterations,
                "converged": result.converged,
                "trace": result.trace,
                "variance_floors": result.variance_floors,
                "held_updates": result.held_updates,
                "params": result.params.as_dict(),
            }
        if config.algorithm in ("mcmc", "both"):
            options = config.mcmc_options(model_variant)
            if config.chains > 1:
                seeds = [config.seed + k for k in range(config.chains)]
                summary = merge_summaries(run_chains(tracks, hyper, options, seeds, config.threads))
            else:
                summary = run_mcmc(tracks, hyper, options)
            by_fit["mcmc"] = summary.probability_tracks(tracks)
            write_probability_track(by_fit["mcmc"], config.out_dir / "track_mcmc.tsv")
            write_draw_trace(summary.param_draws, config.out_dir / "draws_mcmc.tsv", config.burn_in, config.thin)
            fits["mcmc"] = (summary.posterior_mean(), model_variant)
            diagnostics["mcmc"] = {
                "chains": config.chains,
                "n_draws": summary.n_draws,
                "acceptance_rate": summary.acceptance_rate,
                "final_scales": list(summary.scale_history[-1]) if summary.scale_history else [],
                "params": summary.posterior_mean().as_dict(),
            }
        report = write_parameter_report(fits, config.out_dir / "parameters.tsv")
        save_diagnostics(diagnostics, config.out_dir / "diagnostics.json")
        if plot:
            first = tracks[0]
            figure = plot_probability_tracks(
                first,
                {name: prob[0] for name, prob in by_fit.items()},
                config.out_dir / "fit_tracks.png",
                truth=_truth_intervals(truth),
                window=(0, min(PLOT_WINDOW, first.n_probes)),
            )
            typer.echo(f"Saved plot to {figure}")
    typer.echo(f"Saved parameter report to {report}")


@app.command()
def call(
    track: Path = typer.Argument(..., exists=True, dir_okay=False, help="Probability track TSV."),
    cutoff: float = 0.9,
    min_probes: int = 1,
    probe_length: int = 25,
    out: Optional[Path] = typer.Option(None, help="Region BED path (default OUT_DIR/regions.bed)."),
    out_dir: Path = OutDirOption,
) -> None:
    """Call, score and rank regions from a probability track."""
    with _exit_on_error():
        config = RunConfig(
            input_path=track, out_dir=out_dir, cutoff=cutoff, min_probes=min_probes, probe_length=probe_length
        ).validate()
        regions = []
        for prob in parse_probability_track(config.input_path):
            regions.extend(call_regions(prob, config.cutoff, config.min_probes, config.probe_length))
        path = write_region_bed(rank_regions(regions), out or config.out_dir / "regions.bed")
    typer.echo(f"Saved {len(regions)} regions to {path}")


@app.command()
def report(
    diagnostics: Path = typer.Argument(..., exists=True, dir_okay=False, help="diagnostics.json from fit."),
    plot: bool = typer.Option(False, help="Save the ECM objective trace figure."),
    out_dir: Path = OutDirOption,
) -> None:
    """Print fit diagnostics."""
    with _exit_on_error():
        payload = load_diagnostics(diagnostics)
        lines = [f"variant: {payload.get('variant', 'unknown')}", f"probes: {payload.get('n_probes', 'NA')}"]
        ecm = payload.get("ecm")
        if ecm:
            trace = ecm.get("trace", [])
            lines.append(
                f"ecm: {ecm['iterations']} iterations, converged={ecm['converged']}, "
                f"final objective={trace[-1] if trace else float('nan'):.6f}"
            )
            if len(trace) > 1:
                lines.append(f"ecm objective gain: {trace[-1] - trace[0]:.6f}")
            lines.append(f"ecm variance floors: {ecm.get('variance_floors', 0)}")
        mcmc = payload.get("mcmc")
        if mcmc:
            lines.append(
                f"mcmc: {mcmc['n_draws']} draws from {mcmc.get('chains', 1)} chain(s), "
                f"acceptance rate={mcmc['acceptance_rate']:.3f}"
            )
        typer.echo("\n".join(lines))
        if plot and ecm:
            path = plot_objective_trace(ecm.get("trace", []), out_dir / "objective_trace.png")
            typer.echo(f"Saved plot to {path}")


def cli_main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        code = app(args=list(argv) if argv is not None else None, prog_name="tilehmm", standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    app()
