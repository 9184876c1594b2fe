import sys
import time
import logging
import traceback
from functools import wraps
from pathlib import Path

import click
import numpy as np
import pandas as pd

from backend import __version__
from backend.ingestion.run_ingest import PanelIngestService
from backend.ingestion.synthetic import generate_synthetic, load_dgp_spec, write_synthetic
from backend.services.harness import dry_run, load_plan, run_experiment
from backend.services.registry import registry
from backend.services.reporting import write_manifest, write_report
from backend.services.scoring import QuantileGrid, score_forecasts
from backend.services.svd_sampler import GammaPosteriorSpec, sample_gamma, sample_gamma_dense, thin_svd
from backend.utils.errors import ConfigError, DesignError
from backend.utils.validators import validate_output_dir

try:
    from config import FLOAT_FORMAT, LOG_FORMAT, LOG_LEVEL, OUTPUT_DIR, RIDGECAST_THREADS
except ImportError:
    import os
    FLOAT_FORMAT = os.getenv("RIDGECAST_FLOAT_FORMAT", "%.12g")
    LOG_FORMAT = os.getenv("RIDGECAST_LOG_FORMAT", "%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    LOG_LEVEL = os.getenv("RIDGECAST_LOG_LEVEL", "INFO")
    OUTPUT_DIR = os.getenv("RIDGECAST_OUT_DIR", "results")
    RIDGECAST_THREADS = int(os.getenv("RIDGECAST_THREADS", "1"))

logger = logging.getLogger(__name__)

EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def error_handler(func):
    """Map library errors onto exit codes: 2 for config/validation, 1 for anything else."""
    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.exceptions.ClickException:
            raise
        except (ConfigError, DesignError) as e:
            logger.error(f"{func.__name__}: {e}")
            logger.debug(f"Traceback: {traceback.format_exc()}")
            sys.exit(EXIT_CONFIG)
        except Exception as e:
            logger.error(f"Error in {func.__name__}: {e}")
            logger.debug(f"Traceback: {traceback.format_exc()}")
            sys.exit(EXIT_RUNTIME)
    return wrapper


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@click.version_option(__version__, prog_name="ridgecast")
def cli(verbose: bool):
    """Bayesian predictive regressions with survey data: validate, synth, run, bench-sampler."""
    logging.basicConfig(level=logging.DEBUG if verbose else LOG_LEVEL, format=LOG_FORMAT, stream=sys.stderr,
                        force=True)


@cli.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(dir_okay=False), help="Experiment plan file.")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False), help="Panel CSV.")
@click.option("--meta", "meta_path", default=None, type=click.Path(dir_okay=False),
              help="Metadata sidecar (defaults to <data>.meta).")
@error_handler
def validate(plan_path, data_path, meta_path):
    """Dry-run design construction at the first and last origins."""
    plan = load_plan(plan_path)
    data = PanelIngestService(data_path, meta_path).load()
    table = dry_run(plan, data)
    click.echo(table.to_string(index=False), err=True)
    logger.info(f"Plan {Path(plan_path).name} is valid for {Path(data_path).name}")


@cli.command()
@click.option("--plan", "plan_path", required=True, type=click.Path(dir_okay=False), help="Experiment plan file.")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False), help="Panel CSV.")
@click.option("--meta", "meta_path", default=None, type=click.Path(dir_okay=False),
              help="Metadata sidecar (defaults to <data>.meta).")
@click.option("--out", "out_dir", default=OUTPUT_DIR, show_default=True, type=click.Path(file_okay=False),
              help="Output directory (RIDGECAST_OUT_DIR).")
@click.option("--threads", type=click.IntRange(min=1), default=None,
              help="Worker threads (falls back to RIDGECAST_THREADS).")
@click.option("--seed", type=int, default=None, help="Override the plan seed.")
@click.option("--emit-draws", is_flag=True, help="Also write per-draw mixture components (large).")
@error_handler
def run(plan_path, data_path, meta_path, out_dir, threads, seed, emit_draws):
    """Run the recursive experiment, score it and write the report."""
    plan = load_plan(plan_path)
    if seed is not None:
        plan = plan.model_copy(update={"seed": seed})
    ingest = PanelIngestService(data_path, meta_path)
    data = ingest.load()
    out_dir = validate_output_dir(out_dir)
    threads = threads or max(RIDGECAST_THREADS, 1)
    registry.log_registered_kinds()

    store = run_experiment(plan, data, threads=threads)
    grid = QuantileGrid()
    outputs = [store.write_forecasts(out_dir / "forecasts.csv", grid.alphas),
               store.write_failures(out_dir / "failures.csv")]
    if emit_draws:
        outputs.append(store.write_components(out_dir / "components.csv"))

    scores = score_forecasts(store.distributions(), grid)
    scores_path = out_dir / "scores.csv"
    scores.to_csv(scores_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    outputs.append(scores_path)
    outputs += write_report(scores, out_dir, grid=grid)

    manifest = write_manifest(out_dir, outputs, plan_hash=plan.plan_hash(), data_hash=ingest.data_hash(),
                              seed=plan.seed, version=__version__)
    logger.info(f"Run complete: {len(outputs)} outputs, manifest {manifest}")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False), help="DGP spec file.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Output CSV path.")
@click.option("--seed", type=int, default=0, show_default=True)
@error_handler
def synth(spec_path, out_path, seed):
    """Generate a synthetic panel and its <out>.meta sidecar."""
    spec = load_dgp_spec(spec_path)
    data = generate_synthetic(spec, seed)
    write_synthetic(data, out_path)


def _parse_ladder(ctx, param, value):
    try:
        ladder = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter("expected comma-separated integers, e.g. 1000,2000,4000")
    if not ladder:
        raise click.BadParameter("empty ladder")
    return ladder


@cli.command("bench-sampler")
@click.option("--ladder", default="1000,2000,4000", show_default=True, callback=_parse_ladder,
              help="Comma-separated K values.")
@click.option("--t", "T", type=click.IntRange(min=1), default=100, show_default=True, help="Sample size T.")
@click.option("--repetitions", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--draws", type=click.IntRange(min=1), default=20, show_default=True,
              help="Fast-sampler draws per timed repetition.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Summary CSV path.")
@error_handler
def bench_sampler(ladder, T, repetitions, draws, seed, out_path):
    """Time the SVD sampler against the dense Cholesky reference along a K ladder."""
    small = [K for K in ladder if K < T]
    if small:
        raise ConfigError(f"ladder values must be >= T={T}: {small}", key="ladder")
    rng = np.random.default_rng(seed)
    raw = []
    for K in ladder:
        Z = rng.standard_normal((T, K))
        spec = GammaPosteriorSpec(residual=rng.standard_normal(T), sigma2=1.0, delta=0.1)
        factors = thin_svd(Z)
        for rep in range(repetitions):
            start = time.perf_counter()
            for _ in range(draws):
                sample_gamma(factors, spec, rng)
            fast = (time.perf_counter() - start) / draws
            start = time.perf_counter()
            sample_gamma_dense(Z, spec, rng)
            dense = time.perf_counter() - start
            raw.append({"K": K, "T": T, "repetition": rep, "fast_seconds": fast, "dense_seconds": dense})
            logger.debug(f"K={K} rep={rep}: fast {fast:.6f}s dense {dense:.6f}s")

    raw = pd.DataFrame(raw)
    summary = raw.groupby("K", sort=False).agg(fast_median=("fast_seconds", "median"),
                                                dense_median=("dense_seconds", "median")).reset_index()
    summary.insert(1, "T", T)
    summary["fast_ratio"] = summary["fast_median"] / summary["fast_median"].iloc[0]
    summary["dense_ratio"] = summary["dense_median"] / summary["dense_median"].iloc[0]
    summary["speedup"] = summary["dense_median"] / summary["fast_median"]

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    summary.to_csv(out_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    raw.to_csv(out_path.with_name(out_path.stem + "_raw.csv"), index=False, float_format=FLOAT_FORMAT,
               lineterminator="\n")
    logger.info(f"Sampler timings:\n{summary.to_string(index=False)}")


def main():
    cli(prog_name="ridgecast")


if __name__ == "__main__":
    main()
