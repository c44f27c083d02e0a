from flask import Blueprint, current_app
import click
import os

from app.bench import AXES, header, run_sweep
from app.commands import config_option, guarded
from app.file_utils import RowWriter
from app.settings import apply_config_file, load_experiment

bp = Blueprint('sweep', __name__, cli_group=None)


@bp.cli.command('sweep')
@config_option
@click.option('--seed', type=int, default=None, help='Master seed (defaults to SEED).')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), default=None,
              help='CSV path (defaults to OUTPUT_DIR/sweep_<axis>.csv).')
@click.option('--estimators', default=None, help='Comma-separated estimator ids.')
@click.option('--axis', type=click.Choice(AXES), default=None)
@click.option('--trials', type=int, default=None)
@click.option('--parallel', 'workers', type=int, default=None, help='Worker processes (defaults to WORKERS).')
@click.option('--timing', is_flag=True, help='Add a wall_time column (not byte-reproducible).')
@guarded
def sweep_command(config_path, seed, out_path, estimators, axis, trials, workers, timing):
    """Run a paired Monte-Carlo sweep and write one CSV row per (value, estimator, trial)"""
    apply_config_file(current_app, config_path)
    settings = current_app.config
    names = [e.strip() for e in estimators.split(',') if e.strip()] if estimators else None
    spec = load_experiment(settings, axis=axis, trials=trials, estimators=names, seed=seed, timing=timing)
    out_path = out_path or os.path.join(settings['OUTPUT_DIR'], f'sweep_{spec.axis}.csv')
    workers = settings['WORKERS'] if workers is None else workers

    with RowWriter(out_path, header(timing)) as writer:
        rows = run_sweep(spec, sink=writer, workers=workers)
    failed = sum(r.failed for r in rows)
    click.echo(f"✓ {len(rows)} rows ({failed} failed) -> {out_path}")
