from flask import Blueprint
import click

from app.bench import aggregate
from app.commands import guarded
from app.file_utils import read_rows, write_summary_csv, write_workbook

bp = Blueprint('report', __name__, cli_group=None)


@bp.cli.command('report')
@click.option('--in', 'in_paths', type=click.Path(exists=True, dir_okay=False), multiple=True, required=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@click.option('--xlsx', 'xlsx_path', type=click.Path(dir_okay=False), default=None)
@guarded
def report_command(in_paths, out_path, xlsx_path):
    """Aggregate sweep CSVs into per (value, estimator) plot data"""
    rows = [row for path in in_paths for row in read_rows(path)]
    summary = aggregate(rows)
    write_summary_csv(out_path, summary)
    click.echo(f"✓ {len(summary)} points -> {out_path}")
    if xlsx_path:
        write_workbook(xlsx_path, summary)
        click.echo(f"✓ workbook -> {xlsx_path}")
