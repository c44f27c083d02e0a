from flask import Blueprint, current_app
import click
import numpy as np

from app.commands import config_option, guarded
from app.file_utils import save_observation
from app.models import allocate_pilots, channel_matrix, draw_paths, observe_uplink
from app.settings import apply_config_file, load_system_config

bp = Blueprint('simulate', __name__, cli_group=None)


@bp.cli.command('simulate')
@config_option
@click.option('--seed', type=int, default=None, help='Master seed (defaults to SEED).')
@click.option('--user', type=int, default=0, show_default=True)
@click.option('--snr', 'snr_db', type=float, default=None, help='SNR in dB (defaults to SWEEP_SNR).')
@click.option('--paths', type=int, default=None, help='Path count (defaults to PATHS).')
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@guarded
def simulate_command(config_path, seed, user, snr_db, paths, out_path):
    """Draw one channel and write the user's observation to an .npz file"""
    apply_config_file(current_app, config_path)
    settings = current_app.config
    cfg = load_system_config(settings)
    seed = settings['SEED'] if seed is None else seed
    snr_db = settings['SWEEP_SNR'] if snr_db is None else snr_db
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    truth = draw_paths(rng, paths or settings['PATHS'], cfg, settings['SEPARATION_GUARD'],
                       settings['DELAY_SPAN'])
    H = channel_matrix(truth, cfg)
    alloc = allocate_pilots(cfg, settings['PILOT_LAYOUT'], settings['ZC_ROOT'])
    obs = observe_uplink(H, alloc, user, snr_db, rng, seed=seed)
    save_observation(out_path, obs, cfg, truth, H)
    click.echo(f"✓ user {user}, {truth.P} paths, {snr_db:g} dB -> {out_path}")
