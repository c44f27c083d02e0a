from dataclasses import replace

from flask import Blueprint, current_app
import click

from app.baselines import estimate_uplink_baseline
from app.bench import ESTIMATORS, mse_angles, mse_delays, nmse, with_noise_variance
from app.commands import config_option, guarded
from app.file_utils import load_observation, write_json
from app.reconstruct import estimate_uplink
from app.settings import apply_config_file, load_baseline_options, load_uplink_options

bp = Blueprint('estimate', __name__, cli_group=None)


@bp.cli.command('estimate')
@config_option
@click.option('--observation', 'obs_path', type=click.Path(exists=True, dir_okay=False), required=True)
@click.option('--estimator', type=click.Choice(ESTIMATORS), default='proposed', show_default=True)
@click.option('--out', 'out_path', type=click.Path(dir_okay=False), required=True)
@guarded
def estimate_command(config_path, obs_path, estimator, out_path):
    """Run one estimator on a stored observation and write the estimate as JSON"""
    apply_config_file(current_app, config_path)
    obs, cfg, truth, H = load_observation(obs_path)
    if estimator in ('proposed', 'polished'):
        options = with_noise_variance(load_uplink_options(current_app.config), obs.noise_variance)
        est = estimate_uplink(obs, cfg, replace(options, polish=estimator == 'polished'))
    else:
        options = with_noise_variance(load_baseline_options(current_app.config), obs.noise_variance)
        est = estimate_uplink_baseline(estimator, obs, cfg, options)

    payload = {'estimator': estimator, 'user': obs.user, 'snr_db': obs.snr_db, **est.to_dict()}
    if truth is not None:
        payload['mse_phi'] = mse_angles(truth, est, cfg)
        payload['mse_tau'] = mse_delays(truth, est, cfg)
    if H is not None:
        payload['nmse_ul'] = nmse(H, est.H_hat)
    write_json(out_path, payload)
    click.echo(f"✓ {estimator}: {est.P_hat} paths -> {out_path}")
