"""
Sample data generator
Run this script to write a simulated observation and its estimate to sample_data/
"""
import os
import numpy as np
from app import create_app
from app.errors import SquintError
from app.file_utils import save_observation, write_json
from app.models import allocate_pilots, channel_matrix, draw_paths, observe_uplink
from app.reconstruct import estimate_uplink
from app.settings import load_system_config, load_uplink_options
from app.bench import nmse, with_noise_variance


def create_sample_data(out_dir='sample_data'):
    """Simulate user 0 at the configured SNR and estimate its channel"""
    app = create_app('desk')

    with app.app_context():
        settings = app.config
        cfg = load_system_config(settings)
        rng = np.random.default_rng(np.random.SeedSequence([settings['SEED']]))

        print("Drawing paths...")
        truth = draw_paths(rng, settings['PATHS'], cfg)
        H = channel_matrix(truth, cfg)
        alloc = allocate_pilots(cfg, settings['PILOT_LAYOUT'], settings['ZC_ROOT'])
        obs = observe_uplink(H, alloc, 0, settings['SWEEP_SNR'], rng, seed=settings['SEED'])
        save_observation(os.path.join(out_dir, 'observation.npz'), obs, cfg, truth, H)

        print("Estimating uplink channel...")
        options = with_noise_variance(load_uplink_options(settings), obs.noise_variance)
        est = estimate_uplink(obs, cfg, options)
        write_json(os.path.join(out_dir, 'estimate.json'), {**est.to_dict(), 'nmse_ul': nmse(H, est.H_hat)})

        print("\n✓ Sample data created successfully!")
        print(f"  Paths: {truth.P} true, {est.P_hat} estimated")
        print(f"  Uplink NMSE: {nmse(H, est.H_hat):.3e}")


if __name__ == '__main__':
    try:
        create_sample_data()
    except SquintError as e:
        print(f"✗ Error: {e}")
