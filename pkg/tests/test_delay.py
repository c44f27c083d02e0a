import unittest

import numpy as np
import numpy.testing as npt

from app.delay import estimate_delays
from app.errors import NoPathsDetected, PilotError
from app.models import Observation, PathSet, centroid_delay
from app.sparse_core import IrlsOptions
from tests.support import observe, paths, small_config


class EstimateDelaysTest(unittest.TestCase):

    def setUp(self):
        self.cfg = small_config()
        self.options = IrlsOptions(L_initial=16)

    def test_single_path_flat_angle(self):
        obs, _ = observe(paths([0.0], [0.41], [0.9 + 0.2j], self.cfg), self.cfg)
        est = estimate_delays(obs, self.cfg, self.options)
        self.assertEqual(est.P_hat, 1)
        tau = 0.41 * self.cfg.delay_cell
        self.assertLess(abs(est.tau_hat[0] - tau) / tau, 1e-4)
        self.assertEqual(est.x_blocks.shape, (1, self.cfg.M))

    def test_zero_delay(self):
        obs, _ = observe(paths([0.0], [0.0], [1.0], self.cfg), self.cfg, user=3)
        est = estimate_delays(obs, self.cfg, self.options)
        self.assertEqual(est.P_hat, 1)
        self.assertLess(est.tau_hat[0] / self.cfg.delay_cell, 1e-6)

    def test_two_paths_over_a_wider_span(self):
        tau_cells = np.array([0.3, 2.1])
        obs, _ = observe(paths([0.0, 0.0], tau_cells, [1.0, -0.8j], self.cfg), self.cfg)
        est = estimate_delays(obs, self.cfg, IrlsOptions(L_initial=32), span=4.0)
        self.assertEqual(est.P_hat, 2)
        npt.assert_allclose(est.tau_hat / self.cfg.delay_cell, tau_cells, atol=1e-5)

    def test_squinted_path_fits_the_array_centroid(self):
        tau = 0.37 * self.cfg.delay_cell
        for phi in (-2.5, 1.2, 3.0):
            obs, _ = observe(PathSet([phi], [tau], [1.0]), self.cfg)
            est = estimate_delays(obs, self.cfg, self.options)
            self.assertEqual(est.P_hat, 1)
            centroid = tau + centroid_delay(phi, self.cfg)
            self.assertLess(abs(est.tau_hat[0] - centroid) / self.cfg.delay_cell, 1e-4, phi)

    def test_antenna_zero_delay_ignores_the_angle(self):
        tau = 0.05 * self.cfg.delay_cell
        for phi in (-3.0, -0.4, 0.0, 2.2):
            obs, _ = observe(PathSet([phi], [tau], [0.5 - 0.5j]), self.cfg, user=1)
            est = estimate_delays(obs, self.cfg, self.options)
            shifted = est.tau_hat[0] - centroid_delay(phi, self.cfg)
            self.assertLess(abs(shifted - tau) / self.cfg.delay_cell, 1e-4, phi)

    def test_unknown_noise_keeps_only_the_path(self):
        obs, _ = observe(paths([0.0], [0.6], [1.0], self.cfg), self.cfg, snr_db=20.0, seed=6)
        est = estimate_delays(obs, self.cfg, self.options)
        self.assertEqual(est.P_hat, 1)
        self.assertLess(abs(est.tau_hat[0] / self.cfg.delay_cell - 0.6), 0.02)

    def test_delays_stay_in_range(self):
        obs, _ = observe(paths([0.5, -1.5], [0.05, 0.9], [1.0, 1.0], self.cfg), self.cfg)
        est = estimate_delays(obs, self.cfg, self.options)
        self.assertTrue(np.all(est.tau_hat >= 0))
        self.assertTrue(np.all(est.tau_hat < 1 / self.cfg.f0))

    def test_zero_observation(self):
        obs = Observation(np.zeros((16, 8)), 4 * np.arange(8), np.ones(8))
        with self.assertRaises(NoPathsDetected):
            estimate_delays(obs, self.cfg, self.options)

    def test_singular_pilots(self):
        obs = Observation(np.ones((16, 8)), 4 * np.arange(8), np.r_[np.ones(7), 0.0])
        with self.assertRaises(PilotError):
            estimate_delays(obs, self.cfg, self.options)


if __name__ == '__main__':
    unittest.main()
