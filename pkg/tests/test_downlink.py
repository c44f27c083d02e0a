import unittest

import numpy as np
import numpy.testing as npt

from app.bench import nmse
from app.downlink import (DownlinkParams, beamforming_matrix, correct_leakage, decode_feedback, downlink_paths,
                          downlink_pilots, downlink_row, encode_feedback, estimate_downlink,
                          estimate_downlink_gains, leakage_matrix, observe_downlink, reciprocal_params)
from app.errors import DimensionError, PilotError
from app.models import PathSet, SystemConfig, allocate_pilots, channel_matrix
from tests.support import paths, small_config


class ReciprocityTest(unittest.TestCase):

    def setUp(self):
        self.cfg = SystemConfig()
        self.uplink = PathSet([-1.0, 0.5], [1e-10, 7e-10], [1.0, 1.0])

    def test_physical_scaling(self):
        params = reciprocal_params(self.uplink, self.cfg)
        npt.assert_allclose(params.phi, self.uplink.phi * 61 / 60)
        npt.assert_array_equal(params.tau, self.uplink.tau)
        self.assertEqual(params.P, 2)

    def test_numeric_mode_keeps_angles(self):
        params = reciprocal_params(self.uplink, self.cfg, mode='numeric')
        npt.assert_array_equal(params.phi, self.uplink.phi)

    def test_unknown_mode(self):
        with self.assertRaises(DimensionError):
            reciprocal_params(self.uplink, self.cfg, mode='mirror')

    def test_true_downlink_paths(self):
        dl = downlink_paths(self.uplink, self.cfg, np.random.default_rng(0))
        npt.assert_allclose(dl.phi, reciprocal_params(self.uplink, self.cfg).phi)
        self.assertFalse(np.allclose(dl.beta, self.uplink.beta))


class PilotTest(unittest.TestCase):

    def test_orthonormal_rows(self):
        S = downlink_pilots(3, 8)
        npt.assert_allclose(S @ S.conj().T, np.eye(3), atol=1e-12)

    def test_too_many_paths(self):
        with self.assertRaises(PilotError):
            downlink_pilots(9, 8)

    def test_feedback_payload(self):
        beta = np.array([0.5 - 1j, 2.0 + 0.25j])
        payload = encode_feedback(beta)
        self.assertEqual(len(payload), 32)
        npt.assert_array_equal(decode_feedback(payload), beta)

    def test_leakage_correction_inverts_the_overlap(self):
        beta = np.array([1.0 - 0.5j, 0.25j])
        leakage = np.array([[1.0, 0.3 + 0.1j], [-0.2j, 1.0]])
        fed_back = np.conj(leakage.T @ np.conj(beta))
        npt.assert_allclose(correct_leakage(fed_back, leakage), beta, atol=1e-12)
        npt.assert_allclose(correct_leakage(beta, np.eye(2)), beta)


class DownlinkEstimateTest(unittest.TestCase):

    def setUp(self):
        self.cfg = SystemConfig()
        self.n = allocate_pilots(self.cfg).sets[0]

    def test_single_exact_path(self):
        uplink = PathSet([0.6], [3e-10], [1.0])
        true_dl = downlink_paths(uplink, self.cfg, np.random.default_rng(1))
        params = reciprocal_params(uplink, self.cfg)
        F = beamforming_matrix(params, self.cfg, self.n)
        S = downlink_pilots(1, len(self.n))
        y = observe_downlink(true_dl, F, S, np.inf, None, self.cfg, self.n)
        npt.assert_allclose(y, np.conj(true_dl.beta[0]) * S[0], atol=1e-12)
        npt.assert_allclose(estimate_downlink_gains(y, S), true_dl.beta, atol=1e-12)

        est = estimate_downlink(uplink, true_dl, np.inf, None, self.cfg, self.n)
        self.assertLess(nmse(downlink_row(true_dl, self.cfg), est.H_dl_hat), 1e-20)
        self.assertEqual(est.H_dl_hat.shape, (1, self.cfg.M * self.cfg.N))
        self.assertEqual(len(est.feedback_payload), 16)

    def test_separated_paths(self):
        uplink = PathSet([-1.5, 0.1, 1.6], [1e-10, 4e-10, 8e-10], [1.0, 1.0, 1.0])
        true_dl = downlink_paths(uplink, self.cfg, np.random.default_rng(2))
        est = estimate_downlink(uplink, true_dl, np.inf, None, self.cfg, self.n)
        self.assertLess(nmse(downlink_row(true_dl, self.cfg), est.H_dl_hat), 1e-9)
        self.assertEqual(est.P_hat, 3)

    def test_noise_degrades_gracefully(self):
        uplink = PathSet([0.6], [3e-10], [1.0])
        true_dl = PathSet(reciprocal_params(uplink, self.cfg).phi, uplink.tau, [1.0])
        est = estimate_downlink(uplink, true_dl, 20.0, np.random.default_rng(5), self.cfg, self.n)
        self.assertLess(nmse(downlink_row(true_dl, self.cfg), est.H_dl_hat), 0.1)

    def test_overlapping_beams_are_separated(self):
        cfg = small_config()
        n = allocate_pilots(cfg).sets[2]
        uplink = paths([-0.3, 0.0, 0.25], [0.1, 0.15, 0.4], [1.0, 1.0, 1.0], cfg)
        true_dl = downlink_paths(uplink, cfg, np.random.default_rng(3))
        params = reciprocal_params(uplink, cfg)
        F = beamforming_matrix(params, cfg, n)
        S = downlink_pilots(3, len(n))
        leakage = leakage_matrix(params, F, S, cfg, n)
        self.assertGreater(np.abs(leakage - np.diag(np.diag(leakage))).max(), 1e-3)
        npt.assert_allclose(np.diag(leakage), np.ones(3), atol=1e-12)

        est = estimate_downlink(uplink, true_dl, np.inf, None, cfg, n)
        npt.assert_allclose(est.beta_dl_hat, true_dl.beta, atol=1e-8)
        self.assertLess(nmse(downlink_row(true_dl, cfg), est.H_dl_hat), 1e-9)

    def test_shared_carrier_gives_back_the_uplink_channel(self):
        cfg = small_config(fc_dl=60e9)
        n = allocate_pilots(cfg).sets[1]
        uplink = paths([-2.0, 0.4, 1.9], [0.1, 0.6, 0.9], [1.0, 0.5j, -0.8], cfg)
        est = estimate_downlink(uplink, uplink, np.inf, None, cfg, n)
        expected = channel_matrix(uplink, cfg).H.reshape(-1, order='F').conj()
        npt.assert_allclose(est.H_dl_hat[0], expected, atol=1e-9)

    def test_received_energy(self):
        cfg = small_config()
        n = allocate_pilots(cfg).sets[0]
        uplink = PathSet([0.9], [2e-10], [1.0])
        true_dl = PathSet(reciprocal_params(uplink, cfg).phi, uplink.tau, [0.8 - 0.6j])
        params = reciprocal_params(uplink, cfg)
        F = beamforming_matrix(params, cfg, n)
        S = downlink_pilots(1, len(n))
        rng = np.random.default_rng(12)
        energy = np.mean([np.linalg.norm(observe_downlink(true_dl, F, S, 0.0, rng, cfg, n)) ** 2
                          for _ in range(10_000)])
        self.assertAlmostEqual(energy / (1.0 + len(n)), 1.0, delta=0.03)

    def test_angle_error_biases_the_gain(self):
        cfg = small_config()
        n = allocate_pilots(cfg).sets[0]
        uplink = PathSet([0.9], [2e-10], [1.0])
        true_dl = PathSet(reciprocal_params(uplink, cfg).phi, uplink.tau, [1.0])
        bias = []
        for offset in (0.0, 1e-3, 1e-2):
            shifted = PathSet(uplink.phi + offset, uplink.tau, uplink.beta)
            est = estimate_downlink(shifted, true_dl, np.inf, None, cfg, n)
            bias.append(abs(est.beta_dl_hat[0] - true_dl.beta[0]))
        self.assertLess(bias[0], 1e-12)
        self.assertTrue(bias[0] < bias[1] < bias[2], bias)

    def test_params_pairs(self):
        params = DownlinkParams(np.array([0.1, 0.2]), np.array([1e-10, 2e-10]))
        self.assertEqual(params.pairs, [(0.1, 1e-10), (0.2, 2e-10)])


if __name__ == '__main__':
    unittest.main()
