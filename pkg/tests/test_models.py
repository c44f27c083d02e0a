import unittest

import numpy as np
import numpy.testing as npt

from app.errors import ConfigError, DimensionError, PilotError
from app.models import (Observation, PathSet, SystemConfig, allocate_pilots, centroid_delay, channel_matrix,
                        delay_vector, draw_paths, noise_variance, observe_all_users, observe_uplink,
                        path_signature, signature_correlation, spatial_wideband_delay, steering_vector,
                        to_normalized_angle, to_physical_angle, wideband_factor_matrix, wrap_angle,
                        zadoff_chu)
from tests.support import small_config


class SystemConfigTest(unittest.TestCase):

    def test_defaults(self):
        cfg = SystemConfig()
        self.assertEqual(cfg.T, 8)
        self.assertAlmostEqual(cfg.fs, 1e9)
        self.assertAlmostEqual(cfg.delay_cell, 1e-9)

    def test_every_problem_is_reported(self):
        with self.assertRaises(ConfigError) as ctx:
            SystemConfig(M=0, f0=-1.0)
        self.assertEqual(len(ctx.exception.errors), 2)

    def test_more_users_than_subcarriers(self):
        with self.assertRaises(ConfigError):
            SystemConfig(N=64, K=65)

    def test_aperture_condition(self):
        with self.assertRaises(ConfigError):
            SystemConfig(M=8000)

    def test_with_bandwidth(self):
        cfg = SystemConfig().with_bandwidth(20e6)
        self.assertAlmostEqual(cfg.fs, 20e6)
        self.assertEqual(cfg.N, 64)

    def test_dict_round_trip(self):
        cfg = small_config()
        self.assertEqual(SystemConfig.from_dict(cfg.to_dict()), cfg)


class SteeringTest(unittest.TestCase):

    def test_broadside_is_all_ones(self):
        npt.assert_allclose(steering_vector(0.0, 3e8, 64, 60e9), np.ones(64))

    def test_quarter_turn(self):
        npt.assert_allclose(steering_vector(np.pi / 2, 0.0, 2, 60e9), [1, -1j], atol=1e-15)

    def test_spatial_wideband_delay(self):
        value = spatial_wideband_delay(128, np.radians(60), 2e9, 60e9)
        self.assertTrue(1.83 <= value <= 1.85, value)

    def test_centroid_delay_is_half_the_array_travel_time(self):
        cfg = small_config()
        self.assertEqual(centroid_delay(0.0, cfg), 0.0)
        self.assertAlmostEqual(centroid_delay(np.pi, cfg) * 4 * cfg.fc_ul / (cfg.M - 1), 1.0)
        theta = np.radians(40)
        across = spatial_wideband_delay(cfg.M, theta, cfg.fs, cfg.fc_ul) / cfg.fs
        self.assertAlmostEqual(centroid_delay(to_normalized_angle(theta), cfg) / across, 0.5)

    def test_delay_vector_one_cell(self):
        npt.assert_allclose(delay_vector(1 / (4 * 1e9 / 64), 4, 1e9 / 64), [1, -1j, -1, 1j], atol=1e-12)

    def test_delay_vector_entry(self):
        f0 = 1e9 / 64
        tau = 0.3 / (64 * f0)
        self.assertAlmostEqual(delay_vector(tau, 64, f0)[10], np.exp(-2j * np.pi * 10 * 0.3 / 64))

    def test_wideband_factor_entry(self):
        cfg = SystemConfig()
        self.assertAlmostEqual(wideband_factor_matrix(1.0, cfg)[3, 5], np.exp(-1j * 15 / 3840))

    def test_non_finite_rejected(self):
        with self.assertRaises(DimensionError):
            steering_vector(np.nan, 0.0, 4, 60e9)

    def test_angle_conversions(self):
        theta = np.array([-0.7, 0.0, 0.4])
        npt.assert_allclose(to_physical_angle(to_normalized_angle(theta)), theta)
        with self.assertRaises(DimensionError):
            to_physical_angle(4.0)

    def test_wrap_angle(self):
        npt.assert_allclose(wrap_angle([np.pi, -np.pi, 3 * np.pi / 2]), [-np.pi, -np.pi, -np.pi / 2])


class SignatureTest(unittest.TestCase):

    def setUp(self):
        self.cfg = SystemConfig()
        self.rng = np.random.default_rng(7)

    def test_column_factorization(self):
        cfg = self.cfg
        for _ in range(5):
            phi = self.rng.uniform(-np.pi, np.pi)
            tau = self.rng.uniform(0, cfg.delay_cell)
            xi = path_signature(phi, tau, cfg)
            for n in (0, 17, 63):
                expected = delay_vector(tau, cfg.N, cfg.f0)[n] * steering_vector(phi, n * cfg.f0, cfg.M, cfg.fc_ul)
                npt.assert_allclose(xi[:, n], expected, atol=1e-12)

    def test_subcarrier_out_of_range(self):
        with self.assertRaises(DimensionError):
            path_signature(0.1, 0.0, self.cfg, subcarriers=[64])

    def test_self_correlation(self):
        self.assertAlmostEqual(abs(signature_correlation(0.3, 2e-10, 0.3, 2e-10, self.cfg)), 1.0, places=12)

    def test_separated_paths_are_nearly_orthogonal(self):
        cfg = self.cfg
        cell = 2 * np.pi / cfg.M
        for _ in range(100):
            phi = self.rng.uniform(-np.pi, np.pi)
            gap = self.rng.uniform(4 * cell, 2 * np.pi - 4 * cell)
            tau1, tau2 = self.rng.uniform(0, 60 * cfg.delay_cell, size=2)
            self.assertLess(abs(signature_correlation(phi, tau1, wrap_angle(phi + gap), tau2, cfg)), 0.15)
        for _ in range(100):
            phi1, phi2 = self.rng.uniform(-np.pi, np.pi, size=2)
            tau = self.rng.uniform(0, 4 * cfg.delay_cell)
            tau2 = tau + self.rng.uniform(4, 56) * cfg.delay_cell
            self.assertLess(abs(signature_correlation(phi1, tau, phi2, tau2, cfg)), 0.15)


class ChannelTest(unittest.TestCase):

    def setUp(self):
        self.cfg = SystemConfig()

    def test_single_unit_path_at_origin(self):
        H = channel_matrix(PathSet([0.0], [0.0], [1.0]), self.cfg)
        npt.assert_allclose(H.H, np.ones((64, 64)))

    def test_linearity(self):
        a = PathSet([0.2], [1e-10], [0.5 - 1j])
        b = PathSet([-1.1], [4e-10], [2.0])
        npt.assert_allclose(channel_matrix(a.union(b), self.cfg).H,
                            channel_matrix(a, self.cfg).H + channel_matrix(b, self.cfg).H, atol=1e-12)

    def test_energy_of_separated_paths(self):
        cfg = self.cfg.with_bandwidth(20e6)
        phi = -np.pi + 2 * np.pi * 8 * np.arange(6) / cfg.M
        rng = np.random.default_rng(3)
        beta = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        tau = rng.uniform(0, cfg.delay_cell, size=6)
        H = channel_matrix(PathSet(phi, tau, beta), cfg).H
        expected = cfg.M * cfg.N * np.sum(np.abs(beta) ** 2)
        self.assertLess(abs(np.linalg.norm(H) ** 2 / expected - 1), 0.1)


class DrawPathsTest(unittest.TestCase):

    def test_deterministic_under_seed(self):
        cfg = SystemConfig()
        a = draw_paths(np.random.default_rng(11), 6, cfg)
        b = draw_paths(np.random.default_rng(11), 6, cfg)
        npt.assert_array_equal(a.phi, b.phi)
        npt.assert_array_equal(a.tau, b.tau)
        npt.assert_array_equal(a.beta, b.beta)

    def test_invariants(self):
        cfg = SystemConfig()
        rng = np.random.default_rng(5)
        for _ in range(50):
            p = draw_paths(rng, 6, cfg)
            self.assertEqual(p.validate(cfg), [])
            self.assertTrue(np.all(p.tau < cfg.delay_cell))

    def test_unit_average_power(self):
        p = draw_paths(np.random.default_rng(2), 10_000, SystemConfig(), separation_guard=False)
        self.assertLess(abs(np.mean(np.abs(p.beta) ** 2) - 1), 0.05)

    def test_read_only(self):
        p = draw_paths(np.random.default_rng(0), 2, SystemConfig())
        with self.assertRaises(ValueError):
            p.phi[0] = 0.0

    def test_mismatched_lengths(self):
        with self.assertRaises(DimensionError):
            PathSet([0.0, 1.0], [0.0], [1.0])


class PilotTest(unittest.TestCase):

    def test_comb_layout(self):
        alloc = allocate_pilots(SystemConfig())
        npt.assert_array_equal(alloc.sets[0], np.arange(0, 64, 8))
        covered = np.sort(np.concatenate(alloc.sets))
        npt.assert_array_equal(covered, np.arange(64))

    def test_contiguous_layout(self):
        alloc = allocate_pilots(SystemConfig(), layout='contiguous')
        npt.assert_array_equal(alloc.sets[1], np.arange(8, 16))

    def test_unknown_layout(self):
        with self.assertRaises(ConfigError):
            allocate_pilots(SystemConfig(), layout='random')

    def test_zadoff_chu(self):
        q = np.arange(8)
        npt.assert_allclose(zadoff_chu(8), np.exp(-1j * np.pi * q ** 2 / 8))
        npt.assert_allclose(np.abs(zadoff_chu(7, root=3)), np.ones(7))

    def test_bad_user(self):
        with self.assertRaises(DimensionError):
            allocate_pilots(SystemConfig()).user(8)


class ObservationTest(unittest.TestCase):

    def setUp(self):
        self.cfg = small_config()
        self.alloc = allocate_pilots(self.cfg)
        self.H = channel_matrix(PathSet([0.4, -1.2], [1e-10, 5e-10], [1.0, 0.5j]), self.cfg)

    def test_noiseless(self):
        obs = observe_uplink(self.H, self.alloc, 1, np.inf, np.random.default_rng(0))
        n, s = self.alloc.user(1)
        npt.assert_allclose(obs.Y, self.H.H[:, n] * s[None, :])
        self.assertEqual(obs.noise_variance, 0.0)
        npt.assert_allclose(obs.compensated(), self.H.H[:, n], atol=1e-12)

    def test_noise_variance(self):
        self.assertAlmostEqual(noise_variance(20.0), 0.01)
        alloc = allocate_pilots(SystemConfig())
        obs = observe_uplink(np.zeros((12_500, 64)), alloc, 0, 10.0, np.random.default_rng(1))
        self.assertLess(abs(np.mean(np.abs(obs.Y) ** 2) / 0.1 - 1), 0.02)

    def test_signal_free_observation(self):
        self.assertEqual(noise_variance(-np.inf), np.inf)
        self.assertEqual(noise_variance(np.inf), 0.0)
        obs = observe_uplink(self.H, self.alloc, 2, -np.inf, np.random.default_rng(6))
        self.assertEqual(obs.noise_variance, 1.0)
        pure = observe_uplink(np.zeros_like(self.H.H), self.alloc, 2, 0.0, np.random.default_rng(6))
        npt.assert_array_equal(obs.Y, pure.Y)

    def test_scaled_pilots(self):
        scaled = self.alloc.scaled(1j)
        obs = observe_uplink(self.H, scaled, 1, np.inf, np.random.default_rng(0))
        npt.assert_allclose(obs.pilots, 1j * self.alloc.user(1)[1])
        npt.assert_allclose(obs.compensated(), self.H.H[:, obs.subcarriers], atol=1e-12)

    def test_reproducible_noise(self):
        a = observe_uplink(self.H, self.alloc, 0, 10.0, np.random.default_rng(4))
        b = observe_uplink(self.H, self.alloc, 0, 10.0, np.random.default_rng(4))
        c = observe_uplink(self.H, self.alloc, 0, 10.0, np.random.default_rng(5))
        npt.assert_array_equal(a.Y, b.Y)
        self.assertEqual(a.digest(), b.digest())
        self.assertNotEqual(a.digest(), c.digest())

    def test_all_users(self):
        observations = observe_all_users([self.H] * self.cfg.K, self.alloc, np.inf, np.random.default_rng(0))
        self.assertEqual([o.user for o in observations], list(range(self.cfg.K)))
        with self.assertRaises(DimensionError):
            observe_all_users([self.H], self.alloc, np.inf, np.random.default_rng(0))

    def test_zero_pilot(self):
        obs = Observation(np.ones((16, 2)), [0, 4], [1.0, 0.0])
        with self.assertRaises(PilotError):
            obs.compensated()

    def test_shape_check(self):
        obs = observe_uplink(self.H, self.alloc, 0, np.inf, np.random.default_rng(0))
        with self.assertRaises(DimensionError):
            obs.check(SystemConfig())


if __name__ == '__main__':
    unittest.main()
