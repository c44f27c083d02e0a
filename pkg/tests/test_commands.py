import csv
import json
import os
import tempfile
import unittest

from app import create_app


class CommandTest(unittest.TestCase):

    def setUp(self):
        self.app = create_app('testing')
        self.runner = self.app.test_cli_runner()
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def invoke(self, *args):
        return self.runner.invoke(args=list(args))

    def test_simulate_then_estimate(self):
        result = self.invoke('simulate', '--seed', '3', '--snr', '30', '--out', self.path('obs.npz'))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertIn('✓', result.output)

        result = self.invoke('estimate', '--observation', self.path('obs.npz'), '--out', self.path('est.json'))
        self.assertEqual(result.exit_code, 0, result.output)
        with open(self.path('est.json'), encoding='utf-8') as handle:
            payload = json.load(handle)
        self.assertEqual(payload['estimator'], 'proposed')
        self.assertIn('nmse_ul', payload)
        self.assertIn('mse_phi', payload)

    def test_estimate_with_the_polished_pipeline(self):
        self.invoke('simulate', '--seed', '4', '--snr', '30', '--out', self.path('obs.npz'))
        result = self.invoke('estimate', '--observation', self.path('obs.npz'), '--estimator', 'polished',
                             '--out', self.path('est.json'))
        self.assertEqual(result.exit_code, 0, result.output)
        with open(self.path('est.json'), encoding='utf-8') as handle:
            self.assertEqual(json.load(handle)['estimator'], 'polished')

    def test_estimate_with_a_baseline(self):
        self.invoke('simulate', '--out', self.path('obs.npz'))
        result = self.invoke('estimate', '--observation', self.path('obs.npz'), '--estimator', 'ongrid',
                             '--out', self.path('est.json'))
        self.assertEqual(result.exit_code, 0, result.output)

    def test_sweep_and_report(self):
        rows = self.path('sweep.csv')
        result = self.invoke('sweep', '--trials', '1', '--seed', '5', '--out', rows)
        self.assertEqual(result.exit_code, 0, result.output)
        with open(rows, encoding='utf-8', newline='') as handle:
            records = list(csv.DictReader(handle))
        self.assertEqual(len(records), 2)
        self.assertNotIn('wall_time', records[0])

        result = self.invoke('report', '--in', rows, '--out', self.path('summary.csv'),
                             '--xlsx', self.path('summary.xlsx'))
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertTrue(os.path.exists(self.path('summary.xlsx')))
        with open(self.path('summary.csv'), encoding='utf-8', newline='') as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 2)

    def test_sweep_is_byte_reproducible(self):
        for name in ('a.csv', 'b.csv'):
            result = self.invoke('sweep', '--trials', '1', '--seed', '5', '--out', self.path(name))
            self.assertEqual(result.exit_code, 0, result.output)
        with open(self.path('a.csv'), 'rb') as a, open(self.path('b.csv'), 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_bad_config_file(self):
        bad = self.path('bad.toml')
        with open(bad, 'w', encoding='utf-8') as handle:
            handle.write('USERS = 64\n')
        result = self.invoke('simulate', '--config', bad, '--out', self.path('obs.npz'))
        self.assertEqual(result.exit_code, 1)
        self.assertIn('✗', result.output)

    def test_unknown_estimator(self):
        result = self.invoke('sweep', '--estimators', 'music', '--trials', '1', '--out', self.path('x.csv'))
        self.assertEqual(result.exit_code, 1)
        self.assertIn('music', result.output)


if __name__ == '__main__':
    unittest.main()
