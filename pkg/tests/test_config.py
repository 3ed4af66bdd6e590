# tests/test_config.py
import json
import os
import tempfile
import unittest
from unittest import mock

from trajsynth import get_settings
from trajsynth.config import ExperimentConfig
from trajsynth.metrics import EvaluationConfig


class TestExperimentConfig(unittest.TestCase):

    def test_defaults(self):
        config = ExperimentConfig()
        self.assertEqual(config.method, 'direct')
        self.assertIsInstance(config.evaluation, EvaluationConfig)
        self.assertEqual(config.to_dict()['evaluation']['seed'], 0)

    def test_invalid_values(self):
        for overrides in ({'source': 'sql'}, {'method': 'gan'}, {'variant': 'chain'},
                          {'epsilon_total': 0.0}, {'min_length': 5, 'max_length': 4}, {'min_length': 0},
                          {'source': 'csv', 'real_train': 'a.csv'}):
            with self.subTest(overrides=overrides):
                with self.assertRaises(ValueError):
                    ExperimentConfig(**overrides)

    def test_unknown_keys(self):
        with self.assertRaises(ValueError):
            ExperimentConfig.from_dict({'epsilon': 1.0})
        with self.assertRaises(ValueError):
            ExperimentConfig.from_dict({'evaluation': {'mauve_k': 3}})

    def test_overrides_skip_none(self):
        config = ExperimentConfig(epsilon_total=2.0, seed=4)
        updated = config.with_overrides(epsilon_total=None, seed=7, method=None)
        self.assertEqual((updated.epsilon_total, updated.seed, updated.method), (2.0, 7, 'direct'))
        self.assertEqual(config.seed, 4)
        with self.assertRaises(ValueError):
            config.with_overrides(budget=3)

    def test_from_json(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'experiment.json')
            with open(path, 'w') as f:
                json.dump({'method': 'markov_backend', 'L': 4, 'evaluation': {'tdcr_bins': 20}}, f)
            config = ExperimentConfig.from_json(path)
        self.assertEqual(config.method, 'markov_backend')
        self.assertEqual(config.L, 4)
        self.assertEqual(config.evaluation.tdcr_bins, 20)
        self.assertEqual(ExperimentConfig.from_dict(config.to_dict()), config)


class TestSettings(unittest.TestCase):

    def test_environment(self):
        env = {'LOG_LEVEL': 'debug', 'TRAJSYNTH_N_JOBS': '3', 'TRAJSYNTH_MODELS_DIR': 'artifacts'}
        with mock.patch.dict(os.environ, env):
            settings = get_settings()
        self.assertEqual(settings['LOG_LEVEL'], 'DEBUG')
        self.assertEqual(settings['N_JOBS'], 3)
        self.assertEqual(settings['MODELS_DIR'], 'artifacts')

    def test_overrides(self):
        self.assertEqual(get_settings({'N_JOBS': 2})['N_JOBS'], 2)


if __name__ == '__main__':
    unittest.main()
