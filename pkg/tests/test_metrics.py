# tests/test_metrics.py
import unittest

import numpy as np
from hypothesis import given, settings, strategies as st

from trajsynth.core import CATEGORICAL, NUMERIC, TIMESTAMP, Collection, Column, Schema, UserTable
from trajsynth.metrics import (
    EvaluationConfig,
    categorical_transition_divergence,
    classifier_auc,
    density_grid,
    dtw,
    evaluate,
    histogram_frame,
    hour_of_day_w1,
    jsd,
    mauve,
    shuffled_rows_control,
    table_distance,
    tdcr,
    transition_divergence,
    univariate_marginal_divergence,
    wasserstein1,
)
from trajsynth.metrics.temporal import fit_scaling

from .helpers import categorical_collection, numeric_collection


def dtw_oracle(a, b):
    """Plain DP with the diagonal, up, left preference; returns (total, path length)."""
    inf = float('inf')
    table = [[(inf, 0)] * len(b) for _ in a]
    for i in range(len(a)):
        for j in range(len(b)):
            cost = abs(a[i] - b[j])
            if i == 0 and j == 0:
                table[i][j] = (cost, 1)
                continue
            options = [
                table[i - 1][j - 1] if i > 0 and j > 0 else (inf, 0),
                table[i - 1][j] if i > 0 else (inf, 0),
                table[i][j - 1] if j > 0 else (inf, 0),
            ]
            best = min(range(3), key=lambda k: options[k][0])
            table[i][j] = (cost + options[best][0], options[best][1] + 1)
    return table[-1][-1]


class TestDtw(unittest.TestCase):

    def test_known_pair(self):
        x = [80, 81, 82, 85, 83, 84, 88, 92, 90, 87]
        y = [82, 83, 83, 84, 86, 89, 93, 93, 91, 89, 88, 99]
        result = dtw(x, y)
        self.assertEqual(result.total, 25.0)
        self.assertTrue(12 <= result.path_length <= 21)
        self.assertEqual((result.total, result.path_length), dtw_oracle(x, y))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=8),
           st.lists(st.integers(-20, 20), min_size=1, max_size=8))
    def test_matches_plain_dp(self, a, b):
        result = dtw(a, b)
        total, length = dtw_oracle([float(v) for v in a], [float(v) for v in b])
        self.assertEqual(result.total, total)
        self.assertEqual(result.path_length, length)
        self.assertTrue(max(len(a), len(b)) <= result.path_length <= len(a) + len(b) - 1)

    def test_identity_is_zero(self):
        result = dtw([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        self.assertEqual(result.total, 0.0)
        self.assertEqual(result.path_length, 3)
        self.assertEqual(result.normalized, 0.0)

    def test_nulls_are_dropped(self):
        self.assertEqual(dtw([1.0, None, 2.0], [1.0, 2.0]).total, 0.0)
        self.assertEqual(dtw([1.0, float('nan')], [1.0]).path_length, 1)
        with self.assertRaises(ValueError):
            dtw([None], [1.0])


    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(-20, 20), min_size=1, max_size=8),
           st.lists(st.integers(-20, 20), min_size=1, max_size=8))
    def test_total_is_symmetric(self, a, b):
        self.assertEqual(dtw(a, b).total, dtw(b, a).total)

class TestTableDistanceAndTdcr(unittest.TestCase):

    def test_table_distance(self):
        schema = Schema((Column('x', NUMERIC), Column('g', CATEGORICAL, ('a', 'b'))))
        a = UserTable('a', ((0.0, 'a'), (1.0, None)))
        b = UserTable('b', ((0.0, None), (1.0, None)))
        distance, skipped = table_distance(a, a, schema, {'x': (0.0, 1.0)})
        self.assertEqual((distance, skipped), (0.0, []))
        distance, skipped = table_distance(a, b, schema, {'x': (0.0, 1.0)})
        self.assertEqual(distance, 0.0)
        self.assertEqual(skipped, ['g'])

    def test_mismatch_cost_for_categories(self):
        schema = Schema((Column('g', CATEGORICAL, ('a', 'b', 'c')),))
        a = UserTable('a', (('a',), ('c',)))
        b = UserTable('b', (('a',), ('b',)))
        distance, _ = table_distance(a, b, schema, {})
        self.assertEqual(distance, 0.5)

    def test_scaling_uses_unit_std_for_constant_columns(self):
        collection = numeric_collection([[2.0, 2.0], [2.0]])
        self.assertEqual(fit_scaling(collection), {'x': (2.0, 1.0)})

    def test_copied_training_tables_sit_at_zero(self):
        rng = np.random.default_rng(3)
        train = numeric_collection([rng.normal(size=5).tolist() for _ in range(12)])
        test = numeric_collection([rng.normal(size=5).tolist() for _ in range(12)], prefix='t')
        result = tdcr(train, train, test, bins=10)
        np.testing.assert_array_equal(result.synth_distances, np.zeros(12))
        self.assertTrue(np.all(result.test_distances > 0))
        self.assertTrue(0.0 < result.jsd <= 1.0)
        p, q = result.histograms()
        self.assertEqual((p.sum(), q.sum()), (12, 12))

    def test_columns_without_values_are_reported(self):
        schema = Schema((Column('x', NUMERIC), Column('y', NUMERIC)))
        train = Collection.from_tables(schema, [
            UserTable('r0', ((0.0, 1.0), (1.0, 2.0))),
            UserTable('r1', ((2.0, None), (3.0, None))),
        ])
        queries = Collection.from_tables(schema, [
            UserTable('q0', ((0.0, None), (1.0, None))),
            UserTable('q1', ((2.0, 1.0), (3.0, 2.0))),
        ])
        with self.assertLogs('trajsynth.metrics.temporal', level='WARNING') as logs:
            result = tdcr(queries, train, queries, bins=4)
        self.assertIn('pairs out of 4', logs.output[0])
        self.assertIn("'y': 3", logs.output[0])
        self.assertEqual(result.skipped_pairs, {'y': 6})
        np.testing.assert_allclose(result.synth_distances, result.test_distances)

    def test_complete_tables_skip_nothing(self):
        train = numeric_collection([[0.0, 1.0], [2.0, 3.0]])
        result = tdcr(train, train, train, bins=4)
        self.assertEqual(result.skipped_pairs, {})

    def test_tdcr_rejects_empty_inputs(self):
        train = numeric_collection([[1.0]])
        empty = Collection(train.schema, {})
        with self.assertRaises(ValueError):
            tdcr(empty, train, train)


class TestJsd(unittest.TestCase):

    def test_identical_and_disjoint(self):
        self.assertAlmostEqual(jsd([1, 2, 3], [2, 4, 6]), 0.0)
        self.assertAlmostEqual(jsd([1, 0], [0, 1]), 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=3, max_size=3).filter(lambda v: sum(v) > 0),
           st.lists(st.integers(0, 50), min_size=3, max_size=3).filter(lambda v: sum(v) > 0))
    def test_bounded(self, p, q):
        value = jsd(p, q)
        self.assertTrue(0.0 <= value <= 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 50), min_size=4, max_size=4).filter(lambda v: sum(v) > 0),
           st.lists(st.integers(0, 50), min_size=4, max_size=4).filter(lambda v: sum(v) > 0))
    def test_symmetric(self, p, q):
        self.assertAlmostEqual(jsd(p, q), jsd(q, p), places=12)

    def test_invalid(self):
        with self.assertRaises(ValueError):
            jsd([0, 0], [1, 1])
        with self.assertRaises(ValueError):
            jsd([1], [1, 1])


class TestDistributional(unittest.TestCase):

    def test_wasserstein(self):
        self.assertAlmostEqual(wasserstein1([0, 0, 0], [0, 0, 3]), 1.0)
        with self.assertRaises(ValueError):
            wasserstein1([], [1.0])

    def test_wasserstein_of_unit_shift(self):
        self.assertAlmostEqual(wasserstein1([0, 1], [1, 2]), 1.0)
        self.assertAlmostEqual(wasserstein1([1, 2], [0, 1]), 1.0)

    @settings(max_examples=100, deadline=None)
    @given(*[st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=10) for _ in range(3)])
    def test_wasserstein_triangle_inequality(self, a, b, c):
        self.assertLessEqual(wasserstein1(a, c), wasserstein1(a, b) + wasserstein1(b, c) + 1e-9)

    def test_marginal_divergence(self):
        real = numeric_collection([[0.0, 0.0], [0.0]])
        synth = numeric_collection([[0.0, 0.0], [3.0]])
        result = univariate_marginal_divergence(real, synth)
        self.assertAlmostEqual(result['per_feature']['x'], 1.0)
        self.assertAlmostEqual(result['average'], 1.0)

    def test_transition_divergence(self):
        alternating = numeric_collection([[0, 1, 0, 1], [1, 0, 1, 0]])
        constant = numeric_collection([[0, 0, 0, 0], [1, 1, 1, 1]])
        self.assertEqual(transition_divergence(alternating, alternating, states=2)['average'], 0.0)
        result = transition_divergence(alternating, constant, states=2)
        self.assertAlmostEqual(result['per_feature']['x'], 2.0)
        self.assertEqual(result['empty_rows']['x'], {'real': [], 'synth': []})

    def test_transition_divergence_counts_null_transitions(self):
        real = numeric_collection([[0, 1, None, 1], [1, 0, 1, 0]])
        result = transition_divergence(real, real, states=2)
        self.assertEqual(result['null_transitions'], {'real': 2, 'synth': 2})

    def test_single_state_column_is_skipped(self):
        flat = numeric_collection([[5.0, 5.0], [5.0]])
        result = transition_divergence(flat, flat)
        self.assertEqual(result['skipped'], ['x'])
        self.assertIsNone(result['average'])

    def test_timestep_column_is_not_a_feature(self):
        schema = Schema((Column('timestep', NUMERIC), Column('x', NUMERIC)))
        real = Collection.from_tables(schema, [
            UserTable('u0', ((0.0, 0.0), (1.0, 1.0), (2.0, 0.0), (3.0, 1.0))),
            UserTable('u1', ((0.0, 1.0), (1.0, 0.0), (2.0, 1.0), (3.0, 0.0))),
        ])
        synth = Collection.from_tables(schema, [
            UserTable('u0', ((0.0, 0.0), (1.0, 1.0))),
            UserTable('u1', ((0.0, 1.0), (1.0, 0.0))),
        ])
        marginal = univariate_marginal_divergence(real, synth)
        self.assertEqual(list(marginal['per_feature']), ['x'])
        self.assertEqual(marginal['index_columns'], ['timestep'])
        self.assertAlmostEqual(marginal['average'], 0.0)
        transition = transition_divergence(real, synth, states=2)
        self.assertEqual(list(transition['per_feature']), ['x'])
        self.assertEqual(transition['index_columns'], ['timestep'])
        self.assertAlmostEqual(transition['average'], 0.0)
        with_index = univariate_marginal_divergence(real, synth, index_columns=())
        self.assertGreater(with_index['per_feature']['timestep'], 0.0)

    def test_categorical_transition(self):
        categories = ('a', 'b')
        real = categorical_collection([['a', 'b', 'a', 'b'], ['b', 'a', 'b', 'a']], categories)
        synth = categorical_collection([['a', 'a', 'a'], ['b', 'b', 'b']], categories)
        result = categorical_transition_divergence(real, synth, 'x', top_k=2)
        self.assertAlmostEqual(result['value'], 2.0)
        self.assertEqual(result['states'], ['a', 'b', 'OTHER'])
        self.assertEqual(result['empty_rows']['real'], [2])

    def test_hour_of_day(self):
        schema = Schema((Column('ts', TIMESTAMP),))
        real = Collection.from_tables(schema, [UserTable('u0', ((0,), (12 * 3600,)))])
        synth = Collection.from_tables(schema, [UserTable('u0', ((6 * 3600,), (86400 + 6 * 3600,)))])
        self.assertAlmostEqual(hour_of_day_w1(real, synth, 'ts'), 6.0)

    def test_density_grid(self):
        schema = Schema((Column('lat', NUMERIC), Column('lon', NUMERIC)))
        collection = Collection.from_tables(schema, [
            UserTable('u0', ((0.005, 0.005), (0.012, 0.004), (None, 0.5))),
            UserTable('u1', ((0.006, 0.003),)),
        ])
        grid = density_grid(collection, 'lat', 'lon', 0.01)
        self.assertEqual(list(grid.columns), ['lat_bin', 'lon_bin', 'lat_min', 'lon_min', 'count'])
        self.assertEqual(grid['count'].tolist(), [2, 1])
        self.assertEqual(grid['lat_bin'].tolist(), [0, 1])
        with self.assertRaises(ValueError):
            density_grid(collection, 'lat', 'lon', 0.0)


class TestEmbeddingMetrics(unittest.TestCase):

    def test_mauve_of_identical_sets(self):
        emb = np.random.default_rng(0).normal(size=(200, 3))
        self.assertGreaterEqual(mauve(emb, emb.copy()), 0.99)

    def test_mauve_of_separated_sets(self):
        rng = np.random.default_rng(1)
        p = rng.normal(size=(100, 2))
        q = rng.normal(100.0, 1.0, size=(100, 2))
        self.assertLess(mauve(p, q, num_clusters=2), 0.1)

    def test_mauve_is_symmetric_in_its_arguments(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            p = rng.normal(size=(300, 3))
            q = rng.normal(size=(300, 3)) + 0.5
            self.assertAlmostEqual(mauve(p, q, seed=seed), mauve(q, p, seed=seed), delta=1e-9)

    def test_mauve_is_symmetric_for_unequal_sizes(self):
        rng = np.random.default_rng(7)
        p = rng.normal(size=(300, 2))
        q = rng.normal(0.5, 1.0, size=(450, 2))
        self.assertAlmostEqual(mauve(p, q, seed=3), mauve(q, p, seed=3), delta=1e-9)

    def test_mauve_needs_enough_points(self):
        with self.assertRaises(ValueError):
            mauve(np.zeros((3, 2)), np.zeros((3, 2)), num_clusters=5)

    def test_auc_near_half_for_same_distribution(self):
        inside = 0
        for seed in range(20):
            rng = np.random.default_rng(seed)
            auc = classifier_auc(rng.normal(size=(1000, 3)), rng.normal(size=(1000, 3)), seed=seed)
            inside += 0.4 <= auc <= 0.6
        self.assertGreaterEqual(inside, 19)

    def test_auc_high_for_separated_distributions(self):
        rng = np.random.default_rng(0)
        auc = classifier_auc(rng.normal(size=(300, 3)), rng.normal(3.0, 1.0, size=(300, 3)))
        self.assertGreater(auc, 0.95)

    def test_auc_needs_points(self):
        with self.assertRaises(ValueError):
            classifier_auc(np.zeros((5, 2)), np.ones((5, 2)))


class TestReport(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(7)

        def sample(n, prefix):
            return numeric_collection(
                [np.cumsum(rng.normal(size=int(rng.integers(3, 7)))).tolist() for _ in range(n)], prefix=prefix
            )

        self.train = sample(30, 'r')
        self.test = sample(30, 't')
        self.synth = sample(30, 's')

    def test_shuffled_control_keeps_marginals(self):
        control = shuffled_rows_control(self.train, seed=2)
        self.assertEqual(control.user_ids, self.train.user_ids)
        self.assertEqual(control.lengths, self.train.lengths)
        self.assertEqual(sorted(control.column_values('x')), sorted(self.train.column_values('x')))
        self.assertNotEqual([t.rows for t in control], [t.rows for t in self.train])

    def test_histogram_frame(self):
        frame = histogram_frame({'a': [0, 1, 2, 3], 'b': [3, 3]}, bins=3)
        self.assertEqual(frame['a'].tolist(), [1, 1, 2])
        self.assertEqual(frame['b'].tolist(), [0, 0, 2])
        self.assertEqual(frame['bin_low'].tolist(), [0.0, 1.0, 2.0])

    def test_evaluate(self):
        report = evaluate(self.train, self.test, self.synth, EvaluationConfig(tdcr_bins=10))
        for key in ('tdcr', 'marginal_divergence', 'transition_divergence', 'mauve', 'classifier'):
            self.assertIn(key, report.metrics)
            self.assertNotIn('error', report.metrics[key])
        self.assertEqual(report.metrics['hmm_likelihood'], 'skipped')
        self.assertEqual(report.parameters['sizes'], {'real_train': 30, 'real_test': 30, 'synth': 30})
        self.assertTrue(0.0 <= report.metrics['tdcr']['jsd'] <= 1.0)

    def test_evaluate_does_not_depend_on_workers(self):
        config = EvaluationConfig(tdcr_bins=10)
        serial = evaluate(self.train, self.test, self.synth, config, n_jobs=1).to_json()
        parallel = evaluate(self.train, self.test, self.synth, config, n_jobs=2).to_json()
        self.assertEqual(serial, parallel)

    def test_schema_mismatch(self):
        other = categorical_collection([['a']], ('a',))
        with self.assertRaises(ValueError):
            evaluate(self.train, self.test, other)

    def test_unknown_evaluation_settings(self):
        with self.assertRaises(ValueError):
            EvaluationConfig.from_dict({'bins': 3})


if __name__ == '__main__':
    unittest.main()
