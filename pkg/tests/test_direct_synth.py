# tests/test_direct_synth.py
import unittest

import numpy as np

from trajsynth.core import CATEGORICAL, NUMERIC, TIMESTAMP, Collection, Column, Schema, UserTable
from trajsynth.direct_synth import (
    ACROSS,
    MARKOV,
    ColumnBins,
    Discretizer,
    MarginalQuery,
    MarkovModel,
    calibrate_sigma,
    clip_postprocess,
    estimate_markov,
    fit_edges,
    measure,
    nearest_rank_percentile,
    normalize_counts,
    run_direct,
    sample_codes,
    select_marginals,
)
from trajsynth.flatten import FlatTable, flatten
from trajsynth.privacy import BudgetExceededError, PrivacyBudget

from .helpers import categorical_collection, numeric_collection


class TestBinning(unittest.TestCase):

    def test_uniform_edges(self):
        edges = fit_edges([0.0, 10.0, 5.0], 4)
        np.testing.assert_allclose(edges, [0.0, 2.5, 5.0, 7.5, 10.0])

    def test_degenerate_columns(self):
        self.assertEqual(fit_edges([], 8), (0.0, 1.0))
        self.assertEqual(fit_edges([3.0, 3.0], 8), (2.5, 3.5))
        with self.assertRaises(ValueError):
            fit_edges([1.0, 2.0], 4, strategy='kmeans')

    def test_encode_decode(self):
        bins = ColumnBins(Column('x', NUMERIC), (0.0, 1.0, 2.0))
        np.testing.assert_array_equal(bins.encode([0.5, 1.5, None, -3.0, 99.0, 2.0]), [0, 1, 2, 0, 1, 1])
        self.assertEqual(bins.decode(0), 0.5)
        self.assertIsNone(bins.decode(bins.null_code))
        with self.assertRaises(ValueError):
            bins.decode(5)

    def test_timestamp_decodes_to_int(self):
        bins = ColumnBins(Column('t', TIMESTAMP), (0.0, 3.0))
        self.assertEqual(bins.decode(0), 2)
        self.assertIsInstance(bins.decode(0), int)

    def test_categorical_codes(self):
        bins = ColumnBins(Column('g', CATEGORICAL, ('a', 'b')))
        self.assertEqual(bins.size, 3)
        np.testing.assert_array_equal(bins.encode(['b', None, 'a']), [1, 2, 0])
        self.assertEqual(bins.decode(1), 'b')

    def test_discretizer_dict_roundtrip(self):
        schema = Schema((Column('x', NUMERIC), Column('g', CATEGORICAL, ('a', 'b'))))
        disc = Discretizer.fit(schema, [[0.0, 1.0, 4.0], ['a', None, 'b']], n_bins=3)
        again = Discretizer.from_dict(disc.to_dict())
        self.assertEqual(again.sizes, disc.sizes)
        self.assertEqual(again.decode_rows(np.array([[0, 1]])), [(disc.bins[0].decode(0), 'b')])


class TestQueries(unittest.TestCase):

    def test_markov_query_set(self):
        queries = select_marginals(2, 3, MARKOV)
        self.assertEqual(len(queries), 6 + 4)
        self.assertEqual(queries[0].columns, (0,))
        self.assertIn(MarginalQuery((0, 2)), queries)
        self.assertIn(MarginalQuery((3, 5)), queries)
        self.assertNotIn(MarginalQuery((0, 1)), queries)

    def test_across_query_set(self):
        queries = select_marginals(3, 2, ACROSS, max_across=100, seed=0)
        across = [q for q in queries if len(q.columns) == 2 and q.columns[1] - q.columns[0] < 3]
        self.assertEqual(len(queries), 6 + 3 + 6)
        self.assertEqual(len(across), 6)
        limited = select_marginals(3, 2, ACROSS, max_across=2, seed=0)
        self.assertEqual(len(limited), 6 + 3 + 2)
        self.assertEqual(limited, select_marginals(3, 2, ACROSS, max_across=2, seed=0))

    def test_bad_variant(self):
        with self.assertRaises(ValueError):
            select_marginals(1, 2, 'graphical')

    def test_calibrate_sigma_splits_budget(self):
        budget = PrivacyBudget(1.0, 1e-6)
        sigma = calibrate_sigma(budget, 10)
        self.assertAlmostEqual(10 * (1.0 / (2 * sigma ** 2)), budget.rho_train_cap, places=12)
        budget.charge('all', budget.rho_train_cap)
        with self.assertRaises(BudgetExceededError):
            calibrate_sigma(budget, 10)


class TestMeasurementAndSampling(unittest.TestCase):

    def test_exact_counts_at_zero_noise(self):
        collection = categorical_collection([['a', 'b'], ['a', 'a'], ['b', 'b']], ('a', 'b'))
        flat = flatten(collection, 2)
        disc = Discretizer.fit_flat(flat)
        queries = select_marginals(1, 2, MARKOV)
        measurements = measure(flat, disc, queries, 0.0)
        np.testing.assert_array_equal(measurements[0].counts, [2, 1, 0])
        pair = measurements[2].table(disc.sizes)
        self.assertEqual(pair[0, 1], 1)
        self.assertEqual(pair[1, 1], 1)
        self.assertEqual(pair.sum(), 3)

    def test_noise_independent_of_jobs(self):
        collection = numeric_collection([[float(i), float(i + 1)] for i in range(20)])
        flat = flatten(collection, 2)
        disc = Discretizer.fit_flat(flat, 4)
        queries = select_marginals(1, 2, MARKOV)
        a = measure(flat, disc, queries, 2.0, seed=5, n_jobs=1)
        b = measure(flat, disc, queries, 2.0, seed=5, n_jobs=2)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.counts, y.counts)

    def test_normalize_counts(self):
        np.testing.assert_allclose(normalize_counts(np.array([2.0, -1.0, 2.0])), [0.5, 0.0, 0.5])
        np.testing.assert_allclose(normalize_counts(np.array([[-1.0, -2.0], [1.0, 3.0]])), [[0.5, 0.5], [0.25, 0.75]])

    def test_missing_measurement(self):
        collection = categorical_collection([['a', 'b']], ('a', 'b'))
        flat = flatten(collection, 2)
        disc = Discretizer.fit_flat(flat)
        measurements = measure(flat, disc, select_marginals(1, 2, MARKOV)[:2], 0.0)
        with self.assertRaises(ValueError):
            estimate_markov(measurements, 1, 2, disc.sizes)

    def test_adjacent_pair_sampler_mixes_user_types(self):
        n = 20000
        collection = categorical_collection(
            [('alpha', 'gamma', 'alpha') if i % 2 else ('beta', 'gamma', 'beta') for i in range(n)],
            ('alpha', 'beta', 'gamma'),
        )
        flat = flatten(collection, 3)
        disc = Discretizer.fit_flat(flat)
        model = estimate_markov(measure(flat, disc, select_marginals(1, 3, MARKOV), 0.0), 1, 3, disc.sizes)
        rows = disc.decode_rows(sample_codes(model, n, seed=1))
        mixed = sum(1 for r in rows if r == ('alpha', 'gamma', 'beta')) / n
        self.assertAlmostEqual(mixed, 0.25, delta=0.02)
        self.assertTrue(all(r[1] == 'gamma' for r in rows))

    def test_noiseless_model_recovers_adjacent_pairs(self):
        categories = ('a', 'b', 'c')
        schema = Schema((Column('x', CATEGORICAL, categories),))
        initial = np.array([0.5, 0.3, 0.2])
        transition = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.3, 0.3, 0.4]])
        n = 100_000
        for seed in range(5):
            rng = np.random.default_rng(seed)
            states = np.zeros((n, 3), dtype=np.int64)
            states[:, 0] = rng.choice(3, size=n, p=initial)
            for t in range(1, 3):
                u = rng.random(n)[:, None]
                states[:, t] = np.minimum((u > np.cumsum(transition, axis=1)[states[:, t - 1]]).sum(axis=1), 2)
            rows = [tuple(categories[s] for s in row) for row in states]
            flat = FlatTable(schema, 3, [f'u{i:06d}' for i in range(n)], rows)
            disc = Discretizer.fit_flat(flat)
            model = estimate_markov(measure(flat, disc, select_marginals(1, 3, MARKOV), 0.0), 1, 3, disc.sizes)
            real = disc.encode_rows(flat.rows)
            synth = sample_codes(model, n, seed=seed)
            for t in range(2):
                pair = (disc.sizes[t], disc.sizes[t + 1])
                cells = pair[0] * pair[1]
                p = np.bincount(np.ravel_multi_index((real[:, t], real[:, t + 1]), pair), minlength=cells) / n
                q = np.bincount(np.ravel_multi_index((synth[:, t], synth[:, t + 1]), pair), minlength=cells) / n
                self.assertLessEqual(0.5 * np.abs(p - q).sum(), 0.02, f'seed {seed}, t {t}')

    def test_sample_codes_follow_chain(self):
        model = MarkovModel(1, 3, [np.array([1.0, 0.0])], [[np.array([[0.0, 1.0], [1.0, 0.0]])] * 2])
        codes = sample_codes(model, 50, seed=0)
        self.assertTrue((codes == [0, 1, 0]).all())
        restored = MarkovModel.from_dict(model.to_dict())
        np.testing.assert_array_equal(sample_codes(restored, 50, seed=0), codes)


class TestClipping(unittest.TestCase):

    def test_nearest_rank(self):
        values = list(range(1, 101))
        self.assertEqual(nearest_rank_percentile(values, 99.0), 99)
        self.assertEqual(nearest_rank_percentile([5.0], 99.0), 5.0)

    def test_clip_to_reference_range(self):
        reference = numeric_collection([list(range(1, 101))])
        synth = numeric_collection([[-5.0, 50.0, 500.0, None]])
        clipped = clip_postprocess(synth, reference)
        self.assertEqual([r[0] for r in clipped.tables['u0000'].rows], [1.0, 50.0, 99.0, None])


class TestRunDirect(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        schema = Schema((Column('x', NUMERIC), Column('g', CATEGORICAL, ('a', 'b'))))
        tables = []
        for i in range(300):
            length = int(rng.integers(2, 6))
            rows = tuple((float(rng.normal()), 'ab'[int(rng.integers(2))]) for _ in range(length))
            tables.append(UserTable(f'u{i:04d}', rows))
        self.collection = Collection.from_tables(schema, tables)
        self.eligible = sum(1 for t in self.collection if t.length >= 3)

    def test_ledger_and_report(self):
        budget = PrivacyBudget(10.0, 1e-5)
        result = run_direct(self.collection, 3, budget, bins=8, seed=3)
        report = result.report
        self.assertEqual(report['num_queries'], 6 + 4)
        self.assertEqual(report['n_filtered'], self.eligible)
        self.assertFalse(report['across_used_in_sampling'])
        self.assertIn('bin edges', report['budget_exempt_preprocessing'])
        spent = budget.verify()
        self.assertAlmostEqual(spent['epsilon'], 10.0, delta=1e-9 * 10.0)
        self.assertEqual(len(budget.entries), 10)
        self.assertTrue(all(t.length <= 3 for t in result.collection))
        self.assertTrue(all(u.startswith('synth-') for u in result.collection.user_ids))
        # population size is the noisy count of the first marginal
        self.assertLess(abs(report['n_synth'] - self.eligible), 0.2 * self.eligible)

    def test_seeded_determinism(self):
        a = run_direct(self.collection, 3, PrivacyBudget(2.0, 1e-5), variant=ACROSS, bins=8, seed=4)
        b = run_direct(self.collection, 3, PrivacyBudget(2.0, 1e-5), variant=ACROSS, bins=8, seed=4)
        self.assertEqual(a.collection, b.collection)
        self.assertEqual(a.report, b.report)
        self.assertEqual(a.report['num_across'], 3)

    def test_clip_flag(self):
        result = run_direct(self.collection, 3, PrivacyBudget(10.0, 1e-5), bins=8, clip=True, seed=0)
        upper = nearest_rank_percentile(
            [r[0] for t in self.collection if t.length >= 3 for r in t.rows[:3]], 99.0)
        values = result.collection.column_values('x')
        self.assertTrue(all(v <= upper for v in values))
        self.assertTrue(result.report['clipped'])

    def test_no_eligible_users(self):
        with self.assertRaises(ValueError):
            run_direct(self.collection, 50, PrivacyBudget(1.0, 1e-5))


if __name__ == '__main__':
    unittest.main()
