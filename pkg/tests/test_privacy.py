# tests/test_privacy.py
import math
import unittest

from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from trajsynth.privacy import (
    BudgetExceededError,
    PrivacyBudget,
    default_delta,
    default_epsilon_select,
    epsilon_to_rho,
    gaussian_rho,
    gaussian_sigma,
    rho_to_epsilon,
)


class TestConversions(unittest.TestCase):

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=1e-4, max_value=50.0), st.floats(min_value=1e-12, max_value=0.5))
    def test_epsilon_to_rho_matches_root_finder(self, epsilon, delta):
        a = math.log(1.0 / delta)
        oracle = brentq(lambda r: r + 2.0 * math.sqrt(r * a) - epsilon, 0.0, epsilon, xtol=1e-20, rtol=1e-14)
        self.assertAlmostEqual(epsilon_to_rho(epsilon, delta), oracle, delta=1e-9 * oracle + 1e-18)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=0.0, max_value=20.0), st.floats(min_value=1e-12, max_value=0.5))
    def test_roundtrip(self, epsilon, delta):
        self.assertAlmostEqual(rho_to_epsilon(epsilon_to_rho(epsilon, delta), delta), epsilon,
                               delta=1e-9 * max(epsilon, 1.0))

    def test_gaussian_mechanism(self):
        self.assertAlmostEqual(gaussian_sigma(0.5), 1.0)
        self.assertAlmostEqual(gaussian_sigma(0.5, sensitivity=3.0), 3.0)
        self.assertAlmostEqual(gaussian_rho(2.0, sensitivity=2.0), 0.5)
        self.assertEqual(gaussian_rho(0.0), math.inf)
        with self.assertRaises(ValueError):
            gaussian_sigma(0.0)

    def test_invalid_delta(self):
        with self.assertRaises(ValueError):
            rho_to_epsilon(1.0, 1.0)
        with self.assertRaises(ValueError):
            epsilon_to_rho(1.0, 0.0)

    def test_defaults(self):
        self.assertEqual(default_delta(1000), 1e-6)
        self.assertEqual(default_epsilon_select(0.5), 0.25)
        self.assertEqual(default_epsilon_select(2.0), 0.5)
        self.assertEqual(default_epsilon_select(4.0), 1.0)
        self.assertEqual(default_epsilon_select(10.0), 1.0)
        with self.assertRaises(ValueError):
            default_delta(1)


class TestPrivacyBudget(unittest.TestCase):

    def test_composition_reproduces_total(self):
        delta = default_delta(2000)
        for epsilon_total, epsilon_select in ((0.5, 0.25), (2.0, 0.5), (4.0, 1.0), (10.0, 1.0)):
            budget = PrivacyBudget(epsilon_total, delta, epsilon_select)
            share = budget.rho_train_cap / 7
            for i in range(7):
                budget.charge(f'query {i}', share)
            budget.charge_selection('votes', budget.rho_select_cap)
            spent = budget.verify()
            self.assertAlmostEqual(spent['epsilon'], epsilon_total, delta=1e-9 * epsilon_total)
            ledger = budget.ledger()
            self.assertEqual(ledger['delta_composed'], 2 * delta)
            self.assertAlmostEqual(ledger['epsilon_train_spent'] + ledger['epsilon_select_spent'],
                                   ledger['epsilon_spent'])

    def test_overspend_raises(self):
        budget = PrivacyBudget(1.0, 1e-6)
        budget.charge('a', budget.rho_train_cap * 0.6)
        with self.assertRaises(BudgetExceededError):
            budget.charge('b', budget.rho_train_cap * 0.6)
        self.assertEqual(len(budget.entries), 1)

    def test_selection_has_its_own_cap(self):
        budget = PrivacyBudget(2.0, 1e-6, 0.5)
        with self.assertRaises(BudgetExceededError):
            budget.charge_selection('votes', budget.rho_select_cap * 1.01)
        no_selection = PrivacyBudget(2.0, 1e-6)
        with self.assertRaises(BudgetExceededError):
            no_selection.charge_selection('votes', 1e-6)

    def test_non_positive_training_budget(self):
        with self.assertRaises(BudgetExceededError):
            PrivacyBudget(1.0, 1e-6, 1.0)
        with self.assertRaises(BudgetExceededError):
            PrivacyBudget(0.0, 1e-6)

    def test_verify_catches_tampered_ledger(self):
        budget = PrivacyBudget(1.0, 1e-6)
        budget.entries.append(('forged', budget.rho_train_cap * 2))
        with self.assertRaises(BudgetExceededError):
            budget.verify()

    def test_ledger_roundtrip(self):
        budget = PrivacyBudget(4.0, 1e-6, 1.0)
        budget.charge('q', 0.01)
        budget.charge_selection('votes', 0.001)
        again = PrivacyBudget.from_ledger(budget.ledger())
        self.assertEqual(again.ledger(), budget.ledger())
        self.assertEqual(budget.ledger()['delta_composed'], 2e-6)
        self.assertEqual(PrivacyBudget(4.0, 1e-6).ledger()['delta_composed'], 1e-6)


if __name__ == '__main__':
    unittest.main()
