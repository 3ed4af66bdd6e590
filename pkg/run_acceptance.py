# run_acceptance.py
"""
Desk-scale end-to-end experiment on the packaged acceptance HMM.

Over 5 seeds (2000 train / 500 test users, lengths 4-12):
  a) Direct-Markov transition divergence at epsilon=10 is no worse than at 0.5
  b) DP Markov backend output has lower TDCR-JSD than a shuffled-rows control
  c) ... and lower HMM likelihood divergence than the same control
plus the non-private real-subsample reference row.

Usage: python run_acceptance.py [output.json]
"""

import json
import sys
from datetime import datetime

import numpy as np

from trajsynth.cli import split_sample, spurious_demo
from trajsynth.core import subsample_collection
from trajsynth.direct_synth import run_direct
from trajsynth.generator import over_generate, train_dp_markov_backend
from trajsynth.hmm import likelihood_divergence
from trajsynth.metrics import shuffled_rows_control, tdcr, transition_divergence
from trajsynth.models import load_acceptance_hmm
from trajsynth.privacy import PrivacyBudget, default_delta, default_epsilon_select
from trajsynth.selection import select_collection

SEEDS = [0, 1, 2, 3, 4]
N_TRAIN = 2000
N_TEST = 500
N_OUT = 500
MIN_LENGTH, MAX_LENGTH = 4, 12
DIRECT_L = 4
EPSILONS = (0.5, 10.0)


def run_seed(spec, seed):
    print(f"\n--- seed {seed} ---")
    train, test = split_sample(spec, N_TRAIN, N_TEST, MIN_LENGTH, MAX_LENGTH, seed)
    delta = default_delta(len(train))
    result = {}

    # a) Direct-Markov at both budgets
    for epsilon in EPSILONS:
        direct = run_direct(train, DIRECT_L, PrivacyBudget(epsilon, delta), seed=seed)
        value = transition_divergence(train, direct.collection)['average']
        result[f'direct_transition_eps{epsilon:g}'] = value
        print(f"Direct-Markov eps={epsilon:g}: transition divergence {value:.4f}")

    # b, c) DP Markov backend with private selection vs shuffled control
    budget = PrivacyBudget(10.0, delta, default_epsilon_select(10.0))
    backend = train_dp_markov_backend(train, budget=budget, seed=seed, max_length=MAX_LENGTH)
    candidates, yield_report = over_generate(backend, train.schema, 2 * N_OUT, MAX_LENGTH, seed)
    synth, _ = select_collection(train, candidates, min(N_OUT, len(candidates)), seed=seed, budget=budget)
    budget.verify()
    control = shuffled_rows_control(subsample_collection(train, N_OUT, seed), seed)
    reference = subsample_collection(train, N_OUT, seed + 1000)
    print(f"Backend yield: {yield_report.produced}/{yield_report.requested} candidates")

    for name, collection in (('backend', synth), ('control', control), ('reference', reference)):
        result[f'{name}_tdcr_jsd'] = tdcr(collection, train, test).jsd
        result[f'{name}_likelihood'] = likelihood_divergence(spec, test, collection)
        print(f"{name:>9}: TDCR-JSD {result[f'{name}_tdcr_jsd']:.4f}, "
              f"likelihood W1 {result[f'{name}_likelihood']:.4f}")
    result['epsilon_spent'] = budget.ledger()['epsilon_spent']
    return result


def run_acceptance(output_path='acceptance_results.json'):
    """
    Run every acceptance experiment and save the per-seed and averaged results.
    """
    print("Starting acceptance run...")

    print("Checking the adjacent-pair demo...")
    demo = spurious_demo()
    mixed = {tuple(r['trajectory']): r['model'] for r in demo['trajectories']}[('alpha', 'gamma', 'beta')]
    print(f"P(alpha, gamma, beta) = {mixed:.4f}, spurious mass = {demo['spurious_mass']:.4f}")

    print("Loading acceptance HMM...")
    spec = load_acceptance_hmm()
    per_seed = [run_seed(spec, seed) for seed in SEEDS]
    means = {key: float(np.mean([r[key] for r in per_seed])) for key in per_seed[0]}

    checks = {
        'demo_mixed_quarter': abs(mixed - 0.25) <= 1e-12,
        'demo_spurious_half': abs(demo['spurious_mass'] - 0.5) <= 1e-12,
        'direct_improves_with_epsilon': means['direct_transition_eps10'] <= means['direct_transition_eps0.5'],
        'backend_tdcr_below_control': means['backend_tdcr_jsd'] < means['control_tdcr_jsd'],
        'backend_likelihood_below_control': means['backend_likelihood'] < means['control_likelihood'],
    }
    results = {
        'run_date': datetime.now().isoformat(),
        'seeds': SEEDS,
        'sizes': {'train': N_TRAIN, 'test': N_TEST, 'synth': N_OUT},
        'lengths': [MIN_LENGTH, MAX_LENGTH],
        'per_seed': per_seed,
        'means': means,
        'checks': checks,
    }
    with open(output_path, 'w') as f:
        json.dump(results, f, indent=2, sort_keys=True)

    print("\n" + "=" * 50)
    print("ACCEPTANCE SUMMARY")
    print("=" * 50)
    for key, value in sorted(means.items()):
        print(f"{key:<36} {value:.4f}")
    for name, passed in checks.items():
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
    print(f"Results saved to: {output_path}")
    return all(checks.values())


if __name__ == "__main__":
    sys.exit(0 if run_acceptance(*sys.argv[1:2]) else 1)
