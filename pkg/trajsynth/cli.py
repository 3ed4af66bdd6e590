# trajsynth/cli.py
"""
Command-line entry point: `trajsynth <subcommand> ...`.

Exit codes: 0 success, 2 invalid input, 3 privacy budget violation.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from . import __version__, get_settings
from .config import ExperimentConfig
from .core import CATEGORICAL, Collection, Column, Schema, UserTable, read_collection, write_collection
from .direct_synth import (
    DEFAULT_BINS,
    DEFAULT_MAX_ACROSS,
    MARKOV,
    VARIANTS,
    Discretizer,
    estimate_markov,
    measure,
    run_direct,
    sample_codes,
    select_marginals,
)
from .flatten import filter_truncate, flatten, maxent_two_local, spurious_mass, write_flat_table
from .generator import DEFAULT_MAX_LENGTH, DpMarkovBackend, over_generate, train_dp_markov_backend
from .hmm import HmmSpec, LengthDistribution, likelihood_comparison, sample_collection
from .logging_config import setup_logging
from .metrics import EvaluationConfig, density_grid, evaluate, histogram_frame, tdcr
from .models import ACCEPTANCE_HMM_PATH, ModelManager
from .privacy import BudgetExceededError, PrivacyBudget, default_delta, default_epsilon_select
from .selection import DEFAULT_NEIGHBORS, select_collection
from .serialization import DEFAULT_P_START, make_training_examples, write_training_examples

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3

SPURIOUS_SOURCE = {('alpha', 'gamma', 'alpha'): 0.5, ('beta', 'gamma', 'beta'): 0.5}


def _write_json(data: Dict[str, Any], path: str) -> None:
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write('\n')


def _budget(epsilon: float, delta: Optional[float], n: int, epsilon_select: float) -> PrivacyBudget:
    return PrivacyBudget(epsilon, delta if delta is not None else default_delta(n), epsilon_select)


def release(collection: Collection, budget: PrivacyBudget, output: str, ledger_path: str,
            extra: Optional[Dict[str, Any]] = None) -> None:
    """Verify the ledger, then write the data and the ledger."""
    budget.verify()
    ledger = budget.ledger()
    ledger.update(extra or {})
    write_collection(collection, output)
    _write_json(ledger, ledger_path)


def load_hmm(path: Optional[str]) -> HmmSpec:
    return HmmSpec.load(path or ACCEPTANCE_HMM_PATH)


def split_sample(spec: HmmSpec, n_train: int, n_test: int, min_length: int, max_length: int, seed: int):
    """Train and held-out collections drawn in one seeded pass."""
    collection = sample_collection(spec, n_train + n_test, LengthDistribution.uniform(min_length, max_length), seed)
    ids = collection.user_ids
    return collection.subset(ids[:n_train]), collection.subset(ids[n_train:])


def spurious_demo(n: int = 0, seed: int = 0) -> Dict[str, Any]:
    """
    Two user types (alpha, gamma, alpha) and (beta, gamma, beta): the
    adjacent-pair model puts 0.25 on each mixed trajectory. With n > 0 the same
    is checked empirically by the noiseless Direct Markov sampler.
    """
    model = maxent_two_local(SPURIOUS_SOURCE)
    result: Dict[str, Any] = {
        'trajectories': [
            {'trajectory': list(y), 'source': SPURIOUS_SOURCE.get(y, 0.0), 'model': p}
            for y, p in sorted(model.items())
        ],
        'spurious_mass': spurious_mass(SPURIOUS_SOURCE, model),
    }
    if n > 0:
        schema = Schema((Column('x', CATEGORICAL, ('alpha', 'beta', 'gamma')),))
        sources = sorted(SPURIOUS_SOURCE)
        tables = [
            UserTable(f'u{i:06d}', tuple((v,) for v in sources[i % 2])) for i in range(n)
        ]
        flat = flatten(Collection.from_tables(schema, tables), 3)
        disc = Discretizer.fit_flat(flat)
        queries = select_marginals(1, 3, MARKOV)
        markov = estimate_markov(measure(flat, disc, queries, 0.0, seed), 1, 3, disc.sizes)
        codes = sample_codes(markov, n, seed)
        counts: Dict[tuple, int] = {}
        for row in disc.decode_rows(codes):
            counts[row] = counts.get(row, 0) + 1
        result['sampled'] = {' '.join(k): v / n for k, v in sorted(counts.items())}
    return result


def plot_data(real_train: Collection, real_test: Collection, synth: Collection, output_dir: str,
              config: EvaluationConfig, hmm_spec: Optional[HmmSpec] = None,
              lat: Optional[str] = None, lon: Optional[str] = None, bin_width: float = 0.01,
              n_jobs: int = 1) -> List[str]:
    """Histogram and grid CSVs behind the usual figures; returns the written paths."""
    os.makedirs(output_dir, exist_ok=True)
    written = []
    result = tdcr(synth, real_train, real_test, config.tdcr_bins, weights=config.weights, n_jobs=n_jobs)
    path = os.path.join(output_dir, 'tdcr_histogram.csv')
    histogram_frame({'synth': result.synth_distances, 'test': result.test_distances},
                    config.tdcr_bins).to_csv(path, index=False, lineterminator='\n')
    written.append(path)
    if hmm_spec is not None:
        scores = likelihood_comparison(hmm_spec, real_test, synth, n_jobs)
        path = os.path.join(output_dir, 'likelihood_histogram.csv')
        histogram_frame({'real': list(scores['real_scores'].values()),
                         'synth': list(scores['synth_scores'].values())},
                        config.tdcr_bins).to_csv(path, index=False, lineterminator='\n')
        written.append(path)
    if lat and lon:
        for name, collection in (('real', real_train), ('synth', synth)):
            path = os.path.join(output_dir, f'density_{name}.csv')
            density_grid(collection, lat, lon, bin_width).to_csv(path, index=False, lineterminator='\n')
            written.append(path)
    logger.info(f'Wrote {len(written)} plot-data files to {output_dir}')
    return written


def run_experiment(config: ExperimentConfig, output_dir: str, n_jobs: int = 1) -> Dict[str, str]:
    """
    Data, synthesis, ledger check, release, evaluation and plot data in one
    directory. Nothing is written before the ledger has been verified.
    """
    if config.source == 'hmm':
        spec = load_hmm(config.hmm_spec)
        real_train, real_test = split_sample(
            spec, config.n_train, config.n_test, config.min_length, config.max_length, config.seed
        )
    else:
        schema = Schema.load(config.schema)
        spec = HmmSpec.load(config.hmm_spec) if config.hmm_spec else None
        real_train = read_collection(config.real_train, schema)
        real_test = read_collection(config.real_test, schema)

    delta = config.delta if config.delta is not None else default_delta(len(real_train))
    synthesis: Dict[str, Any] = {}
    if config.method == 'direct':
        budget = PrivacyBudget(config.epsilon_total, delta, 0.0)
        result = run_direct(real_train, config.L, budget, config.variant, config.bins, config.max_across,
                            config.clip, config.seed, config.strategy, n_jobs)
        synth = result.collection
        synthesis = {k: v for k, v in result.report.items() if k != 'ledger'}
    else:
        epsilon_select = (config.epsilon_select if config.epsilon_select is not None
                          else default_epsilon_select(config.epsilon_total))
        budget = PrivacyBudget(config.epsilon_total, delta, epsilon_select)
        backend = train_dp_markov_backend(real_train, config.bins, budget, config.seed,
                                          config.backend_max_length, config.strategy)
        n_out = config.n_out or len(real_train)
        candidates, yield_report = over_generate(
            backend, real_train.schema, config.candidate_multiplier * n_out, config.backend_max_length,
            config.seed, n_jobs
        )
        synth, selection = select_collection(
            real_train, candidates, min(n_out, len(candidates)), config.neighbors, seed=config.seed, budget=budget
        )
        synthesis = {'yield': yield_report.to_dict(), 'selection_sigma': selection.sigma,
                     'budget_exempt_preprocessing': ['bin edges']}

    os.makedirs(output_dir, exist_ok=True)
    paths = {
        'synth': os.path.join(output_dir, 'synth.csv'),
        'ledger': os.path.join(output_dir, 'ledger.json'),
        'report': os.path.join(output_dir, 'report.json'),
        'config': os.path.join(output_dir, 'config.json'),
    }
    release(synth, budget, paths['synth'], paths['ledger'],
            {'non_private_postprocessing': ['clipping'] if synthesis.get('clipped') else []})

    report = evaluate(real_train, real_test, synth, config.evaluation, spec, n_jobs)
    report.parameters['experiment'] = config.to_dict()
    report.parameters['delta'] = delta
    report.parameters['synthesis'] = synthesis
    report.save(paths['report'])
    _write_json(config.to_dict(), paths['config'])
    plot_data(real_train, real_test, synth, os.path.join(output_dir, 'plot_data'), config.evaluation,
              spec, n_jobs=n_jobs)
    logger.info(f'Experiment written to {output_dir}')
    return paths


def cmd_hmm_gen(args) -> None:
    spec = load_hmm(args.spec)
    collection = sample_collection(spec, args.n, LengthDistribution.uniform(args.min_len, args.max_len), args.seed)
    write_collection(collection, args.output)
    if args.schema_out:
        collection.schema.save(args.schema_out)


def cmd_flatten(args) -> None:
    collection = filter_truncate(read_collection(args.input, Schema.load(args.schema)), args.L)
    write_flat_table(flatten(collection, args.L), args.output)


def cmd_direct_synth(args) -> None:
    collection = read_collection(args.input, Schema.load(args.schema))
    budget = _budget(args.epsilon, args.delta, len(collection), 0.0)
    result = run_direct(collection, args.L, budget, args.variant, args.bins, args.max_across,
                        args.clip, args.seed, args.strategy, args.n_jobs)
    report = {k: v for k, v in result.report.items() if k != 'ledger'}
    release(result.collection, budget, args.output, args.ledger or args.output + '.ledger.json',
            {'synthesis': report})


def cmd_train_backend(args) -> None:
    collection = read_collection(args.input, Schema.load(args.schema))
    epsilon_select = args.eps_select if args.eps_select is not None else default_epsilon_select(args.epsilon)
    budget = _budget(args.epsilon, args.delta, len(collection), epsilon_select)
    backend = train_dp_markov_backend(collection, args.bins, budget, args.seed, args.max_length)
    budget.verify()
    manager = ModelManager(args.models_dir)
    manager.save_model(backend, args.version, {'bins': args.bins, 'seed': args.seed, 'n_users': len(collection)})


def _load_backend(args) -> DpMarkovBackend:
    if args.model:
        with open(args.model) as f:
            return DpMarkovBackend.from_dict(json.load(f))
    manager = ModelManager(args.models_dir)
    if not manager.load_model(args.version):
        raise FileNotFoundError(f'backend version {args.version} not found in {args.models_dir}')
    return manager.get_model(args.version)


def cmd_generate(args) -> None:
    backend = _load_backend(args)
    candidates, report = over_generate(backend, backend.schema, args.n, args.max_len, args.seed, args.n_jobs)
    write_collection(candidates, args.output)
    _write_json(report.to_dict(), args.output + '.yield.json')


def cmd_select(args) -> None:
    schema = Schema.load(args.schema)
    real = read_collection(args.real, schema)
    candidates = read_collection(args.candidates, schema)
    delta = args.delta if args.delta is not None else default_delta(len(real))
    selected, result = select_collection(real, candidates, args.m, args.k, args.eps_select, delta,
                                         args.seed, exact=args.exact)
    write_collection(selected, args.output)
    _write_json(result.to_dict(), args.output + '.selection.json')


def _evaluation_inputs(args):
    schema = Schema.load(args.schema)
    config = EvaluationConfig()
    if args.config:
        with open(args.config) as f:
            config = EvaluationConfig.from_dict(json.load(f))
    spec = HmmSpec.load(args.hmm_spec) if args.hmm_spec else None
    return (read_collection(args.real_train, schema), read_collection(args.real_test, schema),
            read_collection(args.synth, schema), config, spec)


def cmd_evaluate(args) -> None:
    real_train, real_test, synth, config, spec = _evaluation_inputs(args)
    evaluate(real_train, real_test, synth, config, spec, args.n_jobs).save(args.output)


def cmd_plot_data(args) -> None:
    real_train, real_test, synth, config, spec = _evaluation_inputs(args)
    plot_data(real_train, real_test, synth, args.output_dir, config, spec, args.lat, args.lon,
              args.bin_width, args.n_jobs)


def cmd_demo_spurious(args) -> None:
    result = spurious_demo(args.samples, args.seed)
    print(f"{'trajectory':<24} {'source':>8} {'model':>8}")
    for row in result['trajectories']:
        print(f"{' '.join(row['trajectory']):<24} {row['source']:>8.4f} {row['model']:>8.4f}")
    print(f"spurious mass: {result['spurious_mass']:.4f}")
    for trajectory, frequency in result.get('sampled', {}).items():
        print(f'sampled {trajectory:<24} {frequency:.4f}')


def cmd_make_examples(args) -> None:
    collection = read_collection(args.input, Schema.load(args.schema))
    write_training_examples(make_training_examples(collection, args.p_start, args.seed), args.output)


def cmd_run(args) -> None:
    config = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    config = config.with_overrides(epsilon_total=args.epsilon, seed=args.seed, method=args.method)
    paths = run_experiment(config, args.output_dir, args.n_jobs)
    print(json.dumps(paths, indent=2, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    formatter = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog='trajsynth', description=__doc__.strip().splitlines()[0],
                                     formatter_class=formatter)
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('--log-level', help='overrides LOG_LEVEL')
    parser.add_argument('--n-jobs', type=int, help='parallel workers (overrides TRAJSYNTH_N_JOBS)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('hmm-gen', help='sample a collection from an HMM', formatter_class=formatter)
    p.add_argument('--spec', help='HMM JSON (default: packaged acceptance HMM)')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--min-len', type=int, default=10)
    p.add_argument('--max-len', type=int, default=10)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True)
    p.add_argument('--schema-out')
    p.set_defaults(handler=cmd_hmm_gen)

    p = sub.add_parser('flatten', help='filter/truncate to L and flatten', formatter_class=formatter)
    p.add_argument('--input', required=True)
    p.add_argument('--schema', required=True)
    p.add_argument('--L', type=int, required=True)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=cmd_flatten)

    p = sub.add_parser('direct-synth', help='Direct marginal mechanism', formatter_class=formatter)
    p.add_argument('--input', required=True)
    p.add_argument('--schema', required=True)
    p.add_argument('--L', type=int, required=True)
    p.add_argument('--variant', choices=VARIANTS, default=MARKOV)
    p.add_argument('--epsilon', type=float, required=True)
    p.add_argument('--delta', type=float, help='default 1/n^2')
    p.add_argument('--bins', type=int, default=DEFAULT_BINS)
    p.add_argument('--strategy', choices=('uniform', 'quantile'), default='uniform')
    p.add_argument('--max-across', type=int, default=DEFAULT_MAX_ACROSS)
    p.add_argument('--clip', action='store_true', help='clip to [min, P99] of the real data (not DP)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True)
    p.add_argument('--ledger', help='default <output>.ledger.json')
    p.set_defaults(handler=cmd_direct_synth)

    p = sub.add_parser('train-backend', help='train the DP Markov backend', formatter_class=formatter)
    p.add_argument('--input', required=True)
    p.add_argument('--schema', required=True)
    p.add_argument('--epsilon', type=float, required=True)
    p.add_argument('--eps-select', type=float, help='reserved for selection; default by epsilon')
    p.add_argument('--delta', type=float, help='default 1/n^2')
    p.add_argument('--bins', type=int, default=DEFAULT_BINS)
    p.add_argument('--max-length', type=int, default=DEFAULT_MAX_LENGTH)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--models-dir')
    p.add_argument('--version', dest='model_version', default='v1')
    p.set_defaults(handler=cmd_train_backend)

    p = sub.add_parser('generate', help='over-generate candidate tables', formatter_class=formatter)
    p.add_argument('--backend', choices=('markov',), default='markov')
    p.add_argument('--model', help='backend JSON; otherwise --models-dir/--version')
    p.add_argument('--models-dir')
    p.add_argument('--version', dest='model_version', default='v1')
    p.add_argument('--n', type=int, required=True)
    p.add_argument('--max-len', type=int, default=DEFAULT_MAX_LENGTH)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser('select', help='private k-NN selection', formatter_class=formatter)
    p.add_argument('--real', required=True)
    p.add_argument('--candidates', required=True)
    p.add_argument('--schema', required=True)
    p.add_argument('--k', type=int, default=DEFAULT_NEIGHBORS)
    p.add_argument('--m', type=int, required=True)
    p.add_argument('--eps-select', type=float, default=1.0)
    p.add_argument('--delta', type=float, help='default 1/n^2')
    p.add_argument('--exact', action='store_true', help='no noise, no accounting (not DP)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=cmd_select)

    for name, handler, help_text in (('evaluate', cmd_evaluate, 'metric report'),
                                     ('plot-data', cmd_plot_data, 'figure data as CSV')):
        p = sub.add_parser(name, help=help_text, formatter_class=formatter)
        p.add_argument('--real-train', required=True)
        p.add_argument('--real-test', required=True)
        p.add_argument('--synth', required=True)
        p.add_argument('--schema', required=True)
        p.add_argument('--hmm-spec')
        p.add_argument('--config', help='evaluation settings JSON')
        if name == 'evaluate':
            p.add_argument('--output', required=True)
        else:
            p.add_argument('--output-dir', required=True)
            p.add_argument('--lat')
            p.add_argument('--lon')
            p.add_argument('--bin-width', type=float, default=0.01)
        p.set_defaults(handler=handler)

    p = sub.add_parser('demo-spurious', help='spurious trajectories of the adjacent-pair model',
                       formatter_class=formatter)
    p.add_argument('--samples', type=int, default=0, help='also sample this many rows from the Direct model')
    p.add_argument('--seed', type=int, default=0)
    p.set_defaults(handler=cmd_demo_spurious)

    p = sub.add_parser('make-examples', help='training examples as JSON lines', formatter_class=formatter)
    p.add_argument('--input', required=True)
    p.add_argument('--schema', required=True)
    p.add_argument('--p-start', type=float, default=DEFAULT_P_START)
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--output', required=True)
    p.set_defaults(handler=cmd_make_examples)

    p = sub.add_parser('run', help='end-to-end experiment', formatter_class=formatter)
    p.add_argument('--config', help='experiment JSON')
    p.add_argument('--output-dir', required=True)
    p.add_argument('--epsilon', type=float)
    p.add_argument('--method', choices=('direct', 'markov_backend'))
    p.add_argument('--seed', type=int)
    p.set_defaults(handler=cmd_run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    setup_logging(args.log_level)
    args.n_jobs = args.n_jobs or settings['N_JOBS']
    if hasattr(args, 'models_dir') and not args.models_dir:
        args.models_dir = settings['MODELS_DIR']
    if hasattr(args, 'model_version'):
        args.version = args.model_version

    try:
        args.handler(args)
    except BudgetExceededError as e:
        logger.error(f'Privacy budget violation: {e}')
        return EXIT_BUDGET
    except (ValueError, KeyError, FileNotFoundError) as e:
        logger.error(f'Invalid input: {e}')
        return EXIT_INVALID
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
