# trajsynth/hmm.py
"""
Ground-truth data from a hidden Markov model with Gaussian emissions.

Sampling draws a latent state path from (initial, transition) and one
multivariate normal emission per step; scoring runs the forward recursion in
log space over the numeric feature columns only.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp
from scipy.stats import multivariate_normal, wasserstein_distance

from .core import (
    CATEGORICAL,
    NUMERIC,
    Collection,
    Column,
    Schema,
    UserTable,
)

logger = logging.getLogger(__name__)

PROBABILITY_TOLERANCE = 1e-12
TIMESTEP_COLUMN = 'timestep'


@dataclass(frozen=True)
class CategoricalRule:
    """Derive a categorical column by bucketing one emitted feature at fixed thresholds."""
    name: str
    source: str
    thresholds: Tuple[float, ...]
    labels: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, 'thresholds', tuple(float(t) for t in self.thresholds))
        object.__setattr__(self, 'labels', tuple(self.labels))
        if len(self.labels) != len(self.thresholds) + 1:
            raise ValueError('A categorical rule needs exactly one more label than thresholds')
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError('Categorical rule thresholds must be strictly increasing')

    def label(self, value: float) -> str:
        return self.labels[int(np.searchsorted(self.thresholds, value, side='right'))]

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'source': self.source,
                'thresholds': list(self.thresholds), 'labels': list(self.labels)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'CategoricalRule':
        return cls(data['name'], data['source'], tuple(data['thresholds']), tuple(data['labels']))


@dataclass(frozen=True, eq=False)
class HmmSpec:
    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    feature_names: Tuple[str, ...]
    categorical_rule: Optional[CategoricalRule] = None
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        initial = np.asarray(self.initial, dtype=float)
        transition = np.asarray(self.transition, dtype=float)
        means = np.asarray(self.means, dtype=float)
        covariances = np.asarray(self.covariances, dtype=float)
        n_states = initial.shape[0] if initial.ndim == 1 else -1
        n_features = len(self.feature_names)

        if initial.ndim != 1 or n_states < 1:
            raise ValueError('initial must be a non-empty probability vector')
        if transition.shape != (n_states, n_states):
            raise ValueError(f'transition must be {n_states}x{n_states}, got {transition.shape}')
        if means.shape != (n_states, n_features):
            raise ValueError(f'means must be {n_states}x{n_features}, got {means.shape}')
        if covariances.shape != (n_states, n_features, n_features):
            raise ValueError(f'covariances must be {n_states}x{n_features}x{n_features}, got {covariances.shape}')
        if (initial < 0).any() or (transition < 0).any():
            raise ValueError('HMM probabilities must be non-negative')
        if abs(initial.sum() - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f'initial sums to {initial.sum()!r}, not 1')
        row_sums = transition.sum(axis=1)
        if np.abs(row_sums - 1.0).max() > PROBABILITY_TOLERANCE:
            raise ValueError(f'transition rows sum to {row_sums.tolist()}, not 1')
        if len(set(self.feature_names)) != n_features:
            raise ValueError('feature names must be unique')

        factors = []
        for i, sigma in enumerate(covariances):
            if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12):
                raise ValueError(f'covariance of state {i} is not symmetric')
            try:
                factors.append(np.linalg.cholesky(sigma))
            except np.linalg.LinAlgError:
                raise ValueError(f'covariance of state {i} is not positive definite')

        rule = self.categorical_rule
        if rule is not None:
            if rule.source not in self.feature_names:
                raise ValueError(f'categorical rule source {rule.source!r} is not a feature')
            if rule.name in self.feature_names or rule.name == TIMESTEP_COLUMN:
                raise ValueError(f'categorical rule name {rule.name!r} collides with a column')

        object.__setattr__(self, 'initial', initial)
        object.__setattr__(self, 'transition', transition)
        object.__setattr__(self, 'means', means)
        object.__setattr__(self, 'covariances', covariances)
        object.__setattr__(self, 'feature_names', tuple(self.feature_names))
        object.__setattr__(self, 'cholesky', np.stack(factors))

    @property
    def num_states(self) -> int:
        return self.initial.shape[0]

    @property
    def num_features(self) -> int:
        return len(self.feature_names)

    def schema(self, include_timestep: bool = True) -> Schema:
        """Schema of sampled tables: [timestep], features, [derived categorical]."""
        columns = []
        if include_timestep:
            columns.append(Column(TIMESTEP_COLUMN, NUMERIC))
        columns.extend(Column(name, NUMERIC) for name in self.feature_names)
        if self.categorical_rule is not None:
            columns.append(Column(self.categorical_rule.name, CATEGORICAL, self.categorical_rule.labels))
        return Schema(tuple(columns))

    def to_dict(self) -> Dict[str, Any]:
        data = {
            'initial': self.initial.tolist(),
            'transition': self.transition.tolist(),
            'means': self.means.tolist(),
            'covariances': self.covariances.tolist(),
            'feature_names': list(self.feature_names),
        }
        if self.categorical_rule is not None:
            data['categorical_rule'] = self.categorical_rule.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'HmmSpec':
        rule = data.get('categorical_rule')
        return cls(
            initial=np.asarray(data['initial'], dtype=float),
            transition=np.asarray(data['transition'], dtype=float),
            means=np.asarray(data['means'], dtype=float),
            covariances=np.asarray(data['covariances'], dtype=float),
            feature_names=tuple(data['feature_names']),
            categorical_rule=CategoricalRule.from_dict(rule) if rule else None,
        )

    @classmethod
    def load(cls, path: str) -> 'HmmSpec':
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)


@dataclass(frozen=True)
class LengthDistribution:
    probabilities: Dict[int, float]

    def __post_init__(self):
        probabilities = {int(k): float(v) for k, v in sorted(self.probabilities.items())}
        if not probabilities:
            raise ValueError('length distribution has empty support')
        if min(probabilities) < 1:
            raise ValueError('table lengths must be >= 1')
        if any(p < 0 for p in probabilities.values()):
            raise ValueError('length probabilities must be non-negative')
        if abs(sum(probabilities.values()) - 1.0) > PROBABILITY_TOLERANCE:
            raise ValueError(f'length probabilities sum to {sum(probabilities.values())!r}, not 1')
        object.__setattr__(self, 'probabilities', probabilities)

    @classmethod
    def uniform(cls, low: int, high: int) -> 'LengthDistribution':
        lengths = range(low, high + 1)
        return cls({t: 1.0 / len(lengths) for t in lengths})

    @classmethod
    def from_counts(cls, counts: Dict[int, float]) -> 'LengthDistribution':
        total = float(sum(counts.values()))
        if total <= 0:
            raise ValueError('length counts must have positive total')
        return cls({t: c / total for t, c in counts.items() if c > 0})

    @property
    def support(self) -> List[int]:
        return list(self.probabilities)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        p = np.array(list(self.probabilities.values()))
        return rng.choice(self.support, size=size, p=p / p.sum())

    def to_dict(self) -> Dict[str, float]:
        return {str(t): p for t, p in self.probabilities.items()}

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> 'LengthDistribution':
        return cls({int(t): p for t, p in data.items()})


def stationary_distribution(transition: np.ndarray) -> np.ndarray:
    """Left eigenvector of the transition matrix for eigenvalue 1, normalized."""
    values, vectors = np.linalg.eig(np.asarray(transition, dtype=float).T)
    vector = np.real(vectors[:, np.argmin(np.abs(values - 1.0))])
    return vector / vector.sum()


def sample_path(spec: HmmSpec, length: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Latent states and emissions (length x N_f) of one trajectory."""
    states = np.empty(length, dtype=int)
    states[0] = rng.choice(spec.num_states, p=spec.initial)
    for t in range(1, length):
        states[t] = rng.choice(spec.num_states, p=spec.transition[states[t - 1]])
    noise = rng.standard_normal((length, spec.num_features))
    emissions = spec.means[states] + np.einsum('tij,tj->ti', spec.cholesky[states], noise)
    return states, emissions


def sample_collection(
    spec: HmmSpec,
    n: int,
    lengths: LengthDistribution,
    seed: int,
    categorical_rule: Optional[CategoricalRule] = None,
    include_timestep: bool = True,
) -> Collection:
    """
    Draw n user tables from the HMM.

    Args:
        spec (HmmSpec): Ground-truth model
        n (int): Number of users
        lengths (LengthDistribution): Distribution of table lengths
        seed (int): Root seed; the output is bit-reproducible given it
        categorical_rule (CategoricalRule, optional): Overrides spec.categorical_rule
        include_timestep (bool): Prepend a 0-based timestep column

    Returns:
        Collection: Users "u000000".."u<n-1>"
    """
    if n < 1:
        raise ValueError(f'n must be >= 1, got {n}')
    rule = categorical_rule or spec.categorical_rule
    if rule is not None and rule is not spec.categorical_rule:
        spec = HmmSpec(spec.initial, spec.transition, spec.means, spec.covariances, spec.feature_names, rule)
    schema = spec.schema(include_timestep)
    source = spec.feature_names.index(rule.source) if rule is not None else None

    rng = np.random.default_rng(seed)
    table_lengths = lengths.sample(rng, size=n)
    width = len(str(n - 1))
    tables = []
    for i, length in enumerate(table_lengths):
        _, emissions = sample_path(spec, int(length), rng)
        rows = []
        for t, observation in enumerate(emissions):
            row = [float(t)] if include_timestep else []
            row.extend(float(x) for x in observation)
            if rule is not None:
                row.append(rule.label(observation[source]))
            rows.append(tuple(row))
        tables.append(UserTable(f'u{i:0{width}d}', tuple(rows)))

    logger.info(f'Sampled {n} tables from a {spec.num_states}-state HMM (seed={seed})')
    return Collection.from_tables(schema, tables)


def _observations(spec: HmmSpec, schema: Schema, table: UserTable) -> np.ndarray:
    try:
        indices = [schema.index(name) for name in spec.feature_names]
    except ValueError:
        raise ValueError(
            f'feature mismatch: schema {schema.names} lacks some of {list(spec.feature_names)}'
        )
    for j in indices:
        if schema.columns[j].kind != NUMERIC:
            raise ValueError(f'feature mismatch: column {schema.columns[j].name!r} is not numeric')
    for t, row in enumerate(table.rows):
        for j in indices:
            if row[j] is None:
                raise ValueError(
                    f'Null in scored cell: user {table.user_id!r}, row {t}, column {schema.columns[j].name!r}'
                )
    return np.array([[row[j] for j in indices] for row in table.rows], dtype=float)


def emission_log_densities(spec: HmmSpec, observations: np.ndarray) -> np.ndarray:
    """(T, N_s) matrix of log N(o_t; mu_i, Sigma_i)."""
    return np.column_stack([
        np.atleast_1d(multivariate_normal.logpdf(observations, spec.means[i], spec.covariances[i]))
        for i in range(spec.num_states)
    ])


def forward_log_likelihood(spec: HmmSpec, table: UserTable, schema: Schema) -> float:
    """Natural-log likelihood of the table's feature rows under the HMM (forward recursion)."""
    observations = _observations(spec, schema, table)
    if observations.shape[0] == 0:
        raise ValueError(f'user {table.user_id!r} has no rows to score')
    log_b = emission_log_densities(spec, observations)
    with np.errstate(divide='ignore'):
        log_pi = np.log(spec.initial)
        log_a = np.log(spec.transition)

    log_alpha = log_pi + log_b[0]
    for t in range(1, observations.shape[0]):
        log_alpha = logsumexp(log_alpha[:, None] + log_a, axis=0) + log_b[t]
    return float(logsumexp(log_alpha))


def score_collection(
    spec: HmmSpec, collection: Collection, n_jobs: int = 1
) -> Tuple[Dict[str, float], List[str]]:
    """
    Per-table total log-likelihoods.

    Returns:
        Tuple: (scores keyed by user id, ids excluded for Null in scored cells)
    """
    def score(table):
        try:
            return forward_log_likelihood(spec, table, collection.schema)
        except ValueError as e:
            if str(e).startswith('Null in scored cell'):
                return None
            raise

    results = Parallel(n_jobs=n_jobs)(delayed(score)(t) for t in collection)
    scores = {}
    excluded = []
    for user_id, value in zip(collection.user_ids, results):
        if value is None:
            excluded.append(user_id)
        else:
            scores[user_id] = value
    if excluded:
        logger.warning(f'Excluded {len(excluded)} tables with Null in scored columns')
    return scores, excluded


def likelihood_comparison(
    spec: HmmSpec, real: Collection, synth: Collection, n_jobs: int = 1
) -> Dict[str, Any]:
    """
    Score both collections and compare their per-table log-likelihood distributions.

    Returns:
        Dict[str, Any]: 'value' (W1) plus exclusion counts and the raw scores
    """
    real_scores, real_excluded = score_collection(spec, real, n_jobs)
    synth_scores, synth_excluded = score_collection(spec, synth, n_jobs)
    if not real_scores or not synth_scores:
        raise ValueError('likelihood divergence needs at least one scorable table on each side')
    value = wasserstein_distance(list(real_scores.values()), list(synth_scores.values()))
    return {
        'value': float(value),
        'excluded_real': len(real_excluded),
        'excluded_synth': len(synth_excluded),
        'real_scores': real_scores,
        'synth_scores': synth_scores,
    }


def likelihood_divergence(spec: HmmSpec, real: Collection, synth: Collection, n_jobs: int = 1) -> float:
    """W1 distance between per-table total log-likelihoods of real and synthetic tables."""
    return likelihood_comparison(spec, real, synth, n_jobs)['value']
