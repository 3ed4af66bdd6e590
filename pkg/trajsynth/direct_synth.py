# trajsynth/direct_synth.py
"""
The Direct marginal mechanism on flattened tables.

Pipeline: discretize every flat column, pick 1-way and adjacent-time 2-way
marginals (optionally same-timestep cross-feature pairs), measure them with
the Gaussian mechanism, project the noisy counts onto per-feature Markov
chains and sample new flat rows from the chains.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from sklearn.preprocessing import KBinsDiscretizer

from .core import CATEGORICAL, NUMERIC, TIMESTAMP, Cell, Collection, Column, Row, Schema, UserTable
from .flatten import FlatTable, filter_truncate, flatten, unflatten
from .privacy import BudgetExceededError, PrivacyBudget, gaussian_rho, gaussian_sigma

logger = logging.getLogger(__name__)

DEFAULT_BINS = 32
DEFAULT_MAX_ACROSS = 80
MARKOV = 'markov'
ACROSS = 'across'
VARIANTS = (MARKOV, ACROSS)
BINNING_STRATEGIES = ('uniform', 'quantile')


@dataclass(frozen=True)
class ColumnBins:
    """
    Code space of one column: B value codes plus the Null code B.

    Numeric and timestamp columns carry B+1 strictly increasing edges; values
    outside the edges fall into the first or last bin. Categorical columns map
    category i to code i.
    """
    column: Column
    edges: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.column.kind == CATEGORICAL:
            if self.edges is not None:
                raise ValueError(f'categorical column {self.column.name!r} takes no bin edges')
            return
        if self.edges is None or len(self.edges) < 2:
            raise ValueError(f'column {self.column.name!r} needs at least two bin edges')
        edges = tuple(float(e) for e in self.edges)
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError(f'bin edges of {self.column.name!r} must be strictly increasing')
        object.__setattr__(self, 'edges', edges)

    @property
    def num_bins(self) -> int:
        if self.column.kind == CATEGORICAL:
            return len(self.column.categories)
        return len(self.edges) - 1

    @property
    def null_code(self) -> int:
        return self.num_bins

    @property
    def size(self) -> int:
        return self.num_bins + 1

    def encode(self, values: Sequence[Cell]) -> np.ndarray:
        codes = np.full(len(values), self.null_code, dtype=np.int64)
        if self.column.kind == CATEGORICAL:
            lookup = {c: i for i, c in enumerate(self.column.categories)}
            for i, v in enumerate(values):
                if v is not None:
                    codes[i] = lookup[v]
            return codes
        present = np.array([v is not None for v in values], dtype=bool)
        if present.any():
            x = np.array([float(v) for v in values if v is not None])
            inner = np.searchsorted(np.asarray(self.edges), x, side='right') - 1
            codes[present] = np.clip(inner, 0, self.num_bins - 1)
        return codes

    def decode(self, code: int) -> Cell:
        code = int(code)
        if code == self.null_code:
            return None
        if not 0 <= code < self.num_bins:
            raise ValueError(f'code {code} out of range for column {self.column.name!r}')
        if self.column.kind == CATEGORICAL:
            return self.column.categories[code]
        midpoint = 0.5 * (self.edges[code] + self.edges[code + 1])
        if self.column.kind == TIMESTAMP:
            return int(round(midpoint))
        return float(midpoint)

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'column': self.column.to_dict()}
        if self.edges is not None:
            data['edges'] = list(self.edges)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ColumnBins':
        edges = data.get('edges')
        return cls(Column.from_dict(data['column']), tuple(edges) if edges is not None else None)


def fit_edges(values: Sequence[float], n_bins: int, strategy: str = 'uniform') -> Tuple[float, ...]:
    """
    Bin edges for one numeric column.

    A column without values gets the single bin [0, 1]; a constant column gets
    [v - 0.5, v + 0.5].
    """
    if strategy not in BINNING_STRATEGIES:
        raise ValueError(f'unknown binning strategy {strategy!r}; expected one of {BINNING_STRATEGIES}')
    if n_bins < 1:
        raise ValueError(f'bins must be >= 1, got {n_bins}')
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        return (0.0, 1.0)
    low, high = float(x.min()), float(x.max())
    if low == high:
        return (low - 0.5, low + 0.5)
    if n_bins == 1:
        return (low, high)

    estimator = KBinsDiscretizer(n_bins=n_bins, encode='ordinal', strategy=strategy, subsample=None)
    with warnings.catch_warnings():
        # quantile binning merges duplicate edges and warns about it
        warnings.simplefilter('ignore', UserWarning)
        estimator.fit(x.reshape(-1, 1))
    edges = np.unique(estimator.bin_edges_[0])
    if edges.size < 2:
        return (low, high)
    return tuple(float(e) for e in edges)


class Discretizer:
    """An ordered list of ColumnBins, one per column of the table it encodes."""

    def __init__(self, bins: Sequence[ColumnBins]):
        self.bins: List[ColumnBins] = list(bins)
        if not self.bins:
            raise ValueError('Discretizer needs at least one column')

    @classmethod
    def fit(cls, schema: Schema, columns: Sequence[Sequence[Cell]], n_bins: int = DEFAULT_BINS,
            strategy: str = 'uniform') -> 'Discretizer':
        """Fit edges for every non-categorical column from its non-Null values."""
        if len(columns) != schema.width:
            raise ValueError(f'expected {schema.width} value columns, got {len(columns)}')
        bins = []
        for column, values in zip(schema.columns, columns):
            if column.kind == CATEGORICAL:
                bins.append(ColumnBins(column))
            else:
                present = [float(v) for v in values if v is not None]
                bins.append(ColumnBins(column, fit_edges(present, n_bins, strategy)))
        return cls(bins)

    @classmethod
    def fit_flat(cls, flat: FlatTable, n_bins: int = DEFAULT_BINS, strategy: str = 'uniform') -> 'Discretizer':
        """One code space per flat column."""
        return cls.fit(flat.schema, [flat.column_values(j) for j in range(flat.width)], n_bins, strategy)

    @classmethod
    def fit_collection(cls, collection: Collection, n_bins: int = DEFAULT_BINS,
                       strategy: str = 'uniform') -> 'Discretizer':
        """One code space per base column, pooled over all rows of all users."""
        columns = [collection.column_values(name, drop_null=False) for name in collection.schema.names]
        return cls.fit(collection.schema, columns, n_bins, strategy)

    @property
    def width(self) -> int:
        return len(self.bins)

    @property
    def sizes(self) -> List[int]:
        return [b.size for b in self.bins]

    @property
    def schema(self) -> Schema:
        return Schema(tuple(b.column for b in self.bins))

    def encode_rows(self, rows: Sequence[Row]) -> np.ndarray:
        """(n, width) integer code matrix."""
        if not rows:
            return np.zeros((0, self.width), dtype=np.int64)
        for row in rows:
            if len(row) != self.width:
                raise ValueError(f'row has {len(row)} cells, discretizer expects {self.width}')
        return np.column_stack([
            b.encode([row[j] for row in rows]) for j, b in enumerate(self.bins)
        ])

    def decode_rows(self, codes: np.ndarray) -> List[Row]:
        codes = np.asarray(codes, dtype=np.int64).reshape(-1, self.width)
        return [tuple(b.decode(c) for b, c in zip(self.bins, row)) for row in codes]

    def to_dict(self) -> Dict[str, Any]:
        return {'bins': [b.to_dict() for b in self.bins]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Discretizer':
        return cls([ColumnBins.from_dict(b) for b in data['bins']])


@dataclass(frozen=True)
class MarginalQuery:
    """A 1-way or 2-way marginal over flat column indices."""
    columns: Tuple[int, ...]

    def __post_init__(self):
        columns = tuple(int(c) for c in self.columns)
        if len(columns) not in (1, 2):
            raise ValueError(f'marginal queries cover 1 or 2 columns, got {columns}')
        if len(set(columns)) != len(columns) or min(columns) < 0:
            raise ValueError(f'marginal columns must be distinct non-negative indices, got {columns}')
        object.__setattr__(self, 'columns', columns)

    @property
    def label(self) -> str:
        return 'marginal(' + ','.join(str(c) for c in self.columns) + ')'


@dataclass
class NoisyMeasurement:
    query: MarginalQuery
    counts: np.ndarray
    sigma: float
    rho: float = field(init=False)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float).ravel()
        self.rho = gaussian_rho(self.sigma)

    def table(self, sizes: Sequence[int]) -> np.ndarray:
        """Counts reshaped to the contingency shape of the queried columns."""
        shape = tuple(sizes[c] for c in self.query.columns)
        if int(np.prod(shape)) != self.counts.size:
            raise ValueError(f'{self.query.label}: {self.counts.size} counts do not fit shape {shape}')
        return self.counts.reshape(shape)


def select_marginals(d: int, length: int, variant: str = MARKOV, max_across: int = DEFAULT_MAX_ACROSS,
                     seed: int = 0) -> List[MarginalQuery]:
    """
    The measured query set. Flat column index of feature j at timestep t
    (0-based) is t*d + j.

    markov: every 1-way marginal, then (t, t+1) pairs of each feature.
    across: the markov set plus up to max_across same-timestep feature pairs,
    sampled uniformly without replacement.
    """
    if d * length < 1:
        raise ValueError(f'need d*L >= 1, got d={d}, L={length}')
    if variant not in VARIANTS:
        raise ValueError(f'unknown variant {variant!r}; expected one of {VARIANTS}')

    queries = [MarginalQuery((k,)) for k in range(d * length)]
    queries.extend(
        MarginalQuery((t * d + j, (t + 1) * d + j))
        for t in range(length - 1)
        for j in range(d)
    )
    if variant == ACROSS:
        pairs = [
            (t * d + a, t * d + b)
            for t in range(length)
            for a in range(d)
            for b in range(a + 1, d)
        ]
        take = min(max(max_across, 0), len(pairs))
        if take:
            rng = np.random.default_rng(seed)
            picked = sorted(rng.choice(len(pairs), size=take, replace=False))
            queries.extend(MarginalQuery(pairs[i]) for i in picked)
    return queries


def calibrate_sigma(budget: PrivacyBudget, num_queries: int) -> float:
    """
    Noise scale giving each of num_queries sensitivity-1 queries an equal
    share of the remaining training rho.
    """
    if num_queries < 1:
        raise ValueError(f'num_queries must be >= 1, got {num_queries}')
    remaining = budget.rho_train_cap - budget.rho_ledger
    if remaining <= 0:
        raise BudgetExceededError(f'no training budget left (remaining rho={remaining!r})')
    return gaussian_sigma(remaining / num_queries)


def _exact_counts(codes: np.ndarray, sizes: Tuple[int, ...]) -> np.ndarray:
    if codes.shape[0] == 0:
        return np.zeros(int(np.prod(sizes)), dtype=float)
    flat_index = np.ravel_multi_index(tuple(codes.T), sizes)
    return np.bincount(flat_index, minlength=int(np.prod(sizes))).astype(float)


def _measure_one(query: MarginalQuery, codes: np.ndarray, sizes: Tuple[int, ...], sigma: float,
                 seed: np.random.SeedSequence) -> NoisyMeasurement:
    counts = _exact_counts(codes, sizes)
    if sigma > 0:
        counts = counts + np.random.default_rng(seed).normal(0.0, sigma, size=counts.size)
    return NoisyMeasurement(query, counts, sigma)


def measure(flat: FlatTable, disc: Discretizer, queries: Sequence[MarginalQuery],
            sigma: Union[float, Sequence[float]], seed: int = 0, n_jobs: int = 1) -> List[NoisyMeasurement]:
    """
    Exact contingency counts plus i.i.d. N(0, sigma^2) noise per cell.

    Negative noisy counts are kept. Each query gets its own child seed, so the
    result does not depend on n_jobs.
    """
    if disc.width != flat.width:
        raise ValueError(f'discretizer covers {disc.width} columns, flat table has {flat.width}')
    sigmas = [float(sigma)] * len(queries) if np.isscalar(sigma) else [float(s) for s in sigma]
    if len(sigmas) != len(queries):
        raise ValueError(f'{len(sigmas)} noise scales for {len(queries)} queries')
    for q in queries:
        if max(q.columns) >= flat.width:
            raise ValueError(f'{q.label} is out of range for {flat.width} flat columns')

    codes = disc.encode_rows(flat.rows)
    sizes = disc.sizes
    seeds = np.random.SeedSequence(seed).spawn(len(queries))
    return Parallel(n_jobs=n_jobs)(
        delayed(_measure_one)(q, codes[:, list(q.columns)], tuple(sizes[c] for c in q.columns), s, ss)
        for q, s, ss in zip(queries, sigmas, seeds)
    )


def normalize_counts(counts: np.ndarray) -> np.ndarray:
    """Clamp negatives to zero and renormalize along the last axis; all-zero rows become uniform."""
    clamped = np.clip(np.asarray(counts, dtype=float), 0.0, None)
    totals = clamped.sum(axis=-1, keepdims=True)
    uniform = np.full_like(clamped, 1.0 / clamped.shape[-1])
    with np.errstate(invalid='ignore', divide='ignore'):
        return np.where(totals > 0, clamped / np.where(totals > 0, totals, 1.0), uniform)


@dataclass
class MarkovModel:
    """Per-feature chains over code spaces: initial[j] and transitions[j][t] (t -> t+1)."""
    d: int
    length: int
    initial: List[np.ndarray]
    transitions: List[List[np.ndarray]]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'd': self.d,
            'length': self.length,
            'initial': [p.tolist() for p in self.initial],
            'transitions': [[m.tolist() for m in chain] for chain in self.transitions],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MarkovModel':
        return cls(
            data['d'], data['length'],
            [np.asarray(p, dtype=float) for p in data['initial']],
            [[np.asarray(m, dtype=float) for m in chain] for chain in data['transitions']],
        )


def estimate_markov(measurements: Sequence[NoisyMeasurement], d: int, length: int,
                    sizes: Sequence[int]) -> MarkovModel:
    """
    Project noisy marginals onto per-feature first-order chains.

    Raises:
        ValueError: if a 1-way marginal at t=0 or an adjacent 2-way marginal is missing
    """
    if len(sizes) != d * length:
        raise ValueError(f'expected {d * length} code-space sizes, got {len(sizes)}')
    by_columns = {m.query.columns: m for m in measurements}

    def lookup(columns):
        if columns not in by_columns:
            raise ValueError(f'missing measurement for marginal{columns}')
        return by_columns[columns].table(sizes)

    initial = [normalize_counts(lookup((j,))) for j in range(d)]
    transitions = [
        [normalize_counts(lookup((t * d + j, (t + 1) * d + j))) for t in range(length - 1)]
        for j in range(d)
    ]
    return MarkovModel(d, length, initial, transitions)


def _draw(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw; cdf has one distribution per row of u's index."""
    return np.minimum((u[:, None] > cdf).sum(axis=1), cdf.shape[-1] - 1)


def sample_codes(model: MarkovModel, n: int, seed: int = 0) -> np.ndarray:
    """(n, d*L) code matrix, features sampled independently along their chains."""
    codes = np.zeros((n, model.d * model.length), dtype=np.int64)
    if n == 0:
        return codes
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(model.d)]
    for j, rng in enumerate(rngs):
        cdf = np.cumsum(model.initial[j])
        current = _draw(np.broadcast_to(cdf, (n, cdf.size)), rng.random(n))
        codes[:, j] = current
        for t, matrix in enumerate(model.transitions[j]):
            current = _draw(np.cumsum(matrix, axis=1)[current], rng.random(n))
            codes[:, (t + 1) * model.d + j] = current
    return codes


def sample_flat(model: MarkovModel, n: int, seed: int, disc: Discretizer, base_schema: Schema) -> FlatTable:
    """Sample n flat rows and decode them (bin midpoints, category names, Null code to Null)."""
    if n < 0:
        raise ValueError(f'n must be >= 0, got {n}')
    if disc.width != model.d * model.length:
        raise ValueError('discretizer does not match the model width')
    codes = sample_codes(model, n, seed)
    rows = disc.decode_rows(codes)
    user_ids = tuple(f'synth-{i:06d}' for i in range(1, n + 1))
    return FlatTable(base_schema, model.length, user_ids, tuple(rows))


def nearest_rank_percentile(values: Sequence[float], q: float) -> float:
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def clip_postprocess(collection: Collection, reference: Collection) -> Collection:
    """
    Clamp numeric cells into [min, P99] of the reference column (nearest rank).

    The bounds are read from the private reference without noise, so the output
    is not covered by the privacy guarantee.
    """
    schema = collection.schema
    bounds: Dict[int, Tuple[float, float]] = {}
    for j in schema.indices_of_kind(NUMERIC):
        values = reference.column_values(schema.columns[j].name)
        if not values:
            raise ValueError(f'reference column {schema.columns[j].name!r} has no values to clip against')
        bounds[j] = (float(min(values)), float(nearest_rank_percentile(values, 99.0)))

    def clip_row(row):
        return tuple(
            min(max(v, bounds[j][0]), bounds[j][1]) if j in bounds and v is not None else v
            for j, v in enumerate(row)
        )

    return Collection.from_tables(
        schema, (UserTable(t.user_id, tuple(clip_row(r) for r in t.rows)) for t in collection)
    )


@dataclass
class DirectResult:
    collection: Collection
    budget: PrivacyBudget
    report: Dict[str, Any]


def run_direct(collection: Collection, length: int, budget: PrivacyBudget, variant: str = MARKOV,
               bins: int = DEFAULT_BINS, max_across: int = DEFAULT_MAX_ACROSS, clip: bool = False,
               seed: int = 0, strategy: str = 'uniform', n_jobs: int = 1) -> DirectResult:
    """
    Filter/truncate to L, flatten, measure under the training budget and sample.

    The synthetic population size is the rounded noisy total of the first
    1-way marginal. Across-variant measurements are charged and reported but
    only the Markov factorization is used for sampling.
    """
    real = filter_truncate(collection, length)
    if len(real) == 0:
        raise ValueError(f'no user has at least L={length} rows')
    flat = flatten(real, length)
    d = collection.schema.width

    disc = Discretizer.fit_flat(flat, bins, strategy)
    logger.warning('Bin edges are fit on the private data without noise (budget-exempt preprocessing)')

    select_seed, measure_seed, sample_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    queries = select_marginals(d, length, variant, max_across, select_seed)
    sigma = calibrate_sigma(budget, len(queries))
    for q in queries:
        budget.charge(q.label, gaussian_rho(sigma))
    measurements = measure(flat, disc, queries, sigma, measure_seed, n_jobs)
    logger.info(f'Measured {len(queries)} marginals at sigma={sigma:.4g}')

    model = estimate_markov(measurements, d, length, disc.sizes)
    n_synth = max(0, int(round(float(measurements[0].counts.sum()))))
    synth = unflatten(sample_flat(model, n_synth, sample_seed, disc, collection.schema))
    if clip:
        synth = clip_postprocess(synth, real)
        logger.warning('Clipping to [min, P99] of the private data is not differentially private')

    num_one_way = d * length
    num_two_way = d * (length - 1)
    report = {
        'variant': variant,
        'L': length,
        'bins': bins,
        'strategy': strategy,
        'num_queries': len(queries),
        'num_one_way': num_one_way,
        'num_two_way': num_two_way,
        'num_across': len(queries) - num_one_way - num_two_way,
        'across_used_in_sampling': False,
        'sigma': sigma,
        'n_input': len(collection),
        'n_filtered': len(real),
        'n_synth': len(synth),
        'budget_exempt_preprocessing': ['bin edges'] + (['clipping bounds'] if clip else []),
        'clipped': clip,
        'ledger': budget.ledger(),
    }
    return DirectResult(synth, budget, report)
