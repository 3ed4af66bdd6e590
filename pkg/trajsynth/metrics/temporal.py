# trajsynth/metrics/temporal.py
"""
DTW-based table distances and the temporal distance-to-closest-record test.

DTW uses steps (1,0), (0,1), (1,1) with absolute-difference cost (0/1
mismatch cost for categories). When several predecessors share the minimal
cost the path prefers the diagonal, then (i-1, j), then (i, j-1); the path
length |K| follows that choice.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import jensenshannon

from ..core import CATEGORICAL, Collection, Schema, UserTable

logger = logging.getLogger(__name__)

DEFAULT_TDCR_BINS = 50

Scaling = Dict[str, Tuple[float, float]]


@dataclass(frozen=True)
class DtwResult:
    total: float
    path_length: int

    @property
    def normalized(self) -> float:
        return self.total / self.path_length


def _clean(seq) -> np.ndarray:
    return np.array([float(v) for v in seq if v is not None and not np.isnan(float(v))], dtype=float)


def dtw_batch(query: np.ndarray, candidates: Sequence[np.ndarray],
              mismatch: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    DTW of one query sequence against many candidates at once.

    Returns:
        Tuple: (totals, path lengths); NaN and 0 for empty candidates
    """
    query = np.asarray(query, dtype=float)
    n = len(candidates)
    lengths = np.array([len(c) for c in candidates], dtype=np.int64)
    totals = np.full(n, np.nan)
    path_lengths = np.zeros(n, dtype=np.int64)
    if query.size == 0 or n == 0 or lengths.max() == 0:
        return totals, path_lengths

    width = int(lengths.max())
    padded = np.zeros((n, width))
    for r, c in enumerate(candidates):
        padded[r, :len(c)] = c
    if mismatch:
        cost = (query[:, None, None] != padded[None, :, :]).astype(float)
    else:
        cost = np.abs(query[:, None, None] - padded[None, :, :])

    previous = previous_len = None
    for i in range(query.size):
        current = np.empty((n, width))
        current_len = np.empty((n, width), dtype=np.int64)
        for j in range(width):
            if i == 0 and j == 0:
                current[:, 0] = cost[0, :, 0]
                current_len[:, 0] = 1
                continue
            # predecessor order: diagonal, up, left
            options = np.full((3, n), np.inf)
            option_len = np.zeros((3, n), dtype=np.int64)
            if i > 0 and j > 0:
                options[0], option_len[0] = previous[:, j - 1], previous_len[:, j - 1]
            if i > 0:
                options[1], option_len[1] = previous[:, j], previous_len[:, j]
            if j > 0:
                options[2], option_len[2] = current[:, j - 1], current_len[:, j - 1]
            best = np.argmin(options, axis=0)
            current[:, j] = cost[i, :, j] + options[best, np.arange(n)]
            current_len[:, j] = option_len[best, np.arange(n)] + 1
        previous, previous_len = current, current_len

    valid = lengths > 0
    rows = np.arange(n)[valid]
    totals[valid] = previous[rows, lengths[valid] - 1]
    path_lengths[valid] = previous_len[rows, lengths[valid] - 1]
    return totals, path_lengths


def dtw(seq_a: Sequence[Optional[float]], seq_b: Sequence[Optional[float]]) -> DtwResult:
    """
    DTW between two numeric sequences; Null/NaN entries are dropped first.

    Raises:
        ValueError: if either sequence is empty after dropping Nulls
    """
    a, b = _clean(seq_a), _clean(seq_b)
    dropped = len(seq_a) - a.size + len(seq_b) - b.size
    if dropped:
        logger.debug(f'dtw dropped {dropped} Null entries')
    if a.size == 0 or b.size == 0:
        raise ValueError('dtw needs two non-empty sequences after dropping Nulls')
    totals, path_lengths = dtw_batch(a, [b])
    return DtwResult(float(totals[0]), int(path_lengths[0]))


def fit_scaling(collection: Collection) -> Scaling:
    """(mean, std) of every non-categorical column over pooled non-Null values; std 0 becomes 1."""
    scaling: Scaling = {}
    for column in collection.schema.columns:
        if column.kind == CATEGORICAL:
            continue
        values = np.array(collection.column_values(column.name), dtype=float)
        if values.size == 0:
            continue
        std = float(values.std())
        scaling[column.name] = (float(values.mean()), std if std > 0 else 1.0)
    return scaling


class _EncodedCollection:
    """Per-column sequences of one collection, z-scored or category-coded."""

    def __init__(self, collection: Collection, scaling: Scaling):
        self.schema = collection.schema
        self.user_ids = collection.user_ids
        self.columns: List[List[np.ndarray]] = []
        for j, column in enumerate(self.schema.columns):
            self.columns.append([encode_sequence(column, t.column_values(j), scaling) for t in collection])


def encode_sequence(column, values, scaling: Scaling) -> np.ndarray:
    present = [v for v in values if v is not None]
    if column.kind == CATEGORICAL:
        lookup = {c: i for i, c in enumerate(column.categories)}
        return np.array([lookup[v] for v in present], dtype=float)
    mean, std = scaling.get(column.name, (0.0, 1.0))
    return (np.array(present, dtype=float) - mean) / std


def table_distance(a: UserTable, b: UserTable, schema: Schema, scaling: Scaling,
                   weights: Optional[Dict[str, float]] = None) -> Tuple[float, List[str]]:
    """
    Weighted sum over columns of normalized DTW on z-scored (or category-coded) sequences.

    Returns:
        Tuple: (distance, names of columns skipped because one side had no values)
    """
    total = 0.0
    skipped = []
    for j, column in enumerate(schema.columns):
        x = encode_sequence(column, a.column_values(j), scaling)
        y = encode_sequence(column, b.column_values(j), scaling)
        if x.size == 0 or y.size == 0:
            skipped.append(column.name)
            continue
        totals, path_lengths = dtw_batch(x, [y], mismatch=column.kind == CATEGORICAL)
        weight = 1.0 if weights is None else weights.get(column.name, 1.0)
        total += weight * totals[0] / path_lengths[0]
    return total, skipped


def _nearest(query_index: int, queries: _EncodedCollection, reference: _EncodedCollection,
             weights: Optional[Dict[str, float]]) -> Tuple[float, Dict[str, int]]:
    """Nearest-reference distance of one query, plus skipped (query, reference) pairs per column."""
    n_ref = len(reference.user_ids)
    distances = np.zeros(n_ref)
    skipped: Dict[str, int] = {}
    for j, column in enumerate(queries.schema.columns):
        x = queries.columns[j][query_index]
        if x.size == 0:
            skipped[column.name] = n_ref
            continue
        totals, path_lengths = dtw_batch(x, reference.columns[j], mismatch=column.kind == CATEGORICAL)
        weight = 1.0 if weights is None else weights.get(column.name, 1.0)
        contribution = np.zeros(n_ref)
        valid = path_lengths > 0
        contribution[valid] = weight * totals[valid] / path_lengths[valid]
        distances += contribution
        if not valid.all():
            skipped[column.name] = int(n_ref - valid.sum())
    return float(distances.min()), skipped


def _nearest_all(queries: Collection, reference: Collection, scaling: Scaling,
                 weights: Optional[Dict[str, float]], n_jobs: int) -> Tuple[np.ndarray, Dict[str, int]]:
    if len(reference) == 0:
        raise ValueError('nearest_distances needs a non-empty reference collection')
    if queries.schema != reference.schema:
        raise ValueError('query and reference collections must share a schema')
    encoded_queries = _EncodedCollection(queries, scaling)
    encoded_reference = _EncodedCollection(reference, scaling)
    results = Parallel(n_jobs=n_jobs)(
        delayed(_nearest)(i, encoded_queries, encoded_reference, weights) for i in range(len(queries))
    )
    skipped: Dict[str, int] = {}
    for _, per_column in results:
        for name, count in per_column.items():
            skipped[name] = skipped.get(name, 0) + count
    if skipped:
        pairs = len(queries) * len(reference)
        logger.warning(f'Nearest-record search skipped columns with no values on one side '
                       f'(pairs out of {pairs}): {skipped}')
    return np.array([d for d, _ in results], dtype=float), skipped


def nearest_distances(queries: Collection, reference: Collection, scaling: Scaling,
                      weights: Optional[Dict[str, float]] = None, n_jobs: int = 1) -> np.ndarray:
    """
    Distance of every query table to its nearest reference table, in query id order.

    A column with no values in the query or the reference table adds nothing
    to that pair's distance; such pairs are counted and logged as a warning.
    """
    return _nearest_all(queries, reference, scaling, weights, n_jobs)[0]


def jsd(p: Sequence[float], q: Sequence[float]) -> float:
    """Jensen-Shannon distance with base-2 logs, in [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape or p.sum() <= 0 or q.sum() <= 0:
        raise ValueError('jsd needs two non-empty histograms of the same shape')
    return float(np.clip(jensenshannon(p / p.sum(), q / q.sum(), base=2.0), 0.0, 1.0))


@dataclass
class TdcrResult:
    jsd: float
    synth_distances: np.ndarray
    test_distances: np.ndarray
    edges: np.ndarray
    skipped_pairs: Dict[str, int] = field(default_factory=dict)

    def histograms(self) -> Tuple[np.ndarray, np.ndarray]:
        return (np.histogram(self.synth_distances, bins=self.edges)[0],
                np.histogram(self.test_distances, bins=self.edges)[0])


def tdcr(synth: Collection, train: Collection, test: Collection, bins: int = DEFAULT_TDCR_BINS,
         scaling: Optional[Scaling] = None, weights: Optional[Dict[str, float]] = None,
         n_jobs: int = 1) -> TdcrResult:
    """
    Nearest-train distances of synthetic and held-out tables, compared as
    histograms on shared equal-width bins over [0, max] by JSD.
    """
    if len(synth) == 0 or len(train) == 0 or len(test) == 0:
        raise ValueError('tdcr needs non-empty synthetic, train and test collections')
    if bins < 1:
        raise ValueError(f'bins must be >= 1, got {bins}')
    scaling = fit_scaling(train) if scaling is None else scaling
    synth_distances, synth_skipped = _nearest_all(synth, train, scaling, weights, n_jobs)
    test_distances, test_skipped = _nearest_all(test, train, scaling, weights, n_jobs)
    upper = float(max(synth_distances.max(), test_distances.max()))
    edges = np.linspace(0.0, upper if upper > 0 else 1.0, bins + 1)
    p = np.histogram(synth_distances, bins=edges)[0]
    q = np.histogram(test_distances, bins=edges)[0]
    skipped_pairs = {name: synth_skipped.get(name, 0) + test_skipped.get(name, 0)
                     for name in sorted(set(synth_skipped) | set(test_skipped))}
    return TdcrResult(jsd(p, q), synth_distances, test_distances, edges, skipped_pairs)
