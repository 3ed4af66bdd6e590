# trajsynth/metrics/distributional.py
"""
Marginal and transition comparisons between a real and a synthetic collection.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import wasserstein_distance

from ..core import CATEGORICAL, NUMERIC, TIMESTAMP, Collection, Schema
from ..hmm import TIMESTEP_COLUMN

logger = logging.getLogger(__name__)

DEFAULT_STATES = 5
DEFAULT_TOP_K = 10
OTHER = 'OTHER'
SECONDS_PER_HOUR = 3600
INDEX_COLUMNS = (TIMESTEP_COLUMN,)


def wasserstein1(samples_a: Sequence[float], samples_b: Sequence[float]) -> float:
    """W1 between two empirical distributions (quantile-function integral)."""
    if len(samples_a) == 0 or len(samples_b) == 0:
        raise ValueError('wasserstein1 needs two non-empty samples')
    return float(wasserstein_distance(np.asarray(samples_a, dtype=float), np.asarray(samples_b, dtype=float)))


def _check_schemas(real: Collection, synth: Collection) -> None:
    if real.schema != synth.schema:
        raise ValueError('real and synthetic collections must share a schema')


def _feature_columns(schema: Schema, index_columns: Sequence[str]) -> Tuple[List[int], List[str]]:
    """Numeric column indices to compare, and the numeric index columns left out."""
    features, excluded = [], []
    for j in schema.indices_of_kind(NUMERIC):
        name = schema.columns[j].name
        if name in index_columns:
            excluded.append(name)
        else:
            features.append(j)
    return features, excluded


def univariate_marginal_divergence(real: Collection, synth: Collection,
                                   index_columns: Sequence[str] = INDEX_COLUMNS) -> Dict[str, Any]:
    """
    W1 per numeric column on pooled non-Null values, plus their average.

    Row-index columns such as the sampled timestep are left out and listed
    under index_columns.
    """
    _check_schemas(real, synth)
    features, excluded = _feature_columns(real.schema, index_columns)
    per_feature: Dict[str, float] = {}
    skipped: List[str] = []
    for j in features:
        name = real.schema.columns[j].name
        a, b = real.column_values(name), synth.column_values(name)
        if not a or not b:
            skipped.append(name)
            continue
        per_feature[name] = wasserstein1(a, b)
    if skipped:
        logger.warning(f'Marginal divergence skipped columns without values: {skipped}')
    average = float(np.mean(list(per_feature.values()))) if per_feature else None
    return {'per_feature': per_feature, 'average': average, 'skipped': skipped, 'index_columns': excluded}


@dataclass
class TransitionMatrix:
    """Row-stochastic matrix; rows without observed transitions are uniform and listed in empty_rows."""
    matrix: np.ndarray
    empty_rows: Tuple[int, ...]
    skipped_transitions: int = 0

    @classmethod
    def from_sequences(cls, sequences: Sequence[Sequence[Optional[int]]], num_states: int) -> 'TransitionMatrix':
        counts = np.zeros((num_states, num_states))
        skipped = 0
        for seq in sequences:
            for a, b in zip(seq, seq[1:]):
                if a is None or b is None:
                    skipped += 1
                else:
                    counts[a, b] += 1
        totals = counts.sum(axis=1)
        empty = tuple(int(i) for i in np.flatnonzero(totals == 0))
        matrix = np.full_like(counts, 1.0 / num_states)
        filled = totals > 0
        matrix[filled] = counts[filled] / totals[filled, None]
        return cls(matrix, empty, skipped)


def frobenius(a: TransitionMatrix, b: TransitionMatrix) -> float:
    if a.matrix.shape != b.matrix.shape:
        raise ValueError('transition matrices differ in shape')
    return float(np.linalg.norm(a.matrix - b.matrix, 'fro'))


def quantile_cuts(values: Sequence[float], states: int) -> np.ndarray:
    """Interior quantile edges; duplicate edges merge, so fewer than states-1 cuts may remain."""
    return np.unique(np.quantile(np.asarray(values, dtype=float), np.linspace(0.0, 1.0, states + 1)[1:-1]))


def _state_sequences(collection: Collection, j: int, cuts: np.ndarray) -> List[List[Optional[int]]]:
    return [
        [None if v is None else int(np.searchsorted(cuts, float(v), side='right')) for v in t.column_values(j)]
        for t in collection
    ]


def transition_divergence(real: Collection, synth: Collection, states: int = DEFAULT_STATES,
                         index_columns: Sequence[str] = INDEX_COLUMNS) -> Dict[str, Any]:
    """
    Frobenius distance between per-feature transition matrices over quantile
    states fit on the real collection. Row-index columns are left out.
    """
    _check_schemas(real, synth)
    features, excluded = _feature_columns(real.schema, index_columns)
    if states < 2:
        raise ValueError(f'states must be >= 2, got {states}')
    per_feature: Dict[str, float] = {}
    skipped: List[str] = []
    null_transitions = {'real': 0, 'synth': 0}
    empty_rows: Dict[str, Dict[str, List[int]]] = {}
    for j in features:
        name = real.schema.columns[j].name
        values = real.column_values(name)
        cuts = quantile_cuts(values, states) if len(set(values)) > 1 else np.array([])
        if cuts.size == 0:
            skipped.append(name)
            continue
        num_states = cuts.size + 1
        m_real = TransitionMatrix.from_sequences(_state_sequences(real, j, cuts), num_states)
        m_synth = TransitionMatrix.from_sequences(_state_sequences(synth, j, cuts), num_states)
        null_transitions['real'] += m_real.skipped_transitions
        null_transitions['synth'] += m_synth.skipped_transitions
        empty_rows[name] = {'real': list(m_real.empty_rows), 'synth': list(m_synth.empty_rows)}
        per_feature[name] = frobenius(m_real, m_synth)
    if skipped:
        logger.warning(f'Transition divergence skipped single-state columns: {skipped}')
    average = float(np.mean(list(per_feature.values()))) if per_feature else None
    return {
        'per_feature': per_feature,
        'average': average,
        'skipped': skipped,
        'null_transitions': null_transitions,
        'empty_rows': empty_rows,
        'states': states,
        'index_columns': excluded,
    }


def hours_of_day(collection: Collection, ts_col: str) -> np.ndarray:
    values = np.array(collection.column_values(ts_col), dtype=np.int64)
    return (values // SECONDS_PER_HOUR) % 24


def hour_of_day_w1(real: Collection, synth: Collection, ts_col: str) -> float:
    """W1 between the UTC hour-of-day samples of a timestamp column."""
    _check_schemas(real, synth)
    if real.schema.column(ts_col).kind != TIMESTAMP:
        raise ValueError(f'column {ts_col!r} is not a timestamp column')
    a, b = hours_of_day(real, ts_col), hours_of_day(synth, ts_col)
    if a.size == 0 or b.size == 0:
        raise ValueError(f'column {ts_col!r} has no timestamps on one side')
    return wasserstein1(a, b)


def categorical_transition_divergence(real: Collection, synth: Collection, cat_col: str,
                                      top_k: int = DEFAULT_TOP_K) -> Dict[str, Any]:
    """
    Frobenius distance between transition matrices over the top_k real
    categories (ties by name) plus one OTHER state.
    """
    _check_schemas(real, synth)
    if real.schema.column(cat_col).kind != CATEGORICAL:
        raise ValueError(f'column {cat_col!r} is not categorical')
    if top_k < 2:
        raise ValueError(f'top_k must be >= 2, got {top_k}')
    counts: Dict[str, int] = {}
    for v in real.column_values(cat_col):
        counts[v] = counts.get(v, 0) + 1
    if len(counts) < 2:
        raise ValueError(f'column {cat_col!r} has fewer than 2 observed categories')

    top = [c for c, _ in sorted(counts.items(), key=lambda item: (-item[1], item[0]))[:top_k]]
    state = {c: i for i, c in enumerate(top)}
    other = len(top)
    j = real.schema.index(cat_col)

    def sequences(collection):
        return [[None if v is None else state.get(v, other) for v in t.column_values(j)] for t in collection]

    m_real = TransitionMatrix.from_sequences(sequences(real), other + 1)
    m_synth = TransitionMatrix.from_sequences(sequences(synth), other + 1)
    return {
        'value': frobenius(m_real, m_synth),
        'states': top + [OTHER],
        'empty_rows': {'real': list(m_real.empty_rows), 'synth': list(m_synth.empty_rows)},
        'top_k': top_k,
    }


def density_grid(collection: Collection, lat_col: str, lon_col: str, bin_width: float) -> pd.DataFrame:
    """Counts of rows with both coordinates present, on a square lat/lon grid."""
    if bin_width <= 0:
        raise ValueError(f'bin_width must be positive, got {bin_width}')
    i, j = collection.schema.index(lat_col), collection.schema.index(lon_col)
    points = np.array(
        [(row[i], row[j]) for t in collection for row in t.rows if row[i] is not None and row[j] is not None],
        dtype=float,
    ).reshape(-1, 2)
    cells = np.floor(points / bin_width).astype(np.int64)
    frame = pd.DataFrame(cells, columns=['lat_bin', 'lon_bin'])
    grid = frame.groupby(['lat_bin', 'lon_bin']).size().reset_index(name='count')
    grid.insert(2, 'lat_min', grid['lat_bin'] * bin_width)
    grid.insert(3, 'lon_min', grid['lon_bin'] * bin_width)
    return grid.sort_values(['lat_bin', 'lon_bin'], kind='stable').reset_index(drop=True)
