# trajsynth/metrics/report.py
"""
Runs the metric suite and assembles one JSON report.
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Dict, Optional, Sequence

import numpy as np
import pandas as pd

from ..core import CATEGORICAL, TIMESTAMP, Collection, UserTable
from ..hmm import HmmSpec, likelihood_comparison
from ..selection import ReferenceEmbedder, embed_collection
from .distributional import (
    DEFAULT_STATES,
    DEFAULT_TOP_K,
    categorical_transition_divergence,
    hour_of_day_w1,
    transition_divergence,
    univariate_marginal_divergence,
)
from .embedding import DEFAULT_GRID, DEFAULT_SCALE, classifier_auc, default_num_clusters, mauve
from .temporal import DEFAULT_TDCR_BINS, tdcr

logger = logging.getLogger(__name__)

SKIPPED = 'skipped'


@dataclass
class EvaluationConfig:
    tdcr_bins: int = DEFAULT_TDCR_BINS
    transition_states: int = DEFAULT_STATES
    mauve_clusters: Optional[int] = None
    mauve_scale: float = DEFAULT_SCALE
    mauve_grid: int = DEFAULT_GRID
    classifier_split: float = 0.7
    categorical_top_k: int = DEFAULT_TOP_K
    weights: Optional[Dict[str, float]] = None
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EvaluationConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f'Unknown evaluation settings: {unknown}')
        return cls(**data)


def _plain(value):
    """JSON-ready copy with numpy scalars and arrays converted."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


@dataclass
class MetricReport:
    metrics: Dict[str, Any] = field(default_factory=dict)
    parameters: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return _plain({'metrics': self.metrics, 'parameters': self.parameters})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            f.write(self.to_json() + '\n')
        logger.info(f'Wrote metric report to {path}')


def _run(report: MetricReport, name: str, metric: Callable[[], Any]) -> None:
    try:
        report.metrics[name] = metric()
    except Exception as e:
        logger.warning(f'Metric {name} failed: {e}')
        report.metrics[name] = {'error': str(e)}


def evaluate(real_train: Collection, real_test: Collection, synth: Collection,
             config: Optional[EvaluationConfig] = None, hmm_spec: Optional[HmmSpec] = None,
             n_jobs: int = 1) -> MetricReport:
    """
    Compare synth against the real data with every applicable metric.

    TDCR uses the train/test split; the other comparisons are against
    real_train. A failing metric is recorded as {"error": message}.
    """
    config = config or EvaluationConfig()
    schema = real_train.schema
    if real_test.schema != schema or synth.schema != schema:
        raise ValueError('real_train, real_test and synth must share a schema')

    report = MetricReport(parameters={'evaluation': config.to_dict()})
    report.parameters['sizes'] = {'real_train': len(real_train), 'real_test': len(real_test), 'synth': len(synth)}

    def run_tdcr():
        result = tdcr(synth, real_train, real_test, config.tdcr_bins, weights=config.weights, n_jobs=n_jobs)
        return {
            'jsd': result.jsd,
            'bins': config.tdcr_bins,
            'mean_synth_distance': float(result.synth_distances.mean()),
            'mean_test_distance': float(result.test_distances.mean()),
            'skipped_pairs': result.skipped_pairs,
        }

    _run(report, 'tdcr', run_tdcr)
    _run(report, 'marginal_divergence', lambda: univariate_marginal_divergence(real_train, synth))
    _run(report, 'transition_divergence',
         lambda: transition_divergence(real_train, synth, config.transition_states))

    embedder = ReferenceEmbedder(schema, seed=config.seed)

    def embeddings():
        embedder.fit(real_train)
        return embed_collection(embedder, real_train)[1], embed_collection(embedder, synth)[1]

    def run_mauve():
        real_emb, synth_emb = embeddings()
        clusters = config.mauve_clusters or default_num_clusters(min(len(real_emb), len(synth_emb)))
        value = mauve(real_emb, synth_emb, clusters, config.mauve_scale, config.mauve_grid, config.seed)
        return {'value': value, 'num_clusters': clusters, 'scale': config.mauve_scale, 'grid': config.mauve_grid}

    def run_classifier():
        real_emb, synth_emb = embeddings()
        return {'auc': classifier_auc(real_emb, synth_emb, config.classifier_split, config.seed),
                'split': config.classifier_split}

    _run(report, 'mauve', run_mauve)
    _run(report, 'classifier', run_classifier)

    for j in schema.indices_of_kind(TIMESTAMP):
        name = schema.columns[j].name
        _run(report, f'hour_of_day_w1[{name}]', lambda name=name: hour_of_day_w1(real_train, synth, name))
    for j in schema.indices_of_kind(CATEGORICAL):
        name = schema.columns[j].name
        _run(report, f'categorical_transition[{name}]',
             lambda name=name: categorical_transition_divergence(real_train, synth, name, config.categorical_top_k))

    if hmm_spec is None:
        report.metrics['hmm_likelihood'] = SKIPPED
    else:
        def run_likelihood():
            result = likelihood_comparison(hmm_spec, real_test, synth, n_jobs)
            return {k: result[k] for k in ('value', 'excluded_real', 'excluded_synth')}

        _run(report, 'hmm_likelihood', run_likelihood)

    logger.info(f'Evaluated {len(synth)} synthetic tables with {len(report.metrics)} metrics')
    return report


def shuffled_rows_control(collection: Collection, seed: int = 0) -> Collection:
    """
    Same users and lengths, rows drawn by a seeded permutation of all pooled
    rows: marginals are kept, temporal order is destroyed.
    """
    rows = [row for t in collection for row in t.rows]
    permuted = np.random.default_rng(seed).permutation(len(rows))
    tables = []
    position = 0
    for table in collection:
        picked = permuted[position:position + table.length]
        tables.append(UserTable(table.user_id, tuple(rows[i] for i in picked)))
        position += table.length
    return Collection.from_tables(collection.schema, tables)


def histogram_frame(samples: Dict[str, Sequence[float]], bins: int) -> pd.DataFrame:
    """Histograms of several samples on shared equal-width bins, one row per bin."""
    pooled = np.concatenate([np.asarray(s, dtype=float) for s in samples.values()])
    if pooled.size == 0:
        raise ValueError('histogram_frame needs at least one value')
    low, high = float(pooled.min()), float(pooled.max())
    edges = np.linspace(low, high if high > low else low + 1.0, bins + 1)
    frame = pd.DataFrame({'bin_low': edges[:-1], 'bin_high': edges[1:]})
    for name, values in samples.items():
        frame[name] = np.histogram(np.asarray(values, dtype=float), bins=edges)[0]
    return frame
