from .distributional import (
    TransitionMatrix,
    categorical_transition_divergence,
    density_grid,
    hour_of_day_w1,
    transition_divergence,
    univariate_marginal_divergence,
    wasserstein1,
)
from .embedding import classifier_auc, mauve
from .report import EvaluationConfig, MetricReport, evaluate, histogram_frame, shuffled_rows_control
from .temporal import DtwResult, dtw, jsd, table_distance, tdcr

__all__ = [
    'DtwResult',
    'EvaluationConfig',
    'MetricReport',
    'TransitionMatrix',
    'categorical_transition_divergence',
    'classifier_auc',
    'density_grid',
    'dtw',
    'evaluate',
    'histogram_frame',
    'hour_of_day_w1',
    'jsd',
    'mauve',
    'shuffled_rows_control',
    'table_distance',
    'tdcr',
    'transition_divergence',
    'univariate_marginal_divergence',
    'wasserstein1',
]
