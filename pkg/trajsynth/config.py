# trajsynth/config.py
"""
Experiment manifests.

One JSON file holds every experiment parameter; command-line flags override
individual keys. Execution settings such as n_jobs are not part of the
manifest so that reports do not depend on them.
"""

import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional

from .direct_synth import DEFAULT_BINS, DEFAULT_MAX_ACROSS, MARKOV, VARIANTS
from .generator import DEFAULT_MAX_LENGTH
from .metrics.report import EvaluationConfig
from .selection import DEFAULT_NEIGHBORS

SOURCES = ('hmm', 'csv')
METHODS = ('direct', 'markov_backend')


@dataclass
class ExperimentConfig:
    # data
    source: str = 'hmm'
    hmm_spec: Optional[str] = None
    n_train: int = 1000
    n_test: int = 1000
    min_length: int = 10
    max_length: int = 10
    real_train: Optional[str] = None
    real_test: Optional[str] = None
    schema: Optional[str] = None
    # privacy
    epsilon_total: float = 10.0
    delta: Optional[float] = None
    epsilon_select: Optional[float] = None
    # synthesis
    method: str = 'direct'
    variant: str = MARKOV
    L: int = 10
    bins: int = DEFAULT_BINS
    strategy: str = 'uniform'
    max_across: int = DEFAULT_MAX_ACROSS
    clip: bool = False
    backend_max_length: int = DEFAULT_MAX_LENGTH
    candidate_multiplier: int = 4
    n_out: Optional[int] = None
    neighbors: int = DEFAULT_NEIGHBORS
    seed: int = 0
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    def __post_init__(self):
        if isinstance(self.evaluation, dict):
            self.evaluation = EvaluationConfig.from_dict(self.evaluation)
        if self.source not in SOURCES:
            raise ValueError(f'source must be one of {SOURCES}, got {self.source!r}')
        if self.method not in METHODS:
            raise ValueError(f'method must be one of {METHODS}, got {self.method!r}')
        if self.variant not in VARIANTS:
            raise ValueError(f'variant must be one of {VARIANTS}, got {self.variant!r}')
        if self.source == 'csv' and not (self.real_train and self.real_test and self.schema):
            raise ValueError('source "csv" needs real_train, real_test and schema paths')
        if self.epsilon_total <= 0:
            raise ValueError(f'epsilon_total must be positive, got {self.epsilon_total}')
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError('lengths must satisfy 1 <= min_length <= max_length')

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f'Unknown experiment settings: {unknown}')
        return cls(**data)

    @classmethod
    def from_json(cls, path: str) -> 'ExperimentConfig':
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def with_overrides(self, **overrides: Any) -> 'ExperimentConfig':
        """Copy with every non-None override applied."""
        known = {f.name for f in fields(self)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ValueError(f'Unknown experiment settings: {unknown}')
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})
