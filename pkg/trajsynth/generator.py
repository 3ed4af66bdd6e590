# trajsynth/generator.py
"""
Row-by-row table generation behind a pluggable backend.

A backend emits one serialized row at a time given the schema and the rows
accepted so far; every emitted row goes through serialization.parse, and the
first row that fails ends the table. DpMarkovBackend is a budgeted stand-in
for a fine-tuned language model: per-column first-order chains over binned
codes plus a noisy length distribution.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from .core import Collection, Row, Schema, UserTable
from .direct_synth import DEFAULT_BINS, Discretizer, calibrate_sigma, normalize_counts
from .hmm import LengthDistribution
from .privacy import PrivacyBudget, gaussian_rho
from .serialization import FAILED, ParseReport, parse, render_row

logger = logging.getLogger(__name__)

DEFAULT_MAX_LENGTH = 64
RETRY_FACTOR = 3


class GeneratorBackend(ABC):
    """
    Contract: next_step returns the text of one row in the serialized row
    format (it may be malformed) or None to stop the table.
    """

    def begin_table(self, schema: Schema, rng: np.random.Generator) -> Dict[str, Any]:
        """Per-table state handed back to every next_step call."""
        return {}

    @abstractmethod
    def next_step(self, schema: Schema, history: Sequence[Row], rng: np.random.Generator,
                  state: Dict[str, Any]) -> Optional[str]:
        ...


class DpMarkovBackend(GeneratorBackend):
    """Per-column initial and transition distributions over discretizer codes."""

    def __init__(self, discretizer: Discretizer, initial: Sequence[np.ndarray],
                 transitions: Sequence[np.ndarray], lengths: LengthDistribution,
                 ledger: Optional[Dict[str, Any]] = None):
        self.discretizer = discretizer
        self.initial = [np.asarray(p, dtype=float) for p in initial]
        self.transitions = [np.asarray(m, dtype=float) for m in transitions]
        self.lengths = lengths
        self.ledger = ledger
        sizes = discretizer.sizes
        if len(self.initial) != len(sizes) or len(self.transitions) != len(sizes):
            raise ValueError('backend needs one initial and one transition distribution per column')
        for j, size in enumerate(sizes):
            if self.initial[j].shape != (size,) or self.transitions[j].shape != (size, size):
                raise ValueError(f'distribution shapes of column {j} do not match code space {size}')

    @property
    def schema(self) -> Schema:
        return self.discretizer.schema

    def begin_table(self, schema, rng):
        return {'length': int(self.lengths.sample(rng)), 'codes': None}

    def next_step(self, schema, history, rng, state):
        step = len(history)
        if step >= state['length']:
            return None
        if state['codes'] is None:
            codes = [int(rng.choice(p.size, p=p)) for p in self.initial]
        else:
            codes = [int(rng.choice(m.shape[1], p=m[c])) for m, c in zip(self.transitions, state['codes'])]
        state['codes'] = codes
        row = tuple(b.decode(c) for b, c in zip(self.discretizer.bins, codes))
        return render_row(schema, row, step + 1)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'backend': 'markov',
            'discretizer': self.discretizer.to_dict(),
            'initial': [p.tolist() for p in self.initial],
            'transitions': [m.tolist() for m in self.transitions],
            'lengths': self.lengths.to_dict(),
            'ledger': self.ledger,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DpMarkovBackend':
        if data.get('backend', 'markov') != 'markov':
            raise ValueError(f'unsupported backend {data.get("backend")!r}')
        return cls(
            Discretizer.from_dict(data['discretizer']),
            data['initial'],
            data['transitions'],
            LengthDistribution.from_dict(data['lengths']),
            data.get('ledger'),
        )


def _statistics(collection: Collection, disc: Discretizer, max_length: int) -> Tuple[List, List, np.ndarray]:
    """
    Exact per-user-bounded statistics: first-row code counts per column,
    adjacent-pair counts per column with each user weighted 1/(T-1), and the
    length histogram over 1..max_length (longer tables count at max_length).
    """
    sizes = disc.sizes
    initial = [np.zeros(s) for s in sizes]
    transitions = [np.zeros((s, s)) for s in sizes]
    lengths = np.zeros(max_length)
    for table in collection:
        codes = disc.encode_rows(table.rows)
        lengths[min(table.length, max_length) - 1] += 1
        for j in range(len(sizes)):
            initial[j][codes[0, j]] += 1
            if table.length > 1:
                np.add.at(transitions[j], (codes[:-1, j], codes[1:, j]), 1.0 / (table.length - 1))
    return initial, transitions, lengths


def train_dp_markov_backend(collection: Collection, bins: int = DEFAULT_BINS,
                            budget: Optional[PrivacyBudget] = None, seed: int = 0,
                            max_length: int = DEFAULT_MAX_LENGTH, strategy: str = 'uniform') -> DpMarkovBackend:
    """
    Measure 2d+1 Gaussian-noised statistics (initial and transition counts per
    column plus the length histogram), each with L2 sensitivity 1 per user,
    splitting the remaining training rho equally.

    Passing budget=None trains without noise.

    Raises:
        ValueError: if the collection is empty
        BudgetExceededError: if the budget has no training rho left
    """
    if len(collection) == 0:
        raise ValueError('cannot train a backend on an empty collection')
    if max_length < 1:
        raise ValueError(f'max_length must be >= 1, got {max_length}')
    disc = Discretizer.fit_collection(collection, bins, strategy)
    logger.warning('Backend bin edges are fit on the private data without noise (budget-exempt preprocessing)')

    initial, transitions, lengths = _statistics(collection, disc, max_length)
    num_queries = 2 * len(initial) + 1
    if budget is None:
        sigma = 0.0
        logger.warning('Training the Markov backend without noise: the result is not private')
    else:
        sigma = calibrate_sigma(budget, num_queries)
        rho = gaussian_rho(sigma)
        for name in collection.schema.names:
            budget.charge(f'backend initial({name})', rho)
            budget.charge(f'backend transitions({name})', rho)
        budget.charge('backend lengths', rho)

    if sigma > 0:
        rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(num_queries)]
        initial = [p + rngs[j].normal(0.0, sigma, p.shape) for j, p in enumerate(initial)]
        transitions = [m + rngs[len(initial) + j].normal(0.0, sigma, m.shape) for j, m in enumerate(transitions)]
        lengths = lengths + rngs[-1].normal(0.0, sigma, lengths.shape)

    length_probabilities = normalize_counts(lengths)
    backend = DpMarkovBackend(
        disc,
        [normalize_counts(p) for p in initial],
        [normalize_counts(m) for m in transitions],
        LengthDistribution.from_counts({t + 1: p for t, p in enumerate(length_probabilities)}),
        budget.ledger() if budget is not None else {'non_private': True},
    )
    logger.info(f'Trained Markov backend on {len(collection)} users ({num_queries} queries, sigma={sigma:.4g})')
    return backend


def generate_table(backend: GeneratorBackend, schema: Schema, max_len: int, user_id: str,
                   seed) -> Tuple[Optional[UserTable], ParseReport]:
    """
    Ask the backend for rows until it stops, max_len is reached or a row fails
    to parse. Returns (None, report) when no row was accepted.
    """
    if max_len < 1:
        raise ValueError(f'max_len must be >= 1, got {max_len}')
    rng = np.random.default_rng(seed)
    state = backend.begin_table(schema, rng)
    rows: List[Row] = []
    report = ParseReport()
    for step in range(1, max_len + 1):
        text = backend.next_step(schema, tuple(rows), rng, state)
        if text is None:
            break
        parsed, row_report = parse(text, schema, UserTable(user_id, tuple(rows)), user_id)
        if not parsed.rows or row_report.outcomes[0] == FAILED:
            report.outcomes.append(FAILED)
            report.terminated_at = step
            break
        report.outcomes.append(row_report.outcomes[0])
        rows.append(parsed.rows[0])

    if not rows:
        return None, report
    return UserTable(user_id, tuple(rows)), report


@dataclass
class YieldReport:
    requested: int
    produced: int = 0
    attempts: int = 0
    retries: int = 0
    discarded: int = 0
    early_terminated: int = 0
    outcomes: Dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'requested': self.requested,
            'produced': self.produced,
            'attempts': self.attempts,
            'retries': self.retries,
            'discarded': self.discarded,
            'early_terminated': self.early_terminated,
            'outcomes': dict(sorted(self.outcomes.items())),
        }


def candidate_id(index: int) -> str:
    return f'cand-{index:06d}'


def _attempt(backend, schema, max_len, seed, index):
    return generate_table(backend, schema, max_len, candidate_id(index), np.random.SeedSequence([seed, index]))


def over_generate(backend: GeneratorBackend, schema: Schema, m_candidates: int, max_len: int,
                  seed: int = 0, n_jobs: int = 1,
                  retry_cap: Optional[int] = None) -> Tuple[Collection, YieldReport]:
    """
    Generate m_candidates tables, replacing discarded ones with fresh attempts
    until the retry cap (default 3*m) is used up. Attempt i always uses the
    child seed (seed, i), so the output does not depend on n_jobs.
    """
    if m_candidates < 1:
        raise ValueError(f'm_candidates must be >= 1, got {m_candidates}')
    retry_cap = RETRY_FACTOR * m_candidates if retry_cap is None else retry_cap
    report = YieldReport(requested=m_candidates)
    tables: List[UserTable] = []

    batch = m_candidates
    while batch > 0:
        start = report.attempts
        results = Parallel(n_jobs=n_jobs)(
            delayed(_attempt)(backend, schema, max_len, seed, i) for i in range(start, start + batch)
        )
        report.attempts += batch
        for table, parse_report in results:
            for outcome in parse_report.outcomes:
                report.outcomes[outcome] = report.outcomes.get(outcome, 0) + 1
            if not parse_report.complete:
                report.early_terminated += 1
            if table is None:
                report.discarded += 1
            else:
                tables.append(table)
        batch = min(m_candidates - len(tables), retry_cap - report.retries)
        report.retries += max(batch, 0)

    report.produced = len(tables)
    if report.produced < m_candidates:
        logger.warning(
            f'Over-generation yielded {report.produced} of {m_candidates} tables after {report.retries} retries'
        )
    logger.info(f'Generated {report.produced} candidates in {report.attempts} attempts')
    return Collection.from_tables(schema, tables), report
