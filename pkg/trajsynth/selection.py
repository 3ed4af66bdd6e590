# trajsynth/selection.py
"""
Table embeddings and private k-NN voting over an over-generated candidate pool.

Every real table votes for its k nearest candidates in embedding space; the
vote vector gets Gaussian noise calibrated to its L2 sensitivity sqrt(k) and
the candidates with the highest noisy votes are kept.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.feature_extraction import FeatureHasher
from sklearn.preprocessing import StandardScaler

from .core import CATEGORICAL, Collection, Schema, UserTable
from .privacy import PrivacyBudget, epsilon_to_rho, gaussian_rho, gaussian_sigma

logger = logging.getLogger(__name__)

DEFAULT_NEIGHBORS = 10
HASH_FEATURES = 64


class Embedder(ABC):
    """Maps a variable-length table to a fixed-length real vector, deterministically."""

    @property
    @abstractmethod
    def dimension(self) -> int:
        ...

    @abstractmethod
    def embed(self, schema: Schema, table: UserTable) -> np.ndarray:
        ...

    def fit(self, collection: Collection) -> 'Embedder':
        return self


class ReferenceEmbedder(Embedder):
    """
    Statistics embedding:

    - schema fingerprint: hashed "name:kind" tokens under a seeded projection
    - per numeric or timestamp column: mean, std, first and last value
    - per categorical column: category frequencies
    - table length

    After fit, every coordinate is z-scored against the fitting set.
    """

    def __init__(self, schema: Schema, fingerprint_dim: int = 8, seed: int = 0):
        self.schema = schema
        self.fingerprint_dim = fingerprint_dim
        hasher = FeatureHasher(n_features=HASH_FEATURES, input_type='string', alternate_sign=True)
        hashed = hasher.transform([[f'{c.name}:{c.kind}' for c in schema.columns]]).toarray()[0]
        projection = np.random.default_rng(seed).standard_normal((fingerprint_dim, HASH_FEATURES))
        self.fingerprint = projection @ hashed / math.sqrt(HASH_FEATURES)
        self.scaler: Optional[StandardScaler] = None

    @property
    def dimension(self) -> int:
        size = self.fingerprint_dim + 1
        for column in self.schema.columns:
            size += len(column.categories) if column.kind == CATEGORICAL else 4
        return size

    def raw(self, table: UserTable) -> np.ndarray:
        parts: List[np.ndarray] = [self.fingerprint]
        for j, column in enumerate(self.schema.columns):
            values = [v for v in table.column_values(j) if v is not None]
            if column.kind == CATEGORICAL:
                counts = np.array([values.count(c) for c in column.categories], dtype=float)
                parts.append(counts / counts.sum() if values else counts)
            elif values:
                x = np.array(values, dtype=float)
                parts.append(np.array([x.mean(), x.std(), x[0], x[-1]]))
            else:
                parts.append(np.zeros(4))
        parts.append(np.array([float(table.length)]))
        return np.concatenate(parts)

    def fit(self, collection: Collection) -> 'ReferenceEmbedder':
        if len(collection) == 0:
            raise ValueError('cannot fit an embedder on an empty collection')
        self.scaler = StandardScaler().fit(np.vstack([self.raw(t) for t in collection]))
        return self

    def embed(self, schema: Schema, table: UserTable) -> np.ndarray:
        if schema != self.schema:
            raise ValueError('table schema does not match the embedder schema')
        vector = self.raw(table)
        if self.scaler is not None:
            vector = self.scaler.transform(vector.reshape(1, -1))[0]
        return vector


def embed_collection(embedder: Embedder, collection: Collection) -> Tuple[List[str], np.ndarray]:
    """(user ids in sorted order, one embedding row per table)."""
    ids = collection.user_ids
    if not ids:
        return [], np.zeros((0, embedder.dimension))
    return ids, np.vstack([embedder.embed(collection.schema, t) for t in collection])


def vote_counts(real_emb: np.ndarray, cand_emb: np.ndarray, k: int) -> np.ndarray:
    """
    Exact votes: each real row adds 1 to its k nearest candidate rows
    (Euclidean, ties broken by candidate row order).
    """
    real_emb = np.atleast_2d(np.asarray(real_emb, dtype=float))
    cand_emb = np.atleast_2d(np.asarray(cand_emb, dtype=float))
    if k < 1:
        raise ValueError(f'k must be >= 1, got {k}')
    if k > cand_emb.shape[0]:
        raise ValueError(f'k={k} exceeds the {cand_emb.shape[0]} candidates')
    votes = np.zeros(cand_emb.shape[0], dtype=np.int64)
    if real_emb.shape[0] == 0:
        return votes
    nearest = np.argsort(cdist(real_emb, cand_emb), axis=1, kind='stable')[:, :k]
    np.add.at(votes, nearest.ravel(), 1)
    return votes


@dataclass
class SelectionResult:
    selected: List[str]
    votes: Dict[str, int]
    noisy_votes: Dict[str, float]
    sigma: float
    rho: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'selected': list(self.selected),
            'sigma': self.sigma,
            'rho': self.rho,
            'votes': dict(self.votes),
        }


def private_knn_select(real_emb: np.ndarray, cand_emb: np.ndarray, candidate_ids: Sequence[str],
                       k: int = DEFAULT_NEIGHBORS, m_out: int = 1, epsilon_select: float = 1.0,
                       delta: float = 1e-6, seed: int = 0, exact: bool = False,
                       budget: Optional[PrivacyBudget] = None) -> SelectionResult:
    """
    Noisy top-m_out candidates by k-NN votes.

    sigma = sqrt(k) / sqrt(2 rho) with rho converted from (epsilon_select, delta).
    When a budget is given its epsilon_select and delta are used and the cost
    is charged to its selection ledger. exact=True skips the noise and the
    accounting. Ties in noisy votes go to
    the smaller candidate id.

    Raises:
        ValueError: if epsilon_select <= 0 (without exact), m_out exceeds the pool or k is invalid
    """
    if budget is not None:
        epsilon_select, delta = budget.epsilon_select, budget.delta
    candidate_ids = list(candidate_ids)
    if len(candidate_ids) != np.atleast_2d(cand_emb).shape[0]:
        raise ValueError('one candidate id per candidate embedding row is required')
    if not 0 <= m_out <= len(candidate_ids):
        raise ValueError(f'm_out={m_out} must be within [0, {len(candidate_ids)}]')

    # vote in id order so distance ties resolve to the smaller id
    order = sorted(range(len(candidate_ids)), key=lambda i: candidate_ids[i])
    ordered_ids = [candidate_ids[i] for i in order]
    votes = vote_counts(real_emb, np.atleast_2d(cand_emb)[order], k)

    if exact:
        sigma, rho = 0.0, 0.0
        noisy = votes.astype(float)
        logger.warning('Selection noise disabled: the selected set is not private')
    else:
        if epsilon_select <= 0:
            raise ValueError(f'epsilon_select must be > 0, got {epsilon_select}')
        rho = epsilon_to_rho(epsilon_select, delta)
        sigma = gaussian_sigma(rho, sensitivity=math.sqrt(k))
        if budget is not None:
            budget.charge_selection(f'knn votes (k={k})', gaussian_rho(sigma, sensitivity=math.sqrt(k)))
        noisy = votes + np.random.default_rng(seed).normal(0.0, sigma, size=votes.size)

    ranking = np.lexsort((np.arange(len(ordered_ids)), -noisy))
    selected = [ordered_ids[i] for i in ranking[:m_out]]
    logger.info(f'Selected {len(selected)} of {len(ordered_ids)} candidates (k={k}, sigma={sigma:.4g})')
    return SelectionResult(
        selected,
        {u: int(v) for u, v in zip(ordered_ids, votes)},
        {u: float(v) for u, v in zip(ordered_ids, noisy)},
        sigma,
        rho,
    )


def select_collection(real: Collection, candidates: Collection, m_out: int, k: int = DEFAULT_NEIGHBORS,
                      epsilon_select: float = 1.0, delta: float = 1e-6, seed: int = 0, exact: bool = False,
                      budget: Optional[PrivacyBudget] = None,
                      embedder: Optional[Embedder] = None) -> Tuple[Collection, SelectionResult]:
    """
    Embed both sides (the embedder is fit on the candidates only) and keep the
    selected candidates.
    """
    if real.schema != candidates.schema:
        raise ValueError('real and candidate collections must share a schema')
    embedder = embedder or ReferenceEmbedder(candidates.schema, seed=seed).fit(candidates)
    _, real_emb = embed_collection(embedder, real)
    cand_ids, cand_emb = embed_collection(embedder, candidates)
    result = private_knn_select(real_emb, cand_emb, cand_ids, k, m_out, epsilon_select, delta, seed, exact, budget)
    return candidates.subset(sorted(result.selected)), result
