# trajsynth/metrics/embedding.py
"""
Embedding-space comparisons: a MAUVE-style divergence frontier score and a
logistic-regression two-sample classifier.
"""

import logging
from typing import Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import expit, rel_entr
from sklearn.cluster import KMeans
from sklearn.metrics import roc_auc_score
from sklearn.model_selection import train_test_split
from sklearn.preprocessing import StandardScaler

logger = logging.getLogger(__name__)

DEFAULT_SCALE = 5.0
DEFAULT_GRID = 99
MAX_CLUSTERS = 128
KMEANS_MAX_ITER = 100

CLASSIFIER_ITERATIONS = 500
CLASSIFIER_STEP = 0.1
MIN_CLASSIFIER_POINTS = 20


def default_num_clusters(n: int) -> int:
    return max(1, min(n // 10, MAX_CLUSTERS))


def _balance(emb_p: np.ndarray, emb_q: np.ndarray, rng: np.random.Generator):
    n = min(len(emb_p), len(emb_q))

    def down(x):
        if len(x) == n:
            return x
        return x[np.sort(rng.choice(len(x), size=n, replace=False))]

    return down(emb_p), down(emb_q)


def _kl(a: np.ndarray, b: np.ndarray) -> float:
    return float(rel_entr(a, b).sum())


def mauve(emb_p: np.ndarray, emb_q: np.ndarray, num_clusters: Optional[int] = None,
          scale: float = DEFAULT_SCALE, grid: int = DEFAULT_GRID, seed: int = 0) -> float:
    """
    Area under the divergence frontier of the cluster histograms of P and Q.

    Both sides are downsampled to the smaller size, clustered jointly with
    k-means, smoothed with +1/k per cluster and compared against mixtures
    R = (1 - lambda) P + lambda Q on an interior lambda grid.
    """
    emb_p = np.atleast_2d(np.asarray(emb_p, dtype=float))
    emb_q = np.atleast_2d(np.asarray(emb_q, dtype=float))
    if grid < 1:
        raise ValueError(f'grid must be >= 1, got {grid}')
    rng = np.random.default_rng(seed)
    emb_p, emb_q = _balance(emb_p, emb_q, rng)
    n = len(emb_p)
    k = default_num_clusters(n) if num_clusters is None else num_clusters
    if k < 1 or n < k:
        raise ValueError(f'mauve needs at least {k} points per side after balancing, got {n}')

    kmeans = KMeans(n_clusters=k, init='k-means++', n_init=1, max_iter=KMEANS_MAX_ITER, random_state=seed)
    pooled = np.vstack([emb_p, emb_q])
    # cluster in a canonical row order so swapping P and Q sees the same input
    order = np.lexsort(pooled.T[::-1])
    labels = np.empty(len(pooled), dtype=np.int64)
    labels[order] = kmeans.fit_predict(pooled[order])
    p = (np.bincount(labels[:n], minlength=k) + 1.0 / k) / (n + 1.0)
    q = (np.bincount(labels[n:], minlength=k) + 1.0 / k) / (n + 1.0)

    xs, ys = [0.0], [1.0]
    for lam in np.linspace(0.0, 1.0, grid + 2)[1:-1]:
        r = (1.0 - lam) * p + lam * q
        xs.append(np.exp(-scale * _kl(q, r)))
        ys.append(np.exp(-scale * _kl(p, r)))
    xs.append(1.0)
    ys.append(0.0)

    order = np.argsort(np.array(xs), kind='stable')
    score = trapezoid(np.array(ys)[order], np.array(xs)[order])
    return float(np.clip(score, 0.0, 1.0))


def _fit_logistic(x: np.ndarray, y: np.ndarray):
    w = np.zeros(x.shape[1])
    b = 0.0
    for _ in range(CLASSIFIER_ITERATIONS):
        residual = expit(x @ w + b) - y
        w -= CLASSIFIER_STEP * (x.T @ residual) / len(y)
        b -= CLASSIFIER_STEP * residual.mean()
    return w, b


def classifier_auc(emb_real: np.ndarray, emb_synth: np.ndarray, split: float = 0.7, seed: int = 0) -> float:
    """
    Held-out ROC AUC of a logistic regression telling real (0) from synthetic (1).

    Full-batch gradient descent on inputs z-scored with training-split
    statistics; stratified seeded split.
    """
    emb_real = np.atleast_2d(np.asarray(emb_real, dtype=float))
    emb_synth = np.atleast_2d(np.asarray(emb_synth, dtype=float))
    if len(emb_real) < MIN_CLASSIFIER_POINTS or len(emb_synth) < MIN_CLASSIFIER_POINTS:
        raise ValueError(f'classifier_auc needs at least {MIN_CLASSIFIER_POINTS} points per side')
    x = np.vstack([emb_real, emb_synth])
    y = np.concatenate([np.zeros(len(emb_real)), np.ones(len(emb_synth))])
    x_train, x_test, y_train, y_test = train_test_split(
        x, y, train_size=split, stratify=y, random_state=seed
    )
    if len(np.unique(y_train)) < 2 or len(np.unique(y_test)) < 2:
        raise ValueError('classifier split is degenerate (single class)')
    scaler = StandardScaler().fit(x_train)
    w, b = _fit_logistic(scaler.transform(x_train), y_train)
    scores = expit(scaler.transform(x_test) @ w + b)
    return float(roc_auc_score(y_test, scores))
