# trajsynth/privacy.py
"""
zCDP accounting shared by every mechanism in the package.

A Gaussian mechanism with L2 sensitivity D and noise scale sigma costs
rho = D^2 / (2 sigma^2); costs add under composition and convert to
(epsilon, delta)-DP via epsilon = rho + 2 sqrt(rho ln(1/delta)).

The total budget is split as epsilon_total = epsilon_train + epsilon_select;
the two parts are accounted separately and each is converted at delta.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

logger = logging.getLogger(__name__)

RELATIVE_TOLERANCE = 1e-9

# epsilon_total upper bound -> epsilon_select
DEFAULT_SELECT_SCHEDULE = ((0.5, 0.25), (2.0, 0.5), (float('inf'), 1.0))


class BudgetExceededError(RuntimeError):
    """Raised when a mechanism would spend more than the configured budget."""


def rho_to_epsilon(rho: float, delta: float) -> float:
    if rho < 0:
        raise ValueError(f'rho must be non-negative, got {rho}')
    if not 0.0 < delta < 1.0:
        raise ValueError(f'delta must be in (0, 1), got {delta}')
    return rho + 2.0 * math.sqrt(rho * math.log(1.0 / delta))


def epsilon_to_rho(epsilon: float, delta: float) -> float:
    """Positive root of epsilon = rho + 2 sqrt(rho ln(1/delta))."""
    if epsilon < 0:
        raise ValueError(f'epsilon must be non-negative, got {epsilon}')
    if not 0.0 < delta < 1.0:
        raise ValueError(f'delta must be in (0, 1), got {delta}')
    a = math.log(1.0 / delta)
    # sqrt(rho) = sqrt(a + eps) - sqrt(a), written without cancellation
    root = epsilon / (math.sqrt(a + epsilon) + math.sqrt(a))
    return root * root


def gaussian_sigma(rho: float, sensitivity: float = 1.0) -> float:
    if rho <= 0:
        raise ValueError(f'rho must be positive, got {rho}')
    return sensitivity / math.sqrt(2.0 * rho)


def gaussian_rho(sigma: float, sensitivity: float = 1.0) -> float:
    if sigma <= 0:
        return math.inf
    return sensitivity ** 2 / (2.0 * sigma ** 2)


def default_delta(n: int) -> float:
    """delta = 1/n^2 for a training set of n users."""
    if n < 2:
        raise ValueError(f'default delta needs at least 2 users, got {n}')
    return 1.0 / (n * n)


def default_epsilon_select(epsilon_total: float) -> float:
    for upper, epsilon_select in DEFAULT_SELECT_SCHEDULE:
        if epsilon_total <= upper:
            return epsilon_select
    return DEFAULT_SELECT_SCHEDULE[-1][1]


@dataclass
class PrivacyBudget:
    """Budget with a training ledger and a selection ledger, both in rho."""
    epsilon_total: float
    delta: float
    epsilon_select: float = 0.0
    entries: List[Tuple[str, float]] = field(default_factory=list)
    selection_entries: List[Tuple[str, float]] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f'delta must be in (0, 1), got {self.delta}')
        if self.epsilon_select < 0:
            raise BudgetExceededError(f'epsilon_select must be >= 0, got {self.epsilon_select}')
        if self.epsilon_train <= 0:
            raise BudgetExceededError(
                f'training budget epsilon_total - epsilon_select = {self.epsilon_train} is not positive'
            )
        self.entries = [(str(label), float(rho)) for label, rho in self.entries]
        self.selection_entries = [(str(label), float(rho)) for label, rho in self.selection_entries]

    @property
    def epsilon_train(self) -> float:
        return self.epsilon_total - self.epsilon_select

    @property
    def rho_train_cap(self) -> float:
        return epsilon_to_rho(self.epsilon_train, self.delta)

    @property
    def rho_select_cap(self) -> float:
        return epsilon_to_rho(self.epsilon_select, self.delta)

    @property
    def rho_ledger(self) -> float:
        return math.fsum(rho for _, rho in self.entries)

    @property
    def rho_selection_ledger(self) -> float:
        return math.fsum(rho for _, rho in self.selection_entries)

    def _check(self, spent: float, cap: float, label: str) -> None:
        if spent > cap * (1.0 + RELATIVE_TOLERANCE):
            raise BudgetExceededError(f'{label}: rho {spent!r} exceeds cap {cap!r}')

    def charge(self, label: str, rho: float) -> None:
        """Charge a training-side measurement."""
        self._check(self.rho_ledger + rho, self.rho_train_cap, label)
        self.entries.append((label, float(rho)))
        logger.debug(f'Charged rho={rho:.6g} for {label}')

    def charge_selection(self, label: str, rho: float) -> None:
        self._check(self.rho_selection_ledger + rho, self.rho_select_cap, label)
        self.selection_entries.append((label, float(rho)))
        logger.debug(f'Charged selection rho={rho:.6g} for {label}')

    def spent(self) -> Dict[str, float]:
        epsilon_train = rho_to_epsilon(self.rho_ledger, self.delta)
        epsilon_select = rho_to_epsilon(self.rho_selection_ledger, self.delta)
        return {
            'epsilon_train': epsilon_train,
            'epsilon_select': epsilon_select,
            'epsilon': epsilon_train + epsilon_select,
        }

    def verify(self) -> Dict[str, float]:
        """Recompute epsilon from the ledgers; raise if the claim is violated."""
        spent = self.spent()
        if spent['epsilon'] > self.epsilon_total * (1.0 + RELATIVE_TOLERANCE):
            raise BudgetExceededError(
                f'ledger recomputes to epsilon={spent["epsilon"]!r} > epsilon_total={self.epsilon_total!r}'
            )
        return spent

    def ledger(self) -> Dict[str, Any]:
        spent = self.spent()
        both = bool(self.entries) and bool(self.selection_entries)
        return {
            'epsilon_total': self.epsilon_total,
            'delta': self.delta,
            'delta_composed': 2.0 * self.delta if both else self.delta,
            'epsilon_select': self.epsilon_select,
            'epsilon_train': self.epsilon_train,
            'rho_train_cap': self.rho_train_cap,
            'rho_train_spent': self.rho_ledger,
            'rho_select_spent': self.rho_selection_ledger,
            'epsilon_train_spent': spent['epsilon_train'],
            'epsilon_select_spent': spent['epsilon_select'],
            'epsilon_spent': spent['epsilon'],
            'entries': [{'label': label, 'rho': rho} for label, rho in self.entries],
            'selection_entries': [{'label': label, 'rho': rho} for label, rho in self.selection_entries],
        }

    @classmethod
    def from_ledger(cls, data: Dict[str, Any]) -> 'PrivacyBudget':
        return cls(
            epsilon_total=data['epsilon_total'],
            delta=data['delta'],
            epsilon_select=data.get('epsilon_select', 0.0),
            entries=[(e['label'], e['rho']) for e in data.get('entries', [])],
            selection_entries=[(e['label'], e['rho']) for e in data.get('selection_entries', [])],
        )
