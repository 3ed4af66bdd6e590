# trajsynth/flatten.py
"""
The flattening transformation and its inverse.

A table of T rows and d columns becomes one row of d*L cells, time-major,
with Null padding after row T. Column j at timestep k is named "<col>__t<k>".
"""

import logging
from dataclasses import dataclass
from typing import Dict, Hashable, List, Mapping, Tuple

import pandas as pd

from .core import (
    ROW_INDEX_COLUMN,
    USER_ID_COLUMN,
    Cell,
    Collection,
    Column,
    Schema,
    UserTable,
    render_cell,
)

logger = logging.getLogger(__name__)

NORMALIZATION_TOLERANCE = 1e-9


def flat_column_name(name: str, step: int) -> str:
    return f'{name}__t{step}'


def flat_schema(schema: Schema, length: int) -> Schema:
    """Derived schema with d*L columns; static flags are dropped."""
    return Schema(tuple(
        Column(flat_column_name(c.name, k), c.kind, c.categories)
        for k in range(1, length + 1)
        for c in schema.columns
    ))


@dataclass(frozen=True)
class FlatTable:
    base_schema: Schema
    length: int
    user_ids: Tuple[str, ...]
    rows: Tuple[Tuple[Cell, ...], ...]

    def __post_init__(self):
        width = self.base_schema.width * self.length
        object.__setattr__(self, 'user_ids', tuple(self.user_ids))
        object.__setattr__(self, 'rows', tuple(tuple(r) for r in self.rows))
        if len(self.user_ids) != len(self.rows):
            raise ValueError('FlatTable needs one user id per row')
        for user_id, row in zip(self.user_ids, self.rows):
            if len(row) != width:
                raise ValueError(f'Flat row of {user_id!r} has {len(row)} cells, expected {width}')

    @property
    def schema(self) -> Schema:
        return flat_schema(self.base_schema, self.length)

    @property
    def width(self) -> int:
        return self.base_schema.width * self.length

    def column_values(self, j: int) -> List[Cell]:
        return [row[j] for row in self.rows]

    def to_frame(self) -> pd.DataFrame:
        columns = self.schema.columns
        records = [
            [user_id, '0'] + [render_cell(c, v) for c, v in zip(columns, row)]
            for user_id, row in zip(self.user_ids, self.rows)
        ]
        header = [USER_ID_COLUMN, ROW_INDEX_COLUMN] + [c.name for c in columns]
        return pd.DataFrame(records, columns=header, dtype=str)


def flatten(collection: Collection, length: int) -> FlatTable:
    """
    Concatenate every table into one fixed-width row with trailing Null padding.

    Raises:
        ValueError: if any table is longer than ``length`` (truncate first with filter_truncate)
    """
    d = collection.schema.width
    rows = []
    for table in collection:
        if table.length > length:
            raise ValueError(
                f'Table {table.user_id!r} has {table.length} rows > L={length}; use filter_truncate'
            )
        cells = [v for row in table.rows for v in row]
        cells.extend([None] * (d * (length - table.length)))
        rows.append(tuple(cells))
    return FlatTable(collection.schema, length, tuple(collection.user_ids), tuple(rows))


def unflatten(flat: FlatTable) -> Collection:
    """Inverse of flatten; strips trailing all-Null timesteps and drops users left empty."""
    d = flat.base_schema.width
    tables = []
    for user_id, cells in zip(flat.user_ids, flat.rows):
        steps = [tuple(cells[k * d:(k + 1) * d]) for k in range(flat.length)]
        while steps and all(v is None for v in steps[-1]):
            steps.pop()
        if not steps:
            logger.warning(f'Dropping user {user_id!r}: flat row is entirely Null')
            continue
        tables.append(UserTable(user_id, tuple(steps)))
    return Collection.from_tables(flat.base_schema, tables)


def filter_truncate(collection: Collection, length: int) -> Collection:
    """Keep users with at least ``length`` rows, each truncated to its first ``length`` rows."""
    if length < 1:
        raise ValueError(f'L must be >= 1, got {length}')
    kept = [t.head(length) for t in collection if t.length >= length]
    logger.info(f'filter_truncate(L={length}) kept {len(kept)} of {len(collection)} users')
    return Collection.from_tables(collection.schema, kept)


def write_flat_table(flat: FlatTable, csv_path: str) -> None:
    flat.to_frame().to_csv(csv_path, index=False, lineterminator='\n')


Trajectory = Tuple[Hashable, ...]


def maxent_two_local(distribution: Mapping[Trajectory, float], length: int = 3) -> Dict[Trajectory, float]:
    """
    Maximum-entropy distribution consistent with the adjacent-pair marginals of a
    length-3 trajectory distribution: P(x1) P(x2|x1) P(x3|x2).

    Only trajectories with positive probability are returned.
    """
    if length != 3:
        raise ValueError('maxent_two_local is defined for L=3 only')
    if any(len(y) != 3 for y in distribution):
        raise ValueError('every trajectory must have exactly 3 steps')
    if any(p < 0 for p in distribution.values()):
        raise ValueError('probabilities must be non-negative')
    total = sum(distribution.values())
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise ValueError(f'input distribution sums to {total!r}, not 1')

    first_pair: Dict[Tuple, float] = {}
    second_pair: Dict[Tuple, float] = {}
    middle: Dict[Hashable, float] = {}
    for (x1, x2, x3), p in distribution.items():
        first_pair[(x1, x2)] = first_pair.get((x1, x2), 0.0) + p
        second_pair[(x2, x3)] = second_pair.get((x2, x3), 0.0) + p
        middle[x2] = middle.get(x2, 0.0) + p

    result: Dict[Trajectory, float] = {}
    for (x1, x2), p12 in first_pair.items():
        for (y2, x3), p23 in second_pair.items():
            if y2 != x2 or p12 <= 0 or p23 <= 0:
                continue
            result[(x1, x2, x3)] = p12 * p23 / middle[x2]
    return result


def spurious_mass(source: Mapping[Trajectory, float], model: Mapping[Trajectory, float]) -> float:
    """Model probability on trajectories the source never produces."""
    return sum(p for y, p in model.items() if source.get(y, 0.0) <= 0.0)

