# tests/helpers.py
"""Random schemas, tables and collections for tests."""

from typing import Optional

import numpy as np

from trajsynth.core import CATEGORICAL, NUMERIC, TIMESTAMP, Collection, Column, Schema, UserTable

CATEGORIES = ('low', 'mid', 'high', 'other value')


def random_schema(rng: np.random.Generator, max_columns: int = 4, allow_static: bool = True) -> Schema:
    """First column is numeric; the rest are drawn from all kinds."""
    width = int(rng.integers(1, max_columns + 1))
    columns = [Column('c0', NUMERIC)]
    for j in range(1, width):
        kind = (NUMERIC, CATEGORICAL, TIMESTAMP)[int(rng.integers(3))]
        categories = CATEGORIES[:int(rng.integers(1, len(CATEGORIES) + 1))] if kind == CATEGORICAL else None
        static = allow_static and bool(rng.random() < 0.2)
        columns.append(Column(f'c{j}', kind, categories, static))
    return Schema(tuple(columns))


def random_cell(column: Column, rng: np.random.Generator, null_rate: float = 0.1):
    if rng.random() < null_rate:
        return None
    if column.kind == NUMERIC:
        return float(rng.normal(0.0, 100.0))
    if column.kind == CATEGORICAL:
        return column.categories[int(rng.integers(len(column.categories)))]
    return int(rng.integers(0, 4_000_000_000))


def random_table(schema: Schema, rng: np.random.Generator, user_id: str = 'u0',
                 length: Optional[int] = None, max_length: int = 6, null_rate: float = 0.1) -> UserTable:
    """The first column is never Null, so no row is entirely Null."""
    length = int(rng.integers(1, max_length + 1)) if length is None else length
    rows = []
    for _ in range(length):
        row = [random_cell(c, rng, null_rate) for c in schema.columns]
        if row[0] is None:
            row[0] = float(rng.normal())
        rows.append(tuple(row))
    return UserTable(user_id, tuple(rows))


def random_collection(schema: Schema, rng: np.random.Generator, n: int = 5, max_length: int = 6,
                      null_rate: float = 0.1) -> Collection:
    return Collection.from_tables(schema, [
        random_table(schema, rng, f'u{i:04d}', max_length=max_length, null_rate=null_rate) for i in range(n)
    ])


def numeric_collection(sequences, name: str = 'x', prefix: str = 'u') -> Collection:
    """One numeric column; one user per sequence."""
    schema = Schema((Column(name, NUMERIC),))
    return Collection.from_tables(schema, [
        UserTable(f'{prefix}{i:04d}', tuple((None if v is None else float(v),) for v in seq))
        for i, seq in enumerate(sequences)
    ])


def categorical_collection(sequences, categories, name: str = 'x', prefix: str = 'u') -> Collection:
    schema = Schema((Column(name, CATEGORICAL, tuple(categories)),))
    return Collection.from_tables(schema, [
        UserTable(f'{prefix}{i:04d}', tuple((v,) for v in seq)) for i, seq in enumerate(sequences)
    ])
