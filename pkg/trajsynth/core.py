# trajsynth/core.py
"""
Core data model: schemas, typed cells, per-user tables and collections.

A cell is a Python value whose meaning is fixed by its column kind:
``float`` for numeric, ``str`` for categorical, ``int`` epoch seconds (UTC)
for timestamps, and ``None`` for Null in any column.
"""

import calendar
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .validation import validate_table

logger = logging.getLogger(__name__)

NUMERIC = 'numeric'
CATEGORICAL = 'categorical'
TIMESTAMP = 'timestamp'
KINDS = (NUMERIC, CATEGORICAL, TIMESTAMP)

TIMESTAMP_FORMAT = '%Y-%m-%d %H:%M:%S'
_TIMESTAMP_PATTERN = re.compile(r'^\d{4}-\d{2}-\d{2} \d{2}:\d{2}:\d{2}$')
_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

USER_ID_COLUMN = 'user_id'
ROW_INDEX_COLUMN = 'row_idx'

Cell = Union[float, str, int, None]
Row = Tuple[Cell, ...]


class ValidationError(ValueError):
    """Raised for malformed schemas, tables and collection files."""


def parse_timestamp(text: str) -> int:
    """Parse "YYYY-MM-DD HH:MM:SS" (UTC) into epoch seconds; rejects non-calendar dates."""
    if not _TIMESTAMP_PATTERN.match(text):
        raise ValueError(f'invalid timestamp {text!r}')
    try:
        moment = datetime.strptime(text, TIMESTAMP_FORMAT)
    except ValueError as e:
        raise ValueError(f'invalid timestamp {text!r}: {e}') from e
    return calendar.timegm(moment.timetuple())


def render_timestamp(seconds: int) -> str:
    try:
        text = (_EPOCH + timedelta(seconds=int(seconds))).strftime(TIMESTAMP_FORMAT)
    except OverflowError as e:
        raise ValueError(f'timestamp {seconds} out of range') from e
    if not _TIMESTAMP_PATTERN.match(text):
        raise ValueError(f'timestamp {seconds} has no four-digit year')
    return text


def format_number(value: float) -> str:
    # repr is the shortest string that round-trips to the same double
    return repr(float(value))


@dataclass(frozen=True)
class Column:
    name: str
    kind: str
    categories: Optional[Tuple[str, ...]] = None
    static: bool = False

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError('Column names must be non-empty strings')
        if self.kind not in KINDS:
            raise ValidationError(f'Column {self.name!r} has unknown kind {self.kind!r}')
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise ValidationError(f'Categorical column {self.name!r} must list its categories')
            categories = tuple(self.categories)
            if len(set(categories)) != len(categories) or any(not c for c in categories):
                raise ValidationError(f'Categories of {self.name!r} must be unique non-empty strings')
            object.__setattr__(self, 'categories', categories)
        elif self.categories is not None:
            raise ValidationError(f'Only categorical columns take categories ({self.name!r})')

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'name': self.name, 'kind': self.kind}
        if self.categories is not None:
            data['categories'] = list(self.categories)
        if self.static:
            data['static'] = True
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Column':
        missing = [key for key in ('name', 'kind') if key not in data]
        if missing:
            raise ValidationError(f'Column JSON is missing {missing}: {data}')
        return cls(
            name=data['name'],
            kind=data['kind'],
            categories=tuple(data['categories']) if data.get('categories') is not None else None,
            static=bool(data.get('static', False)),
        )


@dataclass(frozen=True)
class Schema:
    columns: Tuple[Column, ...]

    def __post_init__(self):
        columns = tuple(self.columns)
        if not columns:
            raise ValidationError('Schema must have at least one column')
        names = [c.name for c in columns]
        if len(set(names)) != len(names):
            raise ValidationError(f'Duplicate column names in schema: {names}')
        if USER_ID_COLUMN in names or ROW_INDEX_COLUMN in names:
            raise ValidationError(f'{USER_ID_COLUMN!r} and {ROW_INDEX_COLUMN!r} are reserved column names')
        object.__setattr__(self, 'columns', columns)

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.columns]

    @property
    def width(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        for j, column in enumerate(self.columns):
            if column.name == name:
                return j
        raise ValueError(f'Unknown column {name!r}')

    def column(self, name: str) -> Column:
        return self.columns[self.index(name)]

    def indices_of_kind(self, kind: str) -> List[int]:
        return [j for j, c in enumerate(self.columns) if c.kind == kind]

    def to_dict(self) -> Dict[str, Any]:
        return {'columns': [c.to_dict() for c in self.columns]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Schema':
        if 'columns' not in data:
            raise ValidationError('Schema JSON must have a "columns" list')
        return cls(tuple(Column.from_dict(c) for c in data['columns']))

    @classmethod
    def load(cls, path: str) -> 'Schema':
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path: str) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)


def render_cell(column: Column, value: Cell) -> str:
    if value is None:
        return ''
    if column.kind == NUMERIC:
        return format_number(value)
    if column.kind == TIMESTAMP:
        return render_timestamp(value)
    return value


def parse_cell(column: Column, text: str) -> Cell:
    """Inverse of render_cell; raises ValueError naming the reason."""
    if text == '':
        return None
    if column.kind == NUMERIC:
        try:
            value = float(text)
        except ValueError:
            raise ValueError(f'non-numeric value {text!r} in column {column.name!r}')
        if not math.isfinite(value):
            raise ValueError(f'non-finite value {text!r} in column {column.name!r}')
        return value
    if column.kind == TIMESTAMP:
        return parse_timestamp(text)
    if text not in column.categories:
        raise ValueError(f'unknown category {text!r} in column {column.name!r}')
    return text


@dataclass(frozen=True)
class UserTable:
    """One user's ordered trajectory of rows; the privacy unit."""
    user_id: str
    rows: Tuple[Row, ...]

    def __post_init__(self):
        object.__setattr__(self, 'rows', tuple(tuple(row) for row in self.rows))

    @property
    def length(self) -> int:
        return len(self.rows)

    def column_values(self, j: int) -> List[Cell]:
        return [row[j] for row in self.rows]

    def head(self, length: int) -> 'UserTable':
        return UserTable(self.user_id, self.rows[:length])

    def renamed(self, user_id: str) -> 'UserTable':
        return UserTable(user_id, self.rows)


@dataclass(frozen=True)
class Collection:
    """User tables under one schema, keyed and ordered by user id."""
    schema: Schema
    tables: Dict[str, UserTable] = field(default_factory=dict)

    def __post_init__(self):
        ordered = {}
        for user_id in sorted(self.tables):
            table = self.tables[user_id]
            if table.user_id != user_id:
                raise ValidationError(f'Table keyed {user_id!r} carries user id {table.user_id!r}')
            report = validate_table(self.schema, table)
            if not report['valid']:
                raise ValidationError(f'User {user_id!r}: {report["message"]}')
            ordered[user_id] = table
        object.__setattr__(self, 'tables', ordered)

    @classmethod
    def from_tables(cls, schema: Schema, tables: Iterable[UserTable]) -> 'Collection':
        mapping: Dict[str, UserTable] = {}
        for table in tables:
            if table.user_id in mapping:
                raise ValidationError(f'Duplicate user id {table.user_id!r}')
            mapping[table.user_id] = table
        return cls(schema, mapping)

    def __len__(self) -> int:
        return len(self.tables)

    def __iter__(self) -> Iterator[UserTable]:
        return iter(self.tables.values())

    @property
    def user_ids(self) -> List[str]:
        return list(self.tables)

    @property
    def lengths(self) -> List[int]:
        return [t.length for t in self.tables.values()]

    def column_values(self, name: str, drop_null: bool = True) -> List[Cell]:
        """All values of one column pooled across tables, ignoring temporal order."""
        j = self.schema.index(name)
        values = [row[j] for table in self for row in table.rows]
        if drop_null:
            values = [v for v in values if v is not None]
        return values

    def subset(self, user_ids: Iterable[str]) -> 'Collection':
        return Collection.from_tables(self.schema, (self.tables[u] for u in user_ids))


def length_histogram(collection: Collection) -> Dict[int, int]:
    """Empirical distribution of table lengths (treated as public)."""
    if len(collection) == 0:
        raise ValueError('length_histogram needs a non-empty collection')
    histogram: Dict[int, int] = {}
    for length in collection.lengths:
        histogram[length] = histogram.get(length, 0) + 1
    return dict(sorted(histogram.items()))


def subsample_collection(collection: Collection, n: int, seed: int) -> Collection:
    """Uniform subsample of n users without replacement (seeded)."""
    rng = np.random.default_rng(seed)
    n = min(n, len(collection))
    picked = rng.choice(len(collection), size=n, replace=False)
    ids = collection.user_ids
    return collection.subset(sorted(ids[i] for i in picked))


def read_collection(csv_path: str, schema: Schema) -> Collection:
    """
    Read a collection from the CSV convention: user_id,row_idx,<columns...>,
    empty string for Null.
    """
    frame = pd.read_csv(csv_path, dtype=str, keep_default_na=False, na_filter=False)
    expected = [USER_ID_COLUMN, ROW_INDEX_COLUMN] + schema.names
    if list(frame.columns) != expected:
        raise ValidationError(f'{csv_path}: header {list(frame.columns)} does not match {expected}')

    tables = []
    for user_id, group in frame.groupby(USER_ID_COLUMN, sort=True):
        try:
            order = group[ROW_INDEX_COLUMN].astype(int)
        except ValueError as e:
            raise ValidationError(f'{csv_path}: bad row_idx for user {user_id!r}: {e}') from e
        group = group.assign(**{ROW_INDEX_COLUMN: order}).sort_values(ROW_INDEX_COLUMN, kind='stable')
        if list(group[ROW_INDEX_COLUMN]) != list(range(len(group))):
            raise ValidationError(f'{csv_path}: row_idx of user {user_id!r} is not 0..T-1')
        rows = []
        for record in group[schema.names].itertuples(index=False, name=None):
            try:
                rows.append(tuple(parse_cell(c, text) for c, text in zip(schema.columns, record)))
            except ValueError as e:
                raise ValidationError(f'{csv_path}: user {user_id!r}: {e}') from e
        tables.append(UserTable(str(user_id), tuple(rows)))

    collection = Collection.from_tables(schema, tables)
    logger.info(f'Read {len(collection)} tables from {csv_path}')
    return collection


def collection_to_frame(collection: Collection) -> pd.DataFrame:
    records = []
    for table in collection:
        for i, row in enumerate(table.rows):
            records.append(
                [table.user_id, str(i)] + [render_cell(c, v) for c, v in zip(collection.schema.columns, row)]
            )
    header = [USER_ID_COLUMN, ROW_INDEX_COLUMN] + collection.schema.names
    return pd.DataFrame(records, columns=header, dtype=str)


def write_collection(collection: Collection, csv_path: str) -> None:
    collection_to_frame(collection).to_csv(csv_path, index=False, lineterminator='\n')
    logger.info(f'Wrote {len(collection)} tables to {csv_path}')


def rows_to_matrix(rows: Sequence[Row], indices: Sequence[int]) -> np.ndarray:
    """Numeric sub-matrix of the given columns with Null as NaN."""
    return np.array(
        [[np.nan if row[j] is None else float(row[j]) for j in indices] for row in rows],
        dtype=float,
    ).reshape(len(rows), len(indices))
