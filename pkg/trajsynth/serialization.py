# trajsynth/serialization.py
"""
Text serialization of user tables and the fallback parser used on generated text.

Format:

    Columns: charttime, heartrate
    [Row 1]: charttime is 2180-07-22 16:36:00, heartrate is 83.0
    [Row 2]: charttime is 2180-07-22 17:00:00, heartrate is 

Values are not escaped. The key-value parser splits on ", <column> is "
anchors taken from the schema, so values may contain commas.
"""

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import Cell, Collection, Row, Schema, UserTable, length_histogram, parse_cell, render_cell

logger = logging.getLogger(__name__)

HEADER_PREFIX = 'Columns: '
DEFAULT_P_START = 0.25

KEYVALUE = 'keyvalue'
CSV_FALLBACK = 'csv_fallback'
INFILLED = 'infilled'
FAILED = 'failed'

_ROW_PREFIX = re.compile(r'^\[Row (\d+)\]:\s?(.*)$')


def serialize_header(schema: Schema) -> str:
    return HEADER_PREFIX + ', '.join(schema.names)


def render_row(schema: Schema, row: Row, index: int) -> str:
    """One row line; index is 1-based. Null renders as the empty value after "is"."""
    cells = ', '.join(f'{c.name} is {render_cell(c, v)}' for c, v in zip(schema.columns, row))
    return f'[Row {index}]: {cells}'


def serialize_rows(schema: Schema, rows: Sequence[Row], start: int = 1) -> str:
    return '\n'.join(render_row(schema, row, start + i) for i, row in enumerate(rows))


def serialize(table: UserTable, schema: Schema) -> str:
    lines = [serialize_header(schema)]
    if table.rows:
        lines.append(serialize_rows(schema, table.rows))
    return '\n'.join(lines)


@dataclass
class ParseReport:
    """Per-row outcomes; terminated_at is the 1-based row whose parse failed."""
    outcomes: List[str] = field(default_factory=list)
    terminated_at: Optional[int] = None

    @property
    def complete(self) -> bool:
        return self.terminated_at is None

    @property
    def accepted(self) -> int:
        return sum(1 for o in self.outcomes if o != FAILED)

    def to_dict(self) -> Dict[str, object]:
        return {
            'outcomes': list(self.outcomes),
            'termination': 'complete' if self.complete else f'early_terminated at row {self.terminated_at}',
        }


class RowParser:
    """Key-value then CSV parsing of single row bodies under one schema."""

    def __init__(self, schema: Schema):
        self.schema = schema
        names = [re.escape(n) for n in schema.names]
        # ordered anchors with leftmost (non-greedy) splitting; the final "is" may lose its trailing space
        body = ', '.join(f'{n} is (.*?)' for n in names[:-1])
        last = f'{names[-1]} is ?(.*)'
        self._ordered = re.compile('^' + (body + ', ' if body else '') + last + '$')
        self._anchor = re.compile('(?:^|, )(' + '|'.join(names) + ') is ?')
        self._static = [j for j, c in enumerate(schema.columns) if c.static]

    def _convert(self, texts: Dict[int, str]) -> Optional[Dict[int, Cell]]:
        cells = {}
        for j, text in texts.items():
            try:
                cells[j] = parse_cell(self.schema.columns[j], text)
            except ValueError:
                return None
        return cells

    def keyvalue(self, body: str) -> Optional[Dict[int, Cell]]:
        """Cells by column index, or None; static columns may be absent."""
        match = self._ordered.match(body)
        if match:
            cells = self._convert(dict(enumerate(match.groups())))
            if cells is not None:
                return cells
        # any order, each column at most once
        anchors = list(self._anchor.finditer(body))
        if not anchors or anchors[0].start() != 0:
            return None
        texts: Dict[int, str] = {}
        for a, b in zip(anchors, anchors[1:] + [None]):
            j = self.schema.index(a.group(1))
            if j in texts:
                return None
            texts[j] = body[a.end():b.start() if b is not None else len(body)]
        missing = set(range(self.schema.width)) - set(texts)
        if missing - set(self._static):
            return None
        return self._convert(texts)

    def csv(self, body: str) -> Optional[Dict[int, Cell]]:
        """Comma-separated values in schema order, with or without the static columns."""
        try:
            fields = next(csv.reader([body], skipinitialspace=True))
        except (csv.Error, StopIteration):
            return None
        if len(fields) == self.schema.width:
            targets = list(range(self.schema.width))
        elif self._static and len(fields) == self.schema.width - len(self._static):
            targets = [j for j in range(self.schema.width) if j not in self._static]
        else:
            return None
        return self._convert(dict(zip(targets, (f.strip() for f in fields))))

    def infill(self, cells: Dict[int, Cell], previous: Optional[Row]) -> Tuple[Optional[Row], bool]:
        """Fill absent static columns from the previous row; returns (row or None, infilled)."""
        missing = [j for j in range(self.schema.width) if j not in cells]
        if not missing:
            return tuple(cells[j] for j in range(self.schema.width)), False
        if previous is None:
            return None, False
        for j in missing:
            cells[j] = previous[j]
        return tuple(cells[j] for j in range(self.schema.width)), True


def _row_bodies(text: str) -> List[str]:
    bodies = []
    for line in text.split('\n'):
        line = line.rstrip('\r')
        if not line.strip() or line.startswith(HEADER_PREFIX.rstrip()):
            continue
        match = _ROW_PREFIX.match(line)
        bodies.append(match.group(2) if match else line)
    return bodies


def parse(text: str, schema: Schema, history: Optional[UserTable] = None,
          user_id: str = '') -> Tuple[UserTable, ParseReport]:
    """
    Parse serialized rows with the cascade: key-value, then CSV in schema
    order, then infilling of absent static columns from earlier rows or the
    history. The first row that fails ends the parse; accepted rows are kept.
    """
    parser = RowParser(schema)
    report = ParseReport()
    rows: List[Row] = []
    previous = history.rows[-1] if history is not None and history.rows else None

    for number, body in enumerate(_row_bodies(text), start=1):
        outcome = KEYVALUE
        cells = parser.keyvalue(body)
        if cells is None:
            outcome = CSV_FALLBACK
            cells = parser.csv(body)
        row = None
        if cells is not None:
            row, infilled = parser.infill(cells, rows[-1] if rows else previous)
            if infilled:
                outcome = INFILLED
        if row is None:
            report.outcomes.append(FAILED)
            report.terminated_at = number
            logger.debug(f'Parse of {user_id or "table"} terminated at row {number}')
            break
        report.outcomes.append(outcome)
        rows.append(row)

    return UserTable(user_id, tuple(rows)), report


@dataclass(frozen=True)
class TrainingExample:
    """context holds the header and rows 1..k; target holds rows k+1..T."""
    context: str
    target: str
    k: int
    user_id: str
    fallback: bool = False

    @property
    def text(self) -> str:
        return '\n'.join(part for part in (self.context, self.target) if part)

    def to_dict(self) -> Dict[str, object]:
        return {'context': self.context, 'target': self.target, 'k': self.k, 'user_id': self.user_id}


def build_index_pool(histogram: Dict[int, int]) -> np.ndarray:
    """Every valid split index k in [1, T-1] of every table, as a sorted multiset."""
    pool = [k for length, count in sorted(histogram.items()) for k in range(1, length) for _ in range(count)]
    return np.array(sorted(pool), dtype=np.int64)


def split_example(table: UserTable, schema: Schema, k: int, fallback: bool = False) -> TrainingExample:
    if not 0 <= k <= max(table.length - 1, 0):
        raise ValueError(f'split k={k} out of range for a table of {table.length} rows')
    context = serialize_header(schema)
    if k:
        context += '\n' + serialize_rows(schema, table.rows[:k])
    target = serialize_rows(schema, table.rows[k:], start=k + 1)
    return TrainingExample(context, target, k, table.user_id, fallback)


def make_training_example(table: UserTable, schema: Schema, length_pool: Sequence[int],
                          p_start: float = DEFAULT_P_START, seed=0) -> TrainingExample:
    """
    One example per call: k = 0 with probability p_start, otherwise k drawn
    uniformly from pool entries with k <= T-1. A table with no valid pool
    entry falls back to uniform k in [0, T-1] and is flagged.
    """
    if not 0.0 <= p_start <= 1.0:
        raise ValueError(f'p_start must be in [0, 1], got {p_start}')
    pool = np.asarray(length_pool, dtype=np.int64)
    if p_start < 1.0 and pool.size == 0:
        raise ValueError('length pool is empty and p_start < 1')

    rng = np.random.default_rng(seed)
    length = table.length
    if length <= 1 or rng.random() < p_start:
        return split_example(table, schema, 0)
    valid = pool[(pool >= 0) & (pool <= length - 1)]
    if valid.size == 0:
        return split_example(table, schema, int(rng.integers(0, length)), fallback=True)
    return split_example(table, schema, int(valid[rng.integers(valid.size)]))


def make_training_examples(collection: Collection, p_start: float = DEFAULT_P_START,
                           seed: int = 0) -> List[TrainingExample]:
    """One example per user; each user's split uses the child seed (seed, position)."""
    pool = build_index_pool(length_histogram(collection))
    examples = [
        make_training_example(table, collection.schema, pool, p_start, np.random.SeedSequence([seed, i]))
        for i, table in enumerate(collection)
    ]
    fallbacks = sum(1 for e in examples if e.fallback)
    if fallbacks:
        logger.warning(f'{fallbacks} tables had no valid pooled split index; used uniform k')
    return examples


def write_training_examples(examples: Sequence[TrainingExample], path: str) -> None:
    with open(path, 'w') as f:
        for example in examples:
            f.write(json.dumps(example.to_dict()) + '\n')
    logger.info(f'Wrote {len(examples)} training examples to {path}')
