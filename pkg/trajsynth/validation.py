# trajsynth/validation.py
import math
import numbers
from typing import Any, Dict, List, Optional, Tuple

Violation = Tuple[Optional[int], Optional[str], str]


def validate_cell(column, value) -> Optional[str]:
    """
    Check one cell against its column.

    Returns:
        Optional[str]: None if the cell conforms, otherwise the violation reason
    """
    from .core import CATEGORICAL, NUMERIC, TIMESTAMP, render_timestamp

    # Null is allowed in every column
    if value is None:
        return None

    if column.kind == NUMERIC:
        if isinstance(value, bool) or not isinstance(value, numbers.Real):
            return 'non-numeric'
        if not math.isfinite(float(value)):
            return 'non-finite'
        return None

    if column.kind == CATEGORICAL:
        if not isinstance(value, str):
            return 'non-string category'
        if value not in column.categories:
            return f'unknown category {value!r}'
        return None

    if column.kind == TIMESTAMP:
        if isinstance(value, bool) or not isinstance(value, numbers.Integral):
            return 'non-integer timestamp'
        try:
            render_timestamp(value)
        except ValueError:
            return 'invalid timestamp'
        return None

    return f'unknown column kind {column.kind!r}'


def validate_table(schema, table) -> Dict[str, Any]:
    """
    Validate every cell of a user table against the schema.

    Row indices in the report are 0-based.
    """
    violations: List[Violation] = []
    width = len(schema.columns)

    if len(table.rows) == 0:
        violations.append((None, None, 'table has no rows'))

    for i, row in enumerate(table.rows):
        if len(row) != width:
            violations.append((i, None, f'expected {width} cells, got {len(row)}'))
            continue
        for column, value in zip(schema.columns, row):
            reason = validate_cell(column, value)
            if reason is not None:
                violations.append((i, column.name, reason))

    if violations:
        row, column, reason = violations[0]
        message = f'{len(violations)} violation(s); first at row {row}, column {column}: {reason}'
        return {'valid': False, 'message': message, 'violations': violations}

    return {'valid': True, 'message': 'Table is valid', 'violations': []}
