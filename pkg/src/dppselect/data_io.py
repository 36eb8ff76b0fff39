"""CSV ingestion for regression datasets."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DataError
from .regression import SpikeSlabModel


def ingest_csv(path, response_column: str) -> SpikeSlabModel:
    """Read a numeric CSV with a header row into a model skeleton.

    The named response column becomes y; every other column becomes a design
    column, in header order. Missing or non-numeric cells are rejected with
    their row and column location. Hyperparameters are left at defaults for
    the caller to override.
    """
    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        header = [name.strip() for name in header]
        if response_column not in header:
            raise DataError(
                f"response column {response_column!r} not found; "
                f"available columns: {', '.join(header)}"
            )
        y_col = header.index(response_column)
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(
                    f"row {line_no} has {len(row)} cells, expected {len(header)}"
                )
            values = []
            for col_no, cell in enumerate(row):
                text = cell.strip()
                if not text:
                    raise DataError(
                        f"missing value at row {line_no}, column {header[col_no]!r}"
                    )
                try:
                    values.append(float(text))
                except ValueError:
                    raise DataError(
                        f"non-numeric value {text!r} at row {line_no}, "
                        f"column {header[col_no]!r}"
                    ) from None
            rows.append(values)
    if not rows:
        raise DataError(f"{path} contains no data rows")
    data = np.array(rows, dtype=float)
    y = data[:, y_col]
    x = np.delete(data, y_col, axis=1)
    if x.shape[1] == 0:
        raise DataError(f"{path} has no feature columns besides the response")
    names = tuple(name for i, name in enumerate(header) if i != y_col)
    return SpikeSlabModel(
        design=x,
        response=y,
        feature_names=names,
        response_name=response_column,
    )
