#!/usr/bin/env python3
"""
Dataset I/O Service

Reads and writes the on-disk artifacts:
- dataset CSV: one sample per row, optional header, integer label column
- mask CSV: p rows of J 0/1 flags
- model file: "p J" line, p lines of W, one line of b (space separated)

Row and column numbers in errors are 1-based and count the header row.
"""

import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from solvers.core_model import Classifier, Dataset

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
LabelColumn = Union[int, str, None]

class DataFormatError(ValueError):
    """Malformed dataset, mask or model file."""

    def __init__(self, path: PathLike, message: str,
                 row: Optional[int] = None, column: Optional[int] = None):
        location = ""
        if row is not None:
            location += f", row {row}"
        if column is not None:
            location += f", column {column}"
        super().__init__(f"{path}{location}: {message}")
        self.path = str(path)
        self.row = row
        self.column = column

def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False

def read_csv_matrix(path: PathLike,
                    header: Optional[bool] = None) -> Tuple[Optional[List[str]], np.ndarray]:
    """
    Parse a numeric CSV.

    Args:
        path: file to read
        header: True/False to force, None to detect (first row not all numeric)

    Returns:
        (column names or None, n x m float matrix)
    """
    path = Path(path)
    with open(path, 'r', newline='') as f:
        rows = [row for row in csv.reader(f) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise DataFormatError(path, "file is empty")

    if header is None:
        header = not all(_is_number(cell) for cell in rows[0])
    names = [cell.strip() for cell in rows[0]] if header else None
    body = rows[1:] if header else rows
    first_row = 2 if header else 1

    width = len(names) if names else len(body[0]) if body else 0
    values = np.empty((len(body), width))
    for i, row in enumerate(body):
        if len(row) != width:
            raise DataFormatError(path, f"expected {width} fields, found {len(row)}", row=first_row + i)
        for j, cell in enumerate(row):
            try:
                value = float(cell)
            except ValueError:
                raise DataFormatError(path, f"cannot parse {cell!r} as a number",
                                      row=first_row + i, column=j + 1) from None
            if not np.isfinite(value):
                raise DataFormatError(path, f"non-finite value {cell.strip()!r}",
                                      row=first_row + i, column=j + 1)
            values[i, j] = value
    return names, values

def _label_index(path: Path, names: Optional[List[str]], width: int, label_column: LabelColumn) -> int:
    if isinstance(label_column, str):
        if label_column.lstrip('-').isdigit():
            label_column = int(label_column)
        elif names is None or label_column not in names:
            raise DataFormatError(path, f"no column named {label_column!r}")
        else:
            return names.index(label_column)
    index = int(label_column)
    if not -width <= index < width:
        raise DataFormatError(path, f"label column {index} out of range for {width} columns")
    return index % width

def read_samples(path: PathLike,
                 label_column: LabelColumn = -1,
                 header: Optional[bool] = None,
                 num_classes: Optional[int] = None) -> Tuple[np.ndarray, Optional[np.ndarray], int]:
    """
    Read features (p x n) and, when label_column is not None, integer labels.

    Returns:
        (features, labels or None, number of classes or 0)
    """
    path = Path(path)
    names, values = read_csv_matrix(path, header)
    if values.shape[0] == 0:
        raise DataFormatError(path, "no samples")
    if label_column is None:
        return values.T.copy(), None, 0

    col = _label_index(path, names, values.shape[1], label_column)
    raw = values[:, col]
    first_row = 2 if names else 1
    J = num_classes or int(np.max(raw))
    for i, value in enumerate(raw):
        if value != np.round(value) or not 1 <= value <= J:
            raise DataFormatError(path, f"label {value:g} is not an integer in 1..{J}",
                                  row=first_row + i, column=col + 1)
    features = np.delete(values, col, axis=1).T.copy()
    return features, raw.astype(int), max(J, 2)

def load_csv(path: PathLike,
             label_column: LabelColumn = -1,
             header: Optional[bool] = None,
             num_classes: Optional[int] = None) -> Dataset:
    """Labeled dataset from CSV; J defaults to the largest label."""
    features, labels, J = read_samples(path, label_column, header, num_classes)
    logger.debug(f"Loaded {path}: p={features.shape[0]}, n={features.shape[1]}, J={J}")
    return Dataset(features, labels, J)

def write_csv(path: PathLike, data: Dataset, header: bool = True):
    """Columns x1..xp then label; floats written with repr precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        if header:
            writer.writerow([f"x{i + 1}" for i in range(data.p)] + ["label"])
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.features[:, i]] + [int(data.labels[i])])

def save_mask(path: PathLike, mask: np.ndarray):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        csv.writer(f).writerows(np.asarray(mask, dtype=int).tolist())

def load_mask(path: PathLike) -> np.ndarray:
    _, values = read_csv_matrix(path, header=False)
    if not np.all(np.isin(values, (0, 1))):
        raise DataFormatError(path, "mask entries must be 0 or 1")
    return values.astype(int)

def save_model(path: PathLike, clf: Classifier):
    """Plain-text model; repr() keeps every float bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        f.write(f"{clf.p} {clf.J}\n")
        for row in clf.W:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")
        f.write(" ".join(repr(float(v)) for v in clf.b) + "\n")
    logger.debug(f"Model saved: {path}")

def _parse_floats(path: Path, line: str, lineno: int, expected: int) -> List[float]:
    fields = line.split()
    if len(fields) != expected:
        raise DataFormatError(path, f"expected {expected} values, found {len(fields)}", row=lineno)
    values = []
    for j, cell in enumerate(fields):
        try:
            value = float(cell)
        except ValueError:
            raise DataFormatError(path, f"cannot parse {cell!r} as a number",
                                  row=lineno, column=j + 1) from None
        if not np.isfinite(value):
            raise DataFormatError(path, f"non-finite value {cell!r}", row=lineno, column=j + 1)
        values.append(value)
    return values

def load_model(path: PathLike) -> Classifier:
    path = Path(path)
    with open(path, 'r') as f:
        lines = [line for line in f.read().splitlines() if line.strip()]
    if not lines:
        raise DataFormatError(path, "model file is empty")

    dims = lines[0].split()
    if len(dims) != 2 or not all(d.isdigit() for d in dims):
        raise DataFormatError(path, "first line must be 'p J'", row=1)
    p, J = int(dims[0]), int(dims[1])
    if len(lines) != p + 2:
        raise DataFormatError(path, f"expected {p + 2} lines for p={p}, found {len(lines)}")

    W = np.array([_parse_floats(path, lines[i + 1], i + 2, J) for i in range(p)]).reshape(p, J)
    b = np.array(_parse_floats(path, lines[p + 1], p + 2, J))
    return Classifier(W, b)
