"""Reading numeric CSV datasets, group configurations and solution files.

Group configuration (JSON)::

    {
      "response": "target",
      "groups": [
        {"name": "demographics", "columns": ["age", "sex"]},
        {"name": "serum", "columns": ["s1", "s2", "s3"], "k": 2}
      ]
    }

``k`` is optional per group; when every group has one they form the default
k-max setting for that dataset.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DimensionError
from .model import GroupedDesign, GroupedVector


@dataclass(frozen=True)
class GroupConfig:
    response: str
    names: tuple
    columns: tuple  # tuple of tuples of column names, one per group
    k: tuple = None

    @property
    def sizes(self):
        return tuple(len(c) for c in self.columns)


def load_group_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return parse_group_config(raw, source=str(path))


def parse_group_config(raw, source="<config>"):
    if not isinstance(raw, dict) or "response" not in raw or "groups" not in raw:
        raise DataFormatError(f"{source}: expected an object with 'response' and 'groups'")
    groups = raw["groups"]
    if not isinstance(groups, list) or not groups:
        raise DataFormatError(f"{source}: 'groups' must be a non-empty list")
    names, columns, ks = [], [], []
    seen = set()
    for i, g in enumerate(groups):
        if not isinstance(g, dict) or not g.get("columns"):
            raise DataFormatError(f"{source}: group {i} needs a non-empty 'columns' list")
        cols = tuple(str(c) for c in g["columns"])
        dup = seen.intersection(cols)
        if dup:
            raise DataFormatError(f"{source}: column(s) {sorted(dup)} listed in more than one group")
        seen.update(cols)
        names.append(str(g.get("name", f"group{i}")))
        columns.append(cols)
        ks.append(g.get("k"))
    if raw["response"] in seen:
        raise DataFormatError(f"{source}: response column {raw['response']!r} also used as a feature")
    k = None
    if all(v is not None for v in ks):
        k = tuple(int(v) for v in ks)
        for i, (v, cols) in enumerate(zip(k, columns)):
            if not 0 <= v <= len(cols):
                raise DataFormatError(f"{source}: group {i} has k={v} outside [0, {len(cols)}]")
    return GroupConfig(str(raw["response"]), tuple(names), tuple(columns), k)


def read_numeric_csv(path):
    """Return ``(header, rows)`` of a comma-separated file with a header row.

    Every field must parse as a finite float; errors name the line number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            raise DataFormatError(f"{path}: duplicate column names in header")
        rows = []
        for row in reader:
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: line {reader.line_num} has {len(row)} fields, expected {len(header)}"
                )
            try:
                values = [float(f) for f in row]
            except ValueError:
                raise DataFormatError(f"{path}: line {reader.line_num} has a non-numeric field") from None
            if not all(np.isfinite(values)):
                raise DataFormatError(f"{path}: line {reader.line_num} has a missing or non-finite value")
            rows.append(values)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return header, np.array(rows)


@dataclass(frozen=True)
class Dataset:
    design: GroupedDesign
    config: GroupConfig
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    response_mean: float

    @property
    def column_names(self):
        return [c for cols in self.config.columns for c in cols]


def load_dataset(csv_path, config, standardize=True, center_response=True):
    """Build a grouped design from a CSV file and a :class:`GroupConfig` (or its path).

    Features are standardized to zero mean and unit variance and the
    response centred unless switched off. Constant columns are centred only.
    """
    if not isinstance(config, GroupConfig):
        config = load_group_config(config)
    header, data = read_numeric_csv(csv_path)
    index = {name: i for i, name in enumerate(header)}
    missing = [c for cols in config.columns for c in cols if c not in index]
    if config.response not in index:
        missing.append(config.response)
    if missing:
        raise DataFormatError(f"{csv_path}: columns {missing} not found in header")
    cols = [index[c] for group in config.columns for c in group]
    X = data[:, cols]
    y = data[:, index[config.response]]
    mean = X.mean(axis=0) if standardize else np.zeros(X.shape[1])
    scale = X.std(axis=0) if standardize else np.ones(X.shape[1])
    scale = np.where(scale > 0, scale, 1.0)
    X = (X - mean) / scale
    y_mean = float(y.mean()) if center_response else 0.0
    design = GroupedDesign.from_matrix(X, config.sizes, y - y_mean)
    return Dataset(design, config, mean, scale, y_mean)


def write_solution(path, x, config):
    """Write coefficients as ``group,column,value`` rows."""
    flat = x.flat if isinstance(x, GroupedVector) else np.asarray(x)
    names = [(g, c) for g, cols in zip(config.names, config.columns) for c in cols]
    if len(names) != flat.size:
        raise DimensionError(f"{flat.size} coefficients for {len(names)} configured columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "column", "value"])
        for (g, c), v in zip(names, flat):
            w.writerow([g, c, repr(float(v))])


def read_solution(path, config):
    """Read a solution file back into a :class:`GroupedVector` ordered like ``config``."""
    values = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"group", "column", "value"} <= set(reader.fieldnames):
            raise DataFormatError(f"{path}: expected columns group,column,value")
        for row in reader:
            try:
                values[(row["group"], row["column"])] = float(row["value"])
            except (TypeError, ValueError):
                raise DataFormatError(f"{path}: line {reader.line_num} has a bad value") from None
    expected = [(g, c) for g, cols in zip(config.names, config.columns) for c in cols]
    if set(values) != set(expected):
        raise DimensionError(f"{path}: solution entries do not match the group configuration")
    return GroupedVector(np.array([values[key] for key in expected]), config.sizes)
