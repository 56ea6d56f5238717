"""CSV and JSON file formats used by the command-line tools.

CSV files are UTF-8 with line-feed endings and reals written with 17
significant digits so 64-bit values round-trip exactly.
"""

import csv
import json

import numpy as np

from .errors import InvalidArgument, IoError
from .mixture import MixtureParams


def fmt(value):
    return format(float(value), ".17g")


def write_rows(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


def write_data_csv(path, X, labels):
    """Columns ``x,y,label`` with 1-based component labels."""
    write_rows(path, ["x", "y", "label"], ([fmt(a), fmt(b), int(z) + 1] for (a, b), z in zip(X, labels)))


def read_data_csv(path):
    """Return ``(X, labels)``; labels are 0-based, or None without a label column."""
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read data file {path}: {exc.strerror}") from None
    if not rows:
        raise InvalidArgument(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    value_cols = [i for i, h in enumerate(header) if h != "label"]
    label_col = header.index("label") if "label" in header else None
    try:
        X = np.array([[float(r[i]) for i in value_cols] for r in rows[1:]])
        labels = None if label_col is None else np.array([int(r[label_col]) - 1 for r in rows[1:]])
    except (ValueError, IndexError):
        raise InvalidArgument(f"{path} has malformed rows") from None
    if X.size == 0:
        raise InvalidArgument(f"{path} has no data rows")
    return X, labels


def mixture_to_dict(theta):
    return {
        "weights": [float(w) for w in theta.weights],
        "means": [[float(v) for v in c.mean] for c in theta.components],
        "covs": [[[float(v) for v in row] for row in c.cov] for c in theta.components],
    }


def write_mixture_json(path, theta):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(mixture_to_dict(theta), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror}") from None


def read_mixture_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path} is not valid JSON: {exc}") from None
    return MixtureParams.from_arrays(np.array(data["weights"]), np.array(data["means"]), np.array(data["covs"]))
