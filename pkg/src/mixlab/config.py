"""Flat ``key = value`` experiment configuration.

Values are parsed by key type; vectors are comma separated, matrix rows are
separated by ``;`` and lists of matrices by ``|``.  Unknown keys are errors.
"""

from dataclasses import dataclass
from typing import Any, Callable, Dict

import numpy as np

from .errors import InvalidArgument, IoError


def _vector(text):
    return np.array([float(v) for v in text.split(",")])


def _matrix(text):
    rows = [_vector(r) for r in text.split(";")]
    if len({r.size for r in rows}) != 1:
        raise ValueError("ragged matrix")
    return np.stack(rows)


def _matrices(text):
    return [_matrix(m) for m in text.split("|")]


def _ints(text):
    text = text.strip()
    return tuple(int(v) for v in text.split(",")) if text else ()


@dataclass(frozen=True)
class Key:
    parse: Callable[[str], Any]
    default: str
    help: str


COMMON = {
    "seed": Key(int, "0", "64-bit seed for every random stream"),
    "out": Key(str, ".", "output directory"),
}

KEYS: Dict[str, Dict[str, Key]] = {
    "gen-data": {
        "n": Key(int, "5000", "number of samples"),
        "weights": Key(_vector, "0.25,0.40,0.35", "mixture weights"),
        "means": Key(_matrix, "0,2;3,1;6,3", "component means, one row each"),
        "covs": Key(_matrices, "0.5,0;0,0.5|0.5,0;0,0.5|0.5,0;0,0.5", "component covariances"),
    },
    "fit-em": {
        "data": Key(str, "data.csv", "input CSV with x,y[,label] columns"),
        "k_hat": Key(int, "3", "assumed number of components (1-16)"),
        "max_passes": Key(int, "50", "maximum EM passes"),
        "loglik_tol": Key(float, "1e-3", "absolute log-likelihood change that stops the fit"),
        "ellipse_points": Key(int, "64", "vertices per 1-sigma ellipse in the SVG"),
    },
    "fit-vb": {
        "precision": Key(_matrix, "2,1;1,2", "posterior precision of the quadratic model"),
        "linear": Key(_vector, "1,0", "linear coefficient of the quadratic model"),
        "max_sweeps": Key(int, "100", "maximum coordinate-ascent sweeps"),
        "tol": Key(float, "1e-10", "largest factor change that counts as converged"),
    },
    "train-vae": {
        "data": Key(str, "data.csv", "input CSV; a label column is ignored"),
        "n_z": Key(int, "2", "latent dimension"),
        "hidden": Key(_ints, "16", "hidden layer widths (decoder mirrors encoder)"),
        "L": Key(int, "1", "noise samples per point during training"),
        "batch_size": Key(int, "100", "minibatch size M"),
        "learning_rate": Key(float, "3e-4", "SGD step size"),
        "epochs": Key(int, "200", "training epochs"),
        "estimator": Key(str, "B", "bound estimator to ascend: A or B"),
        "decoder_logvar": Key(str, "network", "decoder variance: network or shared"),
        "eval_samples": Key(int, "100", "noise samples per point for the final bound"),
    },
    "report": {
        "estimated": Key(str, "params.json", "fitted mixture written by fit-em"),
        "truth": Key(str, "truth.json", "true mixture written by gen-data"),
    },
}


def read_config_file(path):
    """Raw ``key -> text`` pairs; ``#`` starts a comment."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror}") from None
    raw = {}
    for number, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidArgument(f"{path}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    return raw


def resolve(command, raw):
    """Parse ``raw`` text values for ``command``, filling defaults."""
    keys = {**COMMON, **KEYS[command]}
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise InvalidArgument(f"unknown config keys for {command}: {', '.join(unknown)}")
    out = {}
    for name, key in keys.items():
        text = raw.get(name, key.default)
        try:
            out[name] = key.parse(text)
        except ValueError:
            raise InvalidArgument(f"bad value for {name}: {text!r}") from None
    return out


def describe(command):
    keys = {**COMMON, **KEYS[command]}
    width = max(len(k) for k in keys)
    return "\n".join(f"  {k:<{width}}  {v.help} (default: {v.default})" for k, v in keys.items())
