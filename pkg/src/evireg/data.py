"""Synthetic datasets and the tabular CSV split protocol."""

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import PCG32


@dataclass
class Dataset:
    inputs: np.ndarray  # (N, d)
    targets: np.ndarray  # (N, k)
    metadata: dict = field(default_factory=dict)
    noiseless: np.ndarray = None  # (N, k) ground truth where known

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.targets = np.asarray(self.targets, dtype=float)
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise ValueError("inputs and targets disagree on the number of rows")
        if self.noiseless is not None:
            self.noiseless = np.asarray(self.noiseless, dtype=float).reshape(self.targets.shape)

    def __len__(self):
        return self.inputs.shape[0]


def cubic_test_grid(points_per_side=200):
    """Even grid over [-6, -4) U (4, 6]."""
    left = np.linspace(-6.0, -4.0, points_per_side, endpoint=False)
    right = np.linspace(4.0, 6.0, points_per_side + 1)[1:]
    return np.concatenate([left, right])


def gen_cubic(n_train=1000, seed=0, noise_std=3.0, points_per_side=200):
    """y = x^3 + eps, trained on [-4, 4] and tested on [-6,-4) U (4, 6].

    ``noise_std`` is a standard deviation.
    """
    if n_train < 1:
        raise ValueError("n_train must be >= 1")
    rng = PCG32(seed)
    x = rng.uniform_array(n_train, -4.0, 4.0)
    clean = x ** 3
    y = clean + rng.normal_array(n_train, 0.0, noise_std)
    meta = {"name": "cubic", "seed": int(seed), "noise_std": noise_std}
    train = Dataset(x[:, None], y[:, None], dict(meta, split="train"), clean[:, None])
    xt = cubic_test_grid(points_per_side)
    clean_t = xt ** 3
    yt = clean_t + rng.normal_array(xt.size, 0.0, noise_std)
    test = Dataset(xt[:, None], yt[:, None], dict(meta, split="test"), clean_t[:, None])
    return train, test


def gen_cubic_in_distribution(n=400, seed=1, noise_std=3.0):
    """Held-out noisy draws on the training support [-4, 4]."""
    rng = PCG32(seed)
    x = np.linspace(-4.0, 4.0, n)
    clean = x ** 3
    y = clean + rng.normal_array(n, 0.0, noise_std)
    meta = {"name": "cubic", "seed": int(seed), "noise_std": noise_std, "split": "valid"}
    return Dataset(x[:, None], y[:, None], meta, clean[:, None])


def _triangular_valley_inverse_cdf(u):
    """Inverse CDF of p(t) proportional to |1 - t/pi| on [0, 2 pi]."""
    if u <= 0.5:
        return math.pi * (1.0 - math.sqrt(max(0.0, 1.0 - 2.0 * u)))
    return math.pi * (1.0 + math.sqrt(max(0.0, 2.0 * u - 1.0)))


def gen_circle(n=300, seed=0, noise_std=0.1, t_mode="density"):
    """Noisy unit circle: target ((1+eps) cos t, (1+eps) sin t) for input t.

    ``t_mode="density"`` samples t on [0, 2 pi] with density |1 - t/pi|
    (sparse around pi); ``t_mode="literal"`` uses t = |1 - zeta/pi| for
    uniform zeta in [0, 2 pi].
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if t_mode not in ("density", "literal"):
        raise ValueError("t_mode must be 'density' or 'literal'")
    rng = PCG32(seed)
    t = np.empty(n)
    radius = np.empty(n)
    for i in range(n):
        zeta = 2.0 * math.pi * rng.uniform()
        if t_mode == "density":
            t[i] = _triangular_valley_inverse_cdf(zeta / (2.0 * math.pi))
        else:
            t[i] = abs(1.0 - zeta / math.pi)
        radius[i] = 1.0 + noise_std * rng.normal()
    targets = np.stack([radius * np.cos(t), radius * np.sin(t)], axis=1)
    clean = np.stack([np.cos(t), np.sin(t)], axis=1)
    meta = {"name": "circle", "seed": int(seed), "noise_std": noise_std, "t_mode": t_mode}
    return Dataset(t[:, None], targets, meta, clean)


# --- tabular protocol -----------------------------------------------------------


class CSVFormatError(ValueError):
    pass


def _read_numeric_csv(path):
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise CSVFormatError("%s is empty" % path) from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise CSVFormatError("row %d has %d cells, header has %d" % (lineno, len(row), len(header)))
            vals = []
            for col, cell in zip(header, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise CSVFormatError(
                        "non-numeric cell %r at row %d, column %r" % (cell, lineno, col)
                    ) from None
            rows.append(vals)
    if not rows:
        raise CSVFormatError("%s has no data rows" % path)
    return header, np.array(rows)


def _standardize(train, test):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    return (train - mean) / std, (test - mean) / std, mean, std


def load_csv(path, target_cols, train_frac=0.9, repeats=1, seed=0):
    """Random train/test splits with z-scoring fitted on the training rows.

    Returns a list of ``(train, test)`` Dataset pairs, one per repeat. Stats
    for de-standardizing live in ``metadata``.
    """
    header, data = _read_numeric_csv(path)
    if isinstance(target_cols, str):
        target_cols = [target_cols]
    missing = [c for c in target_cols if c not in header]
    if missing:
        raise CSVFormatError("missing target column(s): %s" % ", ".join(missing))
    t_idx = [header.index(c) for c in target_cols]
    f_idx = [i for i in range(len(header)) if i not in t_idx]
    n = data.shape[0]
    n_train = int(round(train_frac * n))
    if not 1 <= n_train < n:
        raise ValueError("split leaves an empty train or test set")
    splits = []
    for rep in range(repeats):
        rng = PCG32((int(seed) + rep) % 2 ** 64)
        perm = rng.permutation(n)
        tr, te = perm[:n_train], perm[n_train:]
        X_tr, X_te = data[np.ix_(tr, f_idx)], data[np.ix_(te, f_idx)]
        Y_tr, Y_te = data[np.ix_(tr, t_idx)], data[np.ix_(te, t_idx)]
        keep = X_tr.std(axis=0) > 0
        for j in np.flatnonzero(~keep):
            warnings.warn("dropping constant feature column %r" % header[f_idx[j]])
        if np.any(Y_tr.std(axis=0) == 0):
            raise ValueError("target column has zero variance on the training split")
        feat_names = [header[f_idx[j]] for j in np.flatnonzero(keep)]
        X_tr, X_te = X_tr[:, keep], X_te[:, keep]
        X_tr, X_te, x_mean, x_std = _standardize(X_tr, X_te)
        Y_tr, Y_te, y_mean, y_std = _standardize(Y_tr, Y_te)
        meta = {
            "name": Path(path).stem,
            "seed": int(seed) + rep,
            "repeat": rep,
            "features": feat_names,
            "targets": list(target_cols),
            "x_mean": x_mean.tolist(),
            "x_std": x_std.tolist(),
            "y_mean": y_mean.tolist(),
            "y_std": y_std.tolist(),
            "train_rows": tr.tolist(),
            "test_rows": te.tolist(),
        }
        splits.append((Dataset(X_tr, Y_tr, dict(meta, split="train")), Dataset(X_te, Y_te, dict(meta, split="test"))))
    return splits


def save_dataset(ds, path):
    """CSV with x*/y* columns plus a ``.json`` metadata sidecar."""
    path = Path(path)
    d, k = ds.inputs.shape[1], ds.targets.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x%d" % i for i in range(d)] + ["y%d" % i for i in range(k)])
        for xi, yi in zip(ds.inputs, ds.targets):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(v)) for v in yi])
    path.with_suffix(".json").write_text(json.dumps(ds.metadata, indent=1))
    return path


def load_dataset(path):
    path = Path(path)
    header, data = _read_numeric_csv(path)
    xi = [i for i, h in enumerate(header) if h.startswith("x")]
    yi = [i for i, h in enumerate(header) if h.startswith("y")]
    meta_path = path.with_suffix(".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Dataset(data[:, xi], data[:, yi], meta)
