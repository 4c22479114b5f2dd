"""JSON run configuration, named recipes and validation.

A config file may name a ``recipe``; its fields are then merged over that
recipe's defaults (nested dicts merge key by key).
"""

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .nig import ActivationKind

EXPERIMENTS = ("cubic", "circle", "tabular", "gradcheck", "hua-demo", "sensitivity")
VARIANTS = ("ERN", "NLL-ERN", "UR-ERN")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_BASE = {
    "model": {"hidden_widths": [100, 100, 100], "hidden_activation": "relu", "seed": 0},
    "loss": {
        "variant": "UR-ERN",
        "lambda": 0.01,
        "lambda1": 0.1,
        "activation": "softplus",
        "detach_error_in_U": True,
        "r": 1.0,
    },
    "train": {"epochs": 500, "batch_size": 128, "lr": 5e-3, "seed": 0, "hua_init": False, "hua_bias": -20.0},
    "data": {"n_train": 1000, "noise_std": 3.0, "seed": 0, "standardize": False},
    "eval": {"epsilon": 1e-3},
    "output_dir": "runs",
}

RECIPES = {
    "cubic": {"experiment": "cubic"},
    "cubic-hua": {"experiment": "cubic", "train": {"hua_init": True}},
    "circle": {
        "experiment": "circle",
        "model": {"hidden_widths": [32, 32]},
        "loss": {"variant": "UR-ERN", "lambda": 0.0, "lambda1": 0.1},
        "data": {"n": 300, "noise_std": 0.1, "t_mode": "density", "n_test": 200},
    },
    "circle-hua": {
        "experiment": "circle",
        "model": {"hidden_widths": [32, 32]},
        "loss": {"variant": "UR-ERN", "lambda": 0.0, "lambda1": 0.1},
        "train": {"hua_init": True},
        "data": {"n": 300, "noise_std": 0.1, "t_mode": "density", "n_test": 200},
    },
    "tabular": {
        "experiment": "tabular",
        "model": {"hidden_widths": [50]},
        "train": {"epochs": 100},
        "data": {"train_frac": 0.9, "repeats": 1},
    },
    "gradcheck": {"experiment": "gradcheck", "gradcheck": {"probes": 1000, "multi_probes": 200, "seed": 0}},
    "hua-demo": {"experiment": "hua-demo", "train": {"hua_init": True}},
    "sensitivity": {
        "experiment": "sensitivity",
        "loss": {"variant": "UR-ERN"},
        "sensitivity": {"lambda1_grid": [1e-4, 1e-2, 1.0]},
    },
}


def merge(base, override):
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def expand(doc):
    """Merge a raw config document over the base defaults and its recipe."""
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    recipe = doc.get("recipe")
    out = copy.deepcopy(_BASE)
    if recipe is not None:
        if recipe not in RECIPES:
            raise ConfigError("unknown recipe %r (known: %s)" % (recipe, ", ".join(sorted(RECIPES))))
        out = merge(out, RECIPES[recipe])
    out = merge(out, doc)
    if "experiment" not in out:
        raise ConfigError("config needs 'experiment' or 'recipe'")
    return out


def _num(section, key, lo=None, hi=None, integer=False, strict_lo=False):
    val = section.get(key)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError("%s must be a number, got %r" % (key, val))
    if integer and int(val) != val:
        raise ConfigError("%s must be an integer, got %r" % (key, val))
    if not math.isfinite(val):
        raise ConfigError("%s must be finite" % key)
    if lo is not None and (val < lo or (strict_lo and val == lo)):
        raise ConfigError("%s must be %s %g, got %r" % (key, ">" if strict_lo else ">=", lo, val))
    if hi is not None and val > hi:
        raise ConfigError("%s must be <= %g, got %r" % (key, hi, val))
    return int(val) if integer else float(val)


def check_variant(variant, lam, lam1, multivariate=False):
    if variant not in VARIANTS:
        raise ConfigError("loss.variant must be one of %s, got %r" % (", ".join(VARIANTS), variant))
    if variant == "ERN" and not (lam > 0 and lam1 == 0):
        raise ConfigError("variant ERN needs lambda > 0 and lambda1 = 0")
    if variant == "NLL-ERN" and not (lam == 0 and lam1 == 0):
        raise ConfigError("variant NLL-ERN needs lambda = lambda1 = 0")
    if variant == "UR-ERN" and not lam1 > 0:
        raise ConfigError("variant UR-ERN needs lambda1 > 0")
    if multivariate and lam != 0:
        raise ConfigError("the multivariate loss has no evidence regularizer; set lambda = 0")


@dataclass(frozen=True)
class RunConfig:
    doc: dict
    base_dir: Path = Path(".")

    @property
    def experiment(self):
        return self.doc["experiment"]

    @property
    def name(self):
        return self.doc.get("name") or self.doc.get("recipe") or self.experiment

    def section(self, key):
        return self.doc.get(key, {})

    def resolve(self, path):
        path = Path(path)
        return path if path.is_absolute() else self.base_dir / path

    def with_seed(self, seed):
        doc = copy.deepcopy(self.doc)
        for key in ("model", "train", "data"):
            doc.setdefault(key, {})["seed"] = int(seed)
        if "gradcheck" in doc:
            doc["gradcheck"]["seed"] = int(seed)
        return validate(RunConfig(doc, self.base_dir))


def variant_defaults(doc, variant):
    """Copy of ``doc`` switched to ``variant`` with its canonical weights."""
    doc = copy.deepcopy(doc)
    loss = doc["loss"]
    loss["variant"] = variant
    lam = 0.0 if doc["experiment"] == "circle" else 0.01
    loss["lambda"] = {"ERN": lam, "NLL-ERN": 0.0, "UR-ERN": lam}[variant]
    loss["lambda1"] = {"ERN": 0.0, "NLL-ERN": 0.0, "UR-ERN": loss.get("lambda1") or 0.1}[variant]
    return doc


def validate(cfg):
    doc = cfg.doc
    if doc["experiment"] not in EXPERIMENTS:
        raise ConfigError("experiment must be one of %s, got %r" % (", ".join(EXPERIMENTS), doc["experiment"]))
    model, loss, train = doc["model"], doc["loss"], doc["train"]
    widths = model.get("hidden_widths")
    if not isinstance(widths, list) or not all(isinstance(w, int) and w >= 1 for w in widths):
        raise ConfigError("model.hidden_widths must be a list of positive integers")
    if model.get("hidden_activation") not in ("relu", "tanh"):
        raise ConfigError("model.hidden_activation must be 'relu' or 'tanh'")
    _num(model, "seed", 0, 2 ** 64 - 1, integer=True)

    lam = _num(loss, "lambda", 0)
    lam1 = _num(loss, "lambda1", 0)
    _num(loss, "r", 0, strict_lo=True)
    try:
        kind = ActivationKind.parse(loss.get("activation", "softplus"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not isinstance(loss.get("detach_error_in_U", True), bool):
        raise ConfigError("loss.detach_error_in_U must be true or false")
    multi = doc["experiment"] == "circle"
    if doc["experiment"] not in ("gradcheck", "hua-demo", "sensitivity"):
        check_variant(loss.get("variant"), lam, lam1, multivariate=multi)
    if kind is ActivationKind.RELU and (lam1 > 0 or doc["experiment"] == "sensitivity"):
        raise ConfigError("L^U incompatible with ReLU alpha-head")

    _num(train, "epochs", 0, integer=True)
    _num(train, "batch_size", 1, integer=True)
    _num(train, "lr", 0, strict_lo=True)
    _num(train, "seed", 0, 2 ** 64 - 1, integer=True)
    _num(train, "hua_bias", None)
    if not isinstance(train.get("hua_init"), bool):
        raise ConfigError("train.hua_init must be true or false")

    data = doc["data"]
    if doc["experiment"] == "tabular":
        if "csv" not in data or "target" not in data:
            raise ConfigError("tabular experiments need data.csv and data.target")
        _num(data, "train_frac", 0, 1, strict_lo=True)
        _num(data, "repeats", 1, integer=True)
    if doc["experiment"] == "sensitivity":
        grid = doc.get("sensitivity", {}).get("lambda1_grid")
        if not isinstance(grid, list) or not grid:
            raise ConfigError("sensitivity.lambda1_grid must be a non-empty list")
        for val in grid:
            if isinstance(val, bool) or not isinstance(val, (int, float)) or not val > 0:
                raise ConfigError("sensitivity.lambda1_grid entries must be > 0, got %r" % (val,))
    _num(doc["eval"], "epsilon", 0, strict_lo=True)
    return cfg


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError("config file not found: %s" % path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON: %s" % (path, exc)) from None
    return validate(RunConfig(expand(doc), path.resolve().parent))


def from_dict(doc, base_dir="."):
    return validate(RunConfig(expand(doc), Path(base_dir)))
