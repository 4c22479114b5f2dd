"""Experiment runners behind the command line: cubic, circle, tabular, sweeps.

Each runner trains from a validated config, evaluates, and (given a run
directory) writes the config snapshot, checkpoint, per-epoch log, metrics and
plot artifacts. Evaluation is a separate function so a saved checkpoint
reproduces its metrics exactly.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import net
from .config import RunConfig, validate, variant_defaults
from .data import gen_circle, gen_cubic, gen_cubic_in_distribution, load_csv
from .losses import LossWeights
from .metrics import (
    calibration,
    cutoff_curve,
    entropy_histogram,
    head_params,
    hua_escape_report,
    ood_entropy,
    predictive_nll,
    rmse,
)
from .multivariate import n_outputs, predict_multi, transform_multi
from .nig import ActivationKind, NIGParams, predict
from .svg import Chart
from .training import TrainConfig, TrainingDiverged, multivariate_objective, train, univariate_objective

log = logging.getLogger(__name__)

ENTROPY_BINS = np.linspace(-4.0, 12.0, 41)


@dataclass
class RunResult:
    metrics: dict
    weights: object = None
    state: object = None
    history: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)


# --- small I/O helpers ---------------------------------------------------------


def plain(obj):
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        val = float(obj)
        return val if math.isfinite(val) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def saved_config(cfg):
    """Config document with file references made absolute, so it still works from the run directory."""
    doc = json.loads(json.dumps(cfg.doc))
    if "csv" in doc.get("data", {}):
        doc["data"]["csv"] = str(cfg.resolve(doc["data"]["csv"]).resolve())
    doc.get("eval", {}).pop("checkpoint", None)
    return doc


def dump_json(obj, path):
    Path(path).write_text(json.dumps(plain(obj), indent=1, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --- shared pieces ---------------------------------------------------------------


def loss_weights(cfg):
    loss = cfg.doc["loss"]
    return LossWeights(float(loss["lambda"]), float(loss["lambda1"]), bool(loss["detach_error_in_U"]))


def activation(cfg):
    return ActivationKind.parse(cfg.doc["loss"]["activation"])


def train_config(cfg):
    t = cfg.doc["train"]
    return TrainConfig(int(t["epochs"]), int(t["batch_size"]), float(t["lr"]), int(t["seed"]),
                       bool(t["hua_init"]), float(t["hua_bias"]))


def build_weights(cfg, input_dim, output_dim, hua_channel):
    m = cfg.doc["model"]
    weights = net.init(net.MLPConfig(input_dim, tuple(m["hidden_widths"]), output_dim,
                                     m["hidden_activation"], int(m["seed"])))
    t = cfg.doc["train"]
    if t["hua_init"]:
        weights = net.hua_init(weights, hua_channel, float(t["hua_bias"]))
    return weights


class Scaler:
    """Affine z-scoring of inputs and targets; identity when disabled."""

    def __init__(self, x=None, y=None):
        self.x_mean, self.x_std = (0.0, 1.0) if x is None else (float(x.mean()), float(x.std()))
        self.y_mean, self.y_std = (0.0, 1.0) if y is None else (float(y.mean()), float(y.std()))

    def x(self, inputs):
        return (inputs - self.x_mean) / self.x_std

    def y(self, targets):
        return (targets - self.y_mean) / self.y_std

    def params(self, p):
        """NIG in original target units: gamma shifts and scales, beta scales by std^2."""
        return NIGParams(p.gamma * self.y_std + self.y_mean, p.v, p.alpha, p.beta * self.y_std ** 2)


def _epistemic_or_none(p):
    alpha = np.asarray(p.alpha)
    if np.any(alpha <= 1.0):
        return None
    return np.asarray(predict(p).epistemic)


# --- cubic -----------------------------------------------------------------------


def cubic_datasets(cfg):
    d = cfg.doc["data"]
    seed = int(d["seed"])
    train_ds, test_ds = gen_cubic(int(d["n_train"]), seed, float(d["noise_std"]))
    valid = gen_cubic_in_distribution(400, (seed + 1) % 2 ** 64, float(d["noise_std"]))
    scaler = Scaler(train_ds.inputs, train_ds.targets) if d.get("standardize") else Scaler()
    return train_ds, test_ds, valid, scaler


def _cubic_epoch_logger(cfg, inputs, kind, rows):
    eps = float(cfg.doc["eval"]["epsilon"])

    def callback(epoch, weights, loss):
        rep = hua_escape_report(weights, inputs, eps, kind)
        rows.append((epoch, loss, rep["fraction_in_hua"], rep["mean_alpha"]))
        if epoch % 50 == 0 or epoch == cfg.doc["train"]["epochs"] - 1:
            log.info("epoch %d loss %.4f in-HUA %.3f", epoch, loss, rep["fraction_in_hua"])

    return callback


def train_cubic(cfg):
    train_ds, _, _, scaler = cubic_datasets(cfg)
    kind = activation(cfg)
    weights = build_weights(cfg, 1, 4, 2)
    x = scaler.x(train_ds.inputs)
    y = scaler.y(train_ds.targets[:, 0])
    rows = []
    weights, state, history = train(
        weights, x, y, univariate_objective(loss_weights(cfg), kind), train_config(cfg),
        callback=_cubic_epoch_logger(cfg, x, kind, rows),
    )
    return weights, state, history, rows


def evaluate_cubic(cfg, weights):
    train_ds, test_ds, valid, scaler = cubic_datasets(cfg)
    kind = activation(cfg)
    eps = float(cfg.doc["eval"]["epsilon"])
    rep = hua_escape_report(weights, scaler.x(train_ds.inputs), eps, kind)
    p_train = scaler.params(head_params(weights, scaler.x(train_ds.inputs), kind))
    p_in = scaler.params(head_params(weights, scaler.x(valid.inputs), kind))
    p_out = scaler.params(head_params(weights, scaler.x(test_ds.inputs), kind))
    y_in = valid.targets[:, 0]
    metrics = {
        "experiment": "cubic",
        "variant": cfg.doc["loss"]["variant"],
        "fraction_in_hua": rep["fraction_in_hua"],
        "mean_alpha": rep["mean_alpha"],
        "min_alpha": rep["min_alpha"],
        "rmse_train": rmse(p_train.gamma, train_ds.targets[:, 0]),
        "rmse_in_distribution": rmse(p_in.gamma, valid.noiseless[:, 0]),
        "rmse_ood": rmse(p_out.gamma, test_ds.noiseless[:, 0]),
        "nll_in_distribution": predictive_nll(p_in, y_in),
    }
    cal = calibration(p_in, y_in)
    metrics["calibration_error"] = cal.calibration_error
    tables = {
        "calibration": (["level", "observed"], list(zip(cal.expected_levels, cal.observed_frequencies))),
    }
    epi_in, epi_out = _epistemic_or_none(p_in), _epistemic_or_none(p_out)
    if epi_in is None or epi_out is None:
        # alpha == 1 somewhere: the variance formulas divide by zero
        metrics.update(mean_epistemic_in=None, mean_epistemic_ood=None, epistemic_ratio=None)
    else:
        metrics["mean_epistemic_in"] = float(np.mean(epi_in))
        metrics["mean_epistemic_ood"] = float(np.mean(epi_out))
        metrics["epistemic_ratio"] = float(np.mean(epi_out) / np.mean(epi_in))
        cut = cutoff_curve(p_in, y_in)
        tables["cutoff"] = (["fraction", "rmse"], list(zip(cut.retained_fractions, cut.rmse_at_fraction)))
        h_in, edges = entropy_histogram(ood_entropy(p_in), ENTROPY_BINS)
        h_out, _ = entropy_histogram(ood_entropy(p_out), ENTROPY_BINS)
        tables["entropy_hist"] = (["bin_lo", "bin_hi", "density_in", "density_ood"],
                                  list(zip(edges[:-1], edges[1:], h_in, h_out)))

    grid = np.linspace(-6.0, 6.0, 241)
    p_grid = scaler.params(head_params(weights, scaler.x(grid[:, None]), kind))
    epi_grid = _epistemic_or_none(p_grid)
    sd = np.full(grid.shape, np.nan) if epi_grid is None else np.sqrt(epi_grid)
    tables["prediction"] = (["x", "truth", "gamma", "epistemic_sd"],
                            list(zip(grid, grid ** 3, np.asarray(p_grid.gamma), sd)))
    return metrics, tables


def _cubic_plots(run_dir, tables, history_rows):
    x, truth, gamma, sd = (np.array(c) for c in zip(*tables["prediction"][1]))
    chart = Chart("prediction vs truth", "x", "y", ylim=(-250.0, 250.0))
    if np.all(np.isfinite(sd)):
        chart.band(x, gamma - 2 * sd, gamma + 2 * sd, color="#9ecae1", label="gamma +/- 2 epistemic sd")
    chart.line(x, truth, color="#333333", label="x^3", dashed=True)
    chart.line(x, gamma, color="#1f77b4", label="gamma")
    chart.save(run_dir / "prediction.svg")
    curve_plots(run_dir, tables)
    epochs, loss, frac, _ = (np.array(c) for c in zip(*history_rows)) if history_rows else ([], [], [], [])
    if len(epochs):
        Chart("training loss", "epoch", "loss").line(epochs, loss).save(run_dir / "loss.svg")
        Chart("fraction of training inputs in the HUA", "epoch", "fraction", ylim=(0.0, 1.0)) \
            .line(epochs, frac).save(run_dir / "hua_fraction.svg")


def curve_plots(run_dir, tables):
    if "calibration" in tables:
        lv, ob = zip(*tables["calibration"][1])
        Chart("calibration", "expected level", "observed frequency", xlim=(0, 1), ylim=(0, 1)) \
            .line([0, 1], [0, 1], color="#999999", dashed=True) \
            .line(lv, ob, label="model").save(run_dir / "calibration.svg")
    if "cutoff" in tables:
        f, r = zip(*tables["cutoff"][1])
        Chart("confidence cutoff", "retained fraction", "RMSE").line(f, r).save(run_dir / "cutoff.svg")
    if "entropy_hist" in tables:
        lo, hi, a, b = (np.array(c) for c in zip(*tables["entropy_hist"][1]))
        mid = (lo + hi) / 2
        Chart("predictive entropy", "entropy", "density") \
            .line(mid, a, label="in distribution").line(mid, b, label="out of distribution") \
            .save(run_dir / "entropy_hist.svg")


def run_cubic(cfg, run_dir=None):
    weights, state, history, rows = train_cubic(cfg)
    metrics, tables = evaluate_cubic(cfg, weights)
    result = RunResult(metrics, weights, state, history, tables)
    if run_dir is not None:
        _write_run(cfg, run_dir, result, ["epoch", "loss", "fraction_in_hua", "mean_alpha"], rows)
        _cubic_plots(Path(run_dir), tables, rows)
    return result


# --- circle ----------------------------------------------------------------------


def circle_datasets(cfg):
    d = cfg.doc["data"]
    train_ds = gen_circle(int(d.get("n", 300)), int(d["seed"]), float(d.get("noise_std", 0.1)),
                          d.get("t_mode", "density"))
    t_test = np.linspace(0.0, 2.0 * math.pi, int(d.get("n_test", 200)))
    return train_ds, t_test


def train_circle(cfg):
    train_ds, _ = circle_datasets(cfg)
    n = 2
    loss = cfg.doc["loss"]
    weights = build_weights(cfg, 1, n_outputs(n), n_outputs(n) - 1)
    objective = multivariate_objective(float(loss["lambda1"]), float(loss["r"]), n, bool(loss["detach_error_in_U"]))
    rows = []

    def callback(epoch, w, value):
        raw, _ = net.forward(w, train_ds.inputs)
        rows.append((epoch, value, float(np.mean(transform_multi(raw, n).nu))))
        if epoch % 50 == 0:
            log.info("epoch %d loss %.4f mean nu %.4f", epoch, value, rows[-1][2])

    weights, state, history = train(weights, train_ds.inputs, train_ds.targets, objective, train_config(cfg),
                                    callback=callback)
    return weights, state, history, rows


def evaluate_circle(cfg, weights):
    train_ds, t_test = circle_datasets(cfg)
    raw, _ = net.forward(weights, t_test[:, None])
    params = transform_multi(raw, 2)
    nu = np.asarray(params.nu)
    eps = float(cfg.doc["eval"]["epsilon"])
    clean = np.stack([np.cos(t_test), np.sin(t_test)], axis=1)
    metrics = {
        "experiment": "circle",
        "variant": cfg.doc["loss"]["variant"],
        "mean_nu": float(np.mean(nu)),
        "mean_nu_minus_lower_bound": float(np.mean(nu - 3.0)),
        "min_nu": float(np.min(nu)),
        "fraction_in_hua": float(np.mean(nu - 3.0 < eps)),
        "rmse_mean": float(np.sqrt(np.mean(np.sum((params.mu0 - clean) ** 2, axis=1)))),
    }
    if np.all(nu > 3.0):
        pred = predict_multi(params)
        exp_u = pred.experiment_uncertainty
        trace = np.trace(pred.aleatoric, axis1=-2, axis2=-1)
        metrics["experiment_uncertainty_max"] = float(np.max(np.abs(exp_u)))
        metrics["aleatoric_trace_median"] = float(np.median(trace))
        metrics["experiment_uncertainty_finite"] = bool(np.all(np.isfinite(exp_u)))
    else:
        metrics["experiment_uncertainty_max"] = None
        metrics["aleatoric_trace_median"] = None
        metrics["experiment_uncertainty_finite"] = False
    tables = {"nu_vs_t": (["t", "nu", "mu_x", "mu_y"], list(zip(t_test, nu, params.mu0[:, 0], params.mu0[:, 1])))}
    return metrics, tables


def run_circle(cfg, run_dir=None):
    weights, state, history, rows = train_circle(cfg)
    metrics, tables = evaluate_circle(cfg, weights)
    result = RunResult(metrics, weights, state, history, tables)
    if run_dir is not None:
        run_dir = Path(run_dir)
        _write_run(cfg, run_dir, result, ["epoch", "loss", "mean_nu"], rows)
        t, nu, mx, my = (np.array(c) for c in zip(*tables["nu_vs_t"][1]))
        Chart("degrees of freedom along the circle", "t", "nu").scatter(t, nu).save(run_dir / "nu_vs_t.svg")
        train_ds, _ = circle_datasets(cfg)
        Chart("circle fit", "x", "y") \
            .scatter(train_ds.targets[:, 0], train_ds.targets[:, 1], color="#bbbbbb", label="train") \
            .line(mx, my, label="mu0").save(run_dir / "circle.svg")
        if rows:
            e, lv, mn = (np.array(c) for c in zip(*rows))
            Chart("training loss", "epoch", "loss").line(e, lv).save(run_dir / "loss.svg")
    return result


# --- tabular ---------------------------------------------------------------------


def tabular_splits(cfg):
    d = cfg.doc["data"]
    return load_csv(cfg.resolve(d["csv"]), d["target"], float(d["train_frac"]), int(d["repeats"]), int(d["seed"]))


def evaluate_tabular_split(cfg, weights, train_ds, test_ds):
    kind = activation(cfg)
    y_std = float(test_ds.metadata["y_std"][0])
    p = head_params(weights, test_ds.inputs, kind)
    y = test_ds.targets[:, 0]
    return {
        "rmse": rmse(p.gamma, y) * y_std,
        "nll": predictive_nll(p, y, target_std=y_std),
        "calibration_error": calibration(p, y).calibration_error,
    }


def tabular_metrics(cfg, per_repeat):
    metrics = {"experiment": "tabular", "variant": cfg.doc["loss"]["variant"], "repeats": per_repeat}
    for key in ("rmse", "nll", "calibration_error"):
        vals = np.array([m[key] for m in per_repeat])
        metrics[key + "_mean"] = float(vals.mean())
        metrics[key + "_std"] = float(vals.std())
    return metrics


def evaluate_tabular(cfg, weights_per_repeat):
    per = []
    for rep, ((train_ds, test_ds), weights) in enumerate(zip(tabular_splits(cfg), weights_per_repeat)):
        m = evaluate_tabular_split(cfg, weights, train_ds, test_ds)
        m["repeat"] = rep
        per.append(m)
    return tabular_metrics(cfg, per), {}


def run_tabular(cfg, run_dir=None):
    kind = activation(cfg)
    rows, trained = [], []
    for rep, (train_ds, test_ds) in enumerate(tabular_splits(cfg)):
        weights = build_weights(cfg, train_ds.inputs.shape[1], 4, 2)
        weights, state, history = train(weights, train_ds.inputs, train_ds.targets[:, 0],
                                        univariate_objective(loss_weights(cfg), kind), train_config(cfg))
        rows.extend((rep, e, v) for e, v in enumerate(history))
        trained.append((weights, state, history))
    metrics, _ = evaluate_tabular(cfg, [t[0] for t in trained])
    result = RunResult(metrics, *trained[-1])
    if run_dir is not None:
        _write_run(cfg, run_dir, result, ["repeat", "epoch", "loss"], rows)
        for rep, (weights, state, _) in enumerate(trained):
            net.save_checkpoint(weights, state, Path(run_dir) / ("checkpoint_rep%d.json" % rep))
    return result


# --- sweeps ----------------------------------------------------------------------


def run_sensitivity(cfg, run_dir=None):
    grid = [float(v) for v in cfg.doc["sensitivity"]["lambda1_grid"]]
    rows = []
    for lam1 in grid:
        doc = variant_defaults(cfg.doc, "UR-ERN")
        doc["experiment"] = "cubic"
        doc["loss"]["lambda1"] = lam1
        doc["train"]["hua_init"] = False
        sub = validate(RunConfig(doc, cfg.base_dir))
        log.info("lambda1 = %g", lam1)
        try:
            weights, _, _, _ = train_cubic(sub)
        except TrainingDiverged as exc:
            log.warning("lambda1 = %g: %s", lam1, exc)
            rows.append((lam1, math.nan, math.nan, math.nan))
            continue
        m, _ = evaluate_cubic(sub, weights)
        rows.append((lam1, m["rmse_in_distribution"], m["nll_in_distribution"], m["calibration_error"]))
    cal = [r[3] for r in rows]
    mid_ok = True
    if len(rows) >= 3:
        mid = cal[len(cal) // 2]
        mid_ok = mid <= max(cal[0], cal[-1])
        if not mid_ok:
            log.warning("mid-range lambda1 calibration %.4g exceeds both extremes (%.4g, %.4g)", mid, cal[0], cal[-1])
    metrics = {
        "experiment": "sensitivity",
        "rows": [dict(zip(("lambda1", "rmse", "nll", "calibration_error"), r)) for r in rows],
        "mid_range_not_worse_than_extremes": mid_ok,
    }
    result = RunResult(metrics, tables={"sensitivity": (["lambda1", "rmse", "nll", "calibration_error"], rows)})
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        dump_json(saved_config(cfg), run_dir / "config.json")
        dump_json(metrics, run_dir / "metrics.json")
        write_csv(run_dir / "sensitivity.csv", *result.tables["sensitivity"])
        Chart("lambda1 sensitivity", "log10 lambda1", "calibration error") \
            .line(np.log10(grid), cal).scatter(np.log10(grid), cal).save(run_dir / "sensitivity.svg")
    return result


def run_hua_demo(cfg, run_dir=None):
    rows = []
    for variant in ("NLL-ERN", "ERN", "UR-ERN"):
        doc = variant_defaults(cfg.doc, variant)
        doc["experiment"] = "cubic"
        doc["train"]["hua_init"] = True
        sub = validate(RunConfig(doc, cfg.base_dir))
        sub_dir = None if run_dir is None else Path(run_dir) / variant
        log.info("variant %s", variant)
        try:
            m = run_cubic(sub, sub_dir).metrics
        except TrainingDiverged as exc:
            log.warning("variant %s: %s", variant, exc)
            rows.append((variant, None, None, None))
            continue
        rows.append((variant, m["fraction_in_hua"], m["rmse_in_distribution"], m["epistemic_ratio"]))
    metrics = {
        "experiment": "hua-demo",
        "rows": [dict(zip(("variant", "fraction_in_hua", "rmse_in_distribution", "epistemic_ratio"), r))
                 for r in rows],
    }
    result = RunResult(metrics)
    if run_dir is not None:
        dump_json(saved_config(cfg), Path(run_dir) / "config.json")
        dump_json(metrics, Path(run_dir) / "metrics.json")
        write_csv(Path(run_dir) / "hua_demo.csv", ["variant", "fraction_in_hua", "rmse", "epistemic_ratio"],
                  [tuple("" if v is None else v for v in r) for r in rows])
    return result


RUNNERS = {
    "cubic": run_cubic,
    "circle": run_circle,
    "tabular": run_tabular,
    "sensitivity": run_sensitivity,
    "hua-demo": run_hua_demo,
}


def evaluate(cfg, weights):
    """Metrics for a trained model under ``cfg``; tabular takes one model per repeat."""
    if cfg.experiment == "cubic":
        return evaluate_cubic(cfg, weights)
    if cfg.experiment == "circle":
        return evaluate_circle(cfg, weights)
    if cfg.experiment == "tabular":
        return evaluate_tabular(cfg, weights)
    raise ValueError("experiment %r has no single-model evaluation" % cfg.experiment)


def _write_run(cfg, run_dir, result, log_header, log_rows):
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    dump_json(saved_config(cfg), run_dir / "config.json")
    net.save_checkpoint(result.weights, result.state, run_dir / "checkpoint.json")
    write_csv(run_dir / "loss.csv", log_header, log_rows)
    dump_json(result.metrics, run_dir / "metrics.json")
    for name, (header, rows) in result.tables.items():
        write_csv(run_dir / (name + ".csv"), header, rows)
    curve_plots(run_dir, result.tables)
