"""``evireg <gradcheck|train|eval|sensitivity> --config <path> [--out <dir>] [--seed <u64>]``

Exit codes: 0 success, 1 invalid input, 2 runtime failure, 3 invariant violation.
The output root is ``--out``, else ``$EVIREG_OUT``, else the config's
``output_dir`` (relative to the config file). Runs land in
``<root>/<name>-<variant>-seed<seed>/``. ``eval`` reads ``checkpoint.json``
next to the config (a run directory's own ``config.json`` works as is) and
writes to ``<root>/<run name>/eval/``, or to ``eval/`` beside the config when
no root is given on the command line or in the environment.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiments, gradcheck, net
from .config import ConfigError, RunConfig, load_config, validate
from .data import CSVFormatError
from .multivariate import n_outputs

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("evireg")


class InvariantViolation(RuntimeError):
    pass


def output_root(cfg, out_arg):
    if out_arg:
        return Path(out_arg)
    env = os.environ.get("EVIREG_OUT")
    if env:
        return Path(env)
    return cfg.resolve(cfg.doc.get("output_dir", "runs"))


def run_name(cfg):
    doc = cfg.doc
    parts = [cfg.name]
    if doc["experiment"] in ("cubic", "circle", "tabular"):
        parts.append(doc["loss"]["variant"])
    parts.append("seed%d" % int(doc["train"]["seed"]))
    return "-".join(parts)


def _print(obj):
    print(json.dumps(experiments.plain(obj), indent=1, sort_keys=True))


def cmd_gradcheck(cfg, out_dir):
    opts = cfg.doc.get("gradcheck", {})
    report = gradcheck.run(int(opts.get("probes", 1000)), int(opts.get("multi_probes", 200)),
                           int(opts.get("seed", cfg.doc["train"]["seed"])))
    out_dir.mkdir(parents=True, exist_ok=True)
    experiments.dump_json(report, out_dir / "gradcheck.json")
    _print(report)
    if not report["passed"]:
        raise InvariantViolation("; ".join(report["violations"]))
    return report


def cmd_train(cfg, out_dir):
    if cfg.experiment == "gradcheck":
        return cmd_gradcheck(cfg, out_dir)
    runner = experiments.RUNNERS.get(cfg.experiment)
    result = runner(cfg, out_dir)
    _print(result.metrics)
    log.info("run directory: %s", out_dir)
    return result.metrics


def cmd_sensitivity(cfg, out_dir):
    doc = dict(cfg.doc, experiment="sensitivity")
    doc.setdefault("sensitivity", {"lambda1_grid": [1e-4, 1e-2, 1.0]})
    cfg = validate(RunConfig(doc, cfg.base_dir))
    result = experiments.run_sensitivity(cfg, out_dir)
    _print(result.metrics)
    return result.metrics


def _checkpoint_path(cfg, name="checkpoint.json"):
    ev = cfg.doc.get("eval", {})
    if name == "checkpoint.json" and ev.get("checkpoint"):
        return cfg.resolve(ev["checkpoint"])
    return cfg.base_dir / name


def cmd_eval(cfg, out_dir):
    if cfg.experiment not in ("cubic", "circle", "tabular"):
        raise ConfigError("eval needs a cubic, circle or tabular config, got %r" % cfg.experiment)
    if cfg.experiment == "tabular":
        reps = int(cfg.doc["data"]["repeats"])
        weights = [net.load_checkpoint(_checkpoint_path(cfg, "checkpoint_rep%d.json" % r))[0] for r in range(reps)]
        metrics, tables = experiments.evaluate(cfg, weights)
    else:
        weights, _ = net.load_checkpoint(_checkpoint_path(cfg))
        shape = (weights.config.input_dim, weights.config.output_dim)
        expected = (1, 4) if cfg.experiment == "cubic" else (1, n_outputs(2))
        if shape != expected:
            raise ConfigError("%s needs a %d-in/%d-out network, checkpoint is %d-in/%d-out"
                              % ((cfg.experiment,) + expected + shape))
        metrics, tables = experiments.evaluate(cfg, weights)
    out_dir.mkdir(parents=True, exist_ok=True)
    experiments.dump_json(metrics, out_dir / "metrics.json")
    for name, (header, rows) in tables.items():
        experiments.write_csv(out_dir / (name + ".csv"), header, rows)
    experiments.curve_plots(out_dir, tables)
    _print(metrics)
    return metrics


COMMANDS = {"gradcheck": cmd_gradcheck, "train": cmd_train, "eval": cmd_eval, "sensitivity": cmd_sensitivity}


def parse_seed(text):
    try:
        val = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an integer") from None
    if not 0 <= val < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return val


def build_parser():
    p = argparse.ArgumentParser(prog="evireg", description="Evidential regression experiments")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", help="output root (overrides EVIREG_OUT and the config)")
    p.add_argument("--seed", type=parse_seed, help="seed for model init, data and shuffling")
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings on stderr")
    return p


def _fail(code, exc):
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n")
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.command == "eval" and not (args.out or os.environ.get("EVIREG_OUT")):
            out_dir = cfg.base_dir / "eval"
        else:
            out_dir = output_root(cfg, args.out) / run_name(cfg)
            if args.command == "eval":
                out_dir = out_dir / "eval"
        COMMANDS[args.command](cfg, out_dir)
    except InvariantViolation as exc:
        return _fail(EXIT_INVARIANT, exc)
    except (ConfigError, CSVFormatError, net.CheckpointError, FileNotFoundError) as exc:
        return _fail(EXIT_INVALID, exc)
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        return _fail(EXIT_RUNTIME, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
