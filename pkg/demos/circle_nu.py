"""Degrees of freedom along the noisy circle, NLL-only vs regularized.

The multivariate head starts with its nu logit at -20, i.e. nu pinned to
its lower bound 3. The NLL-only run never moves it; the regularized run
moves it, and at larger weights keeps going until the scale matrix blows up.

    python3 demos/circle_nu.py [--lambda1 0.1] [--epochs 500]
"""

import argparse

import numpy as np

from evireg.config import from_dict, variant_defaults
from evireg.experiments import train_circle
from evireg.training import TrainingDiverged


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lambda1", type=float, default=0.1)
    ap.add_argument("--epochs", type=int, default=500)
    args = ap.parse_args()

    base = from_dict({"recipe": "circle-hua", "train": {"epochs": args.epochs}}).doc
    for variant in ("NLL-ERN", "UR-ERN"):
        doc = variant_defaults(base, variant)
        if variant == "UR-ERN":
            doc["loss"]["lambda1"] = args.lambda1
        try:
            _, _, _, rows = train_circle(from_dict(doc))
        except TrainingDiverged as exc:
            print("%-8s %s" % (variant, exc))
            continue
        epochs, _, mean_nu = (np.array(c) for c in zip(*rows))
        marks = [e for e in (0, 10, 50, 100, 250, len(epochs) - 1) if e < len(epochs)]
        print("%-8s " % variant + "  ".join("ep %d: nu %.4f" % (e, mean_nu[e]) for e in marks))


if __name__ == "__main__":
    main()
