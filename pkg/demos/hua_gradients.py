"""Why training stalls inside the high-uncertainty area, in numbers.

Sweeps the alpha logit from 0 down to -40 for one sample and prints the
gradient each loss term sends to it. The ERN terms decay like sigmoid(o),
the uncertainty regularizer keeps pushing with -|y - gamma| throughout.

    python3 demos/hua_gradients.py
"""

import numpy as np

from evireg import ActivationKind, LossWeights, RawHead, grad_head
from evireg.losses import term_gradients

Y, GAMMA = 3.0, 1.0


def main():
    print("%8s %14s %14s %14s" % ("o_alpha", "ERN", "L^U", "ERN+0.1*L^U"))
    for o_alpha in (0.0, -5.0, -10.0, -20.0, -30.0, -40.0):
        raw = RawHead(GAMMA, 0.5, o_alpha, 0.5)
        ern = grad_head(raw, Y, LossWeights(0.01, 0.0)).d_o_alpha
        _, _, unc = term_gradients(raw, Y)
        full = grad_head(raw, Y, LossWeights(0.01, 0.1)).d_o_alpha
        print("%8.1f %14.3e %14.3e %14.3e" % (o_alpha, ern, unc.d_o_alpha, full))

    # ReLU head: exactly zero on the whole negative branch
    relu = [grad_head(RawHead(GAMMA, 0.5, o, 0.5), Y, LossWeights(0.01, 0.0), ActivationKind.RELU).d_o_alpha
            for o in np.linspace(-5.0, -0.1, 50)]
    print("ReLU head, o_alpha in [-5, -0.1]: max |grad| = %g" % np.max(np.abs(relu)))


if __name__ == "__main__":
    main()
