"""Invariant suites for the loss gradients, runnable from the command line.

Every check draws its probes from a seeded PCG32 stream and reports the worst
deviation per channel, so a failing run names exactly which channel broke.
"""

import math

import numpy as np

from .losses import (
    LossWeights,
    central_difference,
    grad_head,
    relative_error,
    term_gradients,
    total_loss,
)
from .multivariate import grad_multi, multi_term_gradients, multi_total_loss, n_outputs
from .nig import ActivationKind, RawHead
from .rng import PCG32

CHANNELS = ("gamma", "v", "alpha", "beta")
FD_TOL = 1e-6
VANISH_TOL = 1e-10
MULTI_VANISH_TOL = 1e-8
ULP_TOL = 4


def _uniform(rng, n, lo, hi):
    return rng.uniform_array(n, lo, hi)


def univariate_fd(probes=1000, seed=0, h=1e-5):
    """Worst FD relative error per activation and channel.

    All probes of one activation are differenced at once, one channel at a
    time, with the same central step as ``grad_check``.
    """
    out = {}
    for k, kind in enumerate(ActivationKind):
        rng = PCG32(seed + k)
        lam1 = 0.0 if kind is ActivationKind.RELU else 0.1
        w = LossWeights(0.01, lam1, detach_error_in_U=False)
        o = _uniform(rng, 4 * probes, -3.0, 3.0).reshape(probes, 4)
        y = _uniform(rng, probes, -5.0, 5.0)
        if kind is ActivationKind.RELU:
            # keep clear of the kink at o_alpha = 0
            o[:, 2] = np.where(np.abs(o[:, 2]) < 1e-3, o[:, 2] + 0.01, o[:, 2])
        analytic = grad_head(RawHead(*o.T), y, w, kind).as_array()
        fd = np.empty_like(o)
        for c in range(4):
            up, dn = o.copy(), o.copy()
            up[:, c] += h
            dn[:, c] -= h
            fd[:, c] = (total_loss(RawHead(*up.T), y, w, kind).total
                        - total_loss(RawHead(*dn.T), y, w, kind).total) / (2.0 * h)
        worst = np.max(relative_error(analytic, fd), axis=0)
        out[kind.value] = dict(zip(CHANNELS, worst.tolist()))
    return out


def vanishing_alpha(probes=1000, seed=0):
    """max |dL_ERN/do_alpha| deep in the HUA, per activation."""
    out = {}
    for k, kind in enumerate(ActivationKind):
        rng = PCG32(seed + 100 + k)
        lo, hi = (-50.0, -1e-9) if kind is ActivationKind.RELU else (-200.0, -30.0)
        raw = RawHead(_uniform(rng, probes, -5, 5), _uniform(rng, probes, -3, 3),
                      _uniform(rng, probes, lo, hi), _uniform(rng, probes, -3, 3))
        y = _uniform(rng, probes, -10, 10)
        g = grad_head(raw, y, LossWeights(0.01, 0.0), kind)
        out[kind.value] = float(np.max(np.abs(g.d_o_alpha)))
    return out


def constant_unc_gradient(seed=0, per_point=200):
    """Worst |dL_U/do_alpha + |y - gamma|| in ulps of |y - gamma| (SoftPlus head)."""
    rng = PCG32(seed + 200)
    worst = 0.0
    for o_alpha in (-1e6, -30.0, 0.0, 30.0, 1e6):
        gamma = _uniform(rng, per_point, -5, 5)
        y = _uniform(rng, per_point, -5, 5)
        zeros = np.zeros(per_point)
        _, _, g = term_gradients(RawHead(gamma, zeros, np.full(per_point, o_alpha), zeros), y)
        err = np.abs(y - gamma)
        ulps = np.abs(g.d_o_alpha + err) / np.array([math.ulp(e) if e > 0 else 5e-324 for e in err])
        worst = max(worst, float(np.max(ulps)))
    return worst


def multivariate_suite(probes=200, seed=0, n=2):
    rng = PCG32(seed + 300)
    m = n_outputs(n)
    worst = np.zeros(m)
    for _ in range(probes):
        raw = _uniform(rng, m, -2, 2)
        y = _uniform(rng, n, -3, 3)
        analytic = grad_multi(raw, y, 0.1, 1.0, n, detach_error_in_U=False)
        fd = central_difference(lambda x: multi_total_loss(x, y, 0.1, 1.0, n), raw)
        worst = np.maximum(worst, relative_error(analytic, fd))
    vanish, unc_dev = 0.0, 0.0
    for _ in range(probes):
        raw = np.concatenate([_uniform(rng, m - 1, -3, 3), [-12.0 - 48.0 * rng.uniform()]])
        y = _uniform(rng, n, -5, 5)
        vanish = max(vanish, abs(float(grad_multi(raw, y, 0.0, 1.0, n)[-1])))
        _, gu = multi_term_gradients(raw, y, n)
        unc_dev = max(unc_dev, abs(float(gu[-1]) + float(np.linalg.norm(y - raw[:n], axis=-1))))
    names = (["mu0_%d" % i for i in range(n)] + ["log_diag_%d" % i for i in range(n)]
             + ["offdiag_%d" % i for i in range(n * (n - 1) // 2)] + ["p_nu"])
    return {"fd": dict(zip(names, worst.tolist())), "nu_gradient_max": vanish, "unc_gradient_deviation": unc_dev}


def run(probes=1000, multi_probes=200, seed=0):
    """Full report plus a list of violated checks (empty when everything holds)."""
    report = {
        "univariate_fd_max_rel_error": univariate_fd(probes, seed),
        "vanishing_alpha_gradient": vanishing_alpha(probes, seed),
        "unc_gradient_ulps": constant_unc_gradient(seed),
        "multivariate": multivariate_suite(multi_probes, seed),
    }
    violations = []
    for kind, chans in report["univariate_fd_max_rel_error"].items():
        for ch, err in chans.items():
            if not err < FD_TOL:
                violations.append("univariate FD %s/%s: %.3g >= %g" % (kind, ch, err, FD_TOL))
    for kind, val in report["vanishing_alpha_gradient"].items():
        limit = 0.0 if kind == ActivationKind.RELU.value else VANISH_TOL
        if not val <= limit:
            violations.append("vanishing alpha gradient %s/alpha: %.3g > %g" % (kind, val, limit))
    if not report["unc_gradient_ulps"] <= ULP_TOL:
        violations.append("L^U alpha gradient softplus/alpha: %.3g ulp > %d" % (report["unc_gradient_ulps"], ULP_TOL))
    multi = report["multivariate"]
    for ch, err in multi["fd"].items():
        if not err < FD_TOL:
            violations.append("multivariate FD %s: %.3g >= %g" % (ch, err, FD_TOL))
    if not multi["nu_gradient_max"] <= MULTI_VANISH_TOL:
        violations.append("vanishing nu gradient p_nu: %.3g > %g" % (multi["nu_gradient_max"], MULTI_VANISH_TOL))
    if multi["unc_gradient_deviation"] != 0.0:
        violations.append("multivariate L^U gradient p_nu: deviation %.3g" % multi["unc_gradient_deviation"])
    report["passed"] = not violations
    report["violations"] = violations
    return report
