"""Evaluation metrics: accuracy, likelihood, confidence cutoffs, calibration, entropy."""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .losses import nll_loss
from .nig import ActivationKind, RawHead, StudentTParams, activate_head, marginal_params, predict
from .special import lgamma
from .net import forward

DEFAULT_LEVELS = tuple(np.round(np.arange(1, 20) * 0.05, 2))
DEFAULT_FRACTIONS = tuple(np.round(np.arange(1, 21) * 0.05, 2))
CDF_TOL = 1e-8


@dataclass(frozen=True)
class CutoffCurve:
    retained_fractions: list
    rmse_at_fraction: list


@dataclass(frozen=True)
class CalibrationCurve:
    expected_levels: list
    observed_frequencies: list
    calibration_error: float


def _nonempty(x, name="input"):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise ValueError("%s is empty" % name)
    return x


def rmse(preds, targets):
    preds = _nonempty(preds, "preds")
    targets = _nonempty(targets, "targets")
    if preds.shape != targets.shape:
        raise ValueError("preds and targets differ in length")
    return float(np.sqrt(np.mean((preds - targets) ** 2)))


def predictive_nll(params, targets, target_std=None):
    """Mean NLL; ``target_std`` converts a standardized-space NLL to original units."""
    targets = _nonempty(targets, "targets")
    vals = np.asarray(nll_loss(params, targets), dtype=float)
    if target_std is not None:
        vals = vals + math.log(target_std)
    return float(np.mean(vals))


def cutoff_curve(params, targets, fractions=DEFAULT_FRACTIONS):
    """RMSE over the most confident ceil(f N) samples, ranked by epistemic variance."""
    targets = _nonempty(targets, "targets")
    fractions = np.asarray(fractions, dtype=float)
    if np.any((fractions <= 0) | (fractions > 1)) or np.any(np.diff(fractions) <= 0):
        raise ValueError("fractions must be strictly increasing within (0, 1]")
    summary = predict(params)
    epi = np.broadcast_to(summary.epistemic, targets.shape)
    pred = np.broadcast_to(np.asarray(summary.prediction, dtype=float), targets.shape)
    order = np.argsort(epi, kind="stable")
    sq = (pred[order] - targets[order]) ** 2
    csum = np.cumsum(sq)
    n = targets.size
    out = []
    for f in fractions:
        k = max(1, math.ceil(f * n - 1e-9))
        out.append(float(np.sqrt(csum[k - 1] / k)))
    # the full-set point is recomputed exactly so it equals rmse() bit for bit
    if fractions[-1] == 1.0:
        out[-1] = rmse(pred, targets)
    return CutoffCurve([float(f) for f in fractions], out)


def _std_t_pdf(u, dof, log_norm):
    return math.exp(log_norm - (dof + 1.0) / 2.0 * math.log1p(u * u / dof))


def student_t_cdf(y, st):
    """CDF by adaptive quadrature of the standardized density from the centre."""
    dof = float(st.dof)
    u = (float(y) - float(st.loc)) / math.sqrt(float(st.scale_sq))
    if u == 0.0:
        return 0.5
    log_norm = lgamma((dof + 1.0) / 2.0) - lgamma(dof / 2.0) - 0.5 * math.log(dof * math.pi)
    mass, _ = integrate.quad(
        _std_t_pdf, 0.0, abs(u), args=(dof, log_norm), epsabs=CDF_TOL, epsrel=CDF_TOL, limit=200
    )
    mass = min(mass, 0.5)
    return 0.5 + mass if u > 0 else 0.5 - mass


def student_t_interval(p, st):
    """Central p-probability interval by inverting the quadrature CDF."""
    if not 0 < p < 1:
        raise ValueError("p must be in (0, 1)")
    loc, scale = float(st.loc), math.sqrt(float(st.scale_sq))
    target = 0.5 + p / 2.0
    f = lambda u: student_t_cdf(loc + u * scale, st) - target  # noqa: E731
    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    u = optimize.brentq(f, 0.0, hi, xtol=CDF_TOL)
    return loc - u * scale, loc + u * scale


def pit_values(params, targets):
    """Predictive CDF evaluated at each target."""
    targets = _nonempty(targets, "targets")
    st = marginal_params(params)
    loc = np.broadcast_to(np.asarray(st.loc, dtype=float), targets.shape)
    s2 = np.broadcast_to(np.asarray(st.scale_sq, dtype=float), targets.shape)
    dof = np.broadcast_to(np.asarray(st.dof, dtype=float), targets.shape)
    return np.array([
        student_t_cdf(y, StudentTParams(l, s, d)) for y, l, s, d in zip(targets, loc, s2, dof)
    ])


def calibration(params, targets, levels=DEFAULT_LEVELS):
    """Coverage of central predictive intervals against their nominal level.

    A target is inside the central p-interval iff |2 F(y) - 1| <= p, so one
    CDF evaluation per sample serves every level.
    """
    levels = np.asarray(levels, dtype=float)
    pit = pit_values(params, targets)
    dev = np.abs(2.0 * pit - 1.0)
    observed = np.array([np.mean(dev <= p) for p in levels])
    err = float(np.mean((levels - observed) ** 2))
    return CalibrationCurve([float(p) for p in levels], [float(o) for o in observed], err)


def entropy(variance):
    """Differential entropy of a Gaussian with the given variance."""
    variance = np.asarray(variance, dtype=float)
    if np.any(variance <= 0):
        raise ValueError("variance must be positive")
    out = 0.5 * np.log(2.0 * np.pi * np.e * variance)
    return float(out) if out.ndim == 0 else out


def entropy_histogram(values, bins):
    """Density histogram over fixed ``bins`` edges; returns (density, edges)."""
    values = np.asarray(values, dtype=float).reshape(-1)
    edges = np.asarray(bins, dtype=float)
    clipped = np.clip(values, edges[0], edges[-1])
    density, edges = np.histogram(clipped, bins=edges, density=True)
    return density, edges


def ood_entropy(params, source="aleatoric"):
    summary = predict(params)
    if source == "aleatoric":
        return entropy(summary.aleatoric)
    if source == "epistemic":
        return entropy(summary.epistemic)
    raise ValueError("source must be 'aleatoric' or 'epistemic'")


def head_params(weights, inputs, kind=ActivationKind.SOFTPLUS):
    raw, _ = forward(weights, np.atleast_2d(inputs))
    return activate_head(RawHead.from_array(raw), kind)


def hua_escape_report(weights, dataset, epsilon=1e-3, kind=ActivationKind.SOFTPLUS):
    """Share of samples whose alpha sits within epsilon of 1."""
    inputs = dataset.inputs if hasattr(dataset, "inputs") else dataset
    alpha = np.asarray(head_params(weights, inputs, kind).alpha)
    return {
        "fraction_in_hua": float(np.mean(alpha - 1.0 < epsilon)),
        "mean_alpha": float(np.mean(alpha)),
        "min_alpha": float(np.min(alpha)),
    }
