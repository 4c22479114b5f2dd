"""Univariate evidential losses and their gradients in raw-output space.

The objective is ``nll + lam * evidence_reg + lam1 * unc_reg``. Gradients are
closed form for the SoftPlus, ReLU and Exp alpha heads; ``grad_check`` is the
finite-difference oracle used to validate them.
"""

from dataclasses import dataclass

import numpy as np

from .nig import ActivationKind, DEFAULT_FLOOR, RawHead, activate_head
from .special import digamma, lgamma, log_expm1, sigmoid, softplus


class IncompatibleHeadError(ValueError):
    """The uncertainty regularizer is undefined for the requested head."""


@dataclass(frozen=True)
class LossWeights:
    """Weights of the evidence (``lam``) and uncertainty (``lam1``) terms.

    With ``detach_error_in_U`` the |y - gamma| factor of the uncertainty
    regularizer is a constant for backpropagation, so that term only moves
    the alpha channel.
    """

    lam: float = 0.0
    lam1: float = 0.0
    detach_error_in_U: bool = True

    def __post_init__(self):
        for name in ("lam", "lam1"):
            val = getattr(self, name)
            if not np.isfinite(val) or val < 0:
                raise ValueError("%s must be finite and >= 0, got %r" % (name, val))


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    evidence_reg: float
    unc_reg: float
    total: float


@dataclass(frozen=True)
class HeadGradient:
    d_o_gamma: float
    d_o_v: float
    d_o_alpha: float
    d_o_beta: float

    def as_array(self):
        return np.stack(
            np.broadcast_arrays(self.d_o_gamma, self.d_o_v, self.d_o_alpha, self.d_o_beta),
            axis=-1,
        )


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


def nll_loss(params, y):
    gamma, v, alpha, beta = params.gamma, params.v, params.alpha, params.beta
    omega = 2.0 * beta * (1.0 + v)
    out = (
        0.5 * np.log(np.pi / v)
        - alpha * np.log(omega)
        + (alpha + 0.5) * np.log((y - gamma) ** 2 * v + omega)
        + lgamma(alpha)
        - lgamma(alpha + 0.5)
    )
    return _scalarize(out)


def evidence_reg(params, y):
    return _scalarize(np.abs(y - params.gamma) * (2.0 * params.v + params.alpha))


def unc_reg(raw, params, y, kind=ActivationKind.SOFTPLUS):
    """Uncertainty regularizer in its cancellation-free form.

    SoftPlus: exp(softplus(o)) - 1 == e^o, so the log collapses to o_alpha.
    Exp: alpha - 1 == e^o, so the log is log(expm1(e^o)).
    """
    kind = ActivationKind.parse(kind)
    err = np.abs(y - params.gamma)
    if kind is ActivationKind.SOFTPLUS:
        return _scalarize(-err * raw.o_alpha)
    if kind is ActivationKind.EXP:
        return _scalarize(-err * log_expm1(np.exp(raw.o_alpha)))
    raise IncompatibleHeadError("L^U incompatible with ReLU alpha-head")


def unc_reg_naive(params, y):
    """Literal -|y - gamma| * log(exp(alpha - 1) - 1); cancels badly near alpha = 1."""
    with np.errstate(divide="ignore"):
        return _scalarize(-np.abs(y - params.gamma) * np.log(np.exp(params.alpha - 1.0) - 1.0))


def _check_kind(w, kind):
    if w.lam1 > 0 and kind is ActivationKind.RELU:
        raise IncompatibleHeadError("L^U incompatible with ReLU alpha-head")


def total_loss(raw, y, w=LossWeights(), kind=ActivationKind.SOFTPLUS, floor=DEFAULT_FLOOR):
    kind = ActivationKind.parse(kind)
    _check_kind(w, kind)
    params = activate_head(raw, kind, floor)
    nll = nll_loss(params, y)
    ev = evidence_reg(params, y)
    if kind is ActivationKind.RELU:
        # only reachable with lam1 == 0; the term is undefined on this head
        ur = _scalarize(np.zeros_like(np.asarray(nll)))
    else:
        ur = unc_reg(raw, params, y, kind)
    total = nll + w.lam * ev + w.lam1 * ur
    return LossBreakdown(nll, ev, ur, _scalarize(total))


def _alpha_chain(o_alpha, kind):
    if kind is ActivationKind.SOFTPLUS:
        return sigmoid(o_alpha)
    if kind is ActivationKind.RELU:
        return np.where(np.asarray(o_alpha) > 0, 1.0, 0.0)
    return np.exp(o_alpha)


def term_gradients(raw, y, kind=ActivationKind.SOFTPLUS, detach_error_in_U=True,
                   floor=DEFAULT_FLOOR):
    """Raw-space gradients of the three loss terms, unweighted.

    Returns ``(nll, evidence_reg, unc_reg)`` HeadGradients; the last is None
    for the ReLU head.
    """
    kind = ActivationKind.parse(kind)
    params = activate_head(raw, kind, floor)
    gamma, v, alpha, beta = params.gamma, params.v, params.alpha, params.beta
    err = y - gamma
    abs_err = np.abs(err)
    sgn = np.sign(err)
    omega = 2.0 * beta * (1.0 + v)
    denom = err * err * v + omega

    s_v = np.where(softplus(raw.o_v) > floor, sigmoid(raw.o_v), 0.0)
    s_beta = np.where(softplus(raw.o_beta) > floor, sigmoid(raw.o_beta), 0.0)
    a_prime = _alpha_chain(raw.o_alpha, kind)

    d_alpha = np.log1p(v * err * err / omega) + digamma(alpha) - digamma(alpha + 0.5)
    d_v = -0.5 / v - 2.0 * alpha * beta / omega + (alpha + 0.5) * (err * err + 2.0 * beta) / denom
    d_beta = -alpha / beta + (alpha + 0.5) * 2.0 * (1.0 + v) / denom
    g_nll = HeadGradient(
        _scalarize(-2.0 * v * err * (alpha + 0.5) / denom),
        _scalarize(d_v * s_v),
        _scalarize(d_alpha * a_prime),
        _scalarize(d_beta * s_beta),
    )

    zero = _scalarize(np.zeros_like(np.asarray(denom)))
    g_reg = HeadGradient(
        _scalarize(-sgn * (2.0 * v + alpha)),
        _scalarize(2.0 * abs_err * s_v),
        _scalarize(abs_err * a_prime),
        zero,
    )

    if kind is ActivationKind.RELU:
        return g_nll, g_reg, None
    if kind is ActivationKind.SOFTPLUS:
        log_term = raw.o_alpha
        d_alpha_u = -abs_err
    else:
        t = np.exp(raw.o_alpha)
        log_term = log_expm1(t)
        # d/do log(expm1(e^o)) = e^o / (1 - e^{-e^o}); tends to 1 as o -> -inf
        d_alpha_u = -abs_err * (t / -np.expm1(-t))
    d_gamma_u = zero if detach_error_in_U else _scalarize(sgn * log_term)
    g_unc = HeadGradient(d_gamma_u, zero, _scalarize(d_alpha_u), zero)
    return g_nll, g_reg, g_unc


def grad_head(raw, y, w=LossWeights(), kind=ActivationKind.SOFTPLUS, floor=DEFAULT_FLOOR):
    """Closed-form gradient of ``total_loss`` w.r.t. the four raw outputs."""
    kind = ActivationKind.parse(kind)
    _check_kind(w, kind)
    g_nll, g_reg, g_unc = term_gradients(raw, y, kind, w.detach_error_in_U, floor)
    out = g_nll.as_array()
    if w.lam:
        out = out + w.lam * g_reg.as_array()
    if w.lam1:
        out = out + w.lam1 * g_unc.as_array()
    return HeadGradient(*(_scalarize(out[..., i]) for i in range(4)))


def batch_loss_and_grad(raw_out, y, w=LossWeights(), kind=ActivationKind.SOFTPLUS):
    """Mean total loss over a batch and its gradient w.r.t. the (B, 4) raw outputs."""
    raw_out = np.asarray(raw_out, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    raw = RawHead.from_array(raw_out)
    loss = total_loss(raw, y, w, kind)
    grad = grad_head(raw, y, w, kind).as_array()
    n = raw_out.shape[0]
    return float(np.mean(loss.total)), grad / n


def central_difference(f, x, h=1e-5):
    """Central finite differences of scalar ``f`` at vector ``x``."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        fp, fm = f(xp), f(xm)
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError("non-finite loss at probe %d (h=%g)" % (i, h))
        g.flat[i] = (fp - fm) / (2.0 * h)
    return g


def grad_check(f, raw, y, h=1e-5):
    """Finite-difference gradient of ``f(raw, y)`` in each raw coordinate."""
    if h <= 0:
        raise ValueError("h must be positive")
    x0 = RawHead.from_array(raw.as_array() if isinstance(raw, RawHead) else raw).as_array()
    g = central_difference(lambda x: float(f(RawHead.from_array(x), y)), x0, h)
    return HeadGradient(*(float(c) for c in g))


def relative_error(a, b, floor=1.0):
    """|a - b| scaled by max(|a|, |b|, floor); the floor keeps near-zero channels sane."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


__all__ = [
    "IncompatibleHeadError",
    "LossWeights",
    "LossBreakdown",
    "HeadGradient",
    "nll_loss",
    "evidence_reg",
    "unc_reg",
    "unc_reg_naive",
    "total_loss",
    "term_gradients",
    "grad_head",
    "batch_loss_and_grad",
    "central_difference",
    "grad_check",
    "relative_error",
]
