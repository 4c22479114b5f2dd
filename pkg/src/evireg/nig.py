"""Normal-Inverse-Gamma head: activations, predictive summaries and densities.

Fields of the value types may be floats or equally shaped numpy arrays; the
functions below are elementwise in either case.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .special import lgamma, softplus

DEFAULT_FLOOR = 1e-12
DEFAULT_HUA_EPSILON = 1e-3


class ActivationKind(enum.Enum):
    """Activation applied to the raw alpha output (before the +1 offset)."""

    SOFTPLUS = "softplus"
    RELU = "relu"
    EXP = "exp"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                "unknown activation %r (expected softplus, relu or exp)" % (value,)
            ) from None


def _all_finite(*xs):
    return all(np.all(np.isfinite(x)) for x in xs)


@dataclass(frozen=True)
class RawHead:
    """Unconstrained network outputs for one sample (or a batch)."""

    o_gamma: float
    o_v: float
    o_alpha: float
    o_beta: float

    def __post_init__(self):
        if not _all_finite(self.o_gamma, self.o_v, self.o_alpha, self.o_beta):
            raise ValueError("raw head outputs must be finite")

    @classmethod
    def from_array(cls, arr):
        arr = np.asarray(arr, dtype=float)
        if arr.shape[-1] != 4:
            raise ValueError("raw head needs 4 channels, got %d" % arr.shape[-1])
        if arr.ndim == 1:
            return cls(*(float(a) for a in arr))
        return cls(arr[..., 0], arr[..., 1], arr[..., 2], arr[..., 3])

    def as_array(self):
        return np.stack(np.broadcast_arrays(self.o_gamma, self.o_v, self.o_alpha, self.o_beta), axis=-1)


@dataclass(frozen=True)
class NIGParams:
    gamma: float
    v: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not _all_finite(self.gamma, self.v, self.alpha, self.beta):
            raise ValueError("NIG parameters must be finite")
        if np.any(np.asarray(self.v) <= 0) or np.any(np.asarray(self.beta) <= 0):
            raise ValueError("NIG parameters need v > 0 and beta > 0")
        # alpha == 1 is reachable through the ReLU head and stays legal for losses
        if np.any(np.asarray(self.alpha) < 1):
            raise ValueError("NIG parameters need alpha >= 1")

    def __len__(self):
        return int(np.size(self.gamma))

    def __getitem__(self, idx):
        return NIGParams(
            *(np.asarray(f)[idx] for f in (self.gamma, self.v, self.alpha, self.beta))
        )


@dataclass(frozen=True)
class PredictionSummary:
    prediction: float
    aleatoric: float
    epistemic: float


@dataclass(frozen=True)
class StudentTParams:
    loc: float
    scale_sq: float
    dof: float

    def __post_init__(self):
        if np.any(np.asarray(self.scale_sq) <= 0) or np.any(np.asarray(self.dof) <= 0):
            raise ValueError("Student-t needs scale_sq > 0 and dof > 0")


def alpha_activation(o_alpha, kind):
    """alpha - 1 as a function of the raw output, per activation kind."""
    kind = ActivationKind.parse(kind)
    if kind is ActivationKind.SOFTPLUS:
        return softplus(o_alpha)
    if kind is ActivationKind.RELU:
        return np.maximum(0.0, o_alpha)
    return np.exp(o_alpha)


def activate_head(raw, kind=ActivationKind.SOFTPLUS, floor=DEFAULT_FLOOR):
    v = np.maximum(softplus(raw.o_v), floor)
    beta = np.maximum(softplus(raw.o_beta), floor)
    alpha = alpha_activation(raw.o_alpha, kind) + 1.0
    if np.ndim(v) == 0:
        v, beta, alpha = float(v), float(beta), float(alpha)
    return NIGParams(raw.o_gamma, v, alpha, beta)


def predict(params):
    """Prediction with aleatoric E[sigma^2] and epistemic Var[mu]."""
    am1 = np.asarray(params.alpha, dtype=float) - 1.0
    if np.any(am1 <= 0):
        raise ValueError("predict requires alpha > 1 (alpha == 1 is maximal uncertainty)")
    aleatoric = params.beta / am1
    epistemic = aleatoric / params.v
    if np.ndim(aleatoric) == 0:
        aleatoric, epistemic = float(aleatoric), float(epistemic)
    return PredictionSummary(params.gamma, aleatoric, epistemic)


def marginal_params(params):
    """Student-t obtained by integrating (mu, sigma^2) out of the NIG model."""
    scale_sq = params.beta * (1.0 + params.v) / (params.v * params.alpha)
    return StudentTParams(params.gamma, scale_sq, 2.0 * params.alpha)


def student_t_logpdf(y, st):
    d = st.dof
    s2 = st.scale_sq
    z2 = (y - st.loc) ** 2 / (d * s2)
    return (
        lgamma((d + 1.0) / 2.0)
        - lgamma(d / 2.0)
        - 0.5 * np.log(d * np.pi * s2)
        - (d + 1.0) / 2.0 * np.log1p(z2)
    )


def nig_logpdf(mu, sigma_sq, params):
    """Joint log density of (mu, sigma^2) under NIG(gamma, v, alpha, beta)."""
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    if np.any(sigma_sq <= 0):
        raise ValueError("sigma_sq must be > 0")
    var_mu = sigma_sq / params.v
    log_normal = -0.5 * np.log(2.0 * np.pi * var_mu) - (mu - params.gamma) ** 2 / (2.0 * var_mu)
    a, b = params.alpha, params.beta
    log_invgamma = a * np.log(b) - lgamma(a) - (a + 1.0) * np.log(sigma_sq) - b / sigma_sq
    out = log_normal + log_invgamma
    return float(out) if np.ndim(out) == 0 else out


def sample_nig(params, rng):
    """Draw (mu, sigma^2) from a scalar NIG via the Gamma reciprocal."""
    sigma_sq = 1.0 / rng.gamma(float(params.alpha), 1.0 / float(params.beta))
    mu = float(params.gamma) + math.sqrt(sigma_sq / float(params.v)) * rng.normal()
    return mu, sigma_sq


def sample_observation(params, rng):
    mu, sigma_sq = sample_nig(params, rng)
    return mu + math.sqrt(sigma_sq) * rng.normal()


def hua_membership(params, epsilon=DEFAULT_HUA_EPSILON):
    """True where alpha sits within epsilon of its lower bound 1."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    out = np.asarray(params.alpha) - 1.0 < epsilon
    return bool(out) if out.ndim == 0 else out
