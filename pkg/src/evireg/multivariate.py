"""Normal-Inverse-Wishart head for n-dimensional targets.

Raw layout for target dimension n (m = n(n+3)/2 + 1 channels)::

    [ mu0 (n) | log-diagonal of L (n) | strict lower triangle of L, row-major (n(n-1)/2) | p_nu ]

All functions take a single raw vector of length m or a (B, m) batch.
"""

from dataclasses import dataclass

import numpy as np

from .special import digamma, lgamma


class NotSPDError(np.linalg.LinAlgError):
    pass


def n_outputs(n):
    return n * (n + 3) // 2 + 1


def _tril_indices(n):
    return np.tril_indices(n, k=-1)


@dataclass(frozen=True)
class NIWParams:
    mu0: np.ndarray
    L: np.ndarray
    nu: np.ndarray

    @property
    def n(self):
        return self.mu0.shape[-1]

    def scale_matrix(self):
        return self.L @ np.swapaxes(self.L, -1, -2)


@dataclass(frozen=True)
class MultiPrediction:
    mean: np.ndarray
    aleatoric: np.ndarray
    epistemic: np.ndarray
    experiment_uncertainty: np.ndarray = None


def _split(raw, n):
    raw = np.asarray(raw, dtype=float)
    m = n_outputs(n)
    if n < 2:
        raise ValueError("multivariate head needs n >= 2")
    if raw.shape[-1] != m:
        raise ValueError("raw head for n=%d needs %d entries, got %d" % (n, m, raw.shape[-1]))
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw head outputs must be finite")
    mu0 = raw[..., :n]
    log_diag = raw[..., n:2 * n]
    off = raw[..., 2 * n:m - 1]
    p_nu = raw[..., m - 1]
    return mu0, log_diag, off, p_nu


def nu_bounds(n):
    """Open interval (n+1, n^2+4n+1) covered by the tanh transform."""
    return n + 1.0, n * n + 4.0 * n + 1.0


def nu_from_logit(p_nu, n):
    return n * (n + 5) / 2.0 + 1.0 + np.tanh(p_nu) * n * (n + 3) / 2.0


def transform_multi(raw, n):
    mu0, log_diag, off, p_nu = _split(raw, n)
    L = np.zeros(mu0.shape + (n,))
    idx = np.arange(n)
    L[..., idx, idx] = np.exp(log_diag)
    rows, cols = _tril_indices(n)
    L[..., rows, cols] = off
    return NIWParams(mu0.copy(), L, nu_from_logit(p_nu, n))


def _dnu_dp(p_nu, n):
    # 1 - tanh^2 via sech^2: does not round to 0 before the true value underflows
    with np.errstate(over="ignore"):
        return n * (n + 3) / 2.0 / np.cosh(p_nu) ** 2


def mern_nll(params, y, r=1.0):
    """Multivariate evidential NLL with the additive constant dropped."""
    if r <= 0:
        raise ValueError("r must be positive")
    y = np.asarray(y, dtype=float)
    n = params.n
    if y.shape[-1] != n:
        raise ValueError("target dimension %d does not match head dimension %d" % (y.shape[-1], n))
    nu = params.nu
    s = r + nu
    e = y - params.mu0
    inner = params.scale_matrix() + e[..., :, None] * e[..., None, :] / np.asarray(s)[..., None, None]
    try:
        chol = np.linalg.cholesky(inner)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError("inner scale matrix is not positive definite") from exc
    logdet = 2.0 * np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    sum_log_diag = np.sum(np.log(np.diagonal(params.L, axis1=-2, axis2=-1)), axis=-1)
    out = (
        lgamma((nu - n + 1.0) / 2.0)
        - lgamma((nu + 1.0) / 2.0)
        + n / 2.0 * np.log(s)
        - nu * sum_log_diag
        + (nu + 1.0) / 2.0 * logdet
    )
    return float(out) if np.ndim(out) == 0 else out


def predict_multi(params, n=None):
    n = params.n if n is None else n
    nu = np.asarray(params.nu)
    if np.any(nu <= n + 1):
        raise ValueError("predict_multi requires nu > n + 1")
    scale = params.scale_matrix()
    nu_ = nu[..., None, None]
    aleatoric = nu_ / (nu_ - n - 1.0) * scale
    epistemic = aleatoric / nu_
    experiment = scale / (nu_ - 3.0) if n == 2 else None
    return MultiPrediction(params.mu0, aleatoric, epistemic, experiment)


def _error_norm(y, mu0):
    return np.linalg.norm(np.asarray(y, dtype=float) - mu0, axis=-1)


def unc_reg_multi(raw, params, y, n):
    """Multivariate uncertainty regularizer, stable form -||y - mu0|| * p_nu.

    Uses (n^2+3n)/(n^2+4n+1-nu) - 1 == exp(2 p_nu) under the tanh transform.
    """
    p_nu = _split(raw, n)[3]
    out = -_error_norm(y, params.mu0) * p_nu
    return float(out) if np.ndim(out) == 0 else out


def unc_reg_multi_naive(params, y, n):
    nu = params.nu
    ratio = (n * n + 3.0 * n) / (n * n + 4.0 * n + 1.0 - nu) - 1.0
    out = -0.5 * _error_norm(y, params.mu0) * np.log(ratio)
    return float(out) if np.ndim(out) == 0 else out


def multi_term_gradients(raw, y, n, r=1.0, detach_error_in_U=True):
    """Raw-space gradients of the NLL and of the (unweighted) regularizer.

    Returns two arrays shaped like ``raw``.
    """
    raw = np.asarray(raw, dtype=float)
    mu0, log_diag, off, p_nu = _split(raw, n)
    params = transform_multi(raw, n)
    y = np.asarray(y, dtype=float)
    nu = params.nu
    s = r + nu
    e = y - mu0
    L = params.L
    # z = L^{-1} e, w = L^{-T} z; q = e^T (L L^T)^{-1} e
    z = np.linalg.solve(L, e[..., None])
    w = np.linalg.solve(np.swapaxes(L, -1, -2), z)[..., 0]
    z = z[..., 0]
    q = np.sum(z * z, axis=-1)
    coef = (nu + 1.0) / (s + q)

    g = np.zeros_like(raw)
    m = n_outputs(n)
    g[..., :n] = -coef[..., None] * w
    # dL/dL (matrix) = -coef * w z^T, lower triangle only
    gL = -coef[..., None, None] * w[..., :, None] * z[..., None, :]
    idx = np.arange(n)
    g[..., n:2 * n] = 1.0 + gL[..., idx, idx] * np.exp(log_diag)
    rows, cols = _tril_indices(n)
    g[..., 2 * n:m - 1] = gL[..., rows, cols]
    d_nu = (
        0.5 * digamma((nu - n + 1.0) / 2.0)
        - 0.5 * digamma((nu + 1.0) / 2.0)
        + n / (2.0 * s)
        + 0.5 * np.log1p(q / s)
        - 0.5 * (nu + 1.0) * q / (s * (s + q))
    )
    g[..., m - 1] = d_nu * _dnu_dp(p_nu, n)

    gu = np.zeros_like(raw)
    norm = _error_norm(y, mu0)
    gu[..., m - 1] = -norm
    if not detach_error_in_U:
        safe = np.where(norm > 0, norm, 1.0)
        unit = np.where((norm > 0)[..., None], e / safe[..., None], 0.0)
        gu[..., :n] = p_nu[..., None] * unit
    return g, gu


def grad_multi(raw, y, lambda1=0.0, r=1.0, n=2, detach_error_in_U=True):
    """Gradient of mern_nll + lambda1 * unc_reg_multi w.r.t. the raw channels."""
    g, gu = multi_term_gradients(raw, y, n, r, detach_error_in_U)
    if lambda1:
        g = g + lambda1 * gu
    return g


def multi_total_loss(raw, y, lambda1=0.0, r=1.0, n=2):
    params = transform_multi(raw, n)
    out = mern_nll(params, y, r)
    if lambda1:
        out = out + lambda1 * unc_reg_multi(raw, params, y, n)
    return out


def batch_multi_loss_and_grad(raw_out, y, lambda1=0.0, r=1.0, n=2, detach_error_in_U=True):
    raw_out = np.asarray(raw_out, dtype=float)
    loss = multi_total_loss(raw_out, y, lambda1, r, n)
    grad = grad_multi(raw_out, y, lambda1, r, n, detach_error_in_U)
    b = raw_out.shape[0]
    return float(np.mean(loss)), grad / b
