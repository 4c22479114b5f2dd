import math

import numpy as np
import pytest

from evireg.losses import central_difference, relative_error
from evireg.multivariate import (
    batch_multi_loss_and_grad,
    grad_multi,
    mern_nll,
    multi_term_gradients,
    multi_total_loss,
    n_outputs,
    nu_bounds,
    predict_multi,
    transform_multi,
    unc_reg_multi,
    unc_reg_multi_naive,
)


def test_layout_sizes():
    assert n_outputs(2) == 6
    assert n_outputs(3) == 10
    with pytest.raises(ValueError):
        transform_multi(np.zeros(5), 2)
    with pytest.raises(ValueError):
        transform_multi(np.zeros(2), 1)


def test_transform_examples():
    p = transform_multi(np.zeros(6), 2)
    assert p.nu == 8.0
    assert np.array_equal(p.L, np.eye(2))
    raw = np.array([0, 0, 0, 0, 0, -12.0])
    assert transform_multi(raw, 2).nu - 3 < 1e-8
    p = transform_multi(np.array([1.0, 2.0, math.log(3.0), math.log(0.5), 0.7, 0.0]), 2)
    assert np.allclose(p.L, [[3.0, 0.0], [0.7, 0.5]])
    assert np.array_equal(p.mu0, [1.0, 2.0])


def test_transform_image():
    rng = np.random.default_rng(0)
    for n in (2, 3, 4):
        lo, hi = nu_bounds(n)
        raw = rng.uniform(-6, 6, (200, n_outputs(n)))
        p = transform_multi(raw, n)
        assert np.all((p.nu > lo) & (p.nu < hi))
        np.linalg.cholesky(p.scale_matrix())


def test_mern_nll_zero_residual():
    p = transform_multi(np.zeros(6), 2)
    expected = math.lgamma(3.5) - math.lgamma(4.5) + math.log(9.0)
    assert mern_nll(p, np.zeros(2)) == pytest.approx(expected, abs=1e-12)


def test_mern_nll_translation_and_permutation():
    raw = np.array([0.3, -0.4, 0.2, -0.1, 0.5, 0.8])
    y = np.array([1.0, -2.0])
    base = mern_nll(transform_multi(raw, 2), y)
    shifted = raw.copy()
    shifted[:2] += [5.0, -3.0]
    assert mern_nll(transform_multi(shifted, 2), y + [5.0, -3.0]) == pytest.approx(base, abs=1e-12)

    # swapping coordinates changes L, but only through the symmetric scale matrix
    p = transform_multi(raw, 2)
    perm = np.array([[0, 1], [1, 0]])
    swapped_scale = perm @ p.scale_matrix() @ perm.T
    L_swapped = np.linalg.cholesky(swapped_scale)
    raw_sw = np.array([raw[1], raw[0], math.log(L_swapped[0, 0]), math.log(L_swapped[1, 1]),
                       L_swapped[1, 0], raw[5]])
    assert mern_nll(transform_multi(raw_sw, 2), y[::-1]) == pytest.approx(base, abs=1e-12)


def test_mern_nll_rejects_bad_r_and_dimension():
    p = transform_multi(np.zeros(6), 2)
    with pytest.raises(ValueError):
        mern_nll(p, np.zeros(2), r=0.0)
    with pytest.raises(ValueError):
        mern_nll(p, np.zeros(3))


def test_predict_multi_examples():
    pred = predict_multi(transform_multi(np.zeros(6), 2))
    assert np.allclose(pred.aleatoric, 1.6 * np.eye(2))
    assert np.allclose(pred.epistemic, 0.2 * np.eye(2))
    assert np.allclose(pred.experiment_uncertainty, 0.2 * np.eye(2))
    assert np.array_equal(pred.epistemic * 8.0, pred.aleatoric)


def test_predict_multi_pole():
    traces = []
    for p_nu in (0.0, -1.0, -2.0, -4.0, -6.0):
        raw = np.array([0, 0, 0, 0, 0, p_nu])
        traces.append(np.trace(predict_multi(transform_multi(raw, 2)).aleatoric))
    assert np.all(np.diff(traces) > 0)
    with pytest.raises(ValueError):
        predict_multi(transform_multi(np.array([0, 0, 0, 0, 0, -40.0]), 2))


def test_unc_reg_multi_examples():
    raw = np.array([0, 0, 0.1, -0.2, 0.3, -3.0])
    p = transform_multi(raw, 2)
    y = np.array([0.6, 0.8])
    assert unc_reg_multi(raw, p, y, 2) == pytest.approx(3.0, abs=1e-15)
    assert unc_reg_multi_naive(p, y, 2) == pytest.approx(3.0, rel=1e-9)
    raw0 = raw.copy()
    raw0[-1] = 0.0
    assert unc_reg_multi(raw0, transform_multi(raw0, 2), y, 2) == 0.0
    assert unc_reg_multi(raw, p, p.mu0, 2) == 0.0


def test_unc_reg_multi_stable_matches_naive():
    rng = np.random.default_rng(3)
    for p_nu in np.linspace(-8, 8, 81):
        raw = np.concatenate([rng.uniform(-1, 1, 5), [p_nu]])
        p = transform_multi(raw, 2)
        y = rng.uniform(-2, 2, 2)
        a, b = unc_reg_multi(raw, p, y, 2), unc_reg_multi_naive(p, y, 2)
        assert abs(a - b) <= 1e-9 * max(abs(a), 1e-300) or abs(a - b) < 1e-12


def test_vanishing_nu_gradient():
    raw = np.array([0.0, 0.0, 0.0, 0.0, 0.0, -20.0])
    g = grad_multi(raw, np.array([1.0, 2.0]))
    assert abs(g[-1]) <= 1e-8
    rng = np.random.default_rng(11)
    for _ in range(500):
        raw = np.concatenate([rng.uniform(-3, 3, 5), [rng.uniform(-60, -12)]])
        assert abs(grad_multi(raw, rng.uniform(-5, 5, 2))[-1]) <= 1e-8


def test_unc_reg_nu_gradient_constant():
    raw = np.array([0.0, 0.0, 0.0, 0.0, 0.0, -20.0])
    _, gu = multi_term_gradients(raw, np.array([1.2, 1.6]), 2)
    assert gu[-1] == -2.0
    rng = np.random.default_rng(12)
    for p_nu in np.concatenate([-np.geomspace(1e-3, 1e3, 50), np.geomspace(1e-3, 1e3, 50)]):
        raw = np.concatenate([rng.uniform(-2, 2, 5), [p_nu]])
        y = rng.uniform(-3, 3, 2)
        _, gu = multi_term_gradients(raw, y, 2)
        assert gu[-1] == -np.linalg.norm(y - raw[:2], axis=-1)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("lambda1", [0.0, 0.1])
def test_gradient_matches_finite_differences(n, lambda1):
    rng = np.random.default_rng(100 + n)
    m = n_outputs(n)
    worst = 0.0
    for _ in range(200):
        raw = rng.uniform(-2, 2, m)
        y = rng.uniform(-3, 3, n)
        fd = central_difference(lambda x: multi_total_loss(x, y, lambda1, 1.0, n), raw)
        analytic = grad_multi(raw, y, lambda1, 1.0, n, detach_error_in_U=False)
        worst = max(worst, float(np.max(relative_error(analytic, fd))))
    assert worst < 1e-6


def test_attached_unc_gradient_matches_fd():
    rng = np.random.default_rng(13)
    for _ in range(50):
        raw = rng.uniform(-2, 2, 6)
        y = rng.uniform(-3, 3, 2)
        f = lambda x: unc_reg_multi(x, transform_multi(x, 2), y, 2)
        _, gu = multi_term_gradients(raw, y, 2, detach_error_in_U=False)
        assert np.max(relative_error(gu, central_difference(f, raw))) < 1e-6


def test_batched_matches_rows():
    rng = np.random.default_rng(14)
    raw = rng.uniform(-2, 2, (5, 6))
    y = rng.uniform(-3, 3, (5, 2))
    loss, grad = batch_multi_loss_and_grad(raw, y, 0.1)
    rows = [multi_total_loss(r, t, 0.1) for r, t in zip(raw, y)]
    assert loss == pytest.approx(np.mean(rows), rel=1e-13)
    g_rows = np.array([grad_multi(r, t, 0.1) for r, t in zip(raw, y)])
    assert np.allclose(grad, g_rows / 5, rtol=1e-12, atol=1e-15)
