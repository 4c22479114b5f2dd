import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evireg.losses import (
    IncompatibleHeadError,
    LossWeights,
    batch_loss_and_grad,
    central_difference,
    evidence_reg,
    grad_check,
    grad_head,
    nll_loss,
    relative_error,
    term_gradients,
    total_loss,
    unc_reg,
    unc_reg_naive,
)
from evireg.nig import ActivationKind, NIGParams, RawHead, activate_head, marginal_params, student_t_logpdf

from oracles import marginal_density_quadrature

SP, RELU, EXP = ActivationKind.SOFTPLUS, ActivationKind.RELU, ActivationKind.EXP


def test_nll_example_against_quadrature():
    p = NIGParams(0, 1, 2, 1)
    # frozen value; the quadrature oracle pins it independently
    assert nll_loss(p, 1.0) == pytest.approx(1.5386881313, abs=1e-9)
    assert nll_loss(p, 1.0) == pytest.approx(-math.log(marginal_density_quadrature(1.0, p)), abs=1e-6)


def test_nll_equals_negative_student_t_logpdf():
    rng = np.random.default_rng(1)
    for _ in range(500):
        p = NIGParams(rng.uniform(-5, 5), rng.uniform(0.01, 10), rng.uniform(1.01, 20), rng.uniform(0.01, 10))
        y = rng.uniform(-10, 10)
        assert abs(nll_loss(p, y) + student_t_logpdf(y, marginal_params(p))) < 1e-10


def test_nll_minimized_at_gamma_and_translation_invariant():
    p = NIGParams(0.3, 1.2, 2.5, 0.8)
    ys = np.linspace(-3, 3, 6001)
    assert ys[np.argmin(nll_loss(p, ys))] == pytest.approx(0.3, abs=1e-3)
    base = nll_loss(NIGParams(0, 1, 2, 1), 1.0)
    for c in (-7.0, 2.5, 100.0):
        assert nll_loss(NIGParams(c, 1, 2, 1), 1.0 + c) == pytest.approx(base, abs=1e-12)


def test_evidence_reg_examples():
    assert evidence_reg(NIGParams(1, 2, 1.5, 1), 3.0) == 11.0
    assert evidence_reg(NIGParams(1, 2, 1.5, 1), 1.0) == 0.0
    assert evidence_reg(NIGParams(1, 2, 1.5, 1), 5.0) == 22.0


def test_evidence_reg_monotone():
    base = evidence_reg(NIGParams(0, 1, 2, 1), 1.5)
    assert evidence_reg(NIGParams(0, 1.1, 2, 1), 1.5) > base
    assert evidence_reg(NIGParams(0, 1, 2.1, 1), 1.5) > base


def test_unc_reg_examples():
    p = activate_head(RawHead(0, 0, -5, 0))
    assert unc_reg(RawHead(0, 0, -5, 0), p, 2.0) == 10.0
    assert unc_reg(RawHead(1, 0, 0, 0), activate_head(RawHead(1, 0, 0, 0)), 4.0) == 0.0
    raw = RawHead(0, 0, -40, 0)
    assert unc_reg(raw, activate_head(raw), 1.0) == 40.0
    # alpha - 1 = 4e-18 is lost next to 1, so the literal form cannot see it
    assert not np.isfinite(unc_reg_naive(activate_head(raw), 1.0))


def test_unc_reg_rejects_relu():
    raw = RawHead(0, 0, 1, 0)
    with pytest.raises(IncompatibleHeadError, match="ReLU"):
        unc_reg(raw, activate_head(raw, RELU), 1.0, RELU)
    with pytest.raises(IncompatibleHeadError):
        total_loss(raw, 1.0, LossWeights(0, 0.1), RELU)
    with pytest.raises(IncompatibleHeadError):
        grad_head(raw, 1.0, LossWeights(0, 0.1), RELU)


@pytest.mark.parametrize("kind", [SP, EXP])
def test_stable_and_naive_unc_reg_agree(kind):
    for o in np.linspace(-10, 20 if kind is SP else 3, 61):
        raw = RawHead(0.2, 0.1, o, -0.3)
        p = activate_head(raw, kind)
        stable = unc_reg(raw, p, 1.7, kind)
        naive = unc_reg_naive(p, 1.7)
        assert relative_error(stable, naive, floor=1e-300) < 1e-9 or abs(stable - naive) < 1e-12


def test_total_loss_reductions():
    raw = RawHead(0.3, -0.2, 0.5, 0.1)
    b = total_loss(raw, 1.2, LossWeights(0, 0))
    assert b.total == b.nll
    b = total_loss(raw, 1.2, LossWeights(0.01, 0))
    assert b.total - b.nll == pytest.approx(0.01 * b.evidence_reg, abs=1e-15)
    b = total_loss(RawHead(0, 0, 0, 0), 0.0, LossWeights(0.01, 0.1))
    assert b.unc_reg == 0 and b.evidence_reg == 0 and b.total == b.nll


def test_total_loss_linear_in_weights():
    raw = RawHead(0.3, -0.2, 0.5, 0.1)
    b = total_loss(raw, -0.7, LossWeights(0.3, 0.2))
    assert b.total == pytest.approx(b.nll + 0.3 * b.evidence_reg + 0.2 * b.unc_reg, rel=1e-15)


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(-1, 0)
    with pytest.raises(ValueError):
        LossWeights(0, float("nan"))


# gradient behaviour inside the HUA


def test_vanishing_alpha_gradient_example():
    g = grad_head(RawHead(0, 0, -40, 0), 2.0, LossWeights(0, 0))
    assert abs(g.d_o_alpha) <= 1e-12


def test_unc_reg_alpha_gradient_constant_example():
    _, _, g_unc = term_gradients(RawHead(0, 0, -40, 0), 2.0)
    assert g_unc.d_o_alpha == -2.0


@pytest.mark.parametrize("kind", [SP, EXP])
def test_vanishing_gradient_randomized(kind):
    rng = np.random.default_rng(7)
    n = 1000
    raw = RawHead(rng.uniform(-5, 5, n), rng.uniform(-3, 3, n), rng.uniform(-200, -30, n), rng.uniform(-3, 3, n))
    y = rng.uniform(-10, 10, n)
    g = grad_head(raw, y, LossWeights(0.01, 0), kind)
    assert np.max(np.abs(g.d_o_alpha)) <= 1e-10


def test_relu_gradient_exactly_zero():
    rng = np.random.default_rng(8)
    n = 1000
    raw = RawHead(rng.uniform(-5, 5, n), rng.uniform(-3, 3, n), rng.uniform(-50, -1e-9, n), rng.uniform(-3, 3, n))
    g = grad_head(raw, rng.uniform(-10, 10, n), LossWeights(0.01, 0), RELU)
    assert np.all(g.d_o_alpha == 0.0)


def test_unc_reg_gradient_is_minus_abs_error():
    rng = np.random.default_rng(9)
    o = np.concatenate([-np.geomspace(1e-6, 1e6, 500), np.geomspace(1e-6, 1e6, 500)])
    gamma = rng.uniform(-5, 5, o.size)
    y = rng.uniform(-5, 5, o.size)
    _, _, g = term_gradients(RawHead(gamma, np.zeros_like(o), o, np.zeros_like(o)), y)
    assert np.all(g.d_o_alpha + np.abs(y - gamma) == 0.0)


def test_exp_head_unc_gradient_limit():
    _, _, g = term_gradients(RawHead(0, 0, -40, 0), 2.0, EXP)
    assert g.d_o_alpha == pytest.approx(-2.0, rel=1e-15)


def test_detach_flag():
    raw = RawHead(0.0, 0.0, 1.5, 0.0)
    _, _, attached = term_gradients(raw, 2.0, detach_error_in_U=False)
    _, _, detached = term_gradients(raw, 2.0)
    assert detached.d_o_gamma == 0.0
    # pushes gamma away from y when o_alpha > 0
    assert attached.d_o_gamma == pytest.approx(1.5)


def test_sign_zero_convention():
    g = grad_head(RawHead(1.0, 0, 0.5, 0), 1.0, LossWeights(0.5, 0.5, detach_error_in_U=False))
    g_nll = grad_head(RawHead(1.0, 0, 0.5, 0), 1.0)
    assert g.d_o_gamma == g_nll.d_o_gamma == 0.0


# finite-difference agreement


def _fd_points(rng, n, kind):
    for _ in range(n):
        o = rng.uniform(-3, 3, 4)
        if kind is RELU and abs(o[2]) < 1e-3:
            o[2] += 0.01
        yield RawHead(*o), rng.uniform(-5, 5)


@pytest.mark.parametrize("kind", [SP, EXP, RELU])
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng({SP: 1, EXP: 2, RELU: 3}[kind])
    # finite differences see the full derivative, including through |y - gamma|
    w = LossWeights(0.01, 0.0 if kind is RELU else 0.1, detach_error_in_U=False)
    worst = 0.0
    for raw, y in _fd_points(rng, 1000, kind):
        analytic = grad_head(raw, y, w, kind).as_array()
        fd = grad_check(lambda r, yy: total_loss(r, yy, w, kind).total, raw, y).as_array()
        worst = max(worst, float(np.max(relative_error(analytic, fd))))
    assert worst < 1e-6


def test_detached_gradient_drops_only_the_gamma_path():
    rng = np.random.default_rng(4)
    for raw, y in _fd_points(rng, 200, SP):
        full = grad_head(raw, y, LossWeights(0.01, 0.1, detach_error_in_U=False)).as_array()
        det = grad_head(raw, y, LossWeights(0.01, 0.1)).as_array()
        assert np.array_equal(full[1:], det[1:])
        assert full[0] - det[0] == pytest.approx(0.1 * np.sign(y - raw.o_gamma) * raw.o_alpha, abs=1e-12)


def test_grad_check_on_quadratic():
    g = grad_check(lambda r, y: float(np.sum(r.as_array() ** 2)), RawHead(1, 1, 1, 1), 0.0)
    assert np.allclose(g.as_array(), 2.0, atol=1e-8)
    with pytest.raises(ValueError):
        grad_check(lambda r, y: 0.0, RawHead(1, 1, 1, 1), 0.0, h=0.0)


def test_central_difference_order_two():
    f = lambda x: float(np.sin(x[0]) * np.exp(x[1]))
    x = np.array([0.7, 0.3])
    exact = np.array([np.cos(0.7) * np.exp(0.3), np.sin(0.7) * np.exp(0.3)])
    e1 = np.abs(central_difference(f, x, 1e-2) - exact)
    e2 = np.abs(central_difference(f, x, 5e-3) - exact)
    assert np.all(e1 / e2 == pytest.approx(4.0, rel=0.02))


def test_central_difference_non_finite():
    with pytest.raises(FloatingPointError):
        central_difference(lambda x: float("nan"), np.zeros(2))


def test_batch_gradient_is_mean():
    rng = np.random.default_rng(5)
    raw = rng.uniform(-2, 2, (6, 4))
    y = rng.uniform(-3, 3, 6)
    w = LossWeights(0.01, 0.1)
    loss, grad = batch_loss_and_grad(raw, y, w)
    per = [total_loss(RawHead(*r), t, w).total for r, t in zip(raw, y)]
    assert loss == pytest.approx(np.mean(per), rel=1e-14)
    rows = np.array([grad_head(RawHead(*r), t, w).as_array() for r, t in zip(raw, y)])
    assert np.allclose(grad, rows / 6, rtol=1e-14, atol=0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=4, max_size=4), st.floats(-50, 50),
       st.sampled_from([SP, EXP]))
def test_gradients_finite(o, y, kind):
    g = grad_head(RawHead(*o), y, LossWeights(0.01, 0.1), kind).as_array()
    assert np.all(np.isfinite(g))
