"""Projection, its Jacobian, Gaussian init, and single ascent steps."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from salt.diffmodel import ModelParams
from salt.errors import ContractViolation
from salt.perturb import (
    AdvConfig,
    NormKind,
    Perturbation,
    ProjMode,
    pga_step,
    project,
    project_jvp,
    project_rows,
    sample_init,
)
from salt.regularizers import RegularizerKind


def test_project_l2_known_value():
    assert np.allclose(project(np.array([3.0, 4.0]), 1.0, NormKind.L2), [0.6, 0.8], atol=1e-15)
    # interior point untouched, bitwise
    v = np.array([0.3, -0.4])
    assert project(v, 1.0, NormKind.L2) is not v
    assert np.array_equal(project(v, 1.0, NormKind.L2), v)


def test_project_linf_known_value():
    got = project(np.array([3.0, -0.5, 1.0]), 1.0, NormKind.LINF)
    assert np.array_equal(got, [1.0, -0.5, 1.0])


@pytest.mark.parametrize("norm", list(NormKind))
def test_projection_idempotent_and_bounded(norm):
    rng = np.random.default_rng(0)
    for _ in range(25):
        n, d = int(rng.integers(1, 40)), int(rng.integers(1, 8))
        eps = float(rng.uniform(0.1, 3.0))
        v = rng.normal(size=(n, d)) * rng.uniform(0.01, 10)
        once = project_rows(v, eps, norm)
        twice = project_rows(once, eps, norm)
        assert np.array_equal(once, twice)  # bit-exact
        if norm == NormKind.L2:
            assert np.all(np.sqrt((once**2).sum(axis=1)) <= eps * (1 + 1e-12))
        else:
            assert np.all(np.abs(once) <= eps)


@pytest.mark.parametrize("norm", list(NormKind))
def test_projection_jacobian_matches_fd(norm):
    rng = np.random.default_rng(1)
    checked = 0
    while checked < 40:
        d = int(rng.integers(2, 7))
        eps = 1.0
        v = rng.normal(size=d) * rng.uniform(0.3, 3.0)
        # keep away from the kink where the derivative does not exist
        if norm == NormKind.L2:
            if abs(np.linalg.norm(v) - eps) < 1e-2:
                continue
        else:
            if np.any(np.abs(np.abs(v) - eps) < 1e-2):
                continue
        u = rng.normal(size=d)
        got = project_jvp(v, u, eps, norm, ProjMode.EXACT_JACOBIAN)
        h = 1e-7
        fd = (project(v + h * u, eps, norm) - project(v - h * u, eps, norm)) / (2 * h)
        assert np.linalg.norm(got - fd) <= 1e-6 * max(np.linalg.norm(fd), 1e-9)
        checked += 1


def test_projection_jacobian_symmetric():
    rng = np.random.default_rng(2)
    for norm in NormKind:
        for _ in range(20):
            d = 5
            v = rng.normal(size=d) * 3.0
            jac = np.stack(
                [project_jvp(v, e, 1.0, norm, ProjMode.EXACT_JACOBIAN) for e in np.eye(d)]
            )
            assert np.allclose(jac, jac.T, atol=1e-14)


def test_straight_through_is_identity():
    rng = np.random.default_rng(3)
    v = rng.normal(size=6) * 10
    u = rng.normal(size=6)
    assert np.array_equal(project_jvp(v, u, 0.5, NormKind.L2, ProjMode.STRAIGHT_THROUGH), u)


def test_sample_init_statistics():
    rng = np.random.default_rng(4)
    sigma = 0.37
    draw = sample_init(sigma, (2000, 50), rng).values
    assert abs(draw.std() - sigma) <= 0.01 * sigma
    assert abs(draw.mean()) <= 3 * sigma / np.sqrt(draw.size)
    assert sample_init(0.0, (5, 3), rng).values.sum() == 0.0


def test_pga_step_closed_form_linear_regression():
    # f(x) = w^T x: one step moves delta by 2 eta (w^T delta) w, then projects
    w = np.array([2.0, -1.0])
    p = ModelParams(values=np.array([w[0], w[1], 0.0]), shapes=((2, 1), (1, 1)))
    x = np.array([[1.0, 1.0], [0.5, -0.5]])
    delta = Perturbation(np.array([[0.1, 0.0], [0.0, 0.2]]), None)
    cfg = AdvConfig(epsilon=10.0, eta=0.05, sigma=0.0, k_steps=1)
    nxt, pre = pga_step(p, x, delta, cfg, RegularizerKind.SQUARED_DIFFERENCE)
    want = delta.values + 2 * cfg.eta * (delta.values @ w)[:, None] * w
    assert np.allclose(pre, want, atol=1e-14)
    assert np.array_equal(nxt.values, pre)  # interior: projection is identity


def test_pga_step_zero_delta_is_stationary():
    rng = np.random.default_rng(5)
    from salt.diffmodel import init_params

    p = init_params([2, 6, 3], rng)
    x = rng.normal(size=(4, 2))
    cfg = AdvConfig(epsilon=1.0, eta=0.5, sigma=0.0, k_steps=1)
    nxt, _ = pga_step(p, x, Perturbation(np.zeros((4, 2)), None), cfg, RegularizerKind.KL_DIVERGENCE)
    assert np.allclose(nxt.values, 0.0, atol=1e-12)


def test_pga_step_eta_zero_is_pure_projection():
    rng = np.random.default_rng(6)
    from salt.diffmodel import init_params

    p = init_params([2, 6, 3], rng)
    x = rng.normal(size=(3, 2))
    big = rng.normal(size=(3, 2)) * 5.0
    cfg = AdvConfig(epsilon=0.5, eta=0.0, sigma=0.0, k_steps=1)
    nxt, pre = pga_step(p, x, Perturbation(big, None), cfg, RegularizerKind.KL_DIVERGENCE)
    assert np.array_equal(pre, big)
    assert np.array_equal(nxt.values, project_rows(big, 0.5, NormKind.L2))


def test_adv_config_validation():
    with pytest.raises(ContractViolation):
        AdvConfig(epsilon=0.0)
    with pytest.raises(ContractViolation):
        AdvConfig(alpha=-1.0)
    with pytest.raises(ContractViolation):
        AdvConfig(k_steps=-1)
    with pytest.raises(ContractViolation):
        AdvConfig(eta=-0.5)
    cfg = AdvConfig(norm="LInf", proj_mode="StraightThrough")
    assert cfg.norm is NormKind.LINF and cfg.proj_mode is ProjMode.STRAIGHT_THROUGH


@settings(max_examples=100, deadline=None)
@given(
    st.integers(0, 10_000),
    st.sampled_from(list(NormKind)),
    st.floats(0.05, 5.0),
)
def test_projection_properties_random(seed, norm, eps):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(int(rng.integers(1, 12)), int(rng.integers(1, 9)))) * rng.uniform(0.01, 20)
    once = project_rows(v, eps, norm)
    assert np.array_equal(once, project_rows(once, eps, norm))
    if norm == NormKind.L2:
        assert np.all(np.sqrt((once**2).sum(axis=1)) <= eps * (1 + 1e-12))
        # direction is preserved for clipped rows
        norms = np.sqrt((v**2).sum(axis=1))
        for i in np.nonzero(norms > eps * (1 + 1e-12))[0]:
            cos = v[i] @ once[i] / (norms[i] * np.linalg.norm(once[i]))
            assert cos >= 1 - 1e-12
    else:
        assert np.all(np.abs(once) <= eps)
