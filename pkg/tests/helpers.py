"""Shared test fixtures: quadratic inner objectives with known derivatives."""
from __future__ import annotations

import numpy as np

from salt.stackelberg import InnerObjective


def quadratic_objective(a_mat: np.ndarray, b_mat: np.ndarray) -> InnerObjective:
    """g(delta, theta) = 0.5 * flat(delta)^T A flat(delta) + theta^T B^T flat(delta).

    A is (D, D) symmetric, B is (D, P). Gradients and Hessians are exact:
    d g / d delta = A flat(delta) + B theta, d g / d theta = B^T flat(delta),
    d2 g / d delta^2 = A, and the mixed matrix [i, j] = B[i, j].
    """
    a_mat = np.asarray(a_mat, dtype=np.float64)
    b_mat = np.asarray(b_mat, dtype=np.float64)
    if not np.allclose(a_mat, a_mat.T):
        raise ValueError("A must be symmetric")

    def _eval(delta: np.ndarray, theta: np.ndarray) -> float:
        f = delta.ravel()
        return float(0.5 * f @ a_mat @ f + theta @ b_mat.T @ f)

    def _grad_delta(delta: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return (a_mat @ delta.ravel() + b_mat @ theta).reshape(delta.shape)

    def _grad_params(delta: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return b_mat.T @ delta.ravel()

    return InnerObjective(
        eval=_eval,
        grad_delta=_grad_delta,
        grad_params=_grad_params,
        hess_delta_delta=lambda delta, theta: a_mat,
        hess_delta_theta=lambda delta, theta: b_mat,
    )


def random_quadratic(
    rng: np.random.Generator, n: int, d: int, p: int, scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray, InnerObjective]:
    """Random symmetric A and dense B, returned with the wrapped objective."""
    big_d = n * d
    raw = rng.normal(size=(big_d, big_d)) * scale
    a_mat = 0.5 * (raw + raw.T)
    b_mat = rng.normal(size=(big_d, p)) * scale
    return a_mat, b_mat, quadratic_objective(a_mat, b_mat)
