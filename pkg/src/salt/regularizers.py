"""Smoothness regularizers comparing clean and perturbed predictions.

KL form for classification heads, squared-difference form for regression
heads. Parameter gradients flow through both the clean and the perturbed
branch unless detach_clean is set.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from .diffmodel import Array, ModelParams, _backward, _forward, log_softmax
from .errors import ContractViolation

# Probabilities at or below this are treated as an exact zero in p*log(p/q).
_PROB_FLOOR = 1e-300


class RegularizerKind(str, Enum):
    KL_DIVERGENCE = "KLDivergence"
    SQUARED_DIFFERENCE = "SquaredDifference"


def kl_divergence(p: Array, q: Array) -> float:
    """KL(p || q) for two probability vectors; q must be strictly positive."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ContractViolation("p and q must be probability vectors of equal length")
    if np.any(q <= 0.0):
        raise ContractViolation("q must have strictly positive entries")
    logp = np.log(np.maximum(p, _PROB_FLOOR))
    terms = np.where(p > _PROB_FLOOR, p * (logp - np.log(q)), 0.0)
    return float(terms.sum())


def _check_pair(params: ModelParams, x: Array, delta: Array, kind: RegularizerKind) -> tuple[Array, Array]:
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if x.ndim != 2 or delta.shape != x.shape:
        raise ContractViolation("delta must match the (n, d) shape of the inputs")
    if x.shape[1] != params.input_dim:
        raise ContractViolation("input width does not match the model")
    if kind == RegularizerKind.KL_DIVERGENCE and params.output_dim == 1:
        raise ContractViolation("KL regularizer needs a classification head")
    if kind == RegularizerKind.SQUARED_DIFFERENCE and params.output_dim != 1:
        raise ContractViolation("squared-difference regularizer needs a regression head")
    return x, delta


def _kl_rows(clean_out: Array, pert_out: Array) -> tuple[Array, Array, Array, Array]:
    """Per-example KL plus the pieces needed for its gradients."""
    logp = log_softmax(clean_out)
    logq = log_softmax(pert_out)
    p = np.exp(logp)
    diff = logp - logq
    terms = np.where(p > _PROB_FLOOR, p * diff, 0.0)
    return terms.sum(axis=1), p, np.exp(logq), diff


# Summed (per-example, unscaled) primitives. The follower ascends these; the
# public API below exposes the batch-mean versions.


def reg_value_sum(params: ModelParams, x: Array, delta: Array, kind: RegularizerKind) -> float:
    x, delta = _check_pair(params, x, delta, kind)
    clean, _ = _forward(params, x)
    pert, _ = _forward(params, x + delta)
    if kind == RegularizerKind.KL_DIVERGENCE:
        kl, _, _, _ = _kl_rows(clean, pert)
        return float(kl.sum())
    return float(((clean[:, 0] - pert[:, 0]) ** 2).sum())


def reg_grad_delta_sum(params: ModelParams, x: Array, delta: Array, kind: RegularizerKind) -> Array:
    """d(sum of per-example regularizers)/d(delta); row i touches only example i."""
    x, delta = _check_pair(params, x, delta, kind)
    clean, _ = _forward(params, x)
    pert, pert_acts = _forward(params, x + delta)
    if kind == RegularizerKind.KL_DIVERGENCE:
        _, p, q, _ = _kl_rows(clean, pert)
        seed = q - p
    else:
        seed = (-2.0 * (clean[:, 0] - pert[:, 0]))[:, None]
    _, gdelta = _backward(params, pert_acts, seed)
    return gdelta


def reg_grad_params_sum(
    params: ModelParams, x: Array, delta: Array, kind: RegularizerKind, detach_clean: bool = False
) -> Array:
    """d(sum of per-example regularizers)/d(theta) with delta held fixed."""
    x, delta = _check_pair(params, x, delta, kind)
    clean, clean_acts = _forward(params, x)
    pert, pert_acts = _forward(params, x + delta)
    if kind == RegularizerKind.KL_DIVERGENCE:
        kl, p, q, diff = _kl_rows(clean, pert)
        seed_pert = q - p
        seed_clean = p * (diff - kl[:, None])
    else:
        resid = clean[:, 0] - pert[:, 0]
        seed_pert = (-2.0 * resid)[:, None]
        seed_clean = (2.0 * resid)[:, None]
    gtheta, _ = _backward(params, pert_acts, seed_pert)
    if not detach_clean:
        gclean, _ = _backward(params, clean_acts, seed_clean)
        gtheta = gtheta + gclean
    return gtheta


# ---------- batch-mean API ----------


def adv_reg_loss(params: ModelParams, x: Array, delta: Array, kind: RegularizerKind) -> float:
    """Batch mean of the per-example regularizer. Exactly 0 at delta = 0."""
    n = np.asarray(x).shape[0]
    return reg_value_sum(params, x, delta, kind) / n


def adv_reg_grad_delta(params: ModelParams, x: Array, delta: Array, kind: RegularizerKind) -> Array:
    n = np.asarray(x).shape[0]
    return reg_grad_delta_sum(params, x, delta, kind) / n


def adv_reg_grad_params(
    params: ModelParams, x: Array, delta: Array, kind: RegularizerKind, detach_clean: bool = False
) -> Array:
    n = np.asarray(x).shape[0]
    return reg_grad_params_sum(params, x, delta, kind, detach_clean) / n
