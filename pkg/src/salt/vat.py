"""Flat-gradient baselines: the constant-perturbation regularizer update and
label-using adversarial training.

Both run an inner ascent like the anticipating variant but treat its endpoint
as a constant when updating the model, so their leader gradient carries no
interaction term.
"""
from __future__ import annotations

import numpy as np

from .diffmodel import (
    Array,
    Batch,
    ModelParams,
    _backward,
    _check_labels,
    _forward,
    grad_params,
    mlp_forward,
    softmax,
    task_loss,
)
from .optim import OptimizerState, optimizer_step
from .perturb import AdvConfig, Perturbation, pga_step, project_rows, sample_init
from .regularizers import RegularizerKind, adv_reg_grad_params, adv_reg_loss


def _as_rng(rng: np.random.Generator | int) -> np.random.Generator:
    if isinstance(rng, (int, np.integer)):
        return np.random.default_rng(int(rng))
    return rng


def _ascend_reg(
    params: ModelParams, x: Array, cfg: AdvConfig, kind: RegularizerKind, delta: Perturbation
) -> Perturbation:
    for _ in range(cfg.k_steps):
        delta, _ = pga_step(params, x, delta, cfg, kind)
    return delta


def _ascend_task(
    params: ModelParams, batch: Batch, cfg: AdvConfig, delta: Perturbation
) -> Perturbation:
    for _ in range(cfg.k_steps):
        out, acts = _forward(params, batch.inputs + delta.values)
        seed = _task_seed_sum(params, out, batch.targets)
        _, gdelta = _backward(params, acts, seed)
        pre = delta.values + cfg.eta * gdelta
        delta = Perturbation(project_rows(pre, cfg.epsilon, cfg.norm), cfg.norm)
    return delta


def vat_inner_maximize(
    params: ModelParams,
    x: Array,
    cfg: AdvConfig,
    kind: RegularizerKind,
    rng: np.random.Generator | int,
) -> Perturbation:
    """Gaussian init followed by k_steps projected ascent steps on the regularizer."""
    x = np.asarray(x, dtype=np.float64)
    delta = sample_init(cfg.sigma, x.shape, _as_rng(rng))
    return _ascend_reg(params, x, cfg, kind, delta)


def vat_gradient(
    params: ModelParams,
    batch: Batch,
    delta: Perturbation,
    cfg: AdvConfig,
    kind: RegularizerKind,
    detach_clean: bool = False,
) -> Array:
    """Task-loss gradient plus alpha times the regularizer's parameter gradient,
    with delta held constant."""
    clean = grad_params(params, batch)
    if cfg.alpha == 0.0:
        return clean
    reg = adv_reg_grad_params(params, batch.inputs, delta.values, kind, detach_clean)
    return clean + cfg.alpha * reg


def _task_seed_sum(params: ModelParams, out: Array, targets: Array) -> Array:
    """d(sum of per-example task losses)/d(raw output)."""
    if params.output_dim == 1:
        t = np.asarray(targets, dtype=np.float64)
        return (2.0 * (out[:, 0] - t))[:, None]
    labels = _check_labels(targets, out.shape[1])
    seed = softmax(out)
    seed[np.arange(out.shape[0]), labels] -= 1.0
    return seed


def adv_inner_maximize(
    params: ModelParams,
    batch: Batch,
    cfg: AdvConfig,
    rng: np.random.Generator | int,
) -> Perturbation:
    """Label-using ascent: each example climbs its own task loss instead of the
    clean/perturbed divergence."""
    delta = sample_init(cfg.sigma, batch.inputs.shape, _as_rng(rng))
    return _ascend_task(params, batch, cfg, delta)


def vat_training_step(
    params: ModelParams,
    batch: Batch,
    cfg: AdvConfig,
    kind: RegularizerKind,
    opt_state: OptimizerState,
    rng: np.random.Generator | int,
) -> tuple[ModelParams, OptimizerState, dict]:
    """One flat-gradient update: inner ascent, then a leader step that treats
    the perturbation as data."""
    x = batch.inputs
    delta = sample_init(cfg.sigma, x.shape, _as_rng(rng))
    delta0_sum = float(delta.values.sum())
    delta = _ascend_reg(params, x, cfg, kind, delta)
    grad = vat_gradient(params, batch, delta, cfg, kind)
    new_params, new_state = optimizer_step(params, opt_state, grad)
    stats = {
        "clean_loss": task_loss(mlp_forward(params, x), batch.targets),
        "reg_value": adv_reg_loss(params, x, delta.values, kind),
        "delta_norm": float(np.sqrt((delta.values**2).sum(axis=1)).mean()),
        "delta0_sum": delta0_sum,
    }
    return new_params, new_state, stats


def adv_training_step(
    params: ModelParams,
    batch: Batch,
    cfg: AdvConfig,
    opt_state: OptimizerState,
    rng: np.random.Generator | int,
) -> tuple[ModelParams, OptimizerState, dict]:
    """Adversarial-training update: clean task gradient plus alpha times the
    task gradient at the attacked inputs, delta held constant."""
    x = batch.inputs
    delta = sample_init(cfg.sigma, x.shape, _as_rng(rng))
    delta0_sum = float(delta.values.sum())
    cur = _ascend_task(params, batch, cfg, delta)
    attacked = Batch(inputs=x + cur.values, targets=batch.targets)
    grad = grad_params(params, batch) + cfg.alpha * grad_params(params, attacked)
    new_params, new_state = optimizer_step(params, opt_state, grad)
    stats = {
        "clean_loss": task_loss(mlp_forward(params, x), batch.targets),
        "reg_value": task_loss(mlp_forward(params, attacked.inputs), batch.targets),
        "delta_norm": float(np.sqrt((cur.values**2).sum(axis=1)).mean()),
        "delta0_sum": delta0_sum,
    }
    return new_params, new_state, stats
