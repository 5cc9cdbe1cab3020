"""End-to-end gradient verification against finite differences.

The check freezes the Gaussian init, re-runs the whole pipeline (ascent,
projection, outer objective) at parameter perturbations theta +- h e_j, and
compares the central-difference hypergradient against the analytic
leader-plus-interaction gradient. Instances whose trajectories pass too close
to a projection kink, or whose ascent endpoint is stationary, are rejected
and resampled since the objective is not differentiable there.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diffmodel import Array, Batch, ModelParams, init_params, mlp_forward, task_loss
from .errors import ContractViolation
from .perturb import AdvConfig, NormKind, Perturbation, ProjMode, project_rows, sample_init
from .regularizers import RegularizerKind, adv_reg_loss, reg_grad_delta_sum
from .stackelberg import UnrollTape, make_adv_objective, stackelberg_gradient, unroll_forward

# Relative distance from a pre-projection point to the ball boundary below
# which an instance counts as kink-adjacent.
_KINK_MARGIN = 1e-3


@dataclass(frozen=True)
class Instance:
    """A sampled verification problem with a frozen perturbation init."""

    params: ModelParams
    batch: Batch
    cfg: AdvConfig
    kind: RegularizerKind
    delta0_seed: int
    delta0: Array


@dataclass(frozen=True)
class GradcheckRecord:
    index: int
    seed: int
    k_steps: int
    n_params: int
    kind: str
    boundary: bool
    resamples: int
    rel_err: float


def unrolled_endpoint(
    params: ModelParams, x: Array, cfg: AdvConfig, kind: RegularizerKind, delta0: Array
) -> Array:
    """Re-run the ascent from a fixed init under the current parameters."""
    cur = delta0
    for _ in range(cfg.k_steps):
        grad = reg_grad_delta_sum(params, x, cur, kind)
        cur = project_rows(cur + cfg.eta * grad, cfg.epsilon, cfg.norm)
    return cur


def total_objective(
    params: ModelParams, batch: Batch, cfg: AdvConfig, kind: RegularizerKind, delta0: Array
) -> float:
    """Task loss plus alpha times the regularizer at the ascent endpoint."""
    delta_k = unrolled_endpoint(params, batch.inputs, cfg, kind, delta0)
    clean = task_loss(mlp_forward(params, batch.inputs), batch.targets)
    return clean + cfg.alpha * adv_reg_loss(params, batch.inputs, delta_k, kind)


def hypergradient_fd(
    params: ModelParams,
    batch: Batch,
    cfg: AdvConfig,
    kind: RegularizerKind,
    delta0: Array,
    h: float = 1e-5,
) -> Array:
    """Central differences of the total objective over every parameter."""
    base = params.values
    grad = np.empty(base.size)
    for j in range(base.size):
        e = np.zeros(base.size)
        e[j] = h
        fp = total_objective(params.replace_values(base + e), batch, cfg, kind, delta0)
        fm = total_objective(params.replace_values(base - e), batch, cfg, kind, delta0)
        grad[j] = (fp - fm) / (2.0 * h)
    return grad


def kink_margin_ok(tape: UnrollTape, cfg: AdvConfig) -> bool:
    """True when every pre-projection point keeps a clear relative margin from
    the ball boundary, on both sides."""
    for pre in tape.pre_projections:
        if cfg.norm == NormKind.L2:
            dist = np.abs(np.sqrt((pre**2).sum(axis=1)) - cfg.epsilon)
            if np.any(dist <= _KINK_MARGIN * cfg.epsilon):
                return False
        else:
            dist = np.abs(np.abs(pre) - cfg.epsilon)
            if np.any(dist <= _KINK_MARGIN * cfg.epsilon):
                return False
    return True


def sample_instance(master_seed: int, index: int, k_steps: int | None = None) -> tuple[Instance, int]:
    """Draw a small random problem, resampling until the recorded trajectory is
    clear of kinks and the endpoint gradient is not degenerate. Returns the
    instance and how many draws were rejected."""
    resamples = 0
    for attempt in range(64):
        rng = np.random.default_rng([master_seed, index, attempt])
        regression = index % 4 == 3
        d = int(rng.integers(2, 9))
        hidden = int(rng.integers(4, 9))
        n_classes = int(rng.integers(2, 4))
        sizes = [d, hidden, 1 if regression else n_classes]
        if rng.random() < 0.5:
            sizes.insert(2, int(rng.integers(3, 7)))
        params = init_params(sizes, rng, scale=1.8)
        n = int(rng.integers(2, 4))
        x = rng.standard_normal((n, d)) * 1.5
        if regression:
            targets = rng.standard_normal(n)
            kind = RegularizerKind.SQUARED_DIFFERENCE
        else:
            targets = rng.integers(0, n_classes, size=n)
            kind = RegularizerKind.KL_DIVERGENCE
        batch = Batch(x, targets)
        boundary = index % 3 == 2
        sigma = 0.1
        epsilon = 0.6 * sigma * np.sqrt(d) if boundary else 1e3
        cfg = AdvConfig(
            alpha=1.0,
            epsilon=float(epsilon),
            eta=float(rng.uniform(0.3, 1.0)),
            sigma=sigma,
            k_steps=int(k_steps if k_steps is not None else rng.integers(1, 4)),
            norm=NormKind.L2,
            proj_mode=ProjMode.EXACT_JACOBIAN,
        )
        delta0_seed = int(rng.integers(0, 2**31))
        delta0 = sample_init(cfg.sigma, x.shape, np.random.default_rng(delta0_seed)).values
        obj = make_adv_objective(params, x, kind)
        tape = unroll_forward(params, x, cfg, obj, delta0_seed)
        endpoint_grad = obj.grad_delta(tape.deltas[-1], params.values) / n
        if kink_margin_ok(tape, cfg) and np.linalg.norm(endpoint_grad) > 1e-8:
            inst = Instance(
                params=params, batch=batch, cfg=cfg, kind=kind, delta0_seed=delta0_seed, delta0=delta0
            )
            return inst, resamples
        resamples += 1
    raise ContractViolation(f"could not sample a clean instance for index {index}")


def check_instance(master_seed: int, index: int, k_steps: int | None = None) -> GradcheckRecord:
    inst, resamples = sample_instance(master_seed, index, k_steps)
    analytic = stackelberg_gradient(
        inst.params, inst.batch, inst.cfg, inst.kind, inst.delta0_seed
    ).total
    fd = hypergradient_fd(inst.params, inst.batch, inst.cfg, inst.kind, inst.delta0)
    rel_err = float(np.linalg.norm(fd - analytic) / max(np.linalg.norm(fd), 1e-300))
    return GradcheckRecord(
        index=index,
        seed=master_seed,
        k_steps=inst.cfg.k_steps,
        n_params=inst.params.n_params,
        kind=inst.kind.value,
        boundary=inst.cfg.epsilon < 1.0,
        resamples=resamples,
        rel_err=rel_err,
    )


def run_gradcheck(
    instances: int = 20, k_steps: int | None = None, master_seed: int = 0
) -> list[GradcheckRecord]:
    if instances < 1:
        raise ContractViolation("need at least one instance")
    return [check_instance(master_seed, i, k_steps) for i in range(instances)]
