"""Perturbation lifecycle: Gaussian init, norm-ball projection, ascent steps.

Each example carries its own perturbation row, constrained independently
(per-example norm ball). The projection is exact; its Jacobian is available
for differentiation through the ascent, with an optional straight-through
mode that pretends the projection is the identity.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .diffmodel import Array, ModelParams
from .errors import ContractViolation
from .regularizers import RegularizerKind, reg_grad_delta_sum

# Norms within this relative slack of epsilon count as already projected, so
# re-projecting a projected vector is a bit-exact no-op.
_PROJ_SLACK = 1e-12


class NormKind(str, Enum):
    L2 = "L2"
    LINF = "LInf"


class ProjMode(str, Enum):
    EXACT_JACOBIAN = "ExactJacobian"
    STRAIGHT_THROUGH = "StraightThrough"


@dataclass(frozen=True)
class AdvConfig:
    """Knobs for the inner maximization.

    alpha weights the regularizer in the outer objective, epsilon is the
    per-example ball radius, eta the ascent step size, sigma the init scale,
    k_steps the number of ascent steps. fd_radius_scale controls the radius
    of finite-difference curvature probes.
    """

    alpha: float = 1.0
    epsilon: float = 1.0
    eta: float = 1e-3
    sigma: float = 1e-4
    k_steps: int = 2
    norm: NormKind = NormKind.L2
    proj_mode: ProjMode = ProjMode.EXACT_JACOBIAN
    fd_radius_scale: float = 1e-4

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.sigma < 0 or self.eta < 0:
            raise ContractViolation("alpha, sigma and eta must be non-negative")
        if self.epsilon <= 0:
            raise ContractViolation("epsilon must be positive")
        if self.k_steps < 0:
            raise ContractViolation("k_steps must be >= 0")
        if self.fd_radius_scale <= 0:
            raise ContractViolation("fd_radius_scale must be positive")
        object.__setattr__(self, "norm", NormKind(self.norm))
        object.__setattr__(self, "proj_mode", ProjMode(self.proj_mode))


@dataclass(frozen=True)
class Perturbation:
    """Perturbation rows (n, d); norm records the constraint it was projected under."""

    values: Array
    norm: NormKind | None = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2:
            raise ContractViolation("perturbation values must be an (n, d) matrix")


def sample_init(sigma: float, shape: tuple[int, int], rng: np.random.Generator) -> Perturbation:
    """i.i.d. N(0, sigma^2) entries, not yet projected."""
    if sigma < 0:
        raise ContractViolation("sigma must be non-negative")
    return Perturbation(values=rng.standard_normal(shape) * sigma, norm=None)


# ---------- projection ----------


def project_rows(values: Array, epsilon: float, norm: NormKind) -> Array:
    """Project each row onto the epsilon ball. Idempotent bit-exactly."""
    if epsilon <= 0:
        raise ContractViolation("epsilon must be positive")
    if norm == NormKind.L2:
        norms = np.sqrt((values**2).sum(axis=1))
        scale = np.where(norms > epsilon * (1.0 + _PROJ_SLACK), epsilon / np.maximum(norms, 1e-300), 1.0)
        return values * scale[:, None]
    if norm == NormKind.LINF:
        return np.clip(values, -epsilon, epsilon)
    raise ContractViolation(f"unknown norm: {norm!r}")


def project(v: Array, epsilon: float, norm: NormKind) -> Array:
    """Single-vector form of project_rows."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ContractViolation("project expects a vector; use project_rows for batches")
    return project_rows(v[None, :], epsilon, norm)[0]


def project_jvp_rows(
    values: Array, tangent: Array, epsilon: float, norm: NormKind, mode: ProjMode
) -> Array:
    """Apply the projection Jacobian at each row of values to the matching tangent row.

    The Jacobian is symmetric for both norms, so this serves as both the
    forward (JVP) and transposed (VJP) map. At the measure-zero kink where a
    row sits exactly on the boundary, the interior branch is used.
    """
    if tangent.shape != values.shape:
        raise ContractViolation("tangent must match the perturbation shape")
    if mode == ProjMode.STRAIGHT_THROUGH:
        return tangent.copy()
    if mode != ProjMode.EXACT_JACOBIAN:
        raise ContractViolation(f"unknown projection mode: {mode!r}")
    if norm == NormKind.L2:
        norms = np.sqrt((values**2).sum(axis=1))
        active = norms > epsilon * (1.0 + _PROJ_SLACK)
        out = tangent.copy()
        if np.any(active):
            v = values[active]
            u = tangent[active]
            nrm = norms[active][:, None]
            radial = (v * u).sum(axis=1, keepdims=True) / nrm**2
            out[active] = (epsilon / nrm) * (u - v * radial)
        return out
    if norm == NormKind.LINF:
        return np.where(np.abs(values) > epsilon, 0.0, tangent)
    raise ContractViolation(f"unknown norm: {norm!r}")


def project_jvp(v: Array, u: Array, epsilon: float, norm: NormKind, mode: ProjMode) -> Array:
    v = np.asarray(v, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if v.ndim != 1 or u.shape != v.shape:
        raise ContractViolation("project_jvp expects matching vectors")
    return project_jvp_rows(v[None, :], u[None, :], epsilon, norm, mode)[0]


# ---------- ascent step ----------


def pga_step(
    params: ModelParams,
    x: Array,
    delta: Perturbation,
    cfg: AdvConfig,
    kind: RegularizerKind,
) -> tuple[Perturbation, Array]:
    """One projected ascent step on the per-example regularizer.

    Returns the projected perturbation and the pre-projection iterate (the
    point at which the projection Jacobian is later evaluated).
    """
    grad = reg_grad_delta_sum(params, x, delta.values, kind)
    pre = delta.values + cfg.eta * grad
    nxt = project_rows(pre, cfg.epsilon, cfg.norm)
    return Perturbation(values=nxt, norm=cfg.norm), pre
