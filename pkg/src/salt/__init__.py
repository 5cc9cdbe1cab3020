"""Adversarial regularization as a leader/follower game.

The leader updates model parameters against an adversary that perturbs the
inputs by a few steps of projected gradient ascent on a divergence between
clean and perturbed predictions. The leader's gradient either treats the
perturbation as a constant (the flat baseline) or differentiates through the
unrolled ascent (the anticipating variant).
"""

from .diffmodel import (
    Batch,
    ModelOutput,
    ModelParams,
    grad_input,
    grad_params,
    init_params,
    load_checkpoint,
    mlp_forward,
    save_checkpoint,
    softmax,
    task_loss,
)
from .errors import ContractViolation
from .perturb import AdvConfig, NormKind, Perturbation, ProjMode, pga_step, project, project_jvp, sample_init
from .regularizers import RegularizerKind, adv_reg_grad_delta, adv_reg_grad_params, adv_reg_loss, kl_divergence
from .stackelberg import (
    InnerObjective,
    StackelbergGrad,
    UnrollTape,
    hvp_fd,
    interaction_adjoint,
    jacobian_forward_oracle,
    make_adv_objective,
    salt_training_step,
    stackelberg_gradient,
    unroll_forward,
)
from .vat import adv_inner_maximize, vat_gradient, vat_inner_maximize, vat_training_step
from .calibration import CalibrationReport, bin_predictions, confidence_of

__version__ = "0.1.0"

__all__ = [
    "AdvConfig",
    "Batch",
    "CalibrationReport",
    "ContractViolation",
    "InnerObjective",
    "ModelOutput",
    "ModelParams",
    "NormKind",
    "Perturbation",
    "ProjMode",
    "RegularizerKind",
    "StackelbergGrad",
    "UnrollTape",
    "adv_inner_maximize",
    "adv_reg_grad_delta",
    "adv_reg_grad_params",
    "adv_reg_loss",
    "bin_predictions",
    "confidence_of",
    "grad_input",
    "grad_params",
    "hvp_fd",
    "init_params",
    "interaction_adjoint",
    "jacobian_forward_oracle",
    "kl_divergence",
    "load_checkpoint",
    "make_adv_objective",
    "mlp_forward",
    "pga_step",
    "project",
    "project_jvp",
    "salt_training_step",
    "sample_init",
    "save_checkpoint",
    "softmax",
    "stackelberg_gradient",
    "task_loss",
    "unroll_forward",
    "vat_gradient",
    "vat_inner_maximize",
    "vat_training_step",
]
