"""Small dense networks with hand-written forward and backward passes.

Everything downstream (regularizers, the unrolled inner ascent, gradient
checks) differentiates through this model twice, so the activation has to be
smooth. Hidden layers use tanh; the output layer is linear. A network whose
last layer has width 1 is treated as a regression head returning scalars,
anything wider is a classification head returning logits.

Parameters live in a single flat float64 vector plus shape metadata, which
keeps optimizer state, finite differencing and checkpointing trivial.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractViolation

Array = np.ndarray


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector with (rows, cols) shape metadata.

    shapes lists weight and bias shapes in layer order:
    (d_in, d_1), (1, d_1), (d_1, d_2), (1, d_2), ...
    values concatenates the row-major entries in the same order.
    """

    values: Array
    shapes: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        shapes = tuple((int(r), int(c)) for r, c in self.shapes)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shapes", shapes)
        if values.ndim != 1:
            raise ContractViolation("parameter values must be a flat vector")
        expected = sum(r * c for r, c in shapes)
        if values.size != expected:
            raise ContractViolation(
                f"parameter vector has {values.size} entries, shapes require {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise ContractViolation("parameter vector contains non-finite entries")

    @property
    def n_params(self) -> int:
        return int(self.values.size)

    @property
    def input_dim(self) -> int:
        return self.shapes[0][0]

    @property
    def output_dim(self) -> int:
        return self.shapes[-1][1]

    def replace_values(self, values: Array) -> "ModelParams":
        return ModelParams(values=values, shapes=self.shapes)


@dataclass(frozen=True)
class Batch:
    """Inputs (n, d) with integer labels or float targets (n,)."""

    inputs: Array
    targets: Array

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        targets = np.asarray(self.targets)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ContractViolation("batch inputs must be a non-empty (n, d) matrix")
        if targets.ndim != 1 or targets.shape[0] != inputs.shape[0]:
            raise ContractViolation("targets must be a vector matching the batch size")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class ModelOutput:
    """Either logits (n, C) for classification or scalars (n,) for regression."""

    logits: Array | None = None
    scalars: Array | None = None

    @property
    def is_classification(self) -> bool:
        return self.logits is not None

    @property
    def n(self) -> int:
        out = self.logits if self.logits is not None else self.scalars
        return out.shape[0]


def layer_sizes(params: ModelParams) -> list[int]:
    """Recover [d_in, d_1, ..., d_out] from the shape metadata."""
    weights = params.shapes[0::2]
    return [weights[0][0]] + [w[1] for w in weights]


def init_params(sizes: Sequence[int], rng: np.random.Generator, scale: float = 1.0) -> ModelParams:
    """Glorot-normal weights (scaled), zero biases."""
    if len(sizes) < 2:
        raise ContractViolation("need at least an input and an output layer size")
    shapes: list[tuple[int, int]] = []
    chunks: list[Array] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        std = scale * np.sqrt(2.0 / (fan_in + fan_out))
        w = rng.standard_normal((fan_in, fan_out)) * std
        b = np.zeros((1, fan_out))
        shapes += [(fan_in, fan_out), (1, fan_out)]
        chunks += [w.ravel(), b.ravel()]
    return ModelParams(values=np.concatenate(chunks), shapes=tuple(shapes))


def unflatten(params: ModelParams) -> list[tuple[Array, Array]]:
    """Split the flat vector into (W, b) pairs. Views, not copies."""
    mats: list[Array] = []
    off = 0
    for r, c in params.shapes:
        mats.append(params.values[off : off + r * c].reshape(r, c))
        off += r * c
    return list(zip(mats[0::2], mats[1::2]))


def _flatten_grads(grads: Sequence[Array]) -> Array:
    return np.concatenate([g.ravel() for g in grads])


# ---------- forward / backward engine ----------


def _forward(params: ModelParams, inputs: Array) -> tuple[Array, list[Array]]:
    """Returns (raw output matrix, activations). acts[l] is the input to layer l."""
    layers = unflatten(params)
    a = inputs
    acts = [a]
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        a = np.tanh(z) if i < len(layers) - 1 else z
        if i < len(layers) - 1:
            acts.append(a)
    return a, acts


def _backward(
    params: ModelParams, acts: list[Array], dout: Array
) -> tuple[Array, Array]:
    """Backprop a seed on the raw output. Returns (grad wrt values, grad wrt inputs)."""
    layers = unflatten(params)
    grads: list[Array | None] = [None] * (2 * len(layers))
    g = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[2 * i] = acts[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0, keepdims=True)
        g = g @ w.T
        if i > 0:
            g = g * (1.0 - acts[i] ** 2)  # tanh'
    return _flatten_grads(grads), g  # type: ignore[arg-type]


def mlp_forward(params: ModelParams, inputs: Array) -> ModelOutput:
    """Run the network. Raises on an input-width mismatch."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2:
        raise ContractViolation("inputs must be an (n, d) matrix")
    if inputs.shape[1] != params.input_dim:
        raise ContractViolation(
            f"input width {inputs.shape[1]} does not match first layer width {params.input_dim}"
        )
    out, _ = _forward(params, inputs)
    if params.output_dim == 1:
        return ModelOutput(scalars=out[:, 0])
    return ModelOutput(logits=out)


# ---------- probability and loss helpers ----------


def softmax(logits: Array) -> Array:
    """Numerically stable softmax over the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    e = np.exp(z - m)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: Array) -> Array:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=-1, keepdims=True)
    s = z - m
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _check_labels(targets: Array, n_classes: int) -> Array:
    labels = np.asarray(targets)
    if not np.issubdtype(labels.dtype, np.integer):
        as_int = labels.astype(np.int64)
        if not np.array_equal(as_int, labels):
            raise ContractViolation("classification targets must be integer labels")
        labels = as_int
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ContractViolation(
            f"label out of range for {n_classes} classes: [{labels.min()}, {labels.max()}]"
        )
    return labels


def task_loss(output: ModelOutput, targets: Array) -> float:
    """Batch-mean cross entropy (classification) or squared error (regression)."""
    if output.is_classification:
        labels = _check_labels(targets, output.logits.shape[1])
        if labels.shape[0] != output.n:
            raise ContractViolation("targets do not match batch size")
        logp = log_softmax(output.logits)
        return float(-logp[np.arange(labels.size), labels].mean())
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != output.scalars.shape:
        raise ContractViolation("targets do not match batch size")
    return float(((output.scalars - targets) ** 2).mean())


def _task_loss_seed(params: ModelParams, out: Array, targets: Array) -> Array:
    """d(batch-mean task loss)/d(raw output)."""
    n = out.shape[0]
    if params.output_dim == 1:
        t = np.asarray(targets, dtype=np.float64)
        return (2.0 * (out[:, 0] - t) / n)[:, None]
    labels = _check_labels(targets, out.shape[1])
    seed = softmax(out)
    seed[np.arange(n), labels] -= 1.0
    return seed / n


def grad_params(params: ModelParams, batch: Batch) -> Array:
    """Gradient of the batch-mean task loss with respect to the flat parameters."""
    out, acts = _forward(params, batch.inputs)
    seed = _task_loss_seed(params, out, batch.targets)
    gtheta, _ = _backward(params, acts, seed)
    return gtheta


def grad_input(
    params: ModelParams,
    inputs: Array,
    objective: str,
    *,
    targets: Array | None = None,
    reference: ModelOutput | None = None,
) -> Array:
    """Gradient of a batch-mean scalar objective with respect to the inputs.

    objective selects what is differentiated:
      "task_loss"          needs targets
      "kl_divergence"      needs reference (clean-branch output); KL(ref || f(inputs))
      "squared_difference" needs reference; (ref - f(inputs))^2
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    out, acts = _forward(params, inputs)
    n = out.shape[0]
    if objective == "task_loss":
        if targets is None:
            raise ContractViolation("task_loss objective needs targets")
        seed = _task_loss_seed(params, out, targets)
    elif objective == "kl_divergence":
        if reference is None or reference.logits is None:
            raise ContractViolation("kl_divergence objective needs a classification reference")
        p = softmax(reference.logits)
        seed = (softmax(out) - p) / n
    elif objective == "squared_difference":
        if reference is None or reference.scalars is None:
            raise ContractViolation("squared_difference objective needs a regression reference")
        seed = (2.0 * (out[:, 0] - reference.scalars) / n)[:, None]
    else:
        raise ContractViolation(f"unknown objective selector: {objective!r}")
    _, ginputs = _backward(params, acts, seed)
    return ginputs


# ---------- checkpoints ----------


def save_checkpoint(params: ModelParams, path: str) -> None:
    """JSON checkpoint: {"shapes": [[r, c], ...], "values": [...]} in flat order."""
    payload = {
        "shapes": [[r, c] for r, c in params.shapes],
        "values": [float(v) for v in params.values],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path: str) -> ModelParams:
    with open(path) as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or "shapes" not in payload or "values" not in payload:
        raise ContractViolation("checkpoint must contain 'shapes' and 'values'")
    shapes = tuple((int(r), int(c)) for r, c in payload["shapes"])
    return ModelParams(values=np.asarray(payload["values"], dtype=np.float64), shapes=shapes)
