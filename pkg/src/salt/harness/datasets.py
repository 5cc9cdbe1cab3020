"""Synthetic desk-scale datasets and CSV loading.

Generators return (train, test) Batch pairs drawn from one seeded stream, so
a fixed seed pins both splits.
"""
from __future__ import annotations

import csv

import numpy as np

from ..diffmodel import Array, Batch
from ..errors import ContractViolation


def _moon_points(n: int, noise_std: float, rng: np.random.Generator) -> tuple[Array, Array]:
    # class 0 on the upper unit arc, class 1 on a shifted lower arc
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, size=n0)
    t1 = rng.uniform(0.0, np.pi, size=n1)
    pts0 = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    pts1 = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    x = np.concatenate([pts0, pts1], axis=0)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    if noise_std > 0:
        x = x + rng.standard_normal(x.shape) * noise_std
    return x, y


def gen_two_moons(n_train: int, n_test: int, noise_std: float, seed: int) -> tuple[Batch, Batch]:
    """Two interleaved arcs; balanced classes; noise_std = 0 puts points exactly
    on the arcs."""
    if n_train < 1 or n_test < 1:
        raise ContractViolation("need at least one point per split")
    if noise_std < 0:
        raise ContractViolation("noise_std must be non-negative")
    rng = np.random.default_rng(seed)
    xtr, ytr = _moon_points(n_train, noise_std, rng)
    xte, yte = _moon_points(n_test, noise_std, rng)
    return Batch(xtr, ytr), Batch(xte, yte)


_BLOB_CENTERS = np.array([[0.0, 2.0], [2.0, -1.0], [-2.0, -1.0]])


def gen_blobs(n_train: int, n_test: int, noise_std: float, seed: int) -> tuple[Batch, Batch]:
    """Three Gaussian blobs, balanced as evenly as n allows."""
    if n_train < 1 or n_test < 1:
        raise ContractViolation("need at least one point per split")
    rng = np.random.default_rng(seed)

    def split(n: int) -> Batch:
        counts = [n // 3 + (1 if r < n % 3 else 0) for r in range(3)]
        xs, ys = [], []
        for c, cnt in enumerate(counts):
            xs.append(_BLOB_CENTERS[c] + rng.standard_normal((cnt, 2)) * noise_std)
            ys.append(np.full(cnt, c, dtype=np.int64))
        return Batch(np.concatenate(xs), np.concatenate(ys))

    return split(n_train), split(n_test)


def gen_sine_regression(n_train: int, n_test: int, noise_std: float, seed: int) -> tuple[Batch, Batch]:
    """y = sin(2 pi x) + noise on x in [-1, 1]."""
    if n_train < 1 or n_test < 1:
        raise ContractViolation("need at least one point per split")
    rng = np.random.default_rng(seed)

    def split(n: int) -> Batch:
        x = rng.uniform(-1.0, 1.0, size=(n, 1))
        y = np.sin(2.0 * np.pi * x[:, 0]) + rng.standard_normal(n) * noise_std
        return Batch(x, y)

    return split(n_train), split(n_test)


def save_csv(batch: Batch, path: str) -> None:
    """Feature columns then a target column, floats at 17 significant digits."""
    d = batch.inputs.shape[1]
    is_class = np.issubdtype(batch.targets.dtype, np.integer)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(d)] + ["target"])
        for i in range(batch.n):
            row = [format(v, ".17g") for v in batch.inputs[i]]
            row.append(str(int(batch.targets[i])) if is_class else format(batch.targets[i], ".17g"))
            writer.writerow(row)


def load_csv(path: str, kind: str = "auto") -> Batch:
    """Last column is the target. kind: auto | classification | regression;
    auto treats an integer-valued target column as class labels."""
    if kind not in ("auto", "classification", "regression"):
        raise ContractViolation(f"unknown dataset kind: {kind!r}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ContractViolation(f"{path}: empty file") from None
        width = len(header)
        if width < 2:
            raise ContractViolation(f"{path}: need at least one feature column and a target")
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width:
                raise ContractViolation(f"{path}:{lineno}: expected {width} columns, got {len(row)}")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ContractViolation(f"{path}:{lineno}: non-numeric value ({exc})") from None
    if not rows:
        raise ContractViolation(f"{path}: no data rows")
    data = np.asarray(rows, dtype=np.float64)
    x, target = data[:, :-1], data[:, -1]
    integral = np.all(np.floor(target) == target)
    if kind == "classification" and not integral:
        raise ContractViolation(f"{path}: classification requires integer-valued targets")
    if kind == "regression" or (kind == "auto" and not integral):
        return Batch(x, target)
    return Batch(x, target.astype(np.int64))
