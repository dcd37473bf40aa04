"""Toy stage-partitioned objectives and their synthetic datasets.

Two model families, both differentiable end to end and partitioned into n
parameter stages so that every stage can be read at its own version:

* a stack of n affine+tanh stages ending in an affine head (mean squared
  error or softmax cross-entropy against fixed synthetic targets);
* a coupled quadratic 0.5*|A theta - target|^2 whose Hessian spectrum is
  chosen at construction, handy because its minimizer is known in closed
  form.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .backend import kernels


class NonFiniteGradientError(RuntimeError):
    def __init__(self, stage: int, what: str = "gradient"):
        self.stage = stage
        super().__init__(f"non-finite {what} at stage {stage}")


def _check_finite(loss: float, grads: Sequence[np.ndarray]) -> None:
    for idx, g in enumerate(grads, start=1):
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(idx)
    if not np.isfinite(loss):
        raise NonFiniteGradientError(0, "loss")


def _split(flat: np.ndarray, sizes: Sequence[int]) -> list[np.ndarray]:
    out = []
    pos = 0
    for s in sizes:
        out.append(flat[pos : pos + s])
        pos += s
    return out


@dataclass(frozen=True)
class StageMlp:
    """n affine stages with tanh between them; the final stage is affine."""

    dims: tuple[int, ...]
    loss_kind: str = "mse"  # "mse" or "xent"

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ValueError("dims needs at least input and output widths")
        if self.loss_kind not in ("mse", "xent"):
            raise ValueError("loss_kind must be 'mse' or 'xent'")

    @property
    def n_stages(self) -> int:
        return len(self.dims) - 1

    @property
    def stage_sizes(self) -> tuple[int, ...]:
        return tuple(
            self.dims[j] * self.dims[j + 1] + self.dims[j + 1]
            for j in range(self.n_stages)
        )

    def init_params(self, rng: np.random.Generator) -> list[np.ndarray]:
        params = []
        for j in range(self.n_stages):
            din, dout = self.dims[j], self.dims[j + 1]
            w = rng.normal(0.0, 1.0 / np.sqrt(din), size=din * dout)
            b = np.zeros(dout)
            params.append(np.concatenate([w, b]))
        return params

    def loss_and_grads(
        self, stage_params: Sequence[np.ndarray], x: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        theta = np.concatenate(stage_params)
        if self.loss_kind == "mse":
            loss, grad = kernels.mlp_value_grad(self.dims, theta, x, y, None, 0)
        else:
            loss, grad = kernels.mlp_value_grad(
                self.dims, theta, x, None, y.astype(np.int64), 1
            )
        grads = _split(grad, self.stage_sizes)
        _check_finite(loss, grads)
        return loss, grads

    def forward(self, stage_params: Sequence[np.ndarray], x: np.ndarray) -> np.ndarray:
        """Plain forward pass (numpy), used for dataset generation."""
        h = x
        for j in range(self.n_stages):
            din, dout = self.dims[j], self.dims[j + 1]
            flat = stage_params[j]
            w = flat[: din * dout].reshape(din, dout)
            b = flat[din * dout :]
            h = h @ w + b
            if j < self.n_stages - 1:
                h = np.tanh(h)
        return h


@dataclass(frozen=True)
class CoupledQuadratic:
    """0.5 * |A theta - target|^2 averaged over rows and the batch.

    A mixes all stages, so a gradient evaluated at mixed-version parameters
    differs stage by stage. The Hessian is A^T A / rows with the spectrum
    passed at construction.
    """

    a: np.ndarray
    stage_sizes: tuple[int, ...]

    @property
    def n_stages(self) -> int:
        return len(self.stage_sizes)

    @property
    def dim(self) -> int:
        return int(self.a.shape[1])

    @staticmethod
    def create(
        n_stages: int,
        dim_per_stage: int,
        rng: np.random.Generator,
        eig_low: float = 0.5,
        eig_high: float = 1.5,
    ) -> "CoupledQuadratic":
        dim = n_stages * dim_per_stage
        q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
        eigs = np.linspace(eig_low, eig_high, dim)
        a = np.diag(np.sqrt(eigs * dim)) @ q
        return CoupledQuadratic(a=a, stage_sizes=(dim_per_stage,) * n_stages)

    def init_params(self, rng: np.random.Generator) -> list[np.ndarray]:
        return [rng.normal(0.0, 1.0, size=s) for s in self.stage_sizes]

    def loss_and_grads(
        self, stage_params: Sequence[np.ndarray], x: np.ndarray, y: np.ndarray
    ) -> tuple[float, list[np.ndarray]]:
        theta = np.concatenate(stage_params)
        loss, grad = kernels.quad_value_grad(self.a, theta, y)
        grads = _split(grad, self.stage_sizes)
        _check_finite(loss, grads)
        return loss, grads


@dataclass(frozen=True)
class ToyTask:
    """Fixed synthetic dataset plus its deterministic micro-batch partition.

    The partition is a function of (seed, step) only, so concurrent update
    rules always see identical data order.
    """

    model: object
    inputs: np.ndarray
    targets: np.ndarray
    n: int
    micro_batch_size: int
    seed: int

    def __post_init__(self):
        if len(self.inputs) != self.n * self.micro_batch_size:
            raise ValueError("dataset size must be n * micro_batch_size")

    def micro_batches(self, step: int) -> list[tuple[np.ndarray, np.ndarray]]:
        rng = np.random.default_rng([self.seed, step])
        perm = rng.permutation(len(self.inputs))
        b = self.micro_batch_size
        out = []
        for i in range(self.n):
            idx = perm[i * b : (i + 1) * b]
            out.append((self.inputs[idx], self.targets[idx]))
        return out

    def init_params(self) -> list[np.ndarray]:
        rng = np.random.default_rng([self.seed, 0xC0])
        return self.model.init_params(rng)


def make_quadratic_task(
    n: int,
    micro_batch_size: int = 2,
    seed: int = 0,
    dim_per_stage: int = 3,
    eig_low: float = 0.5,
    eig_high: float = 1.5,
) -> ToyTask:
    rng = np.random.default_rng([seed, 0xA0])
    model = CoupledQuadratic.create(n, dim_per_stage, rng, eig_low, eig_high)
    size = n * micro_batch_size
    targets = rng.normal(0.0, 1.0, size=(size, model.a.shape[0]))
    inputs = np.zeros((size, 1))
    return ToyTask(model, inputs, targets, n, micro_batch_size, seed)


def make_mlp_task(
    n: int,
    micro_batch_size: int = 2,
    seed: int = 0,
    width: int = 6,
    in_dim: int = 4,
    out_dim: int = 2,
    loss_kind: str = "mse",
    noise: float = 0.05,
) -> ToyTask:
    dims = (in_dim,) + (width,) * (n - 1) + (out_dim,)
    model = StageMlp(dims=dims, loss_kind=loss_kind)
    rng = np.random.default_rng([seed, 0xB0])
    size = n * micro_batch_size
    inputs = rng.normal(0.0, 1.0, size=(size, in_dim))
    teacher = model.init_params(np.random.default_rng([seed, 0xB1]))
    clean = model.forward(teacher, inputs)
    if loss_kind == "mse":
        targets = clean + noise * rng.normal(size=clean.shape)
    else:
        targets = np.argmax(clean, axis=1).astype(np.int64)
    return ToyTask(model, inputs, targets, n, micro_batch_size, seed)


def least_squares_optimum(task: ToyTask) -> tuple[np.ndarray, float]:
    """Minimizer and minimum loss of a quadratic task's full objective."""
    model = task.model
    if not isinstance(model, CoupledQuadratic):
        raise TypeError("closed-form optimum exists for the quadratic task only")
    a = model.a
    mean_target = task.targets.mean(axis=0)
    theta, *_ = np.linalg.lstsq(a, mean_target, rcond=None)
    m = a.shape[0]
    diffs = task.targets - a @ theta
    loss = float((diffs**2).sum() / (2.0 * m * len(task.targets)))
    return theta, loss
