"""Parameter containers shared by the model modules."""

from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, matmul


class Module:
    """Walks attributes in definition order to name parameters by dotted path."""

    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            yield from _walk(value, f"{prefix}{name}")

    def parameters(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def set_training(self, flag: bool) -> "Module":
        for value in vars(self).values():
            for m in _modules(value):
                m.set_training(flag)
        self.training = flag
        return self

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None


def _walk(value, path: str):
    if isinstance(value, Tensor):
        if value.requires_grad:
            yield path, value
    elif isinstance(value, Module):
        yield from value.named_parameters(path + ".")
    elif isinstance(value, (list, tuple)):
        for i, item in enumerate(value):
            yield from _walk(item, f"{path}.{i}")


def _modules(value):
    if isinstance(value, Module):
        yield value
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _modules(item)


def uniform_param(rng: np.random.Generator, shape, bound: float, dtype=np.float64) -> Tensor:
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype), requires_grad=True)


def fan_in_param(rng: np.random.Generator, shape, fan_in: int, dtype=np.float64) -> Tensor:
    return uniform_param(rng, shape, 1.0 / math.sqrt(fan_in), dtype)


def const_param(value: float, shape, dtype=np.float64) -> Tensor:
    return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True)


class Linear(Module):
    """``y = x @ weight + bias`` with ``weight`` stored as (in, out)."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, dtype=np.float64):
        self.weight = fan_in_param(rng, (n_in, n_out), n_in, dtype)
        self.bias = fan_in_param(rng, (n_out,), n_in, dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y
