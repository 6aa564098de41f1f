"""Numeric primitives used by the model, backed by torch.

Thin functional wrappers: shapes are checked up front so that mismatches are
reported with both operand shapes, and ``grad`` gives reverse-mode gradients
of a scalar with zeros for parameters the scalar does not depend on.
"""

from __future__ import annotations

from typing import Sequence

import torch

DEFAULT_DTYPE = torch.float32


class ShapeError(ValueError):
    pass


def tensor(data, requires_grad: bool = False, dtype: torch.dtype = DEFAULT_DTYPE) -> torch.Tensor:
    return torch.tensor(data, dtype=dtype, requires_grad=requires_grad)


def _shape(x: torch.Tensor) -> tuple[int, ...]:
    return tuple(x.shape)


def matmul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.dim() < 1 or b.dim() < 1 or a.shape[-1] != b.shape[-2 if b.dim() > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {_shape(a)} and {_shape(b)}")
    return torch.matmul(a, b)


def _broadcastable(a: torch.Tensor, b: torch.Tensor, op: str) -> None:
    try:
        torch.broadcast_shapes(a.shape, b.shape)
    except RuntimeError:
        raise ShapeError(f"{op}: shapes {_shape(a)} and {_shape(b)} do not broadcast") from None


def add(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcastable(a, b, "add")
    return a + b


def mul(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    _broadcastable(a, b, "mul")
    return a * b


def softmax(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    return torch.softmax(x, dim=axis)


def log_softmax(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    return torch.log_softmax(x, dim=axis)


def logsumexp(x: torch.Tensor, axis: int = -1) -> torch.Tensor:
    # torch.logsumexp subtracts the max internally, so [1000, 1000] stays finite
    return torch.logsumexp(x, dim=axis)


def layer_norm(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor, eps: float = 1e-5) -> torch.Tensor:
    if _shape(weight) != _shape(x)[-1:] or _shape(bias) != _shape(x)[-1:]:
        raise ShapeError(f"layer_norm: input {_shape(x)} vs weight {_shape(weight)} / bias {_shape(bias)}")
    return torch.nn.functional.layer_norm(x, x.shape[-1:], weight, bias, eps)


def embedding_lookup(table: torch.Tensor, ids: torch.Tensor) -> torch.Tensor:
    if table.dim() != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-D, got {_shape(table)}")
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= table.shape[0]):
        raise ShapeError(f"embedding_lookup: ids out of range for table {_shape(table)}")
    return table[ids]


def concat(xs: Sequence[torch.Tensor], axis: int = -1) -> torch.Tensor:
    ref = list(xs[0].shape)
    ax = axis % len(ref)
    for x in xs[1:]:
        other = list(x.shape)
        if len(other) != len(ref) or any(o != r for i, (o, r) in enumerate(zip(other, ref)) if i != ax):
            raise ShapeError(f"concat: shapes {tuple(ref)} and {tuple(other)} differ off axis {axis}")
    return torch.cat(list(xs), dim=axis)


def slice_(x: torch.Tensor, axis: int, start: int, stop: int) -> torch.Tensor:
    n = x.shape[axis]
    if not 0 <= start <= stop <= n:
        raise ShapeError(f"slice: [{start}:{stop}] out of range for axis {axis} of shape {_shape(x)}")
    return x.narrow(axis, start, stop - start)


def dropout(x: torch.Tensor, p: float, generator: torch.Generator | None = None, train: bool = True) -> torch.Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-p) so inference needs no rescale."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return x
    keep = torch.rand(x.shape, generator=generator, dtype=x.dtype) >= p
    return x * keep / (1.0 - p)


def sigmoid(x: torch.Tensor) -> torch.Tensor:
    return torch.sigmoid(x)


def tanh(x: torch.Tensor) -> torch.Tensor:
    return torch.tanh(x)


def grad(loss: torch.Tensor, params: Sequence[torch.Tensor]) -> list[torch.Tensor]:
    if loss.numel() != 1:
        raise ShapeError(f"grad: loss must be a scalar, got shape {_shape(loss)}")
    params = list(params)
    if not loss.requires_grad:
        return [torch.zeros_like(p) for p in params]
    gs = torch.autograd.grad(loss, params, allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, gs)]
