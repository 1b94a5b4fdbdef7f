"""Input validation helpers.

Small, reusable checks so that estimator-facing entry points accept
array-likes (lists, numpy arrays, torch tensors) and fail early with
readable messages instead of deep in a forward pass.
"""

from __future__ import annotations

import torch
from torch import Tensor

from .exceptions import ShapeError


def as_float_tensor(values, name: str = "values") -> Tensor:
    """Coerce an array-like to a floating-point torch tensor."""
    tensor = torch.as_tensor(values)
    if not tensor.is_floating_point():
        tensor = tensor.to(torch.float32)
    if tensor.numel() == 0:
        raise ShapeError(f"{name} is empty")
    return tensor


def as_latent_batch(z, latent_dim: int, name: str = "z") -> Tensor:
    """Coerce to a (batch, latent_dim) tensor, promoting a single vector."""
    tensor = as_float_tensor(z, name)
    if tensor.ndim == 1:
        tensor = tensor.unsqueeze(0)
    if tensor.ndim != 2 or tensor.shape[1] != latent_dim:
        raise ShapeError(
            f"{name} must have shape (batch, {latent_dim}); got {tuple(tensor.shape)}"
        )
    if not torch.isfinite(tensor).all():
        raise ValueError(f"{name} contains non-finite values")
    return tensor


def check_vector(v, length: int | None = None, name: str = "vector") -> Tensor:
    tensor = as_float_tensor(v, name)
    if tensor.ndim != 1:
        raise ShapeError(f"{name} must be one-dimensional; got shape {tuple(tensor.shape)}")
    if length is not None and tensor.shape[0] != length:
        raise ShapeError(f"{name} must have length {length}; got {tensor.shape[0]}")
    return tensor


def check_direction_index(direction: int, num_directions: int) -> int:
    direction = int(direction)
    if not 0 <= direction < num_directions:
        raise IndexError(
            f"direction index {direction} out of range for {num_directions} directions"
        )
    return direction


def check_finite(tensor: Tensor, name: str = "tensor") -> Tensor:
    if not torch.isfinite(tensor).all():
        raise ValueError(f"{name} contains non-finite values")
    return tensor


def check_same_shape(a: Tensor, b: Tensor, names: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ShapeError(
            f"{names} must have identical shapes; got {tuple(a.shape)} vs {tuple(b.shape)}"
        )
