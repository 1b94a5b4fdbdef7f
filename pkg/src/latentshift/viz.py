"""Traversal grids and PNG encoding.

A traversal row shows one latent code swept along a direction; when a second
direction is given, the row continues from the endpoint of the first sweep,
so composed edits read left to right.
"""

from __future__ import annotations

import io

import numpy as np
import torch
from PIL import Image
from torch import Tensor

from .generators import GeneratorHandle
from .shifts import Deformator, ShiftRequest, encode_shift


@torch.no_grad()
def traversal_row(
    deformator: Deformator,
    generator: GeneratorHandle,
    z: Tensor,
    direction: int,
    magnitudes,
    second_direction: int | None = None,
    second_magnitudes=None,
) -> Tensor:
    """Images for one latent code: (columns, C, H, W)."""
    z = torch.as_tensor(z).reshape(1, -1)
    num_directions = deformator.num_directions
    columns = []
    for eps in magnitudes:
        shift = deformator(encode_shift(ShiftRequest(direction, float(eps)), num_directions))
        columns.append(generator.inject_shift(z, shift)[0])
    if second_direction is not None:
        if second_magnitudes is None:
            second_magnitudes = magnitudes
        base_shift = deformator(
            encode_shift(ShiftRequest(direction, float(magnitudes[-1])), num_directions)
        )
        for eps in second_magnitudes:
            shift = base_shift + deformator(
                encode_shift(ShiftRequest(second_direction, float(eps)), num_directions)
            )
            columns.append(generator.inject_shift(z, shift)[0])
    return torch.stack(columns)


def compose_grid(rows: list[Tensor], padding: int = 2, pad_value: float = 1.0) -> Tensor:
    """Stack rows of (columns, C, H, W) images into one (C, H_total, W_total)."""
    n_cols = rows[0].shape[0]
    channels, height, width = rows[0].shape[1:]
    grid_h = len(rows) * (height + padding) + padding
    grid_w = n_cols * (width + padding) + padding
    grid = torch.full((channels, grid_h, grid_w), pad_value, dtype=rows[0].dtype)
    for r, row in enumerate(rows):
        for c in range(row.shape[0]):
            top = padding + r * (height + padding)
            left = padding + c * (width + padding)
            grid[:, top : top + height, left : left + width] = row[c]
    return grid


def to_uint8(image: Tensor) -> np.ndarray:
    """Map a (C, H, W) image in [-1, 1] to HxW (grayscale) or HxWx3 uint8."""
    array = ((image.detach().cpu().numpy() + 1.0) * 127.5).round().clip(0, 255).astype(np.uint8)
    if array.shape[0] == 1:
        return array[0]
    return np.transpose(array[:3], (1, 2, 0))


def to_pil(image: Tensor) -> Image.Image:
    return Image.fromarray(to_uint8(image))


def png_bytes(image: Tensor) -> bytes:
    buffer = io.BytesIO()
    to_pil(image).save(buffer, format="PNG")
    return buffer.getvalue()


def save_png(path, image: Tensor) -> None:
    to_pil(image).save(path, format="PNG")
