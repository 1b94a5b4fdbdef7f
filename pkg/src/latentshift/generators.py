"""Differentiable image generators behind a uniform handle interface.

The training loop only needs a frozen, differentiable map from latent codes
to images in [-1, 1]. Three concrete generators are provided:

* :class:`BlobGenerator` — an analytic renderer with four known latent
  factors, used for desk-scale experiments where ground truth is required.
* :class:`ConvGenerator` — a small DCGAN-style transposed-convolution
  generator for realism smoke tests.
* :class:`LayeredBlobGenerator` — a toy per-layer-style generator that
  broadcasts one shift to every style layer, exercising the style-injection
  interface used by mapping-network models.

External pretrained models plug in through :func:`register_generator`.
"""

from __future__ import annotations

import math

import torch
from torch import Tensor, nn

from .exceptions import CapabilityError, ConfigError, ShapeError
from .validation import as_latent_batch

INPUT_LATENT = "input_latent"
PER_LAYER_STYLE = "per_layer_style"


class GeneratorHandle(nn.Module):
    """Base class for generators usable by the direction-discovery loop.

    Subclasses implement ``forward(z) -> images`` for a (batch, latent_dim)
    input, producing (batch, C, H, W) values in [-1, 1]. Handles are
    immutable after construction; concurrent generate calls are safe.
    """

    injection_site = INPUT_LATENT
    differentiable = True

    def __init__(self, latent_dim: int, output_shape: tuple[int, int, int]):
        super().__init__()
        self.latent_dim = int(latent_dim)
        self.output_shape = tuple(int(s) for s in output_shape)

    @property
    def channels(self) -> int:
        return self.output_shape[0]

    def generate(self, z) -> Tensor:
        """Render a batch of latent codes. Deterministic for fixed weights."""
        z = as_latent_batch(z, self.latent_dim)
        return self.forward(z)

    def shift_width(self) -> int:
        """Width of the vector accepted by :meth:`inject_shift`."""
        return self.latent_dim

    def inject_shift(self, z, shift) -> Tensor:
        """Render latent codes with a shift applied at the injection site."""
        z = as_latent_batch(z, self.latent_dim)
        shift = torch.as_tensor(shift)
        if shift.shape[-1] != self.shift_width():
            raise ShapeError(
                f"shift width {shift.shape[-1]} does not match injection width "
                f"{self.shift_width()}"
            )
        if self.injection_site == INPUT_LATENT:
            return self.forward(z + shift)
        raise CapabilityError(
            f"{type(self).__name__} declares injection site {self.injection_site!r} "
            "but does not implement it"
        )


def _orthonormal_matrix(dim: int, seed: int, dtype: torch.dtype) -> Tensor:
    gen = torch.Generator().manual_seed(seed)
    raw = torch.randn(dim, dim, generator=gen, dtype=torch.float64)
    q, r = torch.linalg.qr(raw)
    # Fix the sign convention so the matrix is canonical for a given seed.
    q = q * torch.sign(torch.diagonal(r))
    return q.to(dtype)


class BlobGenerator(GeneratorHandle):
    """Analytic single-blob renderer with four recoverable latent factors.

    A fixed orthonormal matrix maps latent codes to factor values
    ``f = z @ Q``; the first four factors control horizontal position,
    vertical position, log-radius and intensity. Positions run over the
    inner 80% of the canvas through tanh, the log-radius saturates between
    the configured bounds through a sigmoid, and intensity is a sigmoid,
    so pixels stay strictly inside [-1, 1] without any hard clamp and the
    whole map is differentiable. Latent components orthogonal to the first
    four factor axes leave the image untouched.

    ``factor_gains`` scale each factor before its saturating map (defaults
    to 1), a knob for studying how attribute salience affects discovery:
    position edits change many more pixels per unit step than radius or
    intensity edits at neutral gains.
    """

    num_factors = 4
    default_factor_gains = (1.0, 1.0, 1.0, 1.0)

    def __init__(
        self,
        latent_dim: int = 8,
        resolution: int = 32,
        seed: int = 0,
        radius_range: tuple[float, float] | None = None,
        factor_gains: tuple[float, float, float, float] | None = None,
        dtype: torch.dtype = torch.float32,
    ):
        if latent_dim < self.num_factors:
            raise ConfigError(
                f"blob generator needs latent_dim >= {self.num_factors}; got {latent_dim}"
            )
        if resolution < 8:
            raise ConfigError(f"blob generator needs resolution >= 8; got {resolution}")
        super().__init__(latent_dim, (1, resolution, resolution))
        self.resolution = int(resolution)
        self.seed = int(seed)
        if radius_range is None:
            radius_range = (resolution / 16.0, resolution / 4.0)
        r_lo, r_hi = (float(r) for r in radius_range)
        if not 0 < r_lo < r_hi:
            raise ConfigError(f"radius_range must satisfy 0 < lo < hi; got {radius_range}")
        self.radius_range = (r_lo, r_hi)
        if factor_gains is None:
            factor_gains = self.default_factor_gains
        if len(factor_gains) != self.num_factors or any(g <= 0 for g in factor_gains):
            raise ConfigError(f"factor_gains must be {self.num_factors} positive values")
        self.factor_gains = tuple(float(g) for g in factor_gains)

        self.register_buffer("factor_matrix", _orthonormal_matrix(latent_dim, seed, dtype))
        self.register_buffer("_gains", torch.tensor(self.factor_gains, dtype=dtype))
        coords = torch.arange(resolution, dtype=dtype) + 0.5
        self.register_buffer("_coords", coords)

    @property
    def factor_directions(self) -> Tensor:
        """Latent-space directions of the four visual factors, one per row."""
        return self.factor_matrix[:, : self.num_factors].T.clone()

    def factors(self, z) -> Tensor:
        """Project latent codes onto the factor basis (batch, latent_dim)."""
        z = as_latent_batch(z, self.latent_dim).to(self.factor_matrix.dtype)
        return z @ self.factor_matrix

    def forward(self, z: Tensor) -> Tensor:
        f = self.factors(z)[:, : self.num_factors] * self._gains
        res = self.resolution
        r_lo, r_hi = self.radius_range
        center_x = res * (0.5 + 0.4 * torch.tanh(f[:, 0]))
        center_y = res * (0.5 + 0.4 * torch.tanh(f[:, 1]))
        log_radius = math.log(r_lo) + (math.log(r_hi) - math.log(r_lo)) * torch.sigmoid(f[:, 2])
        radius = torch.exp(log_radius)
        intensity = torch.sigmoid(f[:, 3])

        xs = self._coords.view(1, 1, res)
        ys = self._coords.view(1, res, 1)
        dist2 = (xs - center_x.view(-1, 1, 1)) ** 2 + (ys - center_y.view(-1, 1, 1)) ** 2
        blob = torch.exp(-dist2 / (2.0 * radius.view(-1, 1, 1) ** 2))
        image = 2.0 * intensity.view(-1, 1, 1) * blob - 1.0
        return image.unsqueeze(1)


class LayeredBlobGenerator(GeneratorHandle):
    """Per-layer-style toy: each layer renders a blob from its own factor
    basis and the layers are averaged. The identity mapping plays the role
    of the style network, and :meth:`inject_shift` adds the same shift to
    every layer's style vector before synthesis. With a single layer this
    reduces exactly to input-latent injection on a :class:`BlobGenerator`.
    """

    injection_site = PER_LAYER_STYLE

    def __init__(
        self,
        latent_dim: int = 8,
        resolution: int = 32,
        num_layers: int = 1,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        if num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1; got {num_layers}")
        super().__init__(latent_dim, (1, resolution, resolution))
        self.num_layers = int(num_layers)
        self.layers = nn.ModuleList(
            BlobGenerator(latent_dim, resolution, seed=seed + i, dtype=dtype)
            for i in range(num_layers)
        )

    def forward(self, z: Tensor) -> Tensor:
        return torch.stack([layer(z) for layer in self.layers]).mean(dim=0)

    def inject_shift(self, z, shift) -> Tensor:
        z = as_latent_batch(z, self.latent_dim)
        shift = torch.as_tensor(shift)
        if shift.shape[-1] != self.shift_width():
            raise ShapeError(
                f"shift width {shift.shape[-1]} does not match injection width "
                f"{self.shift_width()}"
            )
        styled = z + shift  # identity mapping; same shift broadcast to every layer
        return torch.stack([layer(styled) for layer in self.layers]).mean(dim=0)


class ConvGenerator(GeneratorHandle):
    """Small DCGAN-style transposed-convolution generator.

    Fresh instances have random weights; the discovery loop freezes them
    regardless. An optional class-conditioning vector is captured at
    construction and concatenated to every latent input, mirroring the
    fixed-class setup used with conditional models. No normalisation layers
    are used so outputs are deterministic for any batch composition.
    """

    def __init__(
        self,
        latent_dim: int = 64,
        resolution: int = 32,
        channels: int = 3,
        base_width: int = 64,
        class_vector=None,
        seed: int | None = None,
    ):
        if resolution < 16 or resolution & (resolution - 1):
            raise ConfigError(f"resolution must be a power of two >= 16; got {resolution}")
        super().__init__(latent_dim, (channels, resolution, resolution))
        self.base_width = int(base_width)
        if class_vector is not None:
            class_vector = torch.as_tensor(class_vector, dtype=torch.float32).flatten()
        self.register_buffer(
            "class_vector", class_vector if class_vector is not None else torch.zeros(0)
        )

        if seed is None:
            self._build()
        else:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build()

    def _build(self) -> None:
        in_dim = self.latent_dim + self.class_vector.numel()
        resolution = self.output_shape[1]
        num_up = int(math.log2(resolution // 4))
        width = self.base_width * 2**num_up

        blocks: list[nn.Module] = [
            nn.ConvTranspose2d(in_dim, width, 4, 1, 0),
            nn.ReLU(inplace=True),
        ]
        for _ in range(num_up):
            blocks += [
                nn.ConvTranspose2d(width, width // 2, 4, 2, 1),
                nn.ReLU(inplace=True),
            ]
            width //= 2
        blocks += [nn.Conv2d(width, self.channels, 3, 1, 1), nn.Tanh()]
        self.net = nn.Sequential(*blocks)

    def meta(self) -> dict:
        return {
            "latent_dim": self.latent_dim,
            "resolution": self.output_shape[1],
            "channels": self.channels,
            "base_width": self.base_width,
            "class_dim": int(self.class_vector.numel()),
        }

    def forward(self, z: Tensor) -> Tensor:
        if self.class_vector.numel():
            cond = self.class_vector.expand(z.shape[0], -1)
            z = torch.cat([z, cond], dim=1)
        return self.net(z.unsqueeze(-1).unsqueeze(-1))


_GENERATOR_REGISTRY: dict[str, type | object] = {}


def register_generator(name: str, factory) -> None:
    """Register a generator factory under a string name.

    The factory is called as ``factory(latent_dim=..., resolution=...,
    seed=..., **extra)`` and must return a :class:`GeneratorHandle`.
    """
    _GENERATOR_REGISTRY[name] = factory


def make_generator(name: str, **kwargs) -> GeneratorHandle:
    if name not in _GENERATOR_REGISTRY:
        known = ", ".join(sorted(_GENERATOR_REGISTRY))
        raise ConfigError(f"unknown generator {name!r}; registered generators: {known}")
    handle = _GENERATOR_REGISTRY[name](**kwargs)
    if not isinstance(handle, GeneratorHandle):
        raise ConfigError(f"generator factory {name!r} did not return a GeneratorHandle")
    return handle


register_generator("blob", BlobGenerator)
register_generator("layered_blob", LayeredBlobGenerator)
register_generator("conv", ConvGenerator)
