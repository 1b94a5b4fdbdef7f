"""The pair network that recovers which edit produced an image pair.

Given (before, after) images concatenated along channels it predicts
unnormalised direction logits and a single signed magnitude per pair. Pair
order carries the sign information, so inputs are never symmetrised.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

from .exceptions import ConfigError, ShapeError
from .validation import check_same_shape

_BACKBONES = ("small", "resnet18")


class PairReconstructor(nn.Module):
    """Direction classifier and magnitude regressor over image pairs.

    ``small`` is a four-block strided convnet with global average pooling,
    sized for low resolutions (>= 8 px). ``resnet18`` swaps in a
    resnet18-style feature extractor with the first convolution widened to
    the concatenated channel count, for larger images (>= 32 px). Neither
    uses batch statistics that would make outputs depend on batch
    composition at this scale.
    """

    def __init__(
        self,
        num_directions: int,
        image_shape: tuple[int, int, int],
        backbone: str = "small",
        seed: int | None = None,
    ):
        super().__init__()
        if backbone not in _BACKBONES:
            raise ConfigError(f"unknown backbone {backbone!r}; expected one of {_BACKBONES}")
        channels, height, width = (int(s) for s in image_shape)
        min_side = 8 if backbone == "small" else 32
        if min(height, width) < min_side:
            raise ConfigError(
                f"backbone {backbone!r} needs images of at least {min_side}px; "
                f"got {height}x{width}"
            )
        self.num_directions = int(num_directions)
        self.image_shape = (channels, height, width)
        self.backbone = backbone
        self.in_channels = 2 * channels  # before/after concatenated along channels

        if seed is None:
            self._build()
        else:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build()

    def _build(self) -> None:
        if self.backbone == "small":
            widths = (32, 64, 128, 256)
            layers: list[nn.Module] = []
            prev = self.in_channels
            for w in widths:
                # GroupNorm keeps outputs independent of batch composition,
                # unlike batch statistics, so eval stays deterministic.
                layers += [
                    nn.Conv2d(prev, w, 3, stride=2, padding=1),
                    nn.GroupNorm(8, w),
                    nn.ELU(inplace=True),
                ]
                prev = w
            layers.append(nn.AdaptiveAvgPool2d(1))
            self.features = nn.Sequential(*layers)
            feature_dim = widths[-1]
        else:
            from torchvision.models import resnet18

            net = resnet18(weights=None)
            net.conv1 = nn.Conv2d(self.in_channels, 64, 7, stride=2, padding=3, bias=False)
            nn.init.kaiming_normal_(net.conv1.weight, mode="fan_out", nonlinearity="relu")
            net.fc = nn.Identity()
            self.features = net
            feature_dim = 512

        self.feature_dim = feature_dim
        self.direction_head = nn.Linear(feature_dim, self.num_directions)
        self.magnitude_head = nn.Linear(feature_dim, 1)

    def forward(self, before: Tensor, after: Tensor) -> tuple[Tensor, Tensor]:
        """Return (logits, magnitudes) of shapes (batch, K) and (batch,)."""
        check_same_shape(before, after, "before/after images")
        if before.ndim != 4 or before.shape[1] != self.image_shape[0]:
            raise ShapeError(
                f"expected image batches of shape (batch, {self.image_shape[0]}, H, W); "
                f"got {tuple(before.shape)}"
            )
        pair = torch.cat([before, after], dim=1)
        features = self.features(pair).flatten(1)
        logits = self.direction_head(features)
        magnitudes = self.magnitude_head(features).squeeze(-1)
        return logits, magnitudes

    def meta(self) -> dict:
        return {
            "num_directions": self.num_directions,
            "image_shape": list(self.image_shape),
            "backbone": self.backbone,
        }
