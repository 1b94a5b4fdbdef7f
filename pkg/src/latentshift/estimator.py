"""scikit-learn style front end for direction discovery.

``LatentDirectionFinder`` wraps the training loop behind the familiar
``fit`` / ``transform`` / ``predict`` surface so the algorithm composes with
pipelines, ``clone`` and parameter search. The "data" being fit is a frozen
generator rather than an array, which is the natural X for this method.
"""

from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .generators import GeneratorHandle, make_generator
from .metrics import eval_rca
from .seeding import derive_seed
from .shifts import apply_shift, encode_shift_batch
from .training import TrainConfig, train_loop
from .validation import as_latent_batch


class LatentDirectionFinder(BaseEstimator):
    """Discovers interpretable editing directions in a generator's latent space.

    Parameters mirror :class:`~latentshift.training.TrainConfig`; see its
    docstring for semantics. After ``fit`` the learned components are
    available as ``deformator_``, ``reconstructor_`` and ``centroid_bank_``.

    Examples
    --------
    >>> from latentshift import BlobGenerator, LatentDirectionFinder
    >>> finder = LatentDirectionFinder(num_directions=8, steps=200, seed=0)
    >>> finder = finder.fit(BlobGenerator(latent_dim=8, resolution=32))
    >>> shifted = finder.transform([[0.0] * 8], direction=3, magnitude=2.0)
    """

    def __init__(
        self,
        num_directions: int = 8,
        latent_dim: int = 8,
        steps: int = 5000,
        batch_size: int = 32,
        learning_rate: float = 1e-4,
        regression_weight: float = 0.5,
        centroid_weight: float = 0.25,
        eps_low: float = -6.0,
        eps_high: float = 6.0,
        eps_deadzone: float = 0.5,
        seed: int = 0,
        allow_equal_directions: bool = True,
        deformator_mode: str = "nonlinear",
        deformator_hidden: int = 1024,
        backbone: str = "small",
        eval_interval: int = 500,
        eval_samples: int = 512,
    ):
        self.num_directions = num_directions
        self.latent_dim = latent_dim
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.regression_weight = regression_weight
        self.centroid_weight = centroid_weight
        self.eps_low = eps_low
        self.eps_high = eps_high
        self.eps_deadzone = eps_deadzone
        self.seed = seed
        self.allow_equal_directions = allow_equal_directions
        self.deformator_mode = deformator_mode
        self.deformator_hidden = deformator_hidden
        self.backbone = backbone
        self.eval_interval = eval_interval
        self.eval_samples = eval_samples

    def _config(self, generator: GeneratorHandle) -> TrainConfig:
        return TrainConfig(
            num_directions=self.num_directions,
            latent_dim=generator.latent_dim,
            steps=self.steps,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            regression_weight=self.regression_weight,
            centroid_weight=self.centroid_weight,
            eps_low=self.eps_low,
            eps_high=self.eps_high,
            eps_deadzone=self.eps_deadzone,
            seed=self.seed,
            allow_equal_directions=self.allow_equal_directions,
            deformator_mode=self.deformator_mode,
            deformator_hidden=self.deformator_hidden,
            backbone=self.backbone,
            eval_interval=self.eval_interval,
            eval_samples=self.eval_samples,
        )

    def fit(self, generator, y=None):
        """Train the deformator/reconstructor pair against a frozen generator.

        ``generator`` is a :class:`GeneratorHandle` or a registered
        generator name (built with this estimator's ``latent_dim``).
        """
        if isinstance(generator, str):
            generator = make_generator(generator, latent_dim=self.latent_dim, seed=0)
        result = train_loop(self._config(generator), generator=generator)
        self.generator_ = generator
        self.deformator_ = result.deformator
        self.reconstructor_ = result.reconstructor
        self.centroid_bank_ = result.bank
        self.history_ = result.history
        self.config_ = result.config
        return self

    def _check_fitted(self):
        if not hasattr(self, "deformator_"):
            raise NotFittedError(
                "This LatentDirectionFinder instance is not fitted yet; call fit first."
            )

    @property
    def directions_(self) -> np.ndarray:
        """Unit-magnitude shift vectors, one row per direction (K, d)."""
        self._check_fitted()
        return self.deformator_.unit_directions().numpy()

    @torch.no_grad()
    def transform(self, Z, direction, magnitude) -> np.ndarray:
        """Apply one edit to a batch of latent codes and return the shifted codes."""
        self._check_fitted()
        z = as_latent_batch(Z, self.config_.latent_dim, name="Z")
        n = z.shape[0]
        directions = torch.full((n,), int(direction), dtype=torch.long)
        magnitudes = torch.full((n,), float(magnitude), dtype=z.dtype)
        shifts = self.deformator_(
            encode_shift_batch(directions, magnitudes, self.num_directions)
        )
        return apply_shift(z, shifts).numpy()

    @torch.no_grad()
    def predict(self, before, after) -> np.ndarray:
        """Recover the direction index for each (before, after) image pair."""
        logits, _ = self._reconstruct(before, after)
        return logits.argmax(dim=1).numpy()

    @torch.no_grad()
    def reconstruct(self, before, after) -> tuple[np.ndarray, np.ndarray]:
        """Recover (direction indices, signed magnitudes) for image pairs."""
        logits, magnitudes = self._reconstruct(before, after)
        return logits.argmax(dim=1).numpy(), magnitudes.numpy()

    def _reconstruct(self, before, after):
        self._check_fitted()
        before = torch.as_tensor(before, dtype=torch.float32)
        after = torch.as_tensor(after, dtype=torch.float32)
        return self.reconstructor_(before, after)

    def score(self, generator=None, y=None, n_samples: int = 2000) -> float:
        """Held-out reconstructor classification accuracy (chance is 1/K)."""
        self._check_fitted()
        if generator is None:
            generator = self.generator_
        result = eval_rca(
            self.deformator_,
            self.reconstructor_,
            generator,
            n_samples=n_samples,
            eps_low=self.eps_low,
            eps_high=self.eps_high,
            eps_deadzone=self.eps_deadzone,
            seed=derive_seed(self.seed, "score"),
        )
        return result.accuracy
