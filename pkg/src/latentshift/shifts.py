"""Latent-space shift machinery.

Everything that lives purely in latent space: encoding an edit request as a
magnitude-scaled one-hot selector, the deformator network that turns the
selector into a latent shift vector, shift composition, and the running
per-direction centroids used by the clustering loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor, nn

from .exceptions import ConfigError, DegenerateInputError, ShapeError
from .validation import check_direction_index, check_vector


@dataclass(frozen=True)
class DirectionSpec:
    """How many editable directions there are and the latent width they act on."""

    num_directions: int
    latent_dim: int

    def __post_init__(self):
        if self.num_directions < 1:
            raise ConfigError(f"num_directions must be >= 1; got {self.num_directions}")
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be >= 1; got {self.latent_dim}")


@dataclass(frozen=True)
class ShiftRequest:
    """A single edit command: which direction to move along and how far.

    Magnitudes are signed and unitless; direction indices are 0-based in
    [0, num_directions).
    """

    direction: int
    magnitude: float

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise ValueError(f"shift magnitude must be finite; got {self.magnitude}")


def one_hot(direction: int, num_directions: int, *, dtype: torch.dtype = torch.float32) -> Tensor:
    """Return the indicator vector with a single 1.0 at ``direction``."""
    direction = check_direction_index(direction, num_directions)
    vec = torch.zeros(num_directions, dtype=dtype)
    vec[direction] = 1.0
    return vec


def encode_shift(request: ShiftRequest, num_directions: int, *, dtype: torch.dtype = torch.float32) -> Tensor:
    """Encode an edit request as its magnitude-scaled one-hot selector."""
    return request.magnitude * one_hot(request.direction, num_directions, dtype=dtype)


def encode_shift_batch(directions: Tensor, magnitudes: Tensor, num_directions: int) -> Tensor:
    """Vectorised :func:`encode_shift` for (batch,) direction/magnitude tensors."""
    directions = torch.as_tensor(directions, dtype=torch.long)
    magnitudes = torch.as_tensor(magnitudes)
    if directions.shape != magnitudes.shape or directions.ndim != 1:
        raise ShapeError(
            "directions and magnitudes must be equal-length 1-D tensors; got "
            f"{tuple(directions.shape)} vs {tuple(magnitudes.shape)}"
        )
    if directions.numel() and not (0 <= int(directions.min()) and int(directions.max()) < num_directions):
        bad = int(directions[(directions < 0) | (directions >= num_directions)][0])
        raise IndexError(f"direction index {bad} out of range for {num_directions} directions")
    encoded = torch.zeros(directions.shape[0], num_directions, dtype=magnitudes.dtype)
    encoded.scatter_(1, directions.unsqueeze(1), magnitudes.unsqueeze(1))
    return encoded


def apply_shift(latent, shift):
    """Add a shift vector to one or more latent codes (elementwise sum)."""
    latent = torch.as_tensor(latent)
    shift = torch.as_tensor(shift)
    if latent.shape[-1] != shift.shape[-1]:
        raise ShapeError(
            f"latent width {latent.shape[-1]} does not match shift width {shift.shape[-1]}"
        )
    return latent + shift


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two nonzero vectors, clamped to [-1, 1].

    Zero vectors are rejected rather than mapped to 0 so callers are forced
    to decide how to handle degenerate samples.
    """
    a = check_vector(a, name="a")
    b = check_vector(b, length=a.shape[0], name="b")
    norm_a = float(torch.linalg.vector_norm(a.double()))
    norm_b = float(torch.linalg.vector_norm(b.double()))
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegenerateInputError("cosine similarity is undefined for zero vectors")
    value = float(torch.dot(a.double(), b.double())) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


class Deformator(nn.Module):
    """Learnable map from magnitude-scaled one-hot selectors to latent shifts.

    Two modes:

    * ``nonlinear`` (default): three fully-connected layers
      (num_directions -> hidden -> hidden -> latent_dim) with ELU between
      them and no output activation. The output is centred by subtracting
      the network's response to the zero selector, so a zero-magnitude edit
      is exactly the identity (A(0) = 0) and each A(e_k) carries only its
      direction's differential rather than a shared bias offset.
    * ``linear``: a single bias-free matrix, which makes the map exactly
      homogeneous in the magnitude and keeps each direction a fixed vector.

    At construction the final layer is calibrated so the unit-magnitude
    shifts A(e_k) form a random orthonormal frame (each of norm 1). Unit
    initial norms keep initial shifted codes close to the generator's
    prior; orthogonal initial directions avoid the start-up lottery where
    some directions begin nearly invisible to the generator and never
    recover within a short training budget.
    """

    def __init__(
        self,
        num_directions: int,
        latent_dim: int,
        mode: str = "nonlinear",
        hidden_dim: int = 1024,
        seed: int | None = None,
    ):
        super().__init__()
        if mode not in ("nonlinear", "linear"):
            raise ConfigError(f"unknown deformator mode {mode!r}; expected 'nonlinear' or 'linear'")
        spec = DirectionSpec(num_directions, latent_dim)
        self.num_directions = spec.num_directions
        self.latent_dim = spec.latent_dim
        self.mode = mode
        self.hidden_dim = hidden_dim

        if seed is None:
            self._build()
        else:
            with torch.random.fork_rng():
                torch.manual_seed(seed)
                self._build()

    def _build(self) -> None:
        if self.mode == "linear":
            self.net = nn.Linear(self.num_directions, self.latent_dim, bias=False)
        else:
            self.net = nn.Sequential(
                nn.Linear(self.num_directions, self.hidden_dim),
                nn.ELU(),
                nn.Linear(self.hidden_dim, self.hidden_dim),
                nn.ELU(),
                nn.Linear(self.hidden_dim, self.latent_dim),
            )
        self._calibrate_initial_directions()

    def _calibrate_initial_directions(self) -> None:
        # Retarget the final layer so A(e_k) are the first K vectors of a
        # random orthonormal frame. Exact for the linear mode; for the
        # centred MLP a least-squares solve on the hidden activations of the
        # basis selectors is exact as long as they are linearly independent
        # (they are, for random init with hidden_dim >= K).
        with torch.no_grad():
            if self.num_directions <= self.latent_dim:
                raw = torch.randn(self.latent_dim, self.latent_dim)
                q, r = torch.linalg.qr(raw)
                targets = (q * torch.sign(torch.diagonal(r))).T[: self.num_directions]
            else:
                # more directions than dimensions: unit vectors, no frame
                raw = torch.randn(self.num_directions, self.latent_dim)
                targets = raw / raw.norm(dim=1, keepdim=True)
            if self.mode == "linear":
                self.net.weight.copy_(targets.T)
                return
            basis = torch.eye(self.num_directions)
            zero = torch.zeros(1, self.num_directions)
            hidden = self.net[:-1](torch.cat([basis, zero]))
            centered = hidden[:-1] - hidden[-1]
            # normal-equations solve: bitwise reproducible, unlike lstsq
            gram = centered @ centered.T
            solution = centered.T @ torch.linalg.solve(gram, targets)
            self.net[-1].weight.copy_(solution.T)

    @property
    def final_layer(self) -> nn.Linear:
        return self.net if self.mode == "linear" else self.net[-1]

    @property
    def weight_matrix(self) -> Tensor:
        """The single (latent_dim, num_directions) matrix; linear mode only."""
        if self.mode != "linear":
            raise ConfigError("weight_matrix is only defined for linear-mode deformators")
        return self.net.weight

    def forward(self, encoded: Tensor) -> Tensor:
        if encoded.shape[-1] != self.num_directions:
            raise ShapeError(
                f"encoded shift width {encoded.shape[-1]} does not match "
                f"deformator input width {self.num_directions}"
            )
        if self.mode == "linear":
            return self.net(encoded)
        # Centre by the zero-selector response, evaluated in the same batch
        # so the extra row costs one forward row, not a second pass.
        rows = encoded.reshape(-1, self.num_directions)
        zero = torch.zeros(1, self.num_directions, dtype=rows.dtype, device=rows.device)
        out = self.net(torch.cat([rows, zero]))
        centered = out[:-1] - out[-1]
        return centered.reshape(*encoded.shape[:-1], self.latent_dim)

    @torch.no_grad()
    def unit_directions(self) -> Tensor:
        """Shift vectors at unit magnitude, one row per direction (K, d)."""
        basis = torch.eye(self.num_directions, dtype=self.final_layer.weight.dtype)
        return self.forward(basis)

    def meta(self) -> dict:
        return {
            "num_directions": self.num_directions,
            "latent_dim": self.latent_dim,
            "mode": self.mode,
            "hidden_dim": self.hidden_dim,
        }


def export_directions_document(deformator: Deformator, bank: "CentroidBank") -> dict:
    """JSON-ready description of the learned directions for downstream use.

    Linear deformators export their single matrix; nonlinear ones export the
    per-layer weights and biases. Centroids come along so consumers can rank
    or re-cluster directions without the training checkpoint.
    """
    doc: dict = {
        "latent_dim": deformator.latent_dim,
        "num_directions": deformator.num_directions,
        "mode": deformator.mode,
        "centroids": bank.centroids.tolist(),
        "centroid_counts": bank.counts.tolist(),
    }
    if deformator.mode == "linear":
        doc["matrix"] = deformator.weight_matrix.detach().tolist()
    else:
        doc["layers"] = [
            {"weight": layer.weight.detach().tolist(), "bias": layer.bias.detach().tolist()}
            for layer in deformator.net
            if isinstance(layer, nn.Linear)
        ]
    return doc


class CentroidBank:
    """Running mean of the shift vectors observed for each direction.

    Means are held in float64 so long accumulations stay within 1e-6 of an
    exact average. A direction with count 0 has a zero centroid and
    contributes nothing to the clustering loss. Gradients never flow through
    the bank: updates detach their inputs, and the loss treats centroids as
    constants.
    """

    def __init__(self, num_directions: int, latent_dim: int):
        spec = DirectionSpec(num_directions, latent_dim)
        self.num_directions = spec.num_directions
        self.latent_dim = spec.latent_dim
        self.centroids = torch.zeros(num_directions, latent_dim, dtype=torch.float64)
        self.counts = torch.zeros(num_directions, dtype=torch.long)

    def update(self, direction: int, shift: Tensor) -> None:
        """Fold one shift vector into the running mean for ``direction``."""
        direction = check_direction_index(direction, self.num_directions)
        shift = check_vector(shift, length=self.latent_dim, name="shift")
        if not torch.isfinite(shift).all():
            raise ValueError("shift contains non-finite values")
        count = int(self.counts[direction])
        self.centroids[direction] += (shift.detach().double() - self.centroids[direction]) / (count + 1)
        self.counts[direction] += 1

    def update_batch(self, directions: Tensor, shifts: Tensor) -> None:
        """Fold a batch of labelled shifts into the bank (grouped mean update)."""
        directions = torch.as_tensor(directions, dtype=torch.long)
        if shifts.ndim != 2 or shifts.shape != (directions.shape[0], self.latent_dim):
            raise ShapeError(
                f"shifts must have shape ({directions.shape[0]}, {self.latent_dim}); "
                f"got {tuple(shifts.shape)}"
            )
        shifts64 = shifts.detach().double()
        for direction in directions.unique().tolist():
            direction = check_direction_index(direction, self.num_directions)
            rows = shifts64[directions == direction]
            old_count = int(self.counts[direction])
            new_count = old_count + rows.shape[0]
            self.centroids[direction] = (
                self.centroids[direction] * old_count + rows.sum(dim=0)
            ) / new_count
            self.counts[direction] = new_count

    def centroid(self, direction: int) -> Tensor:
        direction = check_direction_index(direction, self.num_directions)
        return self.centroids[direction].clone()

    def clone(self) -> "CentroidBank":
        other = CentroidBank(self.num_directions, self.latent_dim)
        other.centroids = self.centroids.clone()
        other.counts = self.counts.clone()
        return other

    def state_dict(self) -> dict:
        return {"centroids": self.centroids.clone(), "counts": self.counts.clone()}

    def load_state_dict(self, state: dict) -> None:
        centroids = state["centroids"]
        counts = state["counts"]
        if centroids.shape != self.centroids.shape:
            raise ShapeError(
                f"centroid state has shape {tuple(centroids.shape)}; "
                f"expected {tuple(self.centroids.shape)}"
            )
        self.centroids = centroids.clone().double()
        self.counts = counts.clone().long()
