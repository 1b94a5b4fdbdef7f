"""Single-file checkpoint containers.

A checkpoint is a torch-serialised dict holding a format version, a config
echo, and named tensors (model states, centroid bank, optimizer state, and
the sampler RNG state needed for exact training resumption). Everything in
the payload is restricted to plain containers and tensors so files load
under ``weights_only=True``.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch

from .exceptions import CheckpointError, IncompatibleCheckpointError
from .generators import ConvGenerator
from .reconstructor import PairReconstructor
from .shifts import CentroidBank, Deformator

FORMAT_VERSION = 1

# Config fields that must match between a checkpoint and the run resuming
# from it. steps and evaluation cadence are deliberately excluded.
_STRUCTURAL_FIELDS = (
    "num_directions",
    "latent_dim",
    "deformator_mode",
    "deformator_hidden",
    "backbone",
    "generator",
    "resolution",
    "generator_seed",
    "batch_size",
    "learning_rate",
    "regression_weight",
    "centroid_weight",
    "eps_low",
    "eps_high",
    "eps_deadzone",
    "allow_equal_directions",
    "seed",
)


@dataclass
class LoadedCheckpoint:
    step: int
    config: "TrainConfig"  # noqa: F821 - imported lazily to avoid a cycle
    deformator: Deformator
    reconstructor: PairReconstructor
    bank: CentroidBank
    optimizer_state: dict | None
    sampler_state: torch.Tensor | None


def save_checkpoint(
    path,
    *,
    deformator: Deformator,
    reconstructor: PairReconstructor,
    bank: CentroidBank,
    config,
    step: int,
    optimizer=None,
    sampler_state: torch.Tensor | None = None,
) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "training",
        "step": int(step),
        "config": config.to_dict(),
        "deformator": {"meta": deformator.meta(), "state": deformator.state_dict()},
        "reconstructor": {
            "meta": reconstructor.meta(),
            "state": reconstructor.state_dict(),
        },
        "bank": bank.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "sampler_state": sampler_state,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def _read_payload(path, expected_kind: str) -> dict:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"could not parse checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or "format_version" not in payload:
        raise CheckpointError(f"checkpoint {path} has no format version tag")
    if payload["format_version"] != FORMAT_VERSION:
        raise IncompatibleCheckpointError(
            f"checkpoint {path} has format version {payload['format_version']}; "
            f"this build reads version {FORMAT_VERSION}"
        )
    if payload.get("kind") != expected_kind:
        raise IncompatibleCheckpointError(
            f"checkpoint {path} holds a {payload.get('kind')!r} payload; "
            f"expected {expected_kind!r}"
        )
    return payload


def load_checkpoint(path, expected_config=None) -> LoadedCheckpoint:
    """Load a training checkpoint, rebuilding the models it describes.

    When ``expected_config`` is given, every structural field must agree
    with the checkpoint's config echo; a mismatch raises
    :class:`IncompatibleCheckpointError` naming the field and both values.
    """
    from .training import TrainConfig

    payload = _read_payload(path, "training")
    config = TrainConfig.from_dict(payload["config"])

    if expected_config is not None:
        for field in _STRUCTURAL_FIELDS:
            stored = getattr(config, field)
            wanted = getattr(expected_config, field)
            if stored != wanted:
                raise IncompatibleCheckpointError(
                    f"checkpoint {field}={stored!r} does not match configured "
                    f"{field}={wanted!r}"
                )

    d_meta = payload["deformator"]["meta"]
    deformator = Deformator(
        d_meta["num_directions"],
        d_meta["latent_dim"],
        mode=d_meta["mode"],
        hidden_dim=d_meta["hidden_dim"],
        seed=0,
    )
    deformator.load_state_dict(payload["deformator"]["state"])

    r_meta = payload["reconstructor"]["meta"]
    reconstructor = PairReconstructor(
        r_meta["num_directions"],
        tuple(r_meta["image_shape"]),
        backbone=r_meta["backbone"],
        seed=0,
    )
    reconstructor.load_state_dict(payload["reconstructor"]["state"])

    bank = CentroidBank(d_meta["num_directions"], d_meta["latent_dim"])
    bank.load_state_dict(payload["bank"])

    return LoadedCheckpoint(
        step=payload["step"],
        config=config,
        deformator=deformator,
        reconstructor=reconstructor,
        bank=bank,
        optimizer_state=payload.get("optimizer"),
        sampler_state=payload.get("sampler_state"),
    )


def save_generator(path, generator: ConvGenerator) -> None:
    """Persist a trainable generator in the same container format."""
    payload = {
        "format_version": FORMAT_VERSION,
        "kind": "generator",
        "meta": generator.meta(),
        "state": generator.state_dict(),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_generator(path) -> ConvGenerator:
    payload = _read_payload(path, "generator")
    meta = payload["meta"]
    generator = ConvGenerator(
        latent_dim=meta["latent_dim"],
        resolution=meta["resolution"],
        channels=meta["channels"],
        base_width=meta["base_width"],
        class_vector=torch.zeros(meta["class_dim"]) if meta["class_dim"] else None,
        seed=0,
    )
    generator.load_state_dict(payload["state"])
    return generator
