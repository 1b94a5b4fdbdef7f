"""Sampling, loss terms, and the joint optimisation loop.

One training step draws a batch of (latent code, two edit requests), renders
the three-image chain base -> first shift -> first+second shift, asks the
reconstructor to recover each consecutive edit, and takes one Adam step on
the deformator and reconstructor jointly. The generator stays frozen
throughout. After the parameter update the per-direction centroid bank is
refreshed with the batch's detached shift vectors.
"""

from __future__ import annotations

import csv
import dataclasses
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor

from .checkpoint import load_checkpoint, save_checkpoint
from .exceptions import ConfigError, NonFiniteLossError, ShapeError
from .generators import GeneratorHandle, make_generator
from .reconstructor import PairReconstructor
from .seeding import derive_seed, new_generator
from .shifts import CentroidBank, Deformator, encode_shift_batch


@dataclass
class TrainConfig:
    """All knobs of a training run; serialises to a flat JSON document.

    Defaults are the desk-scale blob experiment; paper-scale values
    (128 directions, 2e5 steps) remain configurable.
    """

    num_directions: int = 8
    latent_dim: int = 8
    steps: int = 5000
    batch_size: int = 32
    learning_rate: float = 1e-4
    regression_weight: float = 0.5
    centroid_weight: float = 0.25
    eps_low: float = -6.0
    eps_high: float = 6.0
    eps_deadzone: float = 0.5
    seed: int = 0
    allow_equal_directions: bool = True
    deformator_mode: str = "nonlinear"
    deformator_hidden: int = 1024
    backbone: str = "small"
    generator: str = "blob"
    resolution: int = 32
    generator_seed: int = 0
    eval_interval: int = 500
    eval_samples: int = 512
    ppl_delta: float = 0.1
    checkpoint_interval: int = 0  # 0 = only write the final checkpoint

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0; got {self.steps}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1; got {self.batch_size}")
        if self.regression_weight < 0 or self.centroid_weight < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.eps_deadzone < 0:
            raise ConfigError(f"eps_deadzone must be >= 0; got {self.eps_deadzone}")
        if not self.eps_low < -self.eps_deadzone < self.eps_deadzone < self.eps_high:
            raise ConfigError(
                "magnitude range must satisfy eps_low < -eps_deadzone < "
                f"eps_deadzone < eps_high; got [{self.eps_low}, {self.eps_high}] "
                f"with deadzone {self.eps_deadzone}"
            )
        if self.eval_interval < 1:
            raise ConfigError(f"eval_interval must be >= 1; got {self.eval_interval}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**values)

    def make_generator(self) -> GeneratorHandle:
        return make_generator(
            self.generator,
            latent_dim=self.latent_dim,
            resolution=self.resolution,
            seed=self.generator_seed,
        )


@dataclass
class ShiftSampleBatch:
    """A batch of latent codes with two edit requests each."""

    latents: Tensor  # (B, d)
    first_directions: Tensor  # (B,) long
    first_magnitudes: Tensor  # (B,)
    second_directions: Tensor  # (B,) long
    second_magnitudes: Tensor  # (B,)


def sample_magnitudes(n: int, cfg: TrainConfig, rng: torch.Generator) -> Tensor:
    """Uniform magnitudes over [eps_low, eps_high] with the dead zone
    |magnitude| < eps_deadzone rejected and resampled."""
    span = cfg.eps_high - cfg.eps_low
    out = cfg.eps_low + span * torch.rand(n, generator=rng)
    bad = out.abs() < cfg.eps_deadzone
    while bool(bad.any()):
        out[bad] = cfg.eps_low + span * torch.rand(int(bad.sum()), generator=rng)
        bad = out.abs() < cfg.eps_deadzone
    return out


def sample_batch(cfg: TrainConfig, rng: torch.Generator) -> ShiftSampleBatch:
    n = cfg.batch_size
    latents = torch.randn(n, cfg.latent_dim, generator=rng)
    first = torch.randint(cfg.num_directions, (n,), generator=rng)
    second = torch.randint(cfg.num_directions, (n,), generator=rng)
    if not cfg.allow_equal_directions and cfg.num_directions > 1:
        clash = second == first
        while bool(clash.any()):
            second[clash] = torch.randint(cfg.num_directions, (int(clash.sum()),), generator=rng)
            clash = second == first
    return ShiftSampleBatch(
        latents=latents,
        first_directions=first,
        first_magnitudes=sample_magnitudes(n, cfg, rng),
        second_directions=second,
        second_magnitudes=sample_magnitudes(n, cfg, rng),
    )


def classification_loss(logits: Tensor, directions: Tensor) -> Tensor:
    """Mean cross-entropy (softmax over the direction axis)."""
    directions = torch.as_tensor(directions, dtype=torch.long)
    if directions.numel() and not (
        0 <= int(directions.min()) and int(directions.max()) < logits.shape[-1]
    ):
        bad = int(directions[(directions < 0) | (directions >= logits.shape[-1])][0])
        raise IndexError(
            f"direction label {bad} out of range for {logits.shape[-1]} classes"
        )
    return F.cross_entropy(logits, directions)


def regression_loss(predicted: Tensor, target: Tensor) -> Tensor:
    """Mean absolute error between predicted and true magnitudes."""
    if predicted.shape != target.shape:
        raise ShapeError(
            f"predicted and target magnitudes differ in shape: "
            f"{tuple(predicted.shape)} vs {tuple(target.shape)}"
        )
    return (predicted - target).abs().mean()


def centroid_loss(
    bank: CentroidBank,
    shifts: Tensor,
    directions: Tensor,
    stats: dict | None = None,
) -> Tensor:
    """Mean (1 - cosine) between each shift and its direction's centroid.

    Centroids are constants here; gradient flows only into the shifts, so
    the loss pulls samples toward their cluster centre rather than dragging
    the centre toward the samples. Samples whose direction has no centroid
    yet are skipped (they will seed the bank after the step), and zero-norm
    shifts or centroids are skipped and tallied in ``stats``.
    """
    directions = torch.as_tensor(directions, dtype=torch.long)
    if shifts.ndim != 2 or shifts.shape[0] != directions.shape[0]:
        raise ShapeError(
            f"shifts must be (batch, d) aligned with directions; got "
            f"{tuple(shifts.shape)} for {directions.shape[0]} labels"
        )
    centroids = bank.centroids[directions].to(shifts.dtype)
    counts = bank.counts[directions]

    shift_norms = shifts.norm(dim=1)
    centroid_norms = centroids.norm(dim=1)
    seeded = counts > 0
    nonzero = (shift_norms > 0) & (centroid_norms > 0)
    mask = seeded & nonzero

    if stats is not None:
        stats["centroid_samples"] = int(mask.sum())
        stats["centroid_skipped_unseeded"] = int((~seeded).sum())
        stats["centroid_skipped_zero_norm"] = int((seeded & ~nonzero).sum())

    if not bool(mask.any()):
        return torch.zeros((), dtype=shifts.dtype)
    cosine = (shifts[mask] * centroids[mask]).sum(dim=1) / (
        shift_norms[mask] * centroid_norms[mask]
    )
    return (1.0 - cosine).mean()


def total_loss(classification: Tensor, regression: Tensor, centroid: Tensor, cfg: TrainConfig) -> Tensor:
    """Weighted sum of the three loss terms."""
    return classification + cfg.regression_weight * regression + cfg.centroid_weight * centroid


def _dump_batch(batch: ShiftSampleBatch, breakdown: dict) -> str:
    handle, path = tempfile.mkstemp(prefix="latentshift-nonfinite-", suffix=".pt")
    os.close(handle)
    torch.save(
        {
            "latents": batch.latents,
            "first_directions": batch.first_directions,
            "first_magnitudes": batch.first_magnitudes,
            "second_directions": batch.second_directions,
            "second_magnitudes": batch.second_magnitudes,
            "breakdown": breakdown,
        },
        path,
    )
    return path


def train_step(
    deformator: Deformator,
    reconstructor: PairReconstructor,
    bank: CentroidBank,
    generator: GeneratorHandle,
    optimizer: torch.optim.Optimizer,
    cfg: TrainConfig,
    rng: torch.Generator,
) -> dict:
    """One joint gradient step on the deformator and reconstructor.

    Returns the loss breakdown with keys ``classification``, ``regression``,
    ``centroid`` and ``total`` (plus centroid diagnostics).
    """
    batch = sample_batch(cfg, rng)
    n = cfg.batch_size

    # Both edits run through the deformator and reconstructor as one fused
    # batch; results are identical to two separate calls, just cheaper.
    encoded = encode_shift_batch(
        torch.cat([batch.first_directions, batch.second_directions]),
        torch.cat([batch.first_magnitudes, batch.second_magnitudes]),
        cfg.num_directions,
    )
    shifts = deformator(encoded)
    if not torch.isfinite(shifts).all():
        dump = _dump_batch(batch, {})
        raise NonFiniteLossError(
            f"deformator produced non-finite shifts; offending batch dumped to {dump}"
        )
    first_shift, second_shift = shifts[:n], shifts[n:]

    base = generator.generate(batch.latents)
    once = generator.inject_shift(batch.latents, first_shift)
    twice = generator.inject_shift(batch.latents, first_shift + second_shift)

    logits, magnitudes = reconstructor(
        torch.cat([base, once]), torch.cat([once, twice])
    )
    logits_first, logits_second = logits[:n], logits[n:]
    magnitude_first, magnitude_second = magnitudes[:n], magnitudes[n:]

    # Both consecutive pairs weigh equally in the classification and
    # regression terms; each pair's target magnitude is its own edit.
    cls = 0.5 * (
        classification_loss(logits_first, batch.first_directions)
        + classification_loss(logits_second, batch.second_directions)
    )
    reg = 0.5 * (
        regression_loss(magnitude_first, batch.first_magnitudes)
        + regression_loss(magnitude_second, batch.second_magnitudes)
    )

    all_directions = torch.cat([batch.first_directions, batch.second_directions])
    stats: dict = {}
    cen = centroid_loss(bank, shifts, all_directions, stats)

    loss = total_loss(cls, reg, cen, cfg)
    breakdown = {
        "classification": cls.detach().item(),
        "regression": reg.detach().item(),
        "centroid": cen.detach().item(),
        "total": loss.detach().item(),
        **stats,
    }
    if not torch.isfinite(loss):
        dump = _dump_batch(batch, breakdown)
        raise NonFiniteLossError(
            f"non-finite training loss {float(loss)}; offending batch dumped to {dump}"
        )

    optimizer.zero_grad()
    loss.backward()
    optimizer.step()

    bank.update_batch(all_directions, shifts.detach())
    return breakdown


@dataclass
class HistoryRow:
    step: int
    classification: float
    regression: float
    centroid: float
    total: float
    rca: float
    ppl: float


HISTORY_COLUMNS = ("step", "classification", "regression", "centroid", "total", "rca", "ppl")


def write_history_csv(path, rows: list[HistoryRow]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([getattr(row, col) for col in HISTORY_COLUMNS])


def read_history_csv(path) -> list[HistoryRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            HistoryRow(
                step=int(r["step"]),
                **{c: float(r[c]) for c in HISTORY_COLUMNS if c != "step"},
            )
            for r in reader
        ]


@dataclass
class TrainResult:
    deformator: Deformator
    reconstructor: PairReconstructor
    bank: CentroidBank
    config: TrainConfig
    history: list[HistoryRow] = field(default_factory=list)
    generator: GeneratorHandle | None = None


def train_loop(
    cfg: TrainConfig,
    generator: GeneratorHandle | None = None,
    out_dir=None,
    resume_from=None,
    log=None,
) -> TrainResult:
    """Run the full optimisation, evaluating and checkpointing periodically.

    Fully reproducible for a given config: model initialisation, the
    sampling stream, and every evaluation derive their seeds from
    ``cfg.seed`` by fixed splitting. ``resume_from`` restores model,
    optimizer, bank and sampler state, so a resumed run matches an
    uninterrupted one.
    """
    from .metrics import EmbeddingNet, eval_ppl, eval_rca

    if generator is None:
        generator = cfg.make_generator()
    generator.eval()
    for param in generator.parameters():
        param.requires_grad_(False)

    deformator = Deformator(
        cfg.num_directions,
        cfg.latent_dim,
        mode=cfg.deformator_mode,
        hidden_dim=cfg.deformator_hidden,
        seed=derive_seed(cfg.seed, "deformator-init"),
    )
    reconstructor = PairReconstructor(
        cfg.num_directions,
        generator.output_shape,
        backbone=cfg.backbone,
        seed=derive_seed(cfg.seed, "reconstructor-init"),
    )
    bank = CentroidBank(cfg.num_directions, cfg.latent_dim)
    optimizer = torch.optim.Adam(
        list(deformator.parameters()) + list(reconstructor.parameters()),
        lr=cfg.learning_rate,
        foreach=True,
    )
    sampler = new_generator(derive_seed(cfg.seed, "sampler"))
    embedding = EmbeddingNet(
        in_channels=generator.channels, seed=derive_seed(cfg.seed, "embedding")
    )

    start_step = 0
    if resume_from is not None:
        loaded = load_checkpoint(resume_from, expected_config=cfg)
        deformator.load_state_dict(loaded.deformator.state_dict())
        reconstructor.load_state_dict(loaded.reconstructor.state_dict())
        bank.load_state_dict(loaded.bank.state_dict())
        if loaded.optimizer_state is not None:
            optimizer.load_state_dict(loaded.optimizer_state)
        if loaded.sampler_state is not None:
            sampler.set_state(loaded.sampler_state)
        start_step = loaded.step

    out_dir = Path(out_dir) if out_dir is not None else None
    history: list[HistoryRow] = []
    interval_sums = {"classification": 0.0, "regression": 0.0, "centroid": 0.0, "total": 0.0}
    interval_count = 0
    started = time.monotonic()

    def evaluate(step: int) -> HistoryRow:
        rca = eval_rca(
            deformator,
            reconstructor,
            generator,
            n_samples=cfg.eval_samples,
            eps_low=cfg.eps_low,
            eps_high=cfg.eps_high,
            eps_deadzone=cfg.eps_deadzone,
            seed=derive_seed(cfg.seed, f"eval-rca-{step}"),
        )
        ppl = eval_ppl(
            deformator,
            generator,
            embedding,
            n_samples=cfg.eval_samples,
            delta=cfg.ppl_delta,
            eps_low=cfg.eps_low,
            eps_high=cfg.eps_high,
            seed=derive_seed(cfg.seed, f"eval-ppl-{step}"),
        )
        scale = max(interval_count, 1)
        return HistoryRow(
            step=step,
            classification=interval_sums["classification"] / scale,
            regression=interval_sums["regression"] / scale,
            centroid=interval_sums["centroid"] / scale,
            total=interval_sums["total"] / scale,
            rca=rca.accuracy,
            ppl=ppl,
        )

    def write_state(step: int) -> None:
        if out_dir is not None:
            save_checkpoint(
                out_dir / "checkpoint.pt",
                deformator=deformator,
                reconstructor=reconstructor,
                bank=bank,
                config=cfg,
                step=step,
                optimizer=optimizer,
                sampler_state=sampler.get_state(),
            )

    for step in range(start_step + 1, cfg.steps + 1):
        breakdown = train_step(deformator, reconstructor, bank, generator, optimizer, cfg, sampler)
        for key in interval_sums:
            interval_sums[key] += breakdown[key]
        interval_count += 1

        if step % cfg.eval_interval == 0:
            row = evaluate(step)
            history.append(row)
            interval_sums = dict.fromkeys(interval_sums, 0.0)
            interval_count = 0
            if log is not None:
                elapsed = time.monotonic() - started
                log(
                    f"step {step}/{cfg.steps} total={row.total:.4f} "
                    f"rca={row.rca:.3f} ppl={row.ppl:.2f} [{elapsed:.0f}s]"
                )
        if cfg.checkpoint_interval and step % cfg.checkpoint_interval == 0:
            write_state(step)

    write_state(cfg.steps if cfg.steps > start_step else start_step)
    if out_dir is not None:
        write_history_csv(out_dir / "history.csv", history)

    return TrainResult(
        deformator=deformator,
        reconstructor=reconstructor,
        bank=bank,
        config=cfg,
        history=history,
        generator=generator,
    )
