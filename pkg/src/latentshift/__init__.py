"""latentshift: unsupervised discovery of interpretable editing directions
in the latent space of a pretrained, differentiable image generator."""

from .checkpoint import load_checkpoint, load_generator, save_checkpoint, save_generator
from .estimator import LatentDirectionFinder
from .exceptions import (
    CapabilityError,
    CheckpointError,
    ConfigError,
    DegenerateInputError,
    IncompatibleCheckpointError,
    LatentShiftError,
    NonFiniteLossError,
    ShapeError,
)
from .generators import (
    BlobGenerator,
    ConvGenerator,
    GeneratorHandle,
    LayeredBlobGenerator,
    make_generator,
    register_generator,
)
from .metrics import (
    EmbeddingNet,
    MetricReport,
    compute_metric_report,
    eval_ppl,
    eval_rca,
    factor_alignment,
)
from .reconstructor import PairReconstructor
from .shifts import (
    CentroidBank,
    Deformator,
    DirectionSpec,
    ShiftRequest,
    apply_shift,
    cosine_similarity,
    encode_shift,
    encode_shift_batch,
    export_directions_document,
    one_hot,
)
from .training import (
    TrainConfig,
    TrainResult,
    centroid_loss,
    classification_loss,
    regression_loss,
    sample_batch,
    total_loss,
    train_loop,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "BlobGenerator",
    "CapabilityError",
    "CentroidBank",
    "CheckpointError",
    "ConfigError",
    "ConvGenerator",
    "Deformator",
    "DegenerateInputError",
    "DirectionSpec",
    "EmbeddingNet",
    "GeneratorHandle",
    "IncompatibleCheckpointError",
    "LatentDirectionFinder",
    "LatentShiftError",
    "LayeredBlobGenerator",
    "MetricReport",
    "NonFiniteLossError",
    "PairReconstructor",
    "ShapeError",
    "ShiftRequest",
    "TrainConfig",
    "TrainResult",
    "apply_shift",
    "centroid_loss",
    "classification_loss",
    "compute_metric_report",
    "cosine_similarity",
    "encode_shift",
    "encode_shift_batch",
    "eval_ppl",
    "eval_rca",
    "export_directions_document",
    "factor_alignment",
    "load_checkpoint",
    "load_generator",
    "make_generator",
    "one_hot",
    "regression_loss",
    "register_generator",
    "sample_batch",
    "save_checkpoint",
    "save_generator",
    "total_loss",
    "train_loop",
    "train_step",
]
