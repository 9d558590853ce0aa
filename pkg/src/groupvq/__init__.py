"""Multi-group vector-quantized image tokenizer.

An autoencoder whose latent grid is split into groups of channels, each
quantized against its own codebook, trained with nested masking so early
groups carry the coarse content. Ships a token codec (bit-packed streams),
a deterministic trainer with binary checkpoints, and diagnostic experiments.
"""

from .codec import EncodeSummary, decode_tokens, encode_image
from .data import blob_images, load_dataset, load_image, save_image, synthetic_images
from .losses import (
    LossBreakdown,
    LossWeights,
    charbonnier,
    commit_loss,
    l2_loss,
    total_loss,
    vq_loss,
)
from .metrics import psnr, ssim
from .model import ModelConfig, ParamSet, decode, encode, init_params
from .ndgrad import ShapeError, Tensor, grad_check
from .optim import OptState, adamw_step
from .quantizer import (
    CodebookSet,
    GroupUsage,
    MaskSchedule,
    TokenMap,
    capacity_log2,
    codes_to_latent,
    nearest_code,
    nested_mask,
    quantize,
    sample_keep,
    split_groups,
    straight_through,
    usage_stats,
)
from .tokenstream import (
    StreamHeader,
    bits_per_index,
    pack_indices,
    read_stream,
    unpack_indices,
    write_stream,
)
from .trainer import (
    Checkpoint,
    EvalResult,
    TrainConfig,
    evaluate,
    fit,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    train_step,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "ShapeError",
    "grad_check",
    "ModelConfig",
    "ParamSet",
    "init_params",
    "encode",
    "decode",
    "CodebookSet",
    "TokenMap",
    "MaskSchedule",
    "GroupUsage",
    "split_groups",
    "nearest_code",
    "quantize",
    "codes_to_latent",
    "straight_through",
    "sample_keep",
    "nested_mask",
    "usage_stats",
    "capacity_log2",
    "LossWeights",
    "LossBreakdown",
    "charbonnier",
    "l2_loss",
    "commit_loss",
    "vq_loss",
    "total_loss",
    "psnr",
    "ssim",
    "OptState",
    "adamw_step",
    "TrainConfig",
    "Checkpoint",
    "EvalResult",
    "train_step",
    "fit",
    "evaluate",
    "reconstruct",
    "save_checkpoint",
    "load_checkpoint",
    "load_dataset",
    "load_image",
    "save_image",
    "synthetic_images",
    "blob_images",
    "StreamHeader",
    "bits_per_index",
    "pack_indices",
    "unpack_indices",
    "write_stream",
    "read_stream",
    "EncodeSummary",
    "encode_image",
    "decode_tokens",
]
