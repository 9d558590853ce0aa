"""Training loop, evaluation pass, and binary checkpoints.

One optimizer step runs encode -> quantize -> straight-through -> nested mask
-> decode -> weighted loss -> backward -> AdamW, with a single keep-count draw
per batch. The batch is stacked vertically into one tall image so the whole
step is a single graph; patches never cross image boundaries because every
image height is a multiple of the patch side.

Everything is deterministic given (seed, config, dataset): batches and keep
counts come from one generator whose state is serialized into checkpoints, so
a resumed run reproduces the uninterrupted loss log bit for bit.

Checkpoint layout: magic ``MGCK``, one version byte, a little-endian uint32
length-prefixed JSON manifest (config, step, generator state, tensor
directory), then raw little-endian float32 blocks at the listed offsets.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import ndgrad as ng
from .losses import LossBreakdown, LossWeights, total_loss
from .metrics import psnr, ssim
from .model import ModelConfig, ParamSet, decode, encode, init_params
from .optim import OptState, adamw_step
from .quantizer import (
    CodebookSet,
    GroupUsage,
    MaskSchedule,
    TokenMap,
    nested_mask,
    quantize,
    sample_keep,
    straight_through,
    usage_stats,
)

__all__ = [
    "TrainConfig",
    "Checkpoint",
    "EvalResult",
    "train_step",
    "fit",
    "evaluate",
    "reconstruct",
    "save_checkpoint",
    "load_checkpoint",
]

CHECKPOINT_MAGIC = b"MGCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Full recipe: architecture, quantizer, loss weights, and optimizer."""

    model: ModelConfig = field(default_factory=ModelConfig)
    groups: int = 4
    codebook_size: int = 64
    mask_probs: tuple[float, ...] | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    learning_rate: float = 1e-5
    weight_decay: float = 5e-2
    beta1: float = 0.9
    beta2: float = 0.95
    adam_eps: float = 1e-8
    batch_size: int = 8
    steps: int = 200
    seed: int = 0
    eval_every: int = 50

    def __post_init__(self):
        if self.model.latent_dim % self.groups != 0:
            raise ValueError(
                f"latent_dim {self.model.latent_dim} not divisible by groups {self.groups}"
            )
        for name in ("learning_rate", "weight_decay", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        for name in ("groups", "codebook_size", "batch_size", "eval_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.mask_probs is not None:
            object.__setattr__(self, "mask_probs", tuple(float(p) for p in self.mask_probs))
            if len(self.mask_probs) != self.groups:
                raise ValueError("mask_probs length must equal groups")
            MaskSchedule(self.mask_probs)  # validates sign and sum

    @property
    def schedule(self) -> MaskSchedule:
        if self.mask_probs is None:
            return MaskSchedule.default(self.groups)
        return MaskSchedule(self.mask_probs)

    @property
    def sub_dim(self) -> int:
        return self.model.latent_dim // self.groups

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        raw["model"] = ModelConfig(**raw["model"])
        raw["weights"] = LossWeights(**raw["weights"])
        if raw.get("mask_probs") is not None:
            raw["mask_probs"] = tuple(raw["mask_probs"])
        return cls(**raw)


@dataclass
class Checkpoint:
    """Everything needed to continue or serve a run."""

    config: TrainConfig
    params: ParamSet
    codebooks: CodebookSet
    opt: OptState
    step: int
    rng_state: dict


@dataclass
class EvalResult:
    psnr: float
    ssim: float
    usage: GroupUsage
    per_image_psnr: list[float]


def _init_state(cfg: TrainConfig) -> tuple[ParamSet, CodebookSet, OptState, np.random.Generator]:
    seeds = np.random.SeedSequence(cfg.seed).generate_state(3)
    params = init_params(cfg.model, int(seeds[0]))
    codebooks = CodebookSet.initialize(cfg.groups, cfg.codebook_size, cfg.sub_dim, int(seeds[1]))
    opt = OptState.for_params(_trainables(params, codebooks))
    rng = np.random.default_rng(int(seeds[2]))
    return params, codebooks, opt, rng


def _trainables(params: ParamSet, codebooks: CodebookSet) -> dict[str, ng.Tensor]:
    merged = dict(params)
    for i, table in enumerate(codebooks.tables):
        merged[f"codebook.{i}"] = table
    return merged


def train_step(
    batch: list[np.ndarray],
    params: ParamSet,
    codebooks: CodebookSet,
    opt: OptState,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[LossBreakdown, TokenMap, int]:
    """One optimizer step over a batch; returns losses, tokens, and the keep count."""
    if not batch:
        raise ValueError("train_step: batch must be non-empty")
    x = np.concatenate([np.asarray(im, dtype=np.float32) for im in batch], axis=0)
    xt = ng.constant(x)

    z = encode(xt, params, cfg.model)
    z_q, tokens, _ = quantize(z, codebooks)
    st = straight_through(z, z_q)
    m_keep = sample_keep(cfg.schedule, rng)
    masked = nested_mask(st, m_keep, cfg.groups)
    recon = decode(masked, params, cfg.model)
    breakdown, total = total_loss(recon, xt, z, z_q, cfg.weights)

    trainables = _trainables(params, codebooks)
    for p in trainables.values():
        p.grad = None
    total.backward()
    grads = {
        name: (p.grad if p.grad is not None else np.zeros(p.shape, dtype=np.float32))
        for name, p in trainables.items()
    }
    adamw_step(
        trainables,
        grads,
        opt,
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.adam_eps,
    )
    return breakdown, tokens, m_keep


def reconstruct(
    image: np.ndarray,
    params: ParamSet,
    codebooks: CodebookSet,
    model_cfg: ModelConfig,
    m_keep: int | None = None,
) -> tuple[np.ndarray, TokenMap]:
    """Full codec pass for one image: encode, quantize, optional mask, decode."""
    z = encode(np.asarray(image, dtype=np.float32), params, model_cfg)
    z_q, tokens, _ = quantize(z, codebooks)
    latent = z_q
    if m_keep is not None:
        latent = nested_mask(z_q, m_keep, codebooks.groups)
    recon = decode(latent, params, model_cfg)
    return recon.data, tokens


def evaluate(
    images,
    params: ParamSet,
    codebooks: CodebookSet,
    model_cfg: ModelConfig,
    m_keep: int | None = None,
) -> EvalResult:
    """Mean PSNR/SSIM plus codebook usage over an image sequence."""
    images = list(images)
    if not images:
        raise ValueError("evaluate: needs at least one image")
    psnrs, ssims, maps = [], [], []
    for im in images:
        recon, tokens = reconstruct(im, params, codebooks, model_cfg, m_keep)
        psnrs.append(psnr(im, recon))
        ssims.append(ssim(im, recon))
        maps.append(tokens)
    usage = usage_stats(maps, codebooks.size, codebooks.groups)
    return EvalResult(
        psnr=float(np.mean(psnrs)),
        ssim=float(np.mean(ssims)),
        usage=usage,
        per_image_psnr=[float(p) for p in psnrs],
    )


def _heldout_split(dataset: list[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    n_eval = len(dataset) // 10
    if n_eval == 0:
        return list(dataset), []
    return list(dataset[:-n_eval]), list(dataset[-n_eval:])


def fit(
    cfg: TrainConfig,
    dataset: list[np.ndarray],
    log_path: str | Path | None = None,
    resume_from: "Checkpoint | str | Path | None" = None,
) -> tuple[Checkpoint, list[dict]]:
    """Run the configured number of steps and return the final checkpoint.

    The held-out slice is the last tenth of the dataset order; it gets a PSNR
    evaluation every ``cfg.eval_every`` steps. One JSON-compatible record is
    emitted per step (and appended to ``log_path`` when given).
    """
    if not dataset:
        raise ValueError("fit: dataset is empty")
    train_pool, heldout = _heldout_split(dataset)

    if resume_from is not None:
        ckpt = resume_from if isinstance(resume_from, Checkpoint) else load_checkpoint(resume_from)
        # The step target may grow across resumes; everything else must match.
        if replace(ckpt.config, steps=cfg.steps) != cfg:
            raise ValueError("fit: resume checkpoint was produced by a different config")
        if ckpt.step > cfg.steps:
            raise ValueError(f"fit: checkpoint is at step {ckpt.step}, past cfg.steps={cfg.steps}")
        params, codebooks, opt = ckpt.params, ckpt.codebooks, ckpt.opt
        rng = np.random.default_rng()
        rng.bit_generator.state = ckpt.rng_state
        start = ckpt.step
    else:
        params, codebooks, opt, rng = _init_state(cfg)
        start = 0

    log_file = open(log_path, "a", encoding="utf-8") if log_path is not None else None
    records: list[dict] = []
    try:
        for step in range(start, cfg.steps):
            idx = rng.integers(0, len(train_pool), size=cfg.batch_size)
            batch = [train_pool[int(i)] for i in idx]
            breakdown, tokens, m_keep = train_step(batch, params, codebooks, opt, cfg, rng)
            usage = usage_stats([tokens], codebooks.size, codebooks.groups)
            record = {
                "step": step + 1,
                **breakdown.as_dict(),
                "m_keep": m_keep,
                "usage": float(usage.usage.mean()),
            }
            if heldout and (step + 1) % cfg.eval_every == 0:
                record["psnr"] = evaluate(heldout, params, codebooks, cfg.model).psnr
            records.append(record)
            if log_file is not None:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
    finally:
        if log_file is not None:
            log_file.close()

    ckpt = Checkpoint(
        config=cfg,
        params=params,
        codebooks=codebooks,
        opt=opt,
        step=cfg.steps,
        rng_state=rng.bit_generator.state,
    )
    return ckpt, records


# -- checkpoint serialization ---------------------------------------------------


def _tensor_entries(ckpt: Checkpoint) -> list[tuple[str, np.ndarray]]:
    entries: list[tuple[str, np.ndarray]] = []
    for name, p in ckpt.params.items():
        entries.append((f"param.{name}", p.data))
    for i, table in enumerate(ckpt.codebooks.tables):
        entries.append((f"codebook.{i}", table.data))
    for name, arr in ckpt.opt.m.items():
        entries.append((f"opt.m.{name}", arr))
    for name, arr in ckpt.opt.v.items():
        entries.append((f"opt.v.{name}", arr))
    return entries


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    """Write the binary checkpoint format described in the module docstring."""
    entries = _tensor_entries(ckpt)
    directory = []
    offset = 0
    blobs = []
    for name, arr in entries:
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)}
        )
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "opt_step": ckpt.opt.step,
        "rng_state": ckpt.rng_state,
        "tensors": directory,
    }
    payload = json.dumps(manifest).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(bytes([CHECKPOINT_VERSION]))
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read and validate a checkpoint; rejects foreign or truncated files."""
    raw = Path(path).read_bytes()
    if len(raw) < 9:
        raise ValueError(f"checkpoint {path}: truncated header ({len(raw)} bytes)")
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"checkpoint {path}: bad magic {raw[:4]!r}, not a groupvq checkpoint")
    version = raw[4]
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint {path}: format version {version} unsupported "
            f"(this build reads version {CHECKPOINT_VERSION})"
        )
    (manifest_len,) = struct.unpack("<I", raw[5:9])
    if len(raw) < 9 + manifest_len:
        raise ValueError(f"checkpoint {path}: truncated manifest")
    manifest = json.loads(raw[9 : 9 + manifest_len].decode("utf-8"))
    blob = raw[9 + manifest_len :]

    tensors: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        if start + nbytes > len(blob):
            raise ValueError(f"checkpoint {path}: tensor {entry['name']!r} extends past EOF")
        arr = np.frombuffer(blob[start : start + nbytes], dtype="<f4").reshape(entry["shape"])
        tensors[entry["name"]] = arr.astype(np.float32)

    cfg = TrainConfig.from_dict(manifest["config"])
    params: ParamSet = {}
    tables: dict[int, ng.Tensor] = {}
    opt_m: dict[str, np.ndarray] = {}
    opt_v: dict[str, np.ndarray] = {}
    for name, arr in tensors.items():
        if name.startswith("param."):
            params[name[len("param.") :]] = ng.parameter(arr)
        elif name.startswith("codebook."):
            tables[int(name[len("codebook.") :])] = ng.parameter(arr)
        elif name.startswith("opt.m."):
            opt_m[name[len("opt.m.") :]] = arr
        elif name.startswith("opt.v."):
            opt_v[name[len("opt.v.") :]] = arr
    codebooks = CodebookSet([tables[i] for i in sorted(tables)])
    opt = OptState(m=opt_m, v=opt_v, step=manifest["opt_step"])
    rng_state = manifest["rng_state"]
    return Checkpoint(
        config=cfg,
        params=params,
        codebooks=codebooks,
        opt=opt,
        step=manifest["step"],
        rng_state=rng_state,
    )
