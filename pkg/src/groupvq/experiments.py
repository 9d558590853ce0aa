"""Diagnostic studies: dead codes, coarse-to-fine masking, and group sweeps.

Each study trains (or reuses) desk-scale models and emits a CSV report whose
column set is fixed per study kind, so downstream plotting stays stable. Cells
are independent; rows are ordered by configuration, not completion.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import blob_images, synthetic_images
from .model import ModelConfig
from .quantizer import quantize
from .trainer import Checkpoint, TrainConfig, evaluate, fit
from .model import encode as model_encode

__all__ = [
    "ExperimentReport",
    "DEADPOINT_CELLS",
    "GRID_CELLS",
    "run_deadpoint_experiment",
    "run_mkeep_sweep",
    "run_ablation_grid",
]

DEADPOINT_CELLS: tuple[tuple[int, int], ...] = ((2, 32), (16, 1024))
GRID_CELLS: tuple[tuple[int, int], ...] = ((1, 256), (2, 64), (4, 64), (8, 64))


@dataclass
class ExperimentReport:
    """Rows keyed by configuration with a stable per-kind column set."""

    kind: str
    columns: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)

    def add(self, **values) -> None:
        if set(values) != set(self.columns):
            raise ValueError(
                f"report {self.kind!r}: row keys {sorted(values)} != columns {sorted(self.columns)}"
            )
        self.rows.append(values)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.columns))
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


def _deadpoint_config(sub_dim: int, codebook_size: int, steps: int, seed: int, lr: float) -> TrainConfig:
    return TrainConfig(
        model=ModelConfig(downsample=4, latent_dim=sub_dim, hidden_dim=64, depth=1),
        groups=1,
        codebook_size=codebook_size,
        batch_size=16,
        steps=steps,
        seed=seed,
        learning_rate=lr,
        eval_every=10**9,
    )


def run_deadpoint_experiment(
    cells: tuple[tuple[int, int], ...] = DEADPOINT_CELLS,
    *,
    image_count: int = 160,
    image_size: int = 16,
    steps: int = 600,
    seed: int = 0,
    learning_rate: float = 1e-3,
) -> tuple[ExperimentReport, dict[tuple[int, int], np.ndarray]]:
    """Train one single-group quantizer per (sub_dim, K) cell on blob images.

    A code is dead when it is never selected during a full evaluation pass.
    For 2-D cells the raw code coordinates (x, y, used) are also returned for
    external plotting.
    """
    report = ExperimentReport(
        kind="deadpoints",
        columns=("sub_dim", "codebook_size", "usage", "dead_fraction", "psnr", "loss"),
    )
    coords: dict[tuple[int, int], np.ndarray] = {}
    images = blob_images(image_count, image_size, seed=seed + 1)
    for sub_dim, codebook_size in sorted(cells):
        cfg = _deadpoint_config(sub_dim, codebook_size, steps, seed, learning_rate)
        ckpt, records = fit(cfg, images)
        result = evaluate(images, ckpt.params, ckpt.codebooks, cfg.model)
        usage = float(result.usage.usage[0])
        report.add(
            sub_dim=sub_dim,
            codebook_size=codebook_size,
            usage=usage,
            dead_fraction=1.0 - usage,
            psnr=result.psnr,
            loss=records[-1]["total"] if records else float("nan"),
        )
        if sub_dim == 2:
            used = np.zeros(codebook_size, dtype=bool)
            for image in images:
                z = model_encode(image, ckpt.params, cfg.model)
                _, tokens, _ = quantize(z, ckpt.codebooks)
                used[np.unique(tokens.indices)] = True
            table = ckpt.codebooks.tables[0].data
            coords[(sub_dim, codebook_size)] = np.column_stack(
                [table[:, 0], table[:, 1], used.astype(np.float32)]
            )
    return report, coords


def run_mkeep_sweep(checkpoint: Checkpoint, images) -> ExperimentReport:
    """Reconstruction quality using only the first m groups, for m = 1..G."""
    images = list(images)
    cfg = checkpoint.config
    report = ExperimentReport(kind="mkeep", columns=("m_keep", "psnr", "ssim"))
    for m_keep in range(1, cfg.groups + 1):
        result = evaluate(
            images, checkpoint.params, checkpoint.codebooks, cfg.model, m_keep=m_keep
        )
        report.add(m_keep=m_keep, psnr=result.psnr, ssim=result.ssim)
    return report


def run_ablation_grid(
    cells: tuple[tuple[int, int], ...] = GRID_CELLS,
    *,
    latent_dim: int = 32,
    image_count: int = 256,
    image_size: int = 32,
    steps: int = 1500,
    seed: int = 0,
    learning_rate: float = 1e-3,
    dataset: list[np.ndarray] | None = None,
) -> ExperimentReport:
    """Train one model per (groups, K) cell under an identical budget.

    The latent width stays fixed, so more groups means narrower sub-tokens.
    Every cell sees the same dataset, seed, and step count.
    """
    if dataset is None:
        dataset = synthetic_images(image_count, image_size, seed=seed + 1)
    report = ExperimentReport(
        kind="grid",
        columns=("groups", "codebook_size", "sub_dim", "psnr", "ssim", "usage", "loss"),
    )
    for groups, codebook_size in sorted(cells):
        cfg = TrainConfig(
            model=ModelConfig(downsample=8, latent_dim=latent_dim, hidden_dim=128, depth=2),
            groups=groups,
            codebook_size=codebook_size,
            batch_size=8,
            steps=steps,
            seed=seed,
            learning_rate=learning_rate,
            eval_every=10**9,
        )
        ckpt, records = fit(cfg, dataset)
        heldout = dataset[-max(1, len(dataset) // 10) :]
        result = evaluate(heldout, ckpt.params, ckpt.codebooks, cfg.model)
        report.add(
            groups=groups,
            codebook_size=codebook_size,
            sub_dim=latent_dim // groups,
            psnr=result.psnr,
            ssim=result.ssim,
            usage=float(result.usage.usage.mean()),
            loss=records[-1]["total"] if records else float("nan"),
        )
    return report
