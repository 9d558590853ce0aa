import csv

import numpy as np
import pytest

from groupvq.data import synthetic_images
from groupvq.experiments import (
    ExperimentReport,
    run_ablation_grid,
    run_deadpoint_experiment,
    run_mkeep_sweep,
)
from groupvq.model import ModelConfig
from groupvq.trainer import TrainConfig, evaluate, fit


@pytest.fixture(scope="module")
def masked_checkpoint():
    cfg = TrainConfig(
        model=ModelConfig(downsample=8, latent_dim=16, hidden_dim=64, depth=1),
        groups=4,
        codebook_size=32,
        batch_size=8,
        steps=300,
        seed=31,
        learning_rate=1e-3,
        eval_every=10**9,
    )
    images = synthetic_images(64, 32, seed=32)
    ckpt, _ = fit(cfg, images)
    return ckpt, images


class TestReport:
    def test_row_keys_must_match_columns(self):
        report = ExperimentReport(kind="x", columns=("a", "b"))
        with pytest.raises(ValueError, match="columns"):
            report.add(a=1, c=2)

    def test_csv_schema_and_quoting(self, tmp_path):
        report = ExperimentReport(kind="x", columns=("name", "value"))
        report.add(name='needs,"quoting"', value=1.5)
        path = tmp_path / "report.csv"
        report.write_csv(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["name", "value"]
        assert rows[1] == ['needs,"quoting"', "1.5"]


class TestDeadpoints:
    def test_small_cell_beats_big_cell(self):
        report, coords = run_deadpoint_experiment(
            cells=((2, 16), (8, 256)), image_count=64, steps=150, seed=0
        )
        assert len(report.rows) == 2
        by_dim = {r["sub_dim"]: r for r in report.rows}
        assert by_dim[2]["dead_fraction"] < by_dim[8]["dead_fraction"]
        assert set(report.columns) == {
            "sub_dim", "codebook_size", "usage", "dead_fraction", "psnr", "loss"
        }

    def test_coords_emitted_for_2d_cells_only(self):
        report, coords = run_deadpoint_experiment(
            cells=((2, 16), (8, 256)), image_count=48, steps=60, seed=1
        )
        assert set(coords) == {(2, 16)}
        table = coords[(2, 16)]
        assert table.shape == (16, 3)
        assert set(np.unique(table[:, 2])) <= {0.0, 1.0}

    def test_one_row_per_requested_cell(self):
        report, _ = run_deadpoint_experiment(
            cells=((2, 8),), image_count=32, steps=40, seed=2
        )
        assert len(report.rows) == 1


class TestMkeepSweep:
    def test_row_per_group_and_final_matches_eval(self, masked_checkpoint):
        ckpt, images = masked_checkpoint
        heldout = images[-8:]
        report = run_mkeep_sweep(ckpt, heldout)
        assert [r["m_keep"] for r in report.rows] == [1, 2, 3, 4]
        standard = evaluate(heldout, ckpt.params, ckpt.codebooks, ckpt.config.model)
        assert report.rows[-1]["psnr"] == pytest.approx(standard.psnr, abs=1e-9)
        assert report.rows[-1]["ssim"] == pytest.approx(standard.ssim, abs=1e-9)

    def test_coarse_preview_strictly_worse_than_full(self, masked_checkpoint):
        ckpt, images = masked_checkpoint
        report = run_mkeep_sweep(ckpt, images[-8:])
        assert report.rows[0]["psnr"] < report.rows[-1]["psnr"]

    def test_csv_columns(self, masked_checkpoint, tmp_path):
        ckpt, images = masked_checkpoint
        report = run_mkeep_sweep(ckpt, images[-4:])
        path = tmp_path / "mkeep.csv"
        report.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "m_keep,psnr,ssim"


class TestGrid:
    def test_budgeted_cells_report_usage_within_bounds(self):
        report = run_ablation_grid(
            cells=((1, 32), (2, 16)),
            image_count=48,
            steps=80,
            seed=3,
            learning_rate=1e-3,
        )
        assert len(report.rows) == 2
        for row in report.rows:
            assert 0.0 < row["usage"] <= 1.0
            assert row["sub_dim"] == 32 // row["groups"]

    def test_rows_ordered_by_configuration(self):
        report = run_ablation_grid(
            cells=((2, 16), (1, 32)),
            image_count=32,
            steps=30,
            seed=4,
        )
        assert [r["groups"] for r in report.rows] == [1, 2]
