import json

import numpy as np
import pytest

from groupvq import ndgrad as ng
from groupvq import trainer as tr
from groupvq.data import synthetic_images
from groupvq.losses import LossWeights
from groupvq.model import ModelConfig
from groupvq.optim import OptState, adamw_step
from groupvq.trainer import (
    TrainConfig,
    fit,
    load_checkpoint,
    save_checkpoint,
    train_step,
)

SMALL = TrainConfig(
    model=ModelConfig(downsample=4, latent_dim=8, hidden_dim=16, depth=1),
    groups=2,
    codebook_size=8,
    batch_size=2,
    steps=5,
    seed=42,
    eval_every=2,
    learning_rate=1e-3,
)


@pytest.fixture(scope="module")
def small_dataset():
    return synthetic_images(24, 16, seed=77)


class TestAdamW:
    def test_zero_grad_applies_exact_decay(self):
        lr, wd = 1e-5, 5e-2
        p = {"w": ng.parameter(np.array([1.0, -2.0], np.float32))}
        initial = p["w"].data.copy()
        state = OptState.for_params(p)
        adamw_step(p, {"w": np.zeros(2, np.float32)}, state, lr=lr, weight_decay=wd)
        expected = initial * np.float32(1.0 - lr * wd)
        np.testing.assert_array_equal(p["w"].data, expected)

    def test_first_step_matches_hand_recurrence(self):
        lr = 1e-3
        p = {"w": ng.parameter(np.zeros(1, np.float32))}
        state = OptState.for_params(p)
        adamw_step(p, {"w": np.ones(1, np.float32)}, state, lr=lr, weight_decay=5e-2)
        # m_hat = v_hat = 1 after bias correction, so the update is -lr/(1+eps).
        assert p["w"].data[0] == pytest.approx(-lr, rel=1e-5)
        assert state.step == 1

    def test_two_runs_bit_identical(self):
        def run():
            rng = np.random.default_rng(5)
            p = {"w": ng.parameter(rng.normal(size=(3, 3)).astype(np.float32))}
            state = OptState.for_params(p)
            for _ in range(10):
                g = rng.normal(size=(3, 3)).astype(np.float32)
                adamw_step(p, {"w": g}, state, lr=1e-3, weight_decay=1e-2)
            return p["w"].data.tobytes()

        assert run() == run()

    def test_nan_gradient_rejected_with_name(self):
        p = {"enc.w": ng.parameter(np.ones(2, np.float32))}
        state = OptState.for_params(p)
        bad = np.array([1.0, np.nan], np.float32)
        with pytest.raises(ValueError, match="enc.w"):
            adamw_step(p, {"enc.w": bad}, state, lr=1e-3, weight_decay=0.01)
        np.testing.assert_array_equal(p["w" if False else "enc.w"].data, [1.0, 1.0])
        assert state.step == 0

    def test_missing_gradient_rejected(self):
        p = {"a": ng.parameter(np.ones(1, np.float32))}
        with pytest.raises(ValueError, match="missing"):
            adamw_step(p, {}, OptState.for_params(p), lr=1e-3, weight_decay=0.01)


class TestTrainStep:
    def test_zero_weights_only_decay(self, small_dataset):
        cfg = tr.TrainConfig(
            model=SMALL.model,
            groups=2,
            codebook_size=8,
            weights=LossWeights(l2=0, charbonnier=0, commit=0, vq=0, gan=0, perceptual=0),
            batch_size=2,
            steps=1,
            seed=1,
            learning_rate=1e-3,
            weight_decay=5e-2,
        )
        params, codebooks, opt, rng = tr._init_state(cfg)
        before = {k: p.data.copy() for k, p in tr._trainables(params, codebooks).items()}
        train_step(small_dataset[:2], params, codebooks, opt, cfg, rng)
        decay = np.float32(1.0 - cfg.learning_rate * cfg.weight_decay)
        for k, p in tr._trainables(params, codebooks).items():
            np.testing.assert_array_equal(p.data, before[k] * decay)

    def test_forced_full_keep_equals_no_masking(self, small_dataset, monkeypatch):
        cfg = tr.TrainConfig(
            model=SMALL.model, groups=2, codebook_size=8,
            mask_probs=(0.0, 1.0), batch_size=2, steps=1, seed=3, learning_rate=1e-3,
        )

        def run(disable_mask):
            params, codebooks, opt, rng = tr._init_state(cfg)
            if disable_mask:
                monkeypatch.setattr(tr, "nested_mask", lambda z_q, m, g: z_q)
            else:
                monkeypatch.setattr(tr, "nested_mask", tr.nested_mask)
            train_step(small_dataset[:2], params, codebooks, opt, cfg, rng)
            return {k: p.data.tobytes() for k, p in tr._trainables(params, codebooks).items()}

        assert run(False) == run(True)

    def test_empty_batch_rejected(self):
        params, codebooks, opt, rng = tr._init_state(SMALL)
        with pytest.raises(ValueError, match="batch"):
            train_step([], params, codebooks, opt, SMALL, rng)

    def test_loss_decreases_over_200_steps(self):
        images = synthetic_images(64, 32, seed=11)
        cfg = TrainConfig(
            model=ModelConfig(downsample=8, latent_dim=32, hidden_dim=64, depth=1),
            groups=4,
            codebook_size=64,
            batch_size=8,
            steps=200,
            seed=11,
            learning_rate=1e-4,
            eval_every=1000,
        )
        _, records = fit(cfg, images)
        assert records[-1]["total"] < records[0]["total"]


class TestGradientRouting:
    def _grads(self, weights, small_dataset):
        cfg = tr.TrainConfig(
            model=SMALL.model, groups=2, codebook_size=8,
            weights=weights, batch_size=2, steps=1, seed=9, learning_rate=1e-3,
        )
        params, codebooks, opt, rng = tr._init_state(cfg)
        x = np.concatenate(small_dataset[:2], axis=0)
        xt = ng.constant(x)
        z = tr.encode(xt, params, cfg.model)
        z_q, tokens, _ = tr.quantize(z, codebooks)
        st = tr.straight_through(z, z_q)
        recon = tr.decode(st, params, cfg.model)
        _, total = tr.total_loss(recon, xt, z, z_q, cfg.weights)
        total.backward()
        enc = {k: p.grad for k, p in params.items()}
        cb = [t.grad for t in codebooks.tables]
        return enc, cb

    def test_zero_vq_weight_means_zero_codebook_grads(self, small_dataset):
        _, cb = self._grads(LossWeights(vq=0.0), small_dataset)
        for g in cb:
            assert g is not None and not g.any()

    def test_zero_recon_weights_mean_zero_encoder_grads(self, small_dataset):
        enc, cb = self._grads(LossWeights(l2=0.0, charbonnier=0.0, commit=0.0), small_dataset)
        for name, g in enc.items():
            assert g is None or not g.any(), name
        assert any(g is not None and g.any() for g in cb)

    def test_commit_reaches_encoder_but_not_decoder(self, small_dataset):
        enc, _ = self._grads(
            LossWeights(l2=0.0, charbonnier=0.0, commit=0.25, vq=0.0), small_dataset
        )
        assert any(g is not None and g.any() for k, g in enc.items() if k.startswith("enc."))
        for k, g in enc.items():
            if k.startswith("dec."):
                assert g is None or not g.any(), k


class TestFit:
    def test_zero_steps_checkpoint_is_initialization(self, small_dataset):
        cfg = tr.TrainConfig(
            model=SMALL.model, groups=2, codebook_size=8, batch_size=2, steps=0, seed=13,
        )
        ckpt, records = fit(cfg, small_dataset)
        assert records == []
        params, codebooks, _, _ = tr._init_state(cfg)
        for name, p in params.items():
            assert ckpt.params[name].data.tobytes() == p.data.tobytes()
        for a, b in zip(ckpt.codebooks.tables, codebooks.tables):
            assert a.data.tobytes() == b.data.tobytes()

    def test_log_line_count_equals_steps(self, small_dataset, tmp_path):
        log = tmp_path / "metrics.jsonl"
        _, records = fit(SMALL, small_dataset, log_path=log)
        assert len(records) == SMALL.steps
        lines = log.read_text().strip().splitlines()
        assert len(lines) == SMALL.steps
        parsed = [json.loads(line) for line in lines]
        assert [r["step"] for r in parsed] == list(range(1, SMALL.steps + 1))
        assert all("total" in r and "usage" in r for r in parsed)

    def test_heldout_psnr_logged_on_schedule(self, small_dataset):
        _, records = fit(SMALL, small_dataset)
        for r in records:
            assert ("psnr" in r) == (r["step"] % SMALL.eval_every == 0)

    def test_identical_seeds_bit_identical_checkpoints(self, small_dataset, tmp_path):
        a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(fit(SMALL, small_dataset)[0], a)
        save_checkpoint(fit(SMALL, small_dataset)[0], b)
        assert a.read_bytes() == b.read_bytes()

    def test_resume_reproduces_log_tail_and_checkpoint(self, small_dataset, tmp_path):
        full_cfg = SMALL
        _, full_records = fit(full_cfg, small_dataset)
        full_ckpt, _ = fit(full_cfg, small_dataset)

        half_cfg = tr.TrainConfig(**{**full_cfg.to_dict(), "model": full_cfg.model,
                                     "weights": full_cfg.weights, "steps": 2})
        half_ckpt, half_records = fit(half_cfg, small_dataset)

        resumed_ckpt, tail = fit(full_cfg, small_dataset, resume_from=half_ckpt)
        assert half_records == full_records[:2]
        assert tail == full_records[2:]
        a, b = tmp_path / "full.ckpt", tmp_path / "resumed.ckpt"
        save_checkpoint(full_ckpt, a)
        save_checkpoint(resumed_ckpt, b)
        assert a.read_bytes() == b.read_bytes()

    def test_resume_config_mismatch_rejected(self, small_dataset):
        ckpt, _ = fit(SMALL, small_dataset)
        other = tr.TrainConfig(**{**SMALL.to_dict(), "model": SMALL.model,
                                  "weights": SMALL.weights, "seed": 99})
        with pytest.raises(ValueError, match="config"):
            fit(other, small_dataset, resume_from=ckpt)


class TestCheckpointIO:
    def test_roundtrip_bit_identical(self, small_dataset, tmp_path):
        ckpt, _ = fit(SMALL, small_dataset)
        path = tmp_path / "run.ckpt"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == ckpt.config
        assert loaded.step == ckpt.step
        assert loaded.rng_state == ckpt.rng_state
        assert loaded.opt.step == ckpt.opt.step
        for name, p in ckpt.params.items():
            assert loaded.params[name].data.tobytes() == p.data.tobytes()
        for a, b in zip(loaded.codebooks.tables, ckpt.codebooks.tables):
            assert a.data.tobytes() == b.data.tobytes()
        for name in ckpt.opt.m:
            assert loaded.opt.m[name].tobytes() == ckpt.opt.m[name].tobytes()
            assert loaded.opt.v[name].tobytes() == ckpt.opt.v[name].tobytes()
        second = tmp_path / "second.ckpt"
        save_checkpoint(loaded, second)
        assert second.read_bytes() == path.read_bytes()

    def test_bad_magic_rejected(self, small_dataset, tmp_path):
        ckpt, _ = fit(SMALL, small_dataset)
        path = tmp_path / "run.ckpt"
        save_checkpoint(ckpt, path)
        corrupted = b"NOPE" + path.read_bytes()[4:]
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(corrupted)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(bad)

    def test_newer_version_rejected_naming_both(self, small_dataset, tmp_path):
        ckpt, _ = fit(SMALL, small_dataset)
        path = tmp_path / "run.ckpt"
        save_checkpoint(ckpt, path)
        raw = bytearray(path.read_bytes())
        raw[4] = 2
        newer = tmp_path / "newer.ckpt"
        newer.write_bytes(bytes(raw))
        with pytest.raises(ValueError, match="version 2.*version 1"):
            load_checkpoint(newer)

    def test_truncated_rejected(self, small_dataset, tmp_path):
        ckpt, _ = fit(SMALL, small_dataset)
        path = tmp_path / "run.ckpt"
        save_checkpoint(ckpt, path)
        cut = tmp_path / "cut.ckpt"
        cut.write_bytes(path.read_bytes()[:-20])
        with pytest.raises(ValueError, match="EOF|truncated"):
            load_checkpoint(cut)


class TestConfigValidation:
    def test_latent_group_divisibility(self):
        with pytest.raises(ValueError, match="divisible"):
            TrainConfig(model=ModelConfig(latent_dim=10), groups=4)

    def test_beta_range(self):
        with pytest.raises(ValueError, match="beta1"):
            TrainConfig(beta1=1.0)

    def test_mask_probs_length(self):
        with pytest.raises(ValueError, match="length"):
            TrainConfig(groups=4, mask_probs=(0.5, 0.5))

    def test_defaults_match_stated_recipe(self):
        cfg = TrainConfig()
        assert cfg.learning_rate == 1e-5
        assert cfg.weight_decay == 5e-2
        assert (cfg.beta1, cfg.beta2) == (0.9, 0.95)
        assert cfg.schedule.probs == (0.1, 0.1, 0.1, 0.7)
