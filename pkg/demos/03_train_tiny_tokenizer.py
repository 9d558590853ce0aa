"""Train a small tokenizer end to end on a synthetic corpus.

Writes demo_out/tokenizer.ckpt plus a metrics log, then reports held-out
reconstruction quality. Takes around half a minute on CPU.

Run: python3 demos/03_train_tiny_tokenizer.py
"""

from pathlib import Path

from groupvq import ModelConfig, TrainConfig, evaluate, fit, save_checkpoint, synthetic_images

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

images = synthetic_images(300, 32, seed=11)
cfg = TrainConfig(
    model=ModelConfig(downsample=8, latent_dim=32, hidden_dim=128, depth=2),
    groups=4,
    codebook_size=64,
    batch_size=8,
    steps=1200,
    seed=11,
    learning_rate=1e-3,
    eval_every=300,
)

print(f"training: {cfg.steps} steps, {cfg.groups} groups of K={cfg.codebook_size}, "
      f"latent {cfg.model.latent_dim} at 1/{cfg.model.downsample} resolution")
ckpt, records = fit(cfg, images, log_path=out_dir / "metrics.jsonl")

for r in records:
    if "psnr" in r:
        print(f"  step {r['step']:4d}  total {r['total']:.4f}  held-out psnr {r['psnr']:.2f} dB")

save_checkpoint(ckpt, out_dir / "tokenizer.ckpt")
print("checkpoint ->", out_dir / "tokenizer.ckpt")

heldout = images[-30:]
result = evaluate(heldout, ckpt.params, ckpt.codebooks, cfg.model)
print(f"held-out: psnr {result.psnr:.2f} dB  ssim {result.ssim:.3f}")
print("codebook usage per group:", [f"{u:.2f}" for u in result.usage.usage])
