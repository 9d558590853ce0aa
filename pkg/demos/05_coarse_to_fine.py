"""Coarse-to-fine reconstruction: decode with only the first m groups.

Nested masking during training orders the groups, so group 1 alone already
sketches the image and each extra group adds detail. Writes one image per
keep count plus a CSV of the quality sweep.

Run: python3 demos/05_coarse_to_fine.py
"""

from pathlib import Path

from groupvq import (
    ModelConfig,
    TrainConfig,
    fit,
    load_checkpoint,
    reconstruct,
    save_checkpoint,
    save_image,
    synthetic_images,
)
from groupvq.experiments import run_mkeep_sweep

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)
ckpt_path = out_dir / "tokenizer.ckpt"

if ckpt_path.exists():
    ckpt = load_checkpoint(ckpt_path)
else:
    print("no checkpoint from demo 03; training a quick stand-in ...")
    cfg = TrainConfig(
        model=ModelConfig(downsample=8, latent_dim=32, hidden_dim=128, depth=2),
        groups=4, codebook_size=64, batch_size=8, steps=1200, seed=11,
        learning_rate=1e-3, eval_every=10**9,
    )
    ckpt, _ = fit(cfg, synthetic_images(300, 32, seed=11))
    save_checkpoint(ckpt, ckpt_path)

groups = ckpt.config.groups
image = synthetic_images(1, 32, seed=90)[0]
save_image(image, out_dir / "c2f_input.png")

for m in range(1, groups + 1):
    recon, _ = reconstruct(image, ckpt.params, ckpt.codebooks, ckpt.config.model, m_keep=m)
    save_image(recon, out_dir / f"c2f_keep{m}.png")
print(f"wrote c2f_keep1..{groups}.png next to c2f_input.png in {out_dir}/")

sweep = run_mkeep_sweep(ckpt, synthetic_images(40, 32, seed=91))
sweep.write_csv(out_dir / "mkeep_sweep.csv")
print("quality by number of groups kept:")
for row in sweep.rows:
    bar = "#" * int(row["psnr"] - 10)
    print(f"  keep {row['m_keep']}: psnr {row['psnr']:6.2f} dB  ssim {row['ssim']:.3f}  {bar}")
