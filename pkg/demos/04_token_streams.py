"""The wire format: encode an image to a bit-packed stream and decode it back.

Expects demo_out/tokenizer.ckpt from demo 03 (trains a quick stand-in if
missing).

Run: python3 demos/04_token_streams.py
"""

from pathlib import Path

from groupvq import (
    ModelConfig,
    TrainConfig,
    bits_per_index,
    decode_tokens,
    encode_image,
    fit,
    load_checkpoint,
    psnr,
    read_stream,
    save_checkpoint,
    save_image,
    synthetic_images,
)

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)
ckpt_path = out_dir / "tokenizer.ckpt"

if ckpt_path.exists():
    ckpt = load_checkpoint(ckpt_path)
else:
    print("no checkpoint from demo 03; training a quick stand-in ...")
    cfg = TrainConfig(
        model=ModelConfig(downsample=8, latent_dim=32, hidden_dim=64, depth=1),
        groups=4, codebook_size=64, batch_size=8, steps=400, seed=3,
        learning_rate=1e-3, eval_every=10**9,
    )
    ckpt, _ = fit(cfg, synthetic_images(128, 32, seed=4))
    save_checkpoint(ckpt, ckpt_path)

image = synthetic_images(1, 32, seed=40)[0]
save_image(image, out_dir / "original.png")

stream_path = out_dir / "image.mgvq"
summary = encode_image(image, ckpt, stream_path)
k = ckpt.config.codebook_size
print(f"codebook size {k} -> {bits_per_index(k)} bits per index")
print(f"payload: {summary.payload_bytes} bytes for a {summary.grid_h}x{summary.grid_w} grid "
      f"x {summary.groups} groups ({summary.compression_ratio:.0f}:1 vs raw pixels)")

raw = stream_path.read_bytes()
print(f"file: {len(raw)} bytes total; magic={raw[:4]!r} version={raw[4]}")

header, tokens = read_stream(stream_path)
print("header:", header)
print("first row of group-0 indices:", tokens.indices[0, 0].tolist())

recon = decode_tokens(stream_path, ckpt, out_path=out_dir / "reconstruction.png")
print(f"round-trip psnr: {psnr(image, recon):.2f} dB")
print("wrote", out_dir / "original.png", "and", out_dir / "reconstruction.png")
