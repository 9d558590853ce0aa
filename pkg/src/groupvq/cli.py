"""Command-line interface: train, encode, decode, eval, experiment.

A plain ``key=value`` config file (``--config``) can preset any training flag;
explicit flags win. Every subcommand takes ``--seed`` where randomness is
involved. Exits 0 on success, 1 with a single diagnostic line on any
rejection.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .codec import decode_tokens, encode_image
from .data import load_dataset
from .experiments import (
    DEADPOINT_CELLS,
    GRID_CELLS,
    run_ablation_grid,
    run_deadpoint_experiment,
    run_mkeep_sweep,
)
from .model import ModelConfig
from .trainer import TrainConfig, evaluate, fit, load_checkpoint, save_checkpoint

__all__ = ["main", "build_parser"]


def _parse_cells(text: str) -> tuple[tuple[int, int], ...]:
    cells = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        try:
            a, b = token.lower().split("x")
            cells.append((int(a), int(b)))
        except ValueError as exc:
            raise ValueError(f"bad cell {token!r}, expected like '4x64'") from exc
    if not cells:
        raise ValueError("no cells given")
    return tuple(cells)


def _parse_probs(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def _add_train_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file preseeding these flags")
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--image-size", type=int, default=32)
    p.add_argument("--max-items", type=int, default=None)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--codebook-size", type=int, default=64)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--downsample", type=int, default=8)
    p.add_argument("--hidden-dim", type=int, default=128)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--weight-decay", type=float, default=5e-2)
    p.add_argument("--mask-probs", type=_parse_probs, default=None,
                   help="comma-separated keep distribution, e.g. 0.1,0.1,0.1,0.7")
    p.add_argument("--eval-every", type=int, default=200)
    p.add_argument("--log", help="JSON-lines metrics log path")


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        model=ModelConfig(
            downsample=args.downsample,
            latent_dim=args.latent_dim,
            hidden_dim=args.hidden_dim,
            depth=args.depth,
        ),
        groups=args.groups,
        codebook_size=args.codebook_size,
        mask_probs=args.mask_probs,
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        batch_size=args.batch_size,
        steps=args.steps,
        seed=args.seed,
        eval_every=args.eval_every,
    )


def _cmd_train(args) -> int:
    dataset = load_dataset(args.data, max_items=args.max_items, seed=args.seed,
                           image_size=args.image_size)
    cfg = _train_config(args)
    ckpt, records = fit(cfg, dataset, log_path=args.log,
                        resume_from=args.resume if args.resume else None)
    save_checkpoint(ckpt, args.out)
    last = records[-1] if records else {}
    print(f"trained {cfg.steps} steps on {len(dataset)} images -> {args.out}")
    if last:
        print(f"final total loss {last['total']:.6f}, batch usage {last['usage']:.3f}")
    return 0


def _cmd_encode(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    summary = encode_image(args.image, ckpt, args.out)
    print(
        f"{summary.groups} groups x {summary.grid_h}x{summary.grid_w} grid, "
        f"{summary.bits_per_index} bits/index -> {summary.payload_bytes} payload bytes "
        f"({summary.compression_ratio:.1f}:1 vs {summary.input_bytes} raw bytes)"
    )
    return 0


def _cmd_decode(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    arr = decode_tokens(args.tokens, ckpt, m_keep=args.m_keep, out_path=args.out)
    print(f"decoded {arr.shape[0]}x{arr.shape[1]} image -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    images = load_dataset(args.data, max_items=args.max_items, seed=args.seed,
                          image_size=args.image_size)
    result = evaluate(images, ckpt.params, ckpt.codebooks, ckpt.config.model,
                      m_keep=args.m_keep)
    print(f"images {len(images)}  psnr {result.psnr:.4f}  ssim {result.ssim:.4f}")
    for i, (u, p) in enumerate(zip(result.usage.usage, result.usage.perplexity)):
        print(f"group {i}: usage {u:.4f}  perplexity {p:.2f}")
    return 0


def _cmd_experiment(args) -> int:
    if args.kind == "deadpoints":
        report, coords = run_deadpoint_experiment(
            cells=args.cells or DEADPOINT_CELLS, steps=args.steps, seed=args.seed
        )
        report.write_csv(args.out)
        if args.coords_out:
            out_dir = Path(args.coords_out)
            out_dir.mkdir(parents=True, exist_ok=True)
            for (dim, k), table in coords.items():
                path = out_dir / f"codes_dim{dim}_k{k}.csv"
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write("x,y,used\n")
                    for row in table:
                        fh.write(f"{row[0]},{row[1]},{int(row[2])}\n")
                print(f"wrote code coordinates -> {path}")
    elif args.kind == "mkeep":
        ckpt = load_checkpoint(args.checkpoint)
        images = load_dataset(args.data, max_items=args.max_items, seed=args.seed,
                              image_size=args.image_size)
        report = run_mkeep_sweep(ckpt, images)
        report.write_csv(args.out)
    else:
        report = run_ablation_grid(
            cells=args.cells or GRID_CELLS, steps=args.steps, seed=args.seed
        )
        report.write_csv(args.out)
    for row in report.rows:
        print(row)
    print(f"wrote report -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="groupvq",
                                     description="grouped vector-quantization image codec")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a tokenizer on an image directory")
    p_train.add_argument("--data", required=True, help="directory of images")
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--resume", help="checkpoint to continue from")
    _add_train_options(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_enc = sub.add_parser("encode", help="encode one image into a token stream")
    p_enc.add_argument("--checkpoint", required=True)
    p_enc.add_argument("--image", required=True)
    p_enc.add_argument("--out", required=True)
    p_enc.set_defaults(func=_cmd_encode)

    p_dec = sub.add_parser("decode", help="decode a token stream back to an image")
    p_dec.add_argument("--checkpoint", required=True)
    p_dec.add_argument("--tokens", required=True)
    p_dec.add_argument("--out", required=True)
    p_dec.add_argument("--m-keep", type=int, default=None,
                       help="use only the first m groups (default: all)")
    p_dec.set_defaults(func=_cmd_decode)

    p_eval = sub.add_parser("eval", help="reconstruction metrics over a directory")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True)
    p_eval.add_argument("--image-size", type=int, default=32)
    p_eval.add_argument("--max-items", type=int, default=None)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--m-keep", type=int, default=None)
    p_eval.set_defaults(func=_cmd_eval)

    p_exp = sub.add_parser("experiment", help="run a diagnostic study, emit CSV")
    p_exp.add_argument("kind", choices=("deadpoints", "mkeep", "grid"))
    p_exp.add_argument("--out", required=True, help="CSV report path")
    p_exp.add_argument("--cells", type=_parse_cells, default=None,
                       help="deadpoints: DIMxK list; grid: GROUPSxK list")
    p_exp.add_argument("--steps", type=int, default=600)
    p_exp.add_argument("--seed", type=int, default=0)
    p_exp.add_argument("--coords-out", help="directory for per-code coordinate CSVs")
    p_exp.add_argument("--checkpoint", help="trained checkpoint (mkeep)")
    p_exp.add_argument("--data", help="image directory (mkeep)")
    p_exp.add_argument("--image-size", type=int, default=32)
    p_exp.add_argument("--max-items", type=int, default=None)
    p_exp.set_defaults(func=_cmd_experiment)
    return parser


def _expand_config(argv: list[str]) -> list[str]:
    """Replace ``--config FILE`` with the file's flags, before user flags."""
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    out: list[str] = []
    file_flags: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file path")
            file_flags = _read_config(argv[i + 1])
            i += 2
        elif token.startswith("--config="):
            file_flags = _read_config(token.split("=", 1)[1])
            i += 1
        else:
            out.append(token)
            i += 1
    head = []
    while out and not out[0].startswith("-"):
        head.append(out.pop(0))
    return head + file_flags + out


def _read_config(path: str) -> list[str]:
    flags: list[str] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        flags.extend([f"--{key.replace('_', '-')}", value])
    return flags


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        argv = _expand_config(argv)
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"groupvq: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
