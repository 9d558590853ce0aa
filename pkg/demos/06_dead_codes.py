"""Dead codes: why wide, large codebooks rot while small 2-D ones stay alive.

Trains one single-group quantizer per (dimension, size) cell on blob images
and reports the fraction of rows that were never selected. The 2-D cell also
dumps its code coordinates with a used/dead flag for plotting.

Takes a few minutes on CPU. Run: python3 demos/06_dead_codes.py
"""

from pathlib import Path

from groupvq.experiments import run_deadpoint_experiment

out_dir = Path("demo_out")
out_dir.mkdir(exist_ok=True)

cells = ((2, 32), (2, 1024), (16, 32), (16, 1024))
report, coords = run_deadpoint_experiment(cells=cells, seed=0)
report.write_csv(out_dir / "deadpoints.csv")

print(f"{'dim':>4} {'K':>6} {'usage':>8} {'dead':>8} {'psnr':>7}")
for row in report.rows:
    print(f"{row['sub_dim']:>4} {row['codebook_size']:>6} "
          f"{row['usage']:>8.3f} {row['dead_fraction']:>8.3f} {row['psnr']:>7.2f}")

for (dim, k), table in coords.items():
    path = out_dir / f"codes_dim{dim}_k{k}.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,y,used\n")
        for x, y, used in table:
            fh.write(f"{x},{y},{int(used)}\n")
    alive = int(table[:, 2].sum())
    print(f"2-D cell K={k}: {alive}/{k} codes alive; coordinates -> {path}")
