"""Grouped quantization from the ground up: codebooks, lookup, capacity.

Run: python3 demos/02_grouped_quantization.py
"""

import numpy as np

from groupvq import (
    CodebookSet,
    MaskSchedule,
    capacity_log2,
    nested_mask,
    quantize,
    sample_keep,
    straight_through,
    usage_stats,
)
from groupvq import ndgrad as ng

rng = np.random.default_rng(7)

# A 6x6 latent grid with 16 channels, split into 4 groups of 4 channels.
# Each group gets its own 32-row codebook.
latent = rng.normal(size=(6, 6, 16)).astype(np.float32)
codebooks = CodebookSet.initialize(groups=4, size=32, sub_dim=4, seed=1)
for table in codebooks.tables:
    table.set_data(rng.normal(scale=0.8, size=table.shape).astype(np.float32))

z_q, tokens, dist = quantize(latent, codebooks)
print("token grid shape (groups, h, w):", tokens.indices.shape)
print("mean squared lookup distance per group:", np.round(dist, 3))

# A single codebook of the same total row count can express 128 latents per
# site; four independent groups of 32 give 32**4.
print("capacity_log2 single codebook (K=128):", capacity_log2(128, 1))
print("capacity_log2 grouped (K=32, G=4):   ", capacity_log2(32, 4))

# The straight-through surrogate: forward equals the quantized values,
# backward hands the gradient straight to the encoder side.
z = ng.parameter(latent.copy())
st = straight_through(z, z_q)
print("straight-through forward equals z_q:", bool((st.data == z_q.data).all()))
ng.reduce_mean(ng.square(st)).backward()
print("gradient reached the pre-quantization latent:", z.grad is not None)

# Nested masking zeroes trailing groups; the keep count is drawn from a
# schedule that mostly keeps everything.
schedule = MaskSchedule.default(4)
print("keep schedule:", schedule.probs)
draw_rng = np.random.default_rng(2)
draws = [sample_keep(schedule, draw_rng) for _ in range(12)]
print("twelve keep draws:", draws)
masked = nested_mask(st, 2, 4)
print("channels alive after keeping 2 of 4 groups:",
      int((masked.data.any(axis=(0, 1))).sum()), "of", masked.shape[-1])

# Usage statistics over a token history: fraction of rows ever selected and
# the perplexity of the index distribution.
stats = usage_stats([tokens], codebooks.size, codebooks.groups)
for g in range(codebooks.groups):
    print(f"group {g}: usage {stats.usage[g]:.2f}  perplexity {stats.perplexity[g]:.1f}")
