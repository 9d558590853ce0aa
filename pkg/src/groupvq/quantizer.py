"""Grouped vector quantization with nested masking.

The latent grid (h, w, C) is split channel-wise into G sub-tokens of width
C/G. Each sub-token is matched against its own codebook of K rows by raw
Euclidean nearest neighbor (no normalization), giving a per-group index grid
and a quantized latent rebuilt by concatenating the selected rows. The number
of distinct quantized latents per site is therefore K**G rather than K.

During training the last groups can be zeroed ("nested masking"): a keep
count is drawn from a fixed schedule and the channels of all later groups are
zero-filled, which pushes coarse content into the early groups.

Lookup is pure in (latent, codebooks) and parallelizable over sites;
codebook rows change only inside optimizer steps, never during lookup.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import ndgrad as ng
from .ndgrad import Tensor

__all__ = [
    "CodebookSet",
    "TokenMap",
    "MaskSchedule",
    "GroupUsage",
    "split_groups",
    "nearest_code",
    "quantize",
    "codes_to_latent",
    "straight_through",
    "sample_keep",
    "nested_mask",
    "usage_stats",
    "capacity_log2",
]

# Cap on the float64 scratch used by the distance computation (entries).
_DIST_CHUNK_ENTRIES = 4_000_000


@dataclass
class CodebookSet:
    """G independent codebooks, each a trainable (K, sub_dim) table."""

    tables: list[Tensor]

    def __post_init__(self):
        if not self.tables:
            raise ValueError("CodebookSet needs at least one table")
        shape = self.tables[0].shape
        if len(shape) != 2:
            raise ValueError(f"codebook tables must be 2-D, got {shape}")
        for t in self.tables:
            if t.shape != shape:
                raise ValueError(f"all codebook tables must share shape {shape}, got {t.shape}")

    @property
    def groups(self) -> int:
        return len(self.tables)

    @property
    def size(self) -> int:
        return self.tables[0].shape[0]

    @property
    def sub_dim(self) -> int:
        return self.tables[0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.groups * self.sub_dim

    @classmethod
    def initialize(cls, groups: int, size: int, sub_dim: int, seed: int) -> "CodebookSet":
        """Rows drawn uniform(-1/K, 1/K) per group; seeded and reproducible."""
        if groups < 1 or size < 1 or sub_dim < 1:
            raise ValueError("groups, size, and sub_dim must all be positive")
        rng = np.random.default_rng(seed)
        lim = 1.0 / size
        tables = [
            ng.parameter(rng.uniform(-lim, lim, size=(size, sub_dim)).astype(np.float32))
            for _ in range(groups)
        ]
        return cls(tables)


@dataclass
class TokenMap:
    """Per-group integer index grids; ``indices`` has shape (G, grid_h, grid_w)."""

    indices: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices)
        if self.indices.ndim != 3:
            raise ValueError(f"TokenMap indices must be (G, h, w), got {self.indices.shape}")
        if self.indices.size and self.indices.min() < 0:
            raise ValueError("TokenMap indices must be non-negative")

    @property
    def groups(self) -> int:
        return self.indices.shape[0]

    @property
    def grid_h(self) -> int:
        return self.indices.shape[1]

    @property
    def grid_w(self) -> int:
        return self.indices.shape[2]

    def __eq__(self, other) -> bool:
        return isinstance(other, TokenMap) and np.array_equal(self.indices, other.indices)


@dataclass
class MaskSchedule:
    """Distribution over how many leading groups to keep; probs sum to 1."""

    probs: tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if any(p < 0 for p in probs):
            raise ValueError("mask probabilities must be non-negative")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise ValueError(f"mask probabilities must sum to 1, got {sum(probs)}")
        object.__setattr__(self, "probs", probs)

    @property
    def groups(self) -> int:
        return len(self.probs)

    @classmethod
    def default(cls, groups: int) -> "MaskSchedule":
        """0.7 mass on keeping everything, the rest split over partial keeps.

        Reduces to (0.1, 0.1, 0.1, 0.7) for four groups.
        """
        if groups == 1:
            return cls((1.0,))
        rest = 3.0 / (10.0 * (groups - 1))
        return cls(tuple([rest] * (groups - 1) + [0.7]))


@dataclass
class GroupUsage:
    """Per-group codebook statistics over a token history."""

    usage: np.ndarray
    perplexity: np.ndarray


def split_groups(z: Tensor, groups: int) -> list[Tensor]:
    """Cut the channel axis into ``groups`` equal contiguous slices."""
    channels = z.shape[-1]
    if channels % groups != 0:
        raise ng.ShapeError(f"split_groups: {channels} channels not divisible by {groups} groups")
    width = channels // groups
    return [ng.narrow(z, -1, i * width, (i + 1) * width) for i in range(groups)]


def nearest_code(sub: np.ndarray, table: np.ndarray) -> tuple[int, float]:
    """Index and squared distance of the closest row; ties go to the lowest index."""
    table = np.asarray(table)
    if table.ndim != 2 or table.shape[0] == 0:
        raise ValueError(f"nearest_code: table must be non-empty (K, d), got shape {table.shape}")
    sub = np.asarray(sub, dtype=np.float64).reshape(-1)
    if sub.shape[0] != table.shape[1]:
        raise ng.ShapeError(f"nearest_code: query dim {sub.shape[0]} != table dim {table.shape[1]}")
    d2 = ((table.astype(np.float64) - sub[None, :]) ** 2).sum(axis=1)
    k = int(np.argmin(d2))
    return k, float(d2[k])


def _group_lookup(flat64: np.ndarray, table64: np.ndarray) -> np.ndarray:
    """Argmin row per site, chunked to bound the (n, K, d) scratch."""
    n, d = flat64.shape
    k = table64.shape[0]
    chunk = max(1, _DIST_CHUNK_ENTRIES // max(1, k * d))
    out = np.empty(n, dtype=np.int32)
    for start in range(0, n, chunk):
        sl = flat64[start : start + chunk]
        d2 = ((sl[:, None, :] - table64[None, :, :]) ** 2).sum(axis=2)
        out[start : start + chunk] = np.argmin(d2, axis=1)
    return out


def quantize(z, codebooks: CodebookSet) -> tuple[Tensor, TokenMap, np.ndarray]:
    """Quantize a latent grid against every group's codebook.

    Args:
        z: latent grid (h, w, C) as a Tensor or array; C must equal
            ``codebooks.latent_dim``.
        codebooks: the grouped tables.

    Returns:
        ``(z_q, tokens, mean_sq_dist)`` where ``z_q`` is the concatenation of
        the selected rows at each site (differentiable w.r.t. the tables via
        one-hot selection, so only looked-up rows ever receive gradient),
        ``tokens`` records the chosen indices per group, and ``mean_sq_dist``
        is the per-group mean squared lookup distance.
    """
    zt = z if isinstance(z, Tensor) else ng.constant(np.asarray(z, dtype=np.float32))
    if zt.data.ndim != 3 or zt.shape[-1] != codebooks.latent_dim:
        raise ng.ShapeError(
            f"quantize: latent shape {zt.shape} incompatible with "
            f"{codebooks.groups} groups of dim {codebooks.sub_dim}"
        )
    h, w, _ = zt.shape
    n = h * w
    sub = codebooks.sub_dim

    index_grids = []
    parts = []
    mean_d2 = np.empty(codebooks.groups, dtype=np.float64)
    flat = zt.data.reshape(n, codebooks.latent_dim).astype(np.float64)
    for i, table in enumerate(codebooks.tables):
        sub_flat = flat[:, i * sub : (i + 1) * sub]
        table64 = table.data.astype(np.float64)
        idx = _group_lookup(sub_flat, table64)
        index_grids.append(idx.reshape(h, w))
        mean_d2[i] = ((sub_flat - table64[idx]) ** 2).sum(axis=1).mean() if n else 0.0

        one_hot = np.zeros((n, codebooks.size), dtype=np.float32)
        one_hot[np.arange(n), idx] = 1.0
        rows = ng.matmul(ng.constant(one_hot), table)
        parts.append(ng.reshape(rows, (h, w, sub)))

    z_q = ng.concat(parts, axis=-1) if len(parts) > 1 else parts[0]
    tokens = TokenMap(np.stack(index_grids).astype(np.int32))
    return z_q, tokens, mean_d2


def straight_through(z: Tensor, z_q: Tensor) -> Tensor:
    """Forward equals the quantized values; gradient passes to ``z`` unchanged.

    The lookup that produced ``z_q`` receives no gradient through this path;
    its rows are updated by the codebook loss instead.
    """
    if z.shape != z_q.shape:
        raise ng.ShapeError(f"straight_through: shapes {z.shape} and {z_q.shape} differ")
    return ng.straight_through(z, z_q.data)


def sample_keep(schedule: MaskSchedule, rng: np.random.Generator) -> int:
    """Draw the number of leading groups to keep, in 1..G."""
    cum = np.cumsum(schedule.probs)
    u = rng.random()
    k = int(np.searchsorted(cum, u, side="right"))
    return min(k, schedule.groups - 1) + 1


def nested_mask(z_q: Tensor, m_keep: int, groups: int) -> Tensor:
    """Zero-fill the channels of all groups after the first ``m_keep``.

    Keeping every group is an exact no-op. Channels are zeroed rather than
    dropped so the decoder input width never changes.
    """
    if not 1 <= m_keep <= groups:
        raise ValueError(f"m_keep must be in 1..{groups}, got {m_keep}")
    channels = z_q.shape[-1]
    if channels % groups != 0:
        raise ng.ShapeError(f"nested_mask: {channels} channels not divisible by {groups} groups")
    if m_keep == groups:
        return z_q
    width = channels // groups
    mask = np.zeros(z_q.shape, dtype=np.float32)
    mask[..., : m_keep * width] = 1.0
    return ng.mul(z_q, ng.constant(mask))


def codes_to_latent(tokens: TokenMap, codebooks: CodebookSet) -> np.ndarray:
    """Rebuild the quantized latent grid (h, w, C) from recorded indices."""
    if tokens.groups != codebooks.groups:
        raise ValueError(
            f"codes_to_latent: token map has {tokens.groups} groups, "
            f"codebooks have {codebooks.groups}"
        )
    if tokens.indices.size and int(tokens.indices.max()) >= codebooks.size:
        raise ValueError(
            f"codes_to_latent: index {int(tokens.indices.max())} out of range "
            f"for codebook size {codebooks.size}"
        )
    parts = [codebooks.tables[i].data[tokens.indices[i]] for i in range(codebooks.groups)]
    return np.concatenate(parts, axis=-1)


def usage_stats(history, size: int, groups: int) -> GroupUsage:
    """Usage fraction and perplexity per group over a sequence of token maps.

    Usage is the fraction of rows selected at least once; perplexity is
    exp(entropy) of the empirical index distribution, in [1, K].
    """
    maps = list(history)
    if not maps:
        raise ValueError("usage_stats: history must be non-empty")
    usage = np.empty(groups, dtype=np.float64)
    perplexity = np.empty(groups, dtype=np.float64)
    for i in range(groups):
        idx = np.concatenate([np.asarray(m.indices[i]).reshape(-1) for m in maps])
        counts = np.bincount(idx, minlength=size).astype(np.float64)
        usage[i] = float((counts > 0).sum()) / size
        p = counts / counts.sum()
        nz = p[p > 0]
        perplexity[i] = float(np.exp(-(nz * np.log(nz)).sum()))
    return GroupUsage(usage=usage, perplexity=perplexity)


def capacity_log2(size: int, groups: int) -> float:
    """log2 of the number of distinct quantized latents per site, K**G."""
    if size < 1 or groups < 1:
        raise ValueError("capacity_log2: size and groups must be >= 1")
    return float(groups) * math.log2(size)
