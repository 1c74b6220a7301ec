"""Uniform pixel-block partitioning, permutation, and reassembly.

All functions here are pure: they never mutate their inputs and are safe to
call concurrently. Round trip holds exactly for every valid combination:
``reassemble(inverse_permute(permute(partition(x, t), p), p)) == x``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .core import (
    BlockGrid,
    DimensionError,
    Image,
    PartitionError,
    Permutation,
    seeded_rng,
)

__all__ = [
    "pad_to",
    "grid_shape",
    "partition",
    "gen_permutation",
    "permute",
    "inverse_permute",
    "reassemble",
]


def pad_to(image: Image, target_l: int, target_m: int, fill: int = 0) -> Image:
    """Grow an image to (target_l, target_m), original pixels top-left.

    Padding pixels take the ``fill`` value; the label is preserved.
    """
    l, m = image.dims
    if target_l < l or target_m < m:
        raise DimensionError(
            f"target {target_l}x{target_m} smaller than image {l}x{m}"
        )
    out = np.full((image.channels, target_l, target_m), fill, dtype=image.pixels.dtype)
    out[:, :l, :m] = image.pixels
    return image.with_pixels(out)


def grid_shape(l: int, m: int, t: int) -> tuple[int, int]:
    """Factor t into (grid_rows, grid_cols) dividing an l x m image evenly.

    Among valid factorizations, picks the one whose row/col ratio is closest
    to l/m (ties favor fewer grid rows), so blocks stay near the image's
    aspect ratio for non-square images.
    """
    if t < 1:
        raise PartitionError(f"block count must be >= 1, got {t}")
    target = Fraction(l, m)
    best = None
    for g_r in range(1, t + 1):
        if t % g_r:
            continue
        g_c = t // g_r
        if l % g_r or m % g_c:
            continue
        deviation = abs(Fraction(g_r, g_c) - target)
        if best is None or (deviation, g_r) < best[:2]:
            best = (deviation, g_r, g_c)
    if best is None:
        raise PartitionError(f"no uniform partition of a {l}x{m} image into {t} blocks")
    return best[1], best[2]


def partition(image: Image, t: int) -> BlockGrid:
    """Cut an image into t uniform blocks, listed row-major."""
    l, m = image.dims
    g_r, g_c = grid_shape(l, m, t)
    r, s = l // g_r, m // g_c
    c = image.channels
    blocks = (
        image.pixels.reshape(c, g_r, r, g_c, s)
        .transpose(1, 3, 0, 2, 4)
        .reshape(t, c, r, s)
    )
    return BlockGrid(blocks=blocks, origin_dims=(l, m))


def gen_permutation(seed: int, t: int) -> Permutation:
    """Uniform random permutation of t block positions, deterministic in seed."""
    if t < 1:
        raise PartitionError(f"block count must be >= 1, got {t}")
    rng = seeded_rng(seed)
    return Permutation(indices=rng.permutation(t).astype(np.uint32), seed=seed)


def permute(grid: BlockGrid, permutation: Permutation) -> BlockGrid:
    """Shuffle blocks: output block j = input block permutation.indices[j]."""
    if len(permutation) != grid.t:
        raise DimensionError(
            f"permutation length {len(permutation)} != block count {grid.t}"
        )
    return BlockGrid(blocks=grid.blocks[permutation.indices], origin_dims=grid.origin_dims)


def inverse_permute(grid: BlockGrid, permutation: Permutation) -> BlockGrid:
    """Undo :func:`permute` with the same permutation."""
    if len(permutation) != grid.t:
        raise DimensionError(
            f"permutation length {len(permutation)} != block count {grid.t}"
        )
    out = np.empty_like(grid.blocks)
    out[permutation.indices] = grid.blocks
    return BlockGrid(blocks=out, origin_dims=grid.origin_dims)


def reassemble(grid: BlockGrid, dtype: str | None = None, label: int | None = None) -> Image:
    """Stitch a grid back into an image, the row-major inverse of partition."""
    l, m = grid.origin_dims
    t, c, r, s = grid.blocks.shape
    g_r, g_c = l // r, m // s
    if g_r * g_c != t or g_r * r != l or g_c * s != m:
        raise DimensionError(
            f"inconsistent grid: {t} blocks of {r}x{s} cannot tile {l}x{m}"
        )
    pixels = (
        grid.blocks.reshape(g_r, g_c, c, r, s)
        .transpose(2, 0, 3, 1, 4)
        .reshape(c, l, m)
    )
    if dtype is None:
        dtype = "byte" if pixels.dtype == np.uint8 else "real"
    return Image(pixels, dtype=dtype, label=label)
