"""Per-block randomized multidimensional transformation.

Each image is partitioned into t blocks which are shuffled by a secret
permutation; block i (an r x s matrix per channel) is then mapped to
``Y_i = R_i (X_i + D_i)`` where R_i is a secret r x r matrix for that block
position and D_i is optional uniform noise on [0, N). Left-multiplication
means every block column is an r-vector being projected, so orthogonal keys
preserve Euclidean distances between corresponding block columns.
"""

from __future__ import annotations

import numpy as np

from .blocks import gen_permutation, grid_shape, inverse_permute, partition, permute, reassemble
from .core import (
    ConfigError,
    DimensionError,
    Image,
    NoiseSpec,
    RmtKey,
    TAG_MATRIX,
    TAG_PERMUTATION,
    TAG_RMT_NOISE,
    derive_seed,
    seeded_rng,
)

__all__ = ["gen_orthogonal", "gen_invertible", "keygen_rmt", "disguise_rmt", "recover_rmt"]

# Random invertible matrices are redrawn while their condition number
# exceeds this; ill-conditioned keys make keyed recovery numerically useless.
_MAX_CONDITION = 1e6


def gen_orthogonal(seed: int, m: int) -> np.ndarray:
    """Draw an m x m orthogonal matrix uniformly (Haar measure).

    QR-factorizes an i.i.d. standard Gaussian matrix and flips column signs
    so the triangular factor has a positive diagonal, which makes the
    factorization unique and the Q factor Haar-distributed.
    """
    rng = seeded_rng(seed)
    a = rng.standard_normal((m, m))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def gen_invertible(seed: int, m: int) -> np.ndarray:
    """Random invertible m x m matrix with i.i.d. Gaussian entries.

    Redraws on condition number above 1e6 (from a follow-on substream, so
    the result stays deterministic in the seed).
    """
    for attempt in range(64):
        rng = seeded_rng(derive_seed(seed, attempt))
        a = rng.standard_normal((m, m))
        if np.linalg.cond(a) <= _MAX_CONDITION:
            return a
    raise ConfigError(f"could not draw a well-conditioned {m}x{m} matrix")  # pragma: no cover


def keygen_rmt(
    master_seed: int,
    image_dims: tuple[int, int],
    channels: int = 1,
    t: int = 1,
    noise_level: float | NoiseSpec = 0.0,
    orthogonal: bool = True,
) -> RmtKey:
    """Generate the full projection key for a dataset.

    Produces one r x r matrix per block position (r is the block row count
    of the chosen partition) and one block permutation, all derived from the
    master seed.
    """
    l, m = image_dims
    g_r, g_c = grid_shape(l, m, t)
    r = l // g_r
    noise = noise_level if isinstance(noise_level, NoiseSpec) else NoiseSpec(level=float(noise_level))
    permutation = gen_permutation(derive_seed(master_seed, TAG_PERMUTATION), t)
    gen = gen_orthogonal if orthogonal else gen_invertible
    matrices = np.stack([gen(derive_seed(master_seed, TAG_MATRIX, i), r) for i in range(t)])
    return RmtKey(
        permutation=permutation,
        matrices=matrices,
        noise=noise,
        master_seed=master_seed,
        channels=channels,
        image_dims=(l, m),
        orthogonal=orthogonal,
    )


def _check_dims(image: Image, key: RmtKey):
    if image.dims != key.image_dims or image.channels != key.channels:
        raise DimensionError(
            f"image {image.channels}x{image.dims[0]}x{image.dims[1]} does not match "
            f"key {key.channels}x{key.image_dims[0]}x{key.image_dims[1]}"
        )


def _noise_blocks(key: RmtKey, image_id: int, shape: tuple[int, ...]) -> np.ndarray:
    """Noise for all block positions of one image, shape (t, channels, r, s)."""
    t = shape[0]
    out = np.empty(shape)
    for i in range(t):
        if key.noise.per_image:
            seed = derive_seed(key.master_seed, TAG_RMT_NOISE, image_id, i)
        else:
            seed = derive_seed(key.master_seed, TAG_RMT_NOISE, i)
        out[i] = seeded_rng(seed).uniform(0.0, key.noise.level, size=shape[1:])
    return out


def disguise_rmt(image: Image, key: RmtKey, image_id: int = 0) -> Image:
    """Disguise one image: partition, permute, project each block.

    ``image_id`` seeds the per-image noise so disguising is deterministic
    for a fixed (image, key, id) yet the noise differs across images.
    Output is real-valued; the label is carried through unchanged.
    """
    _check_dims(image, key)
    grid = permute(partition(image, key.t), key.permutation)
    blocks = grid.blocks.astype(np.float64)
    if key.noise.level > 0:
        blocks = blocks + _noise_blocks(key, image_id, blocks.shape)
    out = np.einsum("tij,tcjs->tcis", key.matrices, blocks)
    disguised = reassemble(
        type(grid)(blocks=out, origin_dims=grid.origin_dims), dtype="real", label=image.label
    )
    return disguised


def recover_rmt(disguised: Image, key: RmtKey) -> Image:
    """Keyed inverse of :func:`disguise_rmt`.

    Returns the original blocks plus whatever noise was added: exact for
    noise level 0, off by at most the noise level per pixel otherwise.
    """
    _check_dims(disguised, key)
    grid = partition(disguised, key.t)
    blocks = grid.blocks.astype(np.float64)
    if key.orthogonal:
        out = np.einsum("tji,tcjs->tcis", key.matrices, blocks)  # R^T Y
    else:
        try:
            out = np.linalg.solve(
                key.matrices[:, np.newaxis, :, :], blocks
            )
        except np.linalg.LinAlgError as exc:
            raise ConfigError(f"singular transformation matrix: {exc}") from exc
    restored = inverse_permute(type(grid)(blocks=out, origin_dims=grid.origin_dims), key.permutation)
    return reassemble(restored, dtype="real", label=disguised.label)
