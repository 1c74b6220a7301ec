"""Per-block AES disguising: scale up, permute, noise, encrypt 16-byte units.

Every pixel block of the (optionally scaled-up) image is serialized
row-major with channels interleaved last and encrypted 16 bytes at a time
with AES-128 in ECB mode under that block position's key. ECB keeps the
encryption of each 16-byte unit independent of its neighbours, so repeated
plaintext units repeat in the ciphertext, which is what lets models still
find block-level structure. Scaling up by k before encryption and back down
after shrinks the effective encryption unit to 16/k pixels of the original
image.
"""

from __future__ import annotations

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .blocks import grid_shape, gen_permutation, inverse_permute, partition, permute, reassemble
from .core import (
    AesKey,
    ConfigError,
    DimensionError,
    Image,
    TAG_CIPHER_KEY,
    TAG_PERMUTATION,
    TAG_SALT_PEPPER,
    derive_seed,
    seeded_rng,
)

__all__ = [
    "UNIT_SIZE",
    "scale_up",
    "scale_down",
    "salt_pepper",
    "encrypt_unit",
    "decrypt_unit",
    "keygen_aes",
    "disguise_aes",
    "decrypt_with_key",
    "downscaled_view",
    "serialize_block",
    "deserialize_block",
]

UNIT_SIZE = 16  # bytes per AES-128 encryption unit


def scale_up(image: Image, kx: int, ky: int) -> Image:
    """Replicate every pixel kx times horizontally and ky times vertically."""
    if kx < 1 or ky < 1:
        raise ConfigError("scale factors must be >= 1")
    px = np.repeat(np.repeat(image.pixels, ky, axis=1), kx, axis=2)
    return image.with_pixels(px)


def scale_down(image: Image, kx: int, ky: int) -> Image:
    """Shrink by tile means: each kx x ky tile becomes its rounded mean.

    Rounds half up and returns a byte image; dims must divide evenly.
    Inverse of :func:`scale_up` for byte images.
    """
    c = image.channels
    l, m = image.dims
    if l % ky or m % kx:
        raise DimensionError(f"dims {l}x{m} not divisible by tile {ky}x{kx}")
    tiles = image.pixels.reshape(c, l // ky, ky, m // kx, kx).astype(np.float64)
    means = tiles.mean(axis=(2, 4))
    rounded = np.clip(np.floor(means + 0.5), 0, 255).astype(np.uint8)
    return Image(rounded, dtype="byte", label=image.label)


def _apply_salt_pepper(pixels: np.ndarray, p: float, seed: int) -> np.ndarray:
    rng = seeded_rng(seed)
    out = np.array(pixels)
    flip = rng.random(out.shape) < p
    extremes = rng.integers(0, 2, size=out.shape).astype(out.dtype) * 255
    out[flip] = extremes[flip]
    return out


def salt_pepper(image: Image, p: float, seed: int) -> Image:
    """Flip each pixel to 0 or 255 (equal odds) with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"salt-pepper probability must be in [0, 1], got {p}")
    return image.with_pixels(_apply_salt_pepper(image.pixels, p, seed))


def _ecb(key: bytes) -> Cipher:
    return Cipher(algorithms.AES(bytes(key)), modes.ECB())


def encrypt_unit(unit: bytes, cipher_key: bytes) -> bytes:
    """AES-128 encryption of a single 16-byte unit (deterministic, bijective)."""
    if len(unit) != UNIT_SIZE or len(cipher_key) != UNIT_SIZE:
        raise DimensionError("unit and cipher key must both be exactly 16 bytes")
    enc = _ecb(cipher_key).encryptor()
    return enc.update(bytes(unit)) + enc.finalize()


def decrypt_unit(unit: bytes, cipher_key: bytes) -> bytes:
    if len(unit) != UNIT_SIZE or len(cipher_key) != UNIT_SIZE:
        raise DimensionError("unit and cipher key must both be exactly 16 bytes")
    dec = _ecb(cipher_key).decryptor()
    return dec.update(bytes(unit)) + dec.finalize()


def serialize_block(block: np.ndarray) -> bytes:
    """Serialize a (channels, r, s) byte block row-major, channels last."""
    return np.ascontiguousarray(block.transpose(1, 2, 0)).tobytes()


def deserialize_block(data: bytes, channels: int, r: int, s: int) -> np.ndarray:
    return (
        np.frombuffer(data, dtype=np.uint8)
        .reshape(r, s, channels)
        .transpose(2, 0, 1)
        .copy()
    )


def keygen_aes(
    master_seed: int,
    image_dims: tuple[int, int],
    channels: int = 1,
    t: int = 1,
    salt_pepper_p: float = 0.0,
    scale_factor: int = 1,
) -> AesKey:
    """Generate permutation plus one AES-128 key per block position.

    Validates at key time that every block of the scaled-up image tiles
    exactly into 16-byte units, so encryption never needs padding.
    """
    l, m = image_dims
    sl, sm = l * scale_factor, m * scale_factor
    g_r, g_c = grid_shape(sl, sm, t)
    r, s = sl // g_r, sm // g_c
    if (r * s * channels) % UNIT_SIZE:
        raise ConfigError(
            f"blocks of {r}x{s}x{channels} = {r * s * channels} bytes do not tile "
            f"into {UNIT_SIZE}-byte units; adjust t or the scale factor"
        )
    permutation = gen_permutation(derive_seed(master_seed, TAG_PERMUTATION), t)
    block_keys = tuple(
        bytes(seeded_rng(derive_seed(master_seed, TAG_CIPHER_KEY, i)).bytes(UNIT_SIZE))
        for i in range(t)
    )
    return AesKey(
        permutation=permutation,
        block_keys=block_keys,
        salt_pepper_p=salt_pepper_p,
        scale_factor=scale_factor,
        master_seed=master_seed,
        channels=channels,
        image_dims=(l, m),
    )


def _check_original_dims(image: Image, key: AesKey):
    if image.dims != key.image_dims or image.channels != key.channels:
        raise DimensionError(
            f"image {image.channels}x{image.dims[0]}x{image.dims[1]} does not match "
            f"key {key.channels}x{key.image_dims[0]}x{key.image_dims[1]}"
        )


def disguise_aes(image: Image, key: AesKey, image_id: int = 0, mode: str = "ecb") -> Image:
    """Disguise one byte image; output is the scaled-up encrypted form.

    Pipeline: scale up, partition, permute, per-block salt-pepper noise,
    per-block encryption of consecutive 16-byte units. The scaled-up
    ciphertext is the canonical disguised image; use
    :func:`downscaled_view` for a training-size companion when k > 1.

    ``mode`` "cbc" chains units within each block instead; it exists only to
    demonstrate how chaining destroys the repeat structure models rely on.
    """
    if image.dtype != "byte":
        raise ConfigError("AES disguising operates on byte images")
    _check_original_dims(image, key)
    k = key.scale_factor
    scaled = scale_up(image, k, k) if k > 1 else image
    grid = permute(partition(scaled, key.t), key.permutation)
    t, c, r, s = grid.blocks.shape
    out = np.empty_like(grid.blocks)
    for i in range(t):
        block = grid.blocks[i]
        if key.salt_pepper_p > 0:
            noise_seed = derive_seed(key.master_seed, TAG_SALT_PEPPER, image_id, i)
            block = _apply_salt_pepper(block, key.salt_pepper_p, noise_seed)
        data = serialize_block(block)
        if mode == "ecb":
            enc = _ecb(key.block_keys[i]).encryptor()
        elif mode == "cbc":
            enc = Cipher(algorithms.AES(key.block_keys[i]), modes.CBC(bytes(UNIT_SIZE))).encryptor()
        else:
            raise ConfigError(f"unknown cipher mode {mode!r}")
        out[i] = deserialize_block(enc.update(data) + enc.finalize(), c, r, s)
    return reassemble(
        type(grid)(blocks=out, origin_dims=grid.origin_dims), dtype="byte", label=image.label
    )


def decrypt_with_key(disguised: Image, key: AesKey, mode: str = "ecb") -> Image:
    """Keyed inverse of :func:`disguise_aes`, up to the salt-pepper noise.

    Recovers the noised scaled-up image exactly; with p=0 and k=1 that is
    the original image.
    """
    if disguised.dims != key.scaled_dims or disguised.channels != key.channels:
        raise DimensionError(
            f"disguised image {disguised.dims} does not align with key's "
            f"scaled dims {key.scaled_dims}"
        )
    grid = partition(disguised, key.t)
    t, c, r, s = grid.blocks.shape
    out = np.empty_like(grid.blocks)
    for i in range(t):
        data = serialize_block(grid.blocks[i])
        if mode == "ecb":
            dec = _ecb(key.block_keys[i]).decryptor()
        elif mode == "cbc":
            dec = Cipher(algorithms.AES(key.block_keys[i]), modes.CBC(bytes(UNIT_SIZE))).decryptor()
        else:
            raise ConfigError(f"unknown cipher mode {mode!r}")
        out[i] = deserialize_block(dec.update(data) + dec.finalize(), c, r, s)
    restored = inverse_permute(type(grid)(blocks=out, origin_dims=grid.origin_dims), key.permutation)
    return reassemble(restored, dtype="byte", label=disguised.label)


def downscaled_view(disguised: Image, key: AesKey) -> Image:
    """Scale a canonical disguised image back to the original resolution."""
    k = key.scale_factor
    return scale_down(disguised, k, k) if k > 1 else disguised
