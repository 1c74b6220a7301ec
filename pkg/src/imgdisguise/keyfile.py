"""Binary key-file format (magic "DGKY", little-endian).

Header: magic, format version u16, mechanism tag u8 (0=RMT, 1=AES,
2=mixup), master seed u64. Format version 1 pins the random stream family
(Philox keyed by 64-bit seeds, SplitMix64 child derivation), so a key file
plus this library regenerates every derived stream. The body stores the
materialized parameters rather than relying on regeneration: permutation
indices as u32, matrices as f64 row-major, cipher keys as raw 16-byte
strings. That keeps keys portable across linear-algebra backends whose QR
factorizations differ in low-order bits.
"""

from __future__ import annotations

import hashlib
import io
import struct

import numpy as np

from .core import (
    AesKey,
    ConfigError,
    MixupKey,
    NoiseSpec,
    Permutation,
    RmtKey,
)

__all__ = ["write_key", "read_key", "key_to_bytes", "key_from_bytes", "key_fingerprint"]

MAGIC = b"DGKY"
FORMAT_VERSION = 1
MECHANISM_TAGS = {"rmt": 0, "aes": 1, "mixup": 2}
TAG_MECHANISMS = {v: k for k, v in MECHANISM_TAGS.items()}
ORIENTATION_LEFT = 0  # blocks are transformed by left-multiplication


def mechanism_of(key) -> str:
    if isinstance(key, RmtKey):
        return "rmt"
    if isinstance(key, AesKey):
        return "aes"
    if isinstance(key, MixupKey):
        return "mixup"
    raise ConfigError(f"unknown key type {type(key).__name__}")


def key_to_bytes(key) -> bytes:
    buf = io.BytesIO()
    mech = mechanism_of(key)
    buf.write(MAGIC)
    buf.write(struct.pack("<HBQ", FORMAT_VERSION, MECHANISM_TAGS[mech], key.master_seed))
    l, m = key.image_dims
    if mech == "rmt":
        t, r = key.t, key.block_dim
        buf.write(
            struct.pack(
                "<BIIIIdBBB",
                key.channels, l, m, t, r,
                key.noise.level, int(key.noise.per_image), int(key.orthogonal),
                ORIENTATION_LEFT,
            )
        )
        buf.write(struct.pack("<Q", key.permutation.seed))
        buf.write(np.asarray(key.permutation.indices, dtype="<u4").tobytes())
        buf.write(np.asarray(key.matrices, dtype="<f8").tobytes())
    elif mech == "aes":
        buf.write(
            struct.pack(
                "<BIIIId",
                key.channels, l, m, key.t, key.scale_factor, key.salt_pepper_p,
            )
        )
        buf.write(struct.pack("<Q", key.permutation.seed))
        buf.write(np.asarray(key.permutation.indices, dtype="<u4").tobytes())
        for cipher_key in key.block_keys:
            buf.write(cipher_key)
    else:
        buf.write(struct.pack("<BIII", key.channels, l, m, key.k_mix))
    return buf.getvalue()


def key_from_bytes(data: bytes):
    buf = io.BytesIO(data)

    def read(fmt):
        size = struct.calcsize(fmt)
        chunk = buf.read(size)
        if len(chunk) != size:
            raise ConfigError("truncated key file")
        return struct.unpack(fmt, chunk)

    if buf.read(4) != MAGIC:
        raise ConfigError("not a key file (bad magic)")
    version, mech_tag, master_seed = read("<HBQ")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported key format version {version}")
    mech = TAG_MECHANISMS.get(mech_tag)
    if mech is None:
        raise ConfigError(f"unknown mechanism tag {mech_tag}")
    if mech == "rmt":
        channels, l, m, t, r, noise_level, per_image, orthogonal, orientation = read("<BIIIIdBBB")
        if orientation != ORIENTATION_LEFT:
            raise ConfigError(f"unsupported matrix orientation tag {orientation}")
        (perm_seed,) = read("<Q")
        indices = np.frombuffer(buf.read(4 * t), dtype="<u4")
        matrices = np.frombuffer(buf.read(8 * t * r * r), dtype="<f8").reshape(t, r, r)
        return RmtKey(
            permutation=Permutation(indices=indices, seed=perm_seed),
            matrices=matrices,
            noise=NoiseSpec(level=noise_level, per_image=bool(per_image)),
            master_seed=master_seed,
            channels=channels,
            image_dims=(l, m),
            orthogonal=bool(orthogonal),
        )
    if mech == "aes":
        channels, l, m, t, scale_factor, p = read("<BIIIId")
        (perm_seed,) = read("<Q")
        indices = np.frombuffer(buf.read(4 * t), dtype="<u4")
        block_keys = tuple(buf.read(16) for _ in range(t))
        return AesKey(
            permutation=Permutation(indices=indices, seed=perm_seed),
            block_keys=block_keys,
            salt_pepper_p=p,
            scale_factor=scale_factor,
            master_seed=master_seed,
            channels=channels,
            image_dims=(l, m),
        )
    channels, l, m, k_mix = read("<BIII")
    return MixupKey(k_mix=k_mix, master_seed=master_seed, channels=channels, image_dims=(l, m))


def write_key(path, key):
    with open(path, "wb") as fh:
        fh.write(key_to_bytes(key))


def read_key(path):
    with open(path, "rb") as fh:
        return key_from_bytes(fh.read())


def key_fingerprint(key) -> str:
    """Short stable identifier of the full key material."""
    return hashlib.sha256(key_to_bytes(key)).hexdigest()[:16]
