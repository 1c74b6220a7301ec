"""Shared domain types, pixel-value semantics, and the seeded-PRNG contract.

Every random choice in this package flows through :func:`seeded_rng`, a
counter-based Philox generator keyed by a 64-bit seed, so any pipeline run
twice with the same configuration and seed produces bit-identical output.
Parallel or per-item streams are derived with :func:`derive_seed`, a
SplitMix64 mix of ``(master_seed, tag, indices...)`` that never shares state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DisguiseError",
    "DimensionError",
    "PartitionError",
    "ConfigError",
    "MechanismError",
    "UnderdeterminedError",
    "Image",
    "BlockGrid",
    "Permutation",
    "NoiseSpec",
    "RmtKey",
    "AesKey",
    "MixupKey",
    "LabelMap",
    "seeded_rng",
    "derive_seed",
    "remap_labels",
    "TAG_PERMUTATION",
    "TAG_MATRIX",
    "TAG_CIPHER_KEY",
    "TAG_RMT_NOISE",
    "TAG_SALT_PEPPER",
    "TAG_MIXUP",
    "TAG_LABELS",
    "TAG_EXPERIMENT",
]


class DisguiseError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DisguiseError):
    """Image or block dimensions do not match what an operation requires."""


class PartitionError(DisguiseError):
    """No valid uniform block partition exists for the requested block count."""


class ConfigError(DisguiseError):
    """Invalid key, file, or experiment configuration."""


class MechanismError(DisguiseError):
    """Operation applied to data disguised under a different mechanism."""


class UnderdeterminedError(DisguiseError):
    """An estimation problem has fewer independent equations than unknowns."""


# ---------------------------------------------------------------------------
# Seeded randomness

_MASK64 = (1 << 64) - 1

# Stream tags for derive_seed, one per independent consumer of randomness.
TAG_PERMUTATION = 1
TAG_MATRIX = 2
TAG_CIPHER_KEY = 3
TAG_RMT_NOISE = 4
TAG_SALT_PEPPER = 5
TAG_MIXUP = 6
TAG_LABELS = 7
TAG_EXPERIMENT = 8


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *parts: int) -> int:
    """Derive a child 64-bit seed from a master seed and integer indices.

    The derivation is a pure integer mix (SplitMix64 folds), independent of
    any linear-algebra or RNG backend, so child streams are reproducible on
    every platform. Distinct ``parts`` tuples give independent streams.
    """
    x = _splitmix64(master_seed & _MASK64)
    for p in parts:
        x = _splitmix64(x ^ (int(p) & _MASK64))
    return x


def seeded_rng(seed: int) -> np.random.Generator:
    """Deterministic random stream for a 64-bit seed.

    Built on the counter-based Philox generator: identical seeds yield
    identical streams across runs and platforms. Supports uniform integers,
    uniform reals on [0, 1), and standard Gaussians via the usual
    :class:`numpy.random.Generator` methods.
    """
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))


# ---------------------------------------------------------------------------
# Domain types

DTYPE_BYTE = "byte"
DTYPE_REAL = "real"


@dataclass(frozen=True)
class Image:
    """A labeled pixel tensor, shape (channels, height, width).

    ``dtype`` is "byte" (uint8 storage, values 0..255) or "real" (float64,
    finite values only). All transforms consume and produce Images.
    """

    pixels: np.ndarray
    dtype: str = DTYPE_BYTE
    label: int | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim == 2:
            px = px[np.newaxis, :, :]
        if px.ndim != 3:
            raise DimensionError(f"pixels must be 2-D or 3-D, got shape {px.shape}")
        if px.shape[0] not in (1, 3):
            raise DimensionError(f"channels must be 1 or 3, got {px.shape[0]}")
        if self.dtype == DTYPE_BYTE:
            if px.dtype != np.uint8:
                if np.issubdtype(px.dtype, np.floating) and not np.all(px == np.round(px)):
                    raise ConfigError("byte image requires integer values in [0, 255]")
                if px.min() < 0 or px.max() > 255:
                    raise ConfigError("byte image requires values in [0, 255]")
                px = px.astype(np.uint8)
        elif self.dtype == DTYPE_REAL:
            px = px.astype(np.float64, copy=False)
            if not np.all(np.isfinite(px)):
                raise ConfigError("real image requires finite values")
        else:
            raise ConfigError(f"unknown image dtype {self.dtype!r}")
        px = px.copy()
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def dims(self) -> tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[2]

    def with_pixels(self, pixels: np.ndarray, dtype: str | None = None) -> "Image":
        """New Image with the same label and (unless overridden) dtype."""
        return Image(pixels, dtype=self.dtype if dtype is None else dtype, label=self.label)


@dataclass(frozen=True)
class BlockGrid:
    """An image partitioned into t uniform blocks, each (channels, r, s).

    ``blocks`` has shape (t, channels, r, s) and lists blocks row-major over
    the original image unless permuted. ``origin_dims`` is the (l, m) of the
    image the grid was cut from; t * r * s == l * m per channel.
    """

    blocks: np.ndarray
    origin_dims: tuple[int, int]

    def __post_init__(self):
        b = np.asarray(self.blocks)
        if b.ndim != 4:
            raise DimensionError(f"blocks must be 4-D (t, channels, r, s), got {b.shape}")
        l, m = self.origin_dims
        t, _, r, s = b.shape
        if t * r * s != l * m:
            raise DimensionError(
                f"inconsistent grid: {t} blocks of {r}x{s} != {l}x{m} pixels"
            )
        object.__setattr__(self, "blocks", b)

    @property
    def t(self) -> int:
        return self.blocks.shape[0]

    @property
    def channels(self) -> int:
        return self.blocks.shape[1]

    @property
    def block_rows(self) -> int:
        return self.blocks.shape[2]

    @property
    def block_cols(self) -> int:
        return self.blocks.shape[3]


@dataclass(frozen=True)
class Permutation:
    """A bijection on block positions {0..t-1} plus the seed it came from."""

    indices: np.ndarray
    seed: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.uint32)
        if sorted(idx.tolist()) != list(range(len(idx))):
            raise ConfigError("indices must be a permutation of 0..t-1")
        idx = idx.copy()
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive uniform-noise setting for the projection mechanism.

    ``level`` bounds each noise entry (uniform on [0, level)); ``per_image``
    regenerates the noise matrix for every image and block, the default.
    With ``per_image`` off the noise is drawn once per block position and
    shared by the whole dataset.
    """

    level: float = 0.0
    per_image: bool = True

    def __post_init__(self):
        if self.level < 0:
            raise ConfigError("noise level must be non-negative")


@dataclass(frozen=True)
class RmtKey:
    """Secret parameters of the per-block random projection mechanism.

    One square matrix per block position (applied by left-multiplication to
    block columns), one shared permutation, and a noise setting. RGB images
    reuse the same matrices and permutation across channels.
    """

    permutation: Permutation
    matrices: np.ndarray  # (t, r, r) float64
    noise: NoiseSpec
    master_seed: int
    channels: int
    image_dims: tuple[int, int]
    orthogonal: bool = True

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ConfigError(f"matrices must be (t, r, r), got {mats.shape}")
        if mats.shape[0] != len(self.permutation):
            raise ConfigError("one matrix per block position required")
        mats = mats.copy()
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)

    @property
    def t(self) -> int:
        return self.matrices.shape[0]

    @property
    def block_dim(self) -> int:
        return self.matrices.shape[1]


@dataclass(frozen=True)
class AesKey:
    """Secret parameters of the per-block cipher mechanism.

    ``block_keys`` holds one 16-byte AES-128 key per block position of the
    scaled-up image; ``scale_factor`` is the per-axis pixel replication
    factor; ``salt_pepper_p`` the per-pixel extreme-value noise probability.
    """

    permutation: Permutation
    block_keys: tuple[bytes, ...]
    salt_pepper_p: float
    scale_factor: int
    master_seed: int
    channels: int
    image_dims: tuple[int, int]  # original (unscaled) dims

    def __post_init__(self):
        if not 0.0 <= self.salt_pepper_p <= 1.0:
            raise ConfigError("salt_pepper_p must be in [0, 1]")
        if self.scale_factor < 1:
            raise ConfigError("scale factor must be >= 1")
        if len(self.block_keys) != len(self.permutation):
            raise ConfigError("one cipher key per block position required")
        for k in self.block_keys:
            if len(k) != 16:
                raise ConfigError("cipher keys must be exactly 16 bytes")
        object.__setattr__(self, "block_keys", tuple(bytes(k) for k in self.block_keys))

    @property
    def t(self) -> int:
        return len(self.block_keys)

    @property
    def scaled_dims(self) -> tuple[int, int]:
        l, m = self.image_dims
        return l * self.scale_factor, m * self.scale_factor


@dataclass(frozen=True)
class MixupKey:
    """Parameters of the mixup baseline: how many images to blend per output."""

    k_mix: int
    master_seed: int
    channels: int
    image_dims: tuple[int, int]

    def __post_init__(self):
        if self.k_mix < 2:
            raise ConfigError("k_mix must be >= 2")


@dataclass(frozen=True)
class LabelMap:
    """A random bijection original class -> disguised class id."""

    mapping: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        values = list(self.mapping.values())
        if len(set(values)) != len(values):
            raise ConfigError("label mapping must be a bijection")

    def apply(self, labels) -> np.ndarray:
        return np.asarray([self.mapping[int(y)] for y in labels])

    def invert(self, labels) -> np.ndarray:
        inverse = {v: k for k, v in self.mapping.items()}
        return np.asarray([inverse[int(y)] for y in labels])


def remap_labels(labels, seed: int) -> tuple[LabelMap, np.ndarray]:
    """Map class ids onto 0..n-1 in seeded random order.

    Returns the bijection and the remapped labels; class frequencies are
    preserved because the map is one-to-one.
    """
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ConfigError("labels must be non-empty")
    classes = sorted(int(c) for c in np.unique(labels))
    rng = seeded_rng(derive_seed(seed, TAG_LABELS))
    shuffled = rng.permutation(len(classes))
    mapping = {c: int(shuffled[i]) for i, c in enumerate(classes)}
    label_map = LabelMap(mapping=mapping, seed=seed)
    return label_map, label_map.apply(labels)
