"""Mixup baseline: blend a private image with pool images, flip pixel signs.

The disguised image is a convex combination of the private image and
randomly chosen pool images, with the private image always carrying the
largest weight, followed by an independent random sign per pixel. Absolute
pixel values are therefore invariant to the sign mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ConfigError, DimensionError, Image, seeded_rng

__all__ = ["MixRecord", "mix_images", "mixup_disguise"]


@dataclass(frozen=True)
class MixRecord:
    """What went into one disguised image, for oracles and audits.

    ``weights[0]`` belongs to the private image, the rest to
    ``pool_indices`` in order.
    """

    pool_indices: tuple[int, ...]
    weights: np.ndarray
    sign_mask: np.ndarray


def mix_images(images: Sequence[Image], weights, sign_mask) -> Image:
    """Deterministic core of the baseline: sign_mask * sum(w_j * x_j)."""
    weights = np.asarray(weights, dtype=np.float64)
    if len(images) != len(weights):
        raise ConfigError("one weight per image required")
    dims = images[0].pixels.shape
    for img in images[1:]:
        if img.pixels.shape != dims:
            raise DimensionError("all mixed images must share dims")
    mixed = np.zeros(dims, dtype=np.float64)
    for w, img in zip(weights, images):
        mixed += w * img.pixels.astype(np.float64)
    return Image(np.asarray(sign_mask, dtype=np.float64) * mixed, dtype="real", label=images[0].label)


def mixup_disguise(
    private: Image, pool: Sequence[Image], k_mix: int, seed: int
) -> tuple[Image, MixRecord]:
    """Disguise one image by mixing it with k_mix - 1 pool images.

    Pool images are chosen uniformly (i.i.d.); weights come from a flat
    Dirichlet with the largest weight assigned to the private image, so the
    dominance constraint holds and the weights still sum to one. Returns the
    disguised image and the record of indices, weights, and sign mask.
    """
    if k_mix < 2:
        raise ConfigError(f"k_mix must be >= 2, got {k_mix}")
    if len(pool) == 0:
        raise ConfigError("pool must be non-empty")
    rng = seeded_rng(seed)
    picks = tuple(int(i) for i in rng.integers(0, len(pool), size=k_mix - 1))
    weights = np.sort(rng.dirichlet(np.ones(k_mix)))[::-1]  # private gets the max
    sign_mask = rng.integers(0, 2, size=private.pixels.shape) * 2 - 1
    images = [private] + [pool[i] for i in picks]
    disguised = mix_images(images, weights, sign_mask)
    return disguised, MixRecord(pool_indices=picks, weights=weights, sign_mask=sign_mask)
