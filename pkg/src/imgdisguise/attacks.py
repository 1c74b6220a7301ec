"""Known-pair attacks on the disguising mechanisms, plus the brute-force bound.

A Level-2 adversary holds pairs of original images and their disguised
versions, all produced under one key. Against the cipher mechanism the
attack builds a codebook from ciphertext units back to plaintext units and
replays it on fresh targets; against the projection mechanism it estimates
the per-block matrices by least squares. Both default to the stronger
scenario where the attacker also knows the block count and permutation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .aes import UNIT_SIZE, scale_up, serialize_block, deserialize_block
from .blocks import inverse_permute, partition, permute, reassemble
from .core import (
    AesKey,
    ConfigError,
    DimensionError,
    Image,
    Permutation,
    RmtKey,
    UnderdeterminedError,
)

__all__ = [
    "KnownPair",
    "AesAttackParams",
    "RmtAttackParams",
    "Codebook",
    "AttackReport",
    "RegressionResult",
    "build_codebook",
    "codebook_attack",
    "regression_attack",
    "brute_force_bound",
    "ATTACK_CSV_COLUMNS",
    "write_attack_csv",
]

# Normal-equation solves fall back to a rank-revealing least-squares
# factorization above this condition estimate.
_NORMAL_EQ_COND_LIMIT = 1e8


@dataclass(frozen=True)
class KnownPair:
    """One original image and its disguised version under the attacked key."""

    original: Image
    disguised: Image
    image_id: int = 0


@dataclass(frozen=True)
class AesAttackParams:
    """What the attacker is assumed to know about the cipher mechanism.

    Never includes the cipher keys. ``permutation=None`` models the weaker
    adversary who must treat the block order as unshuffled.
    """

    t: int
    scale_factor: int
    image_dims: tuple[int, int]
    channels: int
    permutation: Permutation | None = None

    @classmethod
    def from_key(cls, key: AesKey, known_permutation: bool = True) -> "AesAttackParams":
        return cls(
            t=key.t,
            scale_factor=key.scale_factor,
            image_dims=key.image_dims,
            channels=key.channels,
            permutation=key.permutation if known_permutation else None,
        )

    @property
    def scaled_dims(self) -> tuple[int, int]:
        l, m = self.image_dims
        return l * self.scale_factor, m * self.scale_factor


@dataclass(frozen=True)
class RmtAttackParams:
    """Attacker knowledge for the projection mechanism: layout, not matrices."""

    t: int
    image_dims: tuple[int, int]
    channels: int
    permutation: Permutation | None = None

    @classmethod
    def from_key(cls, key: RmtKey, known_permutation: bool = True) -> "RmtAttackParams":
        return cls(
            t=key.t,
            image_dims=key.image_dims,
            channels=key.channels,
            permutation=key.permutation if known_permutation else None,
        )


@dataclass
class Codebook:
    """Dictionary from ciphertext units to observed plaintext units.

    ``entries[cipher][plain]`` counts how often the pairing was seen; with
    salt-pepper noise the same ciphertext can map to several plaintexts.
    """

    unit_size: int
    entries: dict = field(default_factory=dict)
    pairs_consumed: int = 0
    params: AesAttackParams | None = None

    def add(self, cipher_unit: bytes, plain_unit: bytes):
        if len(cipher_unit) != self.unit_size or len(plain_unit) != self.unit_size:
            raise DimensionError(f"units must be {self.unit_size} bytes")
        bucket = self.entries.setdefault(cipher_unit, {})
        bucket[plain_unit] = bucket.get(plain_unit, 0) + 1

    def lookup(self, cipher_unit: bytes) -> bytes | None:
        """Highest-count plaintext for a ciphertext, ties broken bytewise."""
        bucket = self.entries.get(cipher_unit)
        if not bucket:
            return None
        best_count = max(bucket.values())
        return min(p for p, n in bucket.items() if n == best_count)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class AttackReport:
    """Reconstructions plus the hit-rate bookkeeping of one attack run."""

    reconstructed: list
    hit_rate: float
    per_image_hits: list
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.hit_rate <= 1.0:
            raise ConfigError("hit rate must be in [0, 1]")


def _aligned_unit_blocks(image: Image, params: AesAttackParams, expect_scaled: bool):
    """Blocks of an image in codebook alignment, as lists of unit bytes."""
    if expect_scaled:
        if image.dims != params.scaled_dims:
            raise DimensionError(
                f"disguised image dims {image.dims} do not align with "
                f"expected scaled dims {params.scaled_dims}"
            )
        scaled = image
    else:
        if image.dims != params.image_dims:
            raise DimensionError(
                f"original image dims {image.dims} do not match {params.image_dims}"
            )
        k = params.scale_factor
        scaled = scale_up(image, k, k) if k > 1 else image
    grid = partition(scaled, params.t)
    if not expect_scaled and params.permutation is not None:
        grid = permute(grid, params.permutation)
    per_block = []
    for i in range(grid.t):
        data = serialize_block(grid.blocks[i])
        per_block.append([data[j : j + UNIT_SIZE] for j in range(0, len(data), UNIT_SIZE)])
    return per_block, grid


def build_codebook(pairs, params: AesAttackParams) -> Codebook:
    """Accumulate ciphertext-to-plaintext unit mappings from known pairs.

    The plaintext side of each pair is pushed through the public part of the
    disguising pipeline (scale-up, partition, assumed permutation) so its
    units line up with the ciphertext units; every aligned slot contributes
    one mapping, duplicates accumulating counts.
    """
    book = Codebook(unit_size=UNIT_SIZE, params=params)
    for pair in pairs:
        plain_blocks, _ = _aligned_unit_blocks(pair.original, params, expect_scaled=False)
        cipher_blocks, _ = _aligned_unit_blocks(pair.disguised, params, expect_scaled=True)
        for plain_units, cipher_units in zip(plain_blocks, cipher_blocks):
            for p_unit, c_unit in zip(plain_units, cipher_units):
                book.add(c_unit, p_unit)
        book.pairs_consumed += 1
    return book


def codebook_attack(
    target: Image, codebook: Codebook, miss_fill: str = "zero"
) -> tuple[Image, float]:
    """Replay the codebook on one disguised image.

    Every ciphertext unit found in the codebook is replaced by its most
    frequent plaintext; misses become all-zero units ("mean" fills with the
    count-weighted mean plaintext instead). Returns the reconstruction in
    the scaled space, with the assumed permutation undone, and the fraction
    of units that hit.
    """
    params = codebook.params
    if params is None:
        raise ConfigError("codebook carries no attack parameters")
    if miss_fill == "zero":
        fill = bytes(codebook.unit_size)
    elif miss_fill == "mean":
        fill = _mean_plaintext(codebook)
    else:
        raise ConfigError(f"unknown miss_fill {miss_fill!r}")
    cipher_blocks, grid = _aligned_unit_blocks(target, params, expect_scaled=True)
    t, c, r, s = grid.blocks.shape
    out = np.empty_like(grid.blocks)
    hits = 0
    total = 0
    for i, units in enumerate(cipher_blocks):
        recovered = bytearray()
        for unit in units:
            total += 1
            plain = codebook.lookup(unit)
            if plain is None:
                recovered.extend(fill)
            else:
                hits += 1
                recovered.extend(plain)
        out[i] = deserialize_block(bytes(recovered), c, r, s)
    restored = type(grid)(blocks=out, origin_dims=grid.origin_dims)
    if params.permutation is not None:
        restored = inverse_permute(restored, params.permutation)
    image = reassemble(restored, dtype="byte", label=target.label)
    return image, hits / total if total else 0.0


def _mean_plaintext(codebook: Codebook) -> bytes:
    acc = np.zeros(codebook.unit_size)
    n = 0
    for bucket in codebook.entries.values():
        for plain, count in bucket.items():
            acc += count * np.frombuffer(plain, dtype=np.uint8)
            n += count
    if n == 0:
        return bytes(codebook.unit_size)
    return bytes(np.floor(acc / n + 0.5).astype(np.uint8))


def attack_many(targets, codebook: Codebook, miss_fill: str = "zero") -> AttackReport:
    """Run the codebook attack over a target set and aggregate hit rates."""
    recon, fractions = [], []
    hits = total = 0
    for target in targets:
        image, frac = codebook_attack(target, codebook, miss_fill=miss_fill)
        recon.append(image)
        fractions.append(frac)
        n_units = target.pixels.size // codebook.unit_size
        hits += int(round(frac * n_units))  # frac is hits/n_units, recover the count
        total += n_units
    overall = hits / total if total else 0.0
    return AttackReport(
        reconstructed=recon,
        hit_rate=overall,
        per_image_hits=fractions,
        metadata={"pairs": codebook.pairs_consumed, "entries": len(codebook)},
    )


# ---------------------------------------------------------------------------
# Projection-matrix estimation


@dataclass
class RegressionResult:
    """Estimated block matrices plus reconstructions and solve diagnostics."""

    matrices: np.ndarray  # (t, r, r)
    reconstructions: list
    residuals: np.ndarray  # rms fit residual per block
    conditions: np.ndarray  # condition estimate of each normal system


def _block_columns(image: Image, params: RmtAttackParams, permuted: bool) -> np.ndarray:
    """Stack an image's blocks as column matrices, shape (t, r, s * channels)."""
    grid = partition(image, params.t)
    if permuted and params.permutation is not None:
        grid = permute(grid, params.permutation)
    t, c, r, s = grid.blocks.shape
    # (t, c, r, s) -> per block, channels side by side: (t, r, c * s)
    return grid.blocks.astype(np.float64).transpose(0, 2, 1, 3).reshape(t, r, c * s)


def regression_attack(pairs, params: RmtAttackParams, targets) -> RegressionResult:
    """Estimate per-block projection matrices from known pairs by least squares.

    For each block position the known pairs supply plaintext columns X and
    disguised columns Y related by Y = R X (plus whatever noise the key
    added); ordinary least squares over all columns gives the estimate,
    solved through the normal equations with a Cholesky factorization and a
    rank-revealing fallback for ill-conditioned systems. Targets are then
    reconstructed with the inverted estimates.
    """
    pairs = list(pairs)
    if not pairs:
        raise UnderdeterminedError("regression attack needs at least one known pair")
    x_cols = [_block_columns(p.original, params, permuted=True) for p in pairs]
    y_cols = [_block_columns(p.disguised, params, permuted=False) for p in pairs]
    t = params.t
    r = x_cols[0].shape[1]
    matrices = np.empty((t, r, r))
    residuals = np.empty(t)
    conditions = np.empty(t)
    for i in range(t):
        x = np.hstack([cols[i] for cols in x_cols])  # (r, n)
        y = np.hstack([cols[i] for cols in y_cols])
        if np.linalg.matrix_rank(x) < r:
            raise UnderdeterminedError(
                f"block {i}: {x.shape[1]} columns supply rank {np.linalg.matrix_rank(x)} < {r}"
            )
        gram = x @ x.T
        conditions[i] = np.linalg.cond(gram)
        if conditions[i] > _NORMAL_EQ_COND_LIMIT or not np.isfinite(conditions[i]):
            estimate = np.linalg.lstsq(x.T, y.T, rcond=None)[0].T
        else:
            try:
                estimate = cho_solve(cho_factor(gram), x @ y.T).T
            except np.linalg.LinAlgError as exc:
                raise ConfigError(f"block {i}: singular normal system: {exc}") from exc
        matrices[i] = estimate
        fit = estimate @ x - y
        residuals[i] = np.sqrt(np.mean(fit**2))
    reconstructions = [_reconstruct(tgt, matrices, params) for tgt in targets]
    return RegressionResult(
        matrices=matrices,
        reconstructions=reconstructions,
        residuals=residuals,
        conditions=conditions,
    )


def _reconstruct(target: Image, matrices: np.ndarray, params: RmtAttackParams) -> Image:
    grid = partition(target, params.t)
    blocks = grid.blocks.astype(np.float64)
    try:
        out = np.linalg.solve(matrices[:, np.newaxis, :, :], blocks)
    except np.linalg.LinAlgError as exc:
        raise ConfigError(f"estimated matrix is singular: {exc}") from exc
    restored = type(grid)(blocks=out, origin_dims=grid.origin_dims)
    if params.permutation is not None:
        restored = inverse_permute(restored, params.permutation)
    return reassemble(restored, dtype="real", label=target.label)


def brute_force_bound(h: int, m: int) -> int:
    """Exponent of the orthogonal-matrix search space: 2**(h*m) candidates
    for m x m matrices over h-bit values."""
    if h < 1 or m < 1:
        raise ConfigError("h and m must both be >= 1")
    return h * m


# ---------------------------------------------------------------------------
# Report serialization

ATTACK_CSV_COLUMNS = ["mechanism", "pairs", "noise", "hit_rate", "success_rate", "mse", "seed"]


def write_attack_csv(path, rows):
    """Write attack-report rows with the fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ATTACK_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in ATTACK_CSV_COLUMNS})
