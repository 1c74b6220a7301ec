"""Image disguising toolkit for confidential outsourced learning experiments.

Two disguising mechanisms built on pixel-block partitioning and secret
block permutation (per-block random projections, per-block AES-ECB
encryption), a mixup baseline, the matching known-pair attacks, and the
utility/resilience metrics to measure them with.
"""

from .core import (
    AesKey,
    BlockGrid,
    ConfigError,
    DimensionError,
    DisguiseError,
    Image,
    LabelMap,
    MechanismError,
    MixupKey,
    NoiseSpec,
    PartitionError,
    Permutation,
    RmtKey,
    UnderdeterminedError,
    derive_seed,
    remap_labels,
    seeded_rng,
)
from .blocks import gen_permutation, inverse_permute, pad_to, partition, permute, reassemble
from .rmt import disguise_rmt, gen_invertible, gen_orthogonal, keygen_rmt, recover_rmt
from .aes import (
    decrypt_with_key,
    disguise_aes,
    downscaled_view,
    encrypt_unit,
    keygen_aes,
    salt_pepper,
    scale_down,
    scale_up,
)
from .mixup import MixRecord, mix_images, mixup_disguise
from .attacks import (
    AesAttackParams,
    AttackReport,
    Codebook,
    KnownPair,
    RegressionResult,
    RmtAttackParams,
    attack_many,
    brute_force_bound,
    build_codebook,
    codebook_attack,
    regression_attack,
)
from .metrics import (
    attack_success_rate,
    distance_preservation,
    knn_examiner,
    nearest_neighbor_indices,
    reconstruction_error,
    utility_gap,
)
from .keyfile import key_fingerprint, read_key, write_key
from .dataset import load_dataset, load_dgds, save_dgds, synthetic_dataset

__version__ = "0.1.0"
