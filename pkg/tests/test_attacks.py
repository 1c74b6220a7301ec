import numpy as np
import pytest
from scipy import stats

from imgdisguise.aes import disguise_aes, keygen_aes
from imgdisguise.attacks import (
    AesAttackParams,
    Codebook,
    KnownPair,
    RmtAttackParams,
    attack_many,
    brute_force_bound,
    build_codebook,
    codebook_attack,
    regression_attack,
)
from imgdisguise.core import ConfigError, Image, UnderdeterminedError
from imgdisguise.dataset import synthetic_dataset
from imgdisguise.rmt import disguise_rmt, keygen_rmt


def make_pairs(images, key, start_id=0):
    return [
        KnownPair(original=img, disguised=_disguise(img, key, start_id + i), image_id=start_id + i)
        for i, img in enumerate(images)
    ]


def _disguise(img, key, image_id):
    if hasattr(key, "block_keys"):
        return disguise_aes(img, key, image_id=image_id)
    return disguise_rmt(img, key, image_id=image_id)


# -- codebook construction ---------------------------------------------------


def test_one_pair_distinct_units_counts():
    images = synthetic_dataset("random", 1, dims=(28, 28), seed=0)
    key = keygen_aes(0, (28, 28), t=49)
    book = build_codebook(make_pairs(images, key), AesAttackParams.from_key(key))
    assert len(book) == 49  # random bytes: every unit distinct
    assert book.pairs_consumed == 1


def test_duplicate_pairs_double_counts():
    images = synthetic_dataset("random", 1, dims=(28, 28), seed=1)
    key = keygen_aes(1, (28, 28), t=49)
    pairs = make_pairs(images, key)
    once = build_codebook(pairs, AesAttackParams.from_key(key))
    twice = build_codebook(pairs + pairs, AesAttackParams.from_key(key))
    assert set(once.entries) == set(twice.entries)
    for cipher, bucket in once.entries.items():
        for plain, count in bucket.items():
            assert twice.entries[cipher][plain] == 2 * count


def test_noise_makes_mapping_non_unique():
    # at p=1 every unit becomes one of 2^16 extreme patterns, so with enough
    # pairs some ciphertexts collide while their clean plaintexts differ:
    # one ciphertext then holds several plaintext preimages
    images = synthetic_dataset("patchwork", 400, dims=(28, 28), seed=2)
    key = keygen_aes(2, (28, 28), t=49, salt_pepper_p=1.0)
    book = build_codebook(make_pairs(images, key), AesAttackParams.from_key(key))
    assert any(len(bucket) > 1 for bucket in book.entries.values())


# -- codebook replay ----------------------------------------------------------


def test_self_codebook_perfect_recovery():
    images = synthetic_dataset("patchwork", 5, dims=(28, 28), seed=3)
    key = keygen_aes(3, (28, 28), t=49)
    pairs = make_pairs(images, key)
    book = build_codebook(pairs, AesAttackParams.from_key(key))
    for pair in pairs:
        recovered, hit = codebook_attack(pair.disguised, book)
        assert hit == 1.0
        assert np.array_equal(recovered.pixels, pair.original.pixels)


def test_empty_codebook_gives_zero_image():
    images = synthetic_dataset("random", 1, dims=(28, 28), seed=4)
    key = keygen_aes(4, (28, 28), t=49)
    book = build_codebook([], AesAttackParams.from_key(key))
    target = disguise_aes(images[0], key)
    recovered, hit = codebook_attack(target, book)
    assert hit == 0.0
    assert recovered.pixels.max() == 0


def test_hit_rate_monotone_in_pairs():
    images = synthetic_dataset("patchwork", 90, dims=(28, 28), seed=5)
    key = keygen_aes(5, (28, 28), t=49)
    disguised = [disguise_aes(img, key, image_id=i) for i, img in enumerate(images)]
    pool = list(zip(images[:70], disguised[:70]))
    targets = disguised[70:]
    params = AesAttackParams.from_key(key)
    rates = []
    for n in (0, 5, 20, 70):
        pairs = [KnownPair(o, d, i) for i, (o, d) in enumerate(pool[:n])]
        rates.append(attack_many(targets, build_codebook(pairs, params)).hit_rate)
    assert rates == sorted(rates)
    assert rates[0] == 0.0 and rates[-1] > 0.0


def test_lookup_tie_breaks_lexicographically():
    book = Codebook(unit_size=16)
    cipher = b"c" * 16
    book.add(cipher, b"b" * 16)
    book.add(cipher, b"a" * 16)
    assert book.lookup(cipher) == b"a" * 16  # equal counts: smallest wins
    book.add(cipher, b"b" * 16)
    assert book.lookup(cipher) == b"b" * 16  # higher count wins


def test_mean_fill_uses_codebook_average():
    images = synthetic_dataset("random", 2, dims=(28, 28), seed=6)
    key = keygen_aes(6, (28, 28), t=49)
    pairs = make_pairs(images[:1], key)
    book = build_codebook(pairs, AesAttackParams.from_key(key))
    target = disguise_aes(images[1], key, image_id=9)
    zero_fill, _ = codebook_attack(target, book, miss_fill="zero")
    mean_fill, _ = codebook_attack(target, book, miss_fill="mean")
    assert not np.array_equal(zero_fill.pixels, mean_fill.pixels)


def test_scaled_attack_recovers_original_after_downscale():
    from imgdisguise.aes import downscaled_view

    images = synthetic_dataset("patchwork", 4, dims=(32, 32), seed=7)
    key = keygen_aes(7, (32, 32), t=16, scale_factor=4)
    pairs = make_pairs(images, key)
    book = build_codebook(pairs, AesAttackParams.from_key(key))
    recovered, hit = codebook_attack(pairs[0].disguised, book)
    assert hit == 1.0
    assert np.array_equal(downscaled_view(recovered, key).pixels, images[0].pixels)


def test_misaligned_target_errors():
    key = keygen_aes(8, (28, 28), t=49)
    book = build_codebook([], AesAttackParams.from_key(key))
    wrong = Image(np.zeros((1, 32, 32), dtype=np.uint8))
    from imgdisguise.core import DimensionError

    with pytest.raises(DimensionError):
        codebook_attack(wrong, book)


# -- regression attack ---------------------------------------------------------


def test_noiseless_regression_recovers_key_exactly():
    images = synthetic_dataset("random", 6, dims=(28, 28), seed=8)
    key = keygen_rmt(8, (28, 28), t=16, noise_level=0.0)
    pairs = make_pairs(images[:2], key)
    targets = [disguise_rmt(img, key, image_id=50 + i) for i, img in enumerate(images[2:])]
    result = regression_attack(pairs, RmtAttackParams.from_key(key), targets)
    for i in range(key.t):
        assert np.linalg.norm(result.matrices[i] - key.matrices[i]) <= 1e-6
    for recon, original in zip(result.reconstructions, images[2:]):
        mse = np.mean((recon.pixels - original.pixels.astype(np.float64)) ** 2)
        assert mse <= 1e-12


def test_single_pair_square_system():
    # one grayscale pair of 7x7 blocks supplies exactly r = 7 columns
    images = synthetic_dataset("random", 2, dims=(28, 28), seed=9)
    key = keygen_rmt(9, (28, 28), t=16, noise_level=0.0)
    pairs = make_pairs(images[:1], key)
    result = regression_attack(pairs, RmtAttackParams.from_key(key), [])
    for i in range(key.t):
        assert np.linalg.norm(result.matrices[i] - key.matrices[i]) <= 1e-6


def test_rank_deficient_pairs_error():
    # every block column identical: rank 1 < 7
    flat = Image(np.tile(np.arange(28, dtype=np.uint8)[:, None], (1, 28)))
    key = keygen_rmt(10, (28, 28), t=16, noise_level=0.0)
    pairs = [KnownPair(flat, disguise_rmt(flat, key), 0)]
    with pytest.raises(UnderdeterminedError):
        regression_attack(pairs, RmtAttackParams.from_key(key), [])


def test_no_pairs_error():
    key = keygen_rmt(11, (28, 28), t=16)
    with pytest.raises(UnderdeterminedError):
        regression_attack([], RmtAttackParams.from_key(key), [])


def test_estimation_error_shrinks_with_pairs():
    # statistical invariant: over 20 seeds, estimation error correlates
    # negatively with the known-pair count (Spearman, alpha = 0.05)
    pair_counts = (2, 8, 24)
    points = []
    for seed in range(20):
        images = synthetic_dataset("random", 24, dims=(28, 28), seed=100 + seed)
        key = keygen_rmt(seed, (28, 28), t=4, noise_level=60.0)
        disguised = [disguise_rmt(img, key, image_id=i) for i, img in enumerate(images)]
        params = RmtAttackParams.from_key(key)
        for n in pair_counts:
            pairs = [
                KnownPair(o, d, i) for i, (o, d) in enumerate(zip(images[:n], disguised[:n]))
            ]
            result = regression_attack(pairs, params, [])
            err = np.linalg.norm(result.matrices - key.matrices)
            points.append((n, err))
    rho, p_value = stats.spearmanr([n for n, _ in points], [e for _, e in points])
    assert rho < 0
    assert p_value < 0.05


def test_residual_and_condition_diagnostics_reported():
    images = synthetic_dataset("random", 5, dims=(28, 28), seed=12)
    key = keygen_rmt(13, (28, 28), t=16, noise_level=40.0)
    pairs = make_pairs(images, key)
    result = regression_attack(pairs, RmtAttackParams.from_key(key), [])
    assert result.residuals.shape == (16,)
    assert (result.residuals > 0).all()
    assert (result.conditions >= 1).all()


# -- brute force -----------------------------------------------------------------


def test_brute_force_bound_values():
    assert brute_force_bound(8, 28) == 224
    assert brute_force_bound(1, 1) == 1
    assert brute_force_bound(8, 7) == 56


def test_brute_force_bound_validates():
    with pytest.raises(ConfigError):
        brute_force_bound(0, 5)
