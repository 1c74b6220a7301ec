import numpy as np
import pytest
from scipy import stats

from imgdisguise.blocks import (
    gen_permutation,
    grid_shape,
    inverse_permute,
    pad_to,
    partition,
    permute,
    reassemble,
)
from imgdisguise.core import BlockGrid, DimensionError, Image, PartitionError, Permutation


def random_image(seed, dims=(28, 28), channels=1):
    rng = np.random.default_rng(seed)
    return Image(rng.integers(0, 256, size=(channels, *dims)).astype(np.uint8), label=0)


def test_pad_identity():
    img = random_image(0)
    assert np.array_equal(pad_to(img, 28, 28).pixels, img.pixels)


def test_pad_fills_border():
    img = random_image(1)
    padded = pad_to(img, 30, 30, fill=0)
    assert padded.dims == (30, 30)
    assert np.array_equal(padded.pixels[:, :28, :28], img.pixels)
    assert padded.pixels[:, 28:, :].max() == 0
    assert padded.pixels[:, :, 28:].max() == 0
    assert padded.label == img.label


def test_pad_smaller_target_errors():
    img = random_image(2, dims=(32, 32))
    with pytest.raises(DimensionError):
        pad_to(img, 28, 28)


def test_partition_28x28_into_16_blocks():
    grid = partition(random_image(3), 16)
    assert grid.t == 16
    assert (grid.block_rows, grid.block_cols) == (7, 7)


def test_partition_single_block_is_image():
    img = random_image(4)
    grid = partition(img, 1)
    assert np.array_equal(grid.blocks[0], img.pixels)


def test_partition_impossible_count_errors():
    with pytest.raises(PartitionError) as err:
        partition(random_image(5), 9)
    message = str(err.value)
    assert "28" in message and "9" in message


def test_grid_shape_prefers_image_aspect():
    # 60x48 with 20 blocks: only (5, 4) divides both axes, ratio 1.25 = 60/48
    assert grid_shape(60, 48, 20) == (5, 4)
    # square image: the square factorization wins
    assert grid_shape(28, 28, 4) == (2, 2)


def test_partition_reassemble_round_trip():
    for t in (1, 4, 16):
        img = random_image(10 + t)
        assert np.array_equal(reassemble(partition(img, t)).pixels, img.pixels)


def test_partition_preserves_pixel_multiset():
    img = random_image(6)
    grid = permute(partition(img, 16), gen_permutation(1, 16))
    assert sorted(grid.blocks.ravel().tolist()) == sorted(img.pixels.ravel().tolist())


def test_gen_permutation_t1_identity():
    assert gen_permutation(0, 1).indices.tolist() == [0]


def test_gen_permutation_deterministic():
    a = gen_permutation(33, 16)
    b = gen_permutation(33, 16)
    assert np.array_equal(a.indices, b.indices)


def test_gen_permutation_uniform_chi_square():
    # empirical frequency oracle: count which block lands at each position
    # over many seeds, then an aggregate chi-square test at alpha = 0.01
    t, n = 16, 10_000
    counts = np.zeros((t, t))
    for seed in range(n):
        idx = gen_permutation(seed, t).indices
        counts[np.arange(t), idx] += 1
    expected = n / t
    statistic = ((counts - expected) ** 2 / expected).sum()
    dof = t * (t - 1)  # t positions, t-1 free cells each
    p_value = stats.chi2.sf(statistic, dof)
    assert p_value > 0.01


def test_permute_identity():
    img = random_image(7)
    grid = partition(img, 4)
    identity = Permutation(indices=np.arange(4), seed=0)
    assert np.array_equal(permute(grid, identity).blocks, grid.blocks)


def test_swap_pairs_permutation_is_involution():
    grid = partition(random_image(8), 4)
    swap = Permutation(indices=np.array([1, 0, 3, 2]), seed=0)
    assert np.array_equal(permute(permute(grid, swap), swap).blocks, grid.blocks)


def test_permute_inverse_round_trip_bitwise():
    grid = partition(random_image(9), 16)
    perm = gen_permutation(44, 16)
    restored = inverse_permute(permute(grid, perm), perm)
    assert np.array_equal(restored.blocks, grid.blocks)


def test_permute_length_mismatch_errors():
    grid = partition(random_image(10), 16)
    with pytest.raises(DimensionError):
        permute(grid, gen_permutation(0, 4))


def test_inconsistent_grid_rejected():
    grid = partition(random_image(11), 16)
    with pytest.raises(DimensionError):
        BlockGrid(blocks=grid.blocks[:15], origin_dims=grid.origin_dims)


def test_full_round_trip_with_permutation():
    for t in (1, 4, 16):
        img = random_image(20 + t, channels=3 if t == 4 else 1)
        perm = gen_permutation(t, t)
        restored = reassemble(inverse_permute(permute(partition(img, t), perm), perm))
        assert np.array_equal(restored.pixels, img.pixels)
