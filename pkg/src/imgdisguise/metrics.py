"""Utility and attack-resilience measurement.

Reconstruction quality (MSE/PSNR on the byte scale), block-column distance
preservation under the projection mechanism, a k-nearest-neighbour examiner
standing in for a trained re-identification model, and the attack success
rate defined as examiner accuracy on reconstructions relative to examiner
accuracy on originals.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .blocks import partition, permute
from .core import ConfigError, DimensionError, Image, MechanismError, RmtKey, seeded_rng

__all__ = [
    "reconstruction_error",
    "distance_preservation",
    "knn_examiner",
    "nearest_neighbor_indices",
    "attack_success_rate",
    "utility_gap",
    "METRICS_CSV_COLUMNS",
    "write_metrics_csv",
]


def reconstruction_error(original: Image, reconstructed: Image) -> dict:
    """Mean squared pixel error and PSNR between two same-sized images."""
    if original.pixels.shape != reconstructed.pixels.shape:
        raise DimensionError(
            f"shape mismatch {original.pixels.shape} vs {reconstructed.pixels.shape}"
        )
    diff = original.pixels.astype(np.float64) - reconstructed.pixels.astype(np.float64)
    mse = float(np.mean(diff**2))
    psnr = math.inf if mse == 0 else 10.0 * math.log10(255.0**2 / mse)
    return {"mse": mse, "psnr": psnr}


def distance_preservation(
    originals, disguised, key: RmtKey, max_pairs: int = 200, seed: int = 0
) -> float:
    """Worst relative change in block-column distances caused by disguising.

    Samples image pairs (all of them when few), aligns blocks with the key's
    permutation, and compares Euclidean norms of corresponding block-column
    differences before and after. Orthogonal keys without noise keep this at
    floating-point level.
    """
    if not isinstance(key, RmtKey):
        raise MechanismError("distance preservation is defined for projection keys")
    originals = list(originals)
    disguised = list(disguised)
    if len(originals) != len(disguised):
        raise DimensionError("originals and disguised sets must have equal size")
    n = len(originals)
    all_pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    if len(all_pairs) > max_pairs:
        rng = seeded_rng(seed)
        sampled = rng.choice(len(all_pairs), size=max_pairs, replace=False)
        all_pairs = [all_pairs[int(i)] for i in sampled]

    def block_cols(image, permuted):
        grid = partition(image, key.t)
        if permuted:
            grid = permute(grid, key.permutation)
        t, c, r, s = grid.blocks.shape
        return grid.blocks.astype(np.float64).transpose(0, 1, 3, 2).reshape(t * c * s, r)

    x_cols = [block_cols(img, permuted=True) for img in originals]
    y_cols = [block_cols(img, permuted=False) for img in disguised]
    worst = 0.0
    for a, b in all_pairs:
        dx = np.linalg.norm(x_cols[a] - x_cols[b], axis=1)
        dy = np.linalg.norm(y_cols[a] - y_cols[b], axis=1)
        deviation = np.abs(dy - dx) / np.maximum(dx, 1e-12)
        worst = max(worst, float(deviation.max()))
    return worst


def _flatten(images) -> tuple[np.ndarray, np.ndarray]:
    data = np.stack([img.pixels.astype(np.float64).ravel() for img in images])
    labels = np.asarray([img.label for img in images])
    return data, labels


def _squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # ||x - y||^2 = ||x||^2 + ||y||^2 - 2 x.y, clipped against rounding
    aa = np.sum(a**2, axis=1)[:, np.newaxis]
    bb = np.sum(b**2, axis=1)[np.newaxis, :]
    return np.maximum(aa + bb - 2.0 * (a @ b.T), 0.0)


def knn_examiner(train, evaluation, k: int = 5) -> float:
    """Accuracy of a k-NN majority vote in raw pixel space.

    Vote ties fall back to the label of the closest neighbour. This is the
    desk-scale stand-in for a model trained on the original data and used to
    re-identify reconstructed images.
    """
    train = list(train)
    evaluation = list(evaluation)
    if not train:
        raise ConfigError("examiner needs a non-empty training set")
    train_px, train_y = _flatten(train)
    eval_px, eval_y = _flatten(evaluation)
    k = min(k, len(train))
    dists = _squared_distances(eval_px, train_px)
    correct = 0
    for row, truth in zip(dists, eval_y):
        nearest = np.argpartition(row, k - 1)[:k]
        nearest = nearest[np.argsort(row[nearest], kind="stable")]
        votes: dict[int, int] = {}
        for idx in nearest:
            votes[int(train_y[idx])] = votes.get(int(train_y[idx]), 0) + 1
        top = max(votes.values())
        winners = [label for label, n in votes.items() if n == top]
        pred = winners[0] if len(winners) == 1 else int(train_y[nearest[0]])
        correct += int(pred == int(truth))
    return correct / len(evaluation) if evaluation else 0.0


def nearest_neighbor_indices(images) -> np.ndarray:
    """Index of each image's nearest other image in pixel space."""
    data, _ = _flatten(images)
    dists = _squared_distances(data, data)
    np.fill_diagonal(dists, np.inf)
    return np.argmin(dists, axis=1)


def attack_success_rate(acc_on_reconstructed: float, acc_on_original: float) -> float:
    """Examiner accuracy on reconstructions relative to originals, x100."""
    if acc_on_original <= 0:
        raise ConfigError("undefined baseline: examiner accuracy on originals is zero")
    return 100.0 * acc_on_reconstructed / acc_on_original


def utility_gap(acc_disguised_model: float, acc_baseline_model: float) -> float:
    """Absolute model-quality degradation |acc_baseline - acc_disguised|."""
    for name, value in (("disguised", acc_disguised_model), ("baseline", acc_baseline_model)):
        if not 0.0 <= value <= 1.0:
            raise ConfigError(f"{name} accuracy must be in [0, 1]")
    return abs(acc_baseline_model - acc_disguised_model)


METRICS_CSV_COLUMNS = ["metric", "mechanism", "params", "seed", "value"]


def write_metrics_csv(path, rows):
    """Write metric rows with the fixed column order."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRICS_CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in METRICS_CSV_COLUMNS})
