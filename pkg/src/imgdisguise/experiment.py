"""Experiment orchestration: parameter sweeps, metrics, timing, CSV reports.

A JSON config describes one sweep: a mechanism, a dataset, parameter grids,
seeds, and optionally an attack to run in every cell. Validation is
fail-closed (unknown keys are errors) so a report can always be regenerated
from its config. Every CSV row carries the seed and a fingerprint of the
key used, which together are enough to recreate the run exactly.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median

import numpy as np

from .aes import disguise_aes, downscaled_view, keygen_aes
from .attacks import (
    AesAttackParams,
    KnownPair,
    RmtAttackParams,
    attack_many,
    build_codebook,
    regression_attack,
)
from .core import ConfigError, Image, MixupKey, TAG_EXPERIMENT, derive_seed, seeded_rng
from .dataset import load_dataset, synthetic_dataset
from .keyfile import key_fingerprint
from .metrics import (
    attack_success_rate,
    distance_preservation,
    knn_examiner,
    reconstruction_error,
    utility_gap,
)
from .mixup import mixup_disguise
from .rmt import disguise_rmt, keygen_rmt

__all__ = [
    "ExperimentReport",
    "load_config",
    "validate_config",
    "run_experiment",
    "bench_disguise",
    "REPORT_COLUMNS",
]

SCHEMA_VERSION = 1

REPORT_COLUMNS = [
    "mechanism",
    "dataset",
    "t",
    "noise",
    "p",
    "k",
    "k_mix",
    "pairs",
    "seed",
    "key_fingerprint",
    "hit_rate",
    "success_rate",
    "mse",
    "psnr",
    "acc_original",
    "acc_reconstructed",
    "acc_disguised",
    "utility_gap",
    "dist_deviation",
    "disguise_ms",
]

_TOP_KEYS = {
    "schema_version", "mechanism", "dataset", "grid", "attack",
    "eval", "seeds", "timing", "output_csv", "figures",
}
_DATASET_KEYS = {"format", "path", "kind", "count", "dims", "channels", "classes", "vocab"}
_GRID_KEYS = {"t", "noise", "p", "k", "k_mix", "pairs"}
_EVAL_KEYS = {"knn_k", "targets", "examiner_train"}


def load_config(path) -> dict:
    with open(path) as fh:
        try:
            config = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return validate_config(config)


def _check_keys(mapping: dict, allowed: set, where: str):
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def validate_config(config: dict) -> dict:
    _check_keys(config, _TOP_KEYS, "config")
    if config.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"config schema_version must be {SCHEMA_VERSION}")
    mechanism = config.get("mechanism")
    if mechanism not in ("rmt", "aes", "mixup"):
        raise ConfigError(f"mechanism must be rmt, aes, or mixup, got {mechanism!r}")
    dataset = config.get("dataset")
    if not isinstance(dataset, dict):
        raise ConfigError("dataset section is required")
    _check_keys(dataset, _DATASET_KEYS, "dataset")
    grid = config.get("grid", {})
    _check_keys(grid, _GRID_KEYS, "grid")
    for key, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"grid.{key} must be a non-empty list")
    attack = config.get("attack")
    if attack not in (None, "codebook", "regress"):
        raise ConfigError(f"attack must be codebook, regress, or null, got {attack!r}")
    if attack and "pairs" not in grid:
        raise ConfigError("attack sweeps need grid.pairs")
    _check_keys(config.get("eval", {}), _EVAL_KEYS, "eval")
    seeds = config.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds must be a non-empty list")
    override = os.environ.get("DISGUISE_SEED")
    if override is not None:
        seeds = [int(override)]
    normalized = dict(config)
    normalized["grid"] = dict(grid)
    normalized["seeds"] = seeds
    normalized["eval"] = {"knn_k": 5, "targets": 20, "examiner_train": 200, **config.get("eval", {})}
    normalized.setdefault("attack", None)
    normalized.setdefault("timing", False)
    normalized.setdefault("figures", True)
    return normalized


def _load_dataset_section(section: dict) -> list:
    fmt = section.get("format")
    if fmt == "synthetic":
        return synthetic_dataset(
            kind=section.get("kind", "blobs"),
            count=section.get("count", 100),
            dims=tuple(section.get("dims", (28, 28))),
            channels=section.get("channels", 1),
            classes=section.get("classes", 10),
            seed=7,  # fixed data seed; sweeps vary keys, not the dataset
            vocab=section.get("vocab", 48),
        )
    if fmt in ("idx", "png_dir", "dgds"):
        path = section.get("path")
        if not path:
            raise ConfigError(f"dataset format {fmt!r} requires a path")
        return load_dataset(path, fmt)
    raise ConfigError(f"unknown dataset format {fmt!r}")


@dataclass
class ExperimentReport:
    """Metric rows from one sweep, one row per grid cell per seed."""

    columns: list = field(default_factory=lambda: list(REPORT_COLUMNS))
    rows: list = field(default_factory=list)

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.columns)
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: _fmt(row.get(k)) for k in self.columns})
        return buf.getvalue()

    def write_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv_text())


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".12g")
    return value


def _disguise_all(mechanism, images, key, pool=None, id_offset=0):
    if mechanism == "rmt":
        return [disguise_rmt(img, key, image_id=id_offset + i) for i, img in enumerate(images)]
    if mechanism == "aes":
        return [disguise_aes(img, key, image_id=id_offset + i) for i, img in enumerate(images)]
    pool = pool if pool is not None else images
    out = []
    for i, img in enumerate(images):
        mixed, _ = mixup_disguise(
            img, pool, key.k_mix, seed=derive_seed(key.master_seed, id_offset + i)
        )
        out.append(mixed)
    return out


def _make_key(mechanism, master_seed, dims, channels, cell):
    if mechanism == "rmt":
        return keygen_rmt(
            master_seed, dims, channels=channels,
            t=cell.get("t", 1), noise_level=float(cell.get("noise", 0.0)),
        )
    if mechanism == "aes":
        return keygen_aes(
            master_seed, dims, channels=channels,
            t=cell.get("t", 1), salt_pepper_p=float(cell.get("p", 0.0)),
            scale_factor=int(cell.get("k", 1)),
        )
    return MixupKey(
        k_mix=int(cell.get("k_mix", 2)), master_seed=master_seed,
        channels=channels, image_dims=dims,
    )


def run_experiment(config: dict) -> ExperimentReport:
    """Execute the cross product of grid values and seeds, one row per cell."""
    config = validate_config(config)
    mechanism = config["mechanism"]
    images = _load_dataset_section(config["dataset"])
    dims, channels = images[0].dims, images[0].channels
    dataset_name = config["dataset"].get("path") or config["dataset"].get("kind", "synthetic")
    grid = config["grid"]
    grid_keys = sorted(grid)
    evaluation = config["eval"]
    report = ExperimentReport()
    cells = list(itertools.product(*(grid[k] for k in grid_keys))) or [()]
    for seed in config["seeds"]:
        for cell_index, values in enumerate(cells):
            cell = dict(zip(grid_keys, values))
            master = derive_seed(int(seed), TAG_EXPERIMENT, cell_index)
            key = _make_key(mechanism, master, dims, channels, cell)
            row = {
                "mechanism": mechanism,
                "dataset": dataset_name,
                "t": cell.get("t"),
                "noise": cell.get("noise"),
                "p": cell.get("p"),
                "k": cell.get("k"),
                "k_mix": cell.get("k_mix"),
                "pairs": cell.get("pairs"),
                "seed": seed,
                "key_fingerprint": key_fingerprint(key),
            }
            row.update(_run_cell(mechanism, images, key, cell, config, evaluation, master))
            report.rows.append(row)
    return report


def _run_cell(mechanism, images, key, cell, config, evaluation, master) -> dict:
    out: dict = {}
    rng = seeded_rng(derive_seed(master, 0x5EED))
    order = rng.permutation(len(images))
    n_targets = min(evaluation["targets"], max(1, len(images) // 5))
    target_idx = order[:n_targets]
    pool_idx = order[n_targets:]
    targets = [images[i] for i in target_idx]
    pool = [images[i] for i in pool_idx]

    target_offset = len(images)  # keep target noise streams disjoint from pool streams

    if config["attack"] is None:
        disguised_targets = _disguise_all(mechanism, targets, key, pool=pool, id_offset=target_offset)
        if mechanism == "rmt":
            out["dist_deviation"] = distance_preservation(targets, disguised_targets, key)
        n_train = min(evaluation["examiner_train"], len(pool))
        if n_train >= 1 and len(targets) >= 1:
            train_pool = pool[:n_train]
            acc_orig = knn_examiner(train_pool, targets, k=evaluation["knn_k"])
            disguised_pool = _disguise_all(mechanism, train_pool, key, pool=pool)
            acc_disg = knn_examiner(disguised_pool, disguised_targets, k=evaluation["knn_k"])
            out["acc_original"] = acc_orig
            out["acc_disguised"] = acc_disg
            out["utility_gap"] = utility_gap(acc_disg, acc_orig)
    else:
        n_pairs = int(cell.get("pairs", 0))
        if n_pairs > len(pool):
            raise ConfigError(f"grid.pairs={n_pairs} exceeds available pool of {len(pool)}")
        pair_sources = pool[:n_pairs]
        disguised_sources = _disguise_all(mechanism, pair_sources, key)
        pairs = [
            KnownPair(original=o, disguised=d, image_id=i)
            for i, (o, d) in enumerate(zip(pair_sources, disguised_sources))
        ]
        disguised_targets = _disguise_all(mechanism, targets, key, id_offset=target_offset)
        if config["attack"] == "codebook":
            if mechanism != "aes":
                raise ConfigError("codebook attack applies to the aes mechanism")
            book = build_codebook(pairs, AesAttackParams.from_key(key))
            result = attack_many(disguised_targets, book)
            out["hit_rate"] = result.hit_rate
            recon = [downscaled_view(img, key) for img in result.reconstructed]
        else:
            if mechanism != "rmt":
                raise ConfigError("regression attack applies to the rmt mechanism")
            result = regression_attack(pairs, RmtAttackParams.from_key(key), disguised_targets)
            recon = [_as_byte(img) for img in result.reconstructions]
        errors = [reconstruction_error(o, r) for o, r in zip(targets, recon)]
        out["mse"] = sum(e["mse"] for e in errors) / len(errors)
        finite = [e["psnr"] for e in errors if e["psnr"] != float("inf")]
        out["psnr"] = sum(finite) / len(finite) if finite else float("inf")
        n_train = min(evaluation["examiner_train"], len(pool))
        examiner_train = pool[:n_train]
        acc_orig = knn_examiner(examiner_train, targets, k=evaluation["knn_k"])
        recon_labeled = [
            Image(r.pixels, dtype=r.dtype, label=t.label) for r, t in zip(recon, targets)
        ]
        acc_recon = knn_examiner(examiner_train, recon_labeled, k=evaluation["knn_k"])
        out["acc_original"] = acc_orig
        out["acc_reconstructed"] = acc_recon
        if acc_orig > 0:
            out["success_rate"] = attack_success_rate(acc_recon, acc_orig)

    if config["timing"]:
        out["disguise_ms"] = bench_disguise(mechanism, images[0], key)
    return out


def _as_byte(image):
    """Clamp a real-valued reconstruction onto the byte scale for scoring."""
    if image.dtype == "byte":
        return image
    px = np.clip(np.round(image.pixels), 0, 255).astype(np.uint8)
    return Image(px, dtype="byte", label=image.label)


def bench_disguise(mechanism, image, key, warmup: int = 10, reps: int = 100) -> float:
    """Median per-image disguise time in milliseconds.

    Runs sequentially on one worker: ``warmup`` untimed iterations followed
    by at least ``reps`` timed ones.
    """
    if mechanism == "rmt":
        call = lambda i: disguise_rmt(image, key, image_id=i)
    elif mechanism == "aes":
        call = lambda i: disguise_aes(image, key, image_id=i)
    else:
        raise ConfigError(f"no benchmark for mechanism {mechanism!r}")
    for i in range(warmup):
        call(i)
    samples = []
    for i in range(max(reps, 100)):
        start = time.perf_counter()
        call(i)
        samples.append((time.perf_counter() - start) * 1000.0)
    return median(samples)
