"""Command-line surface: key lifecycle, disguising, attacks, metrics, reports.

Subcommands: keygen, disguise, recover, attack codebook|regress, eval,
bench, bound, run. All flags are long-form. Exit code 0 on success, 2 on
usage errors (argparse), and 1 on runtime failures with one JSON error line
on stderr. The DISGUISE_SEED environment variable overrides any seed flag
or configured seed list.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .aes import decrypt_with_key, disguise_aes, downscaled_view, keygen_aes
from .attacks import (
    AesAttackParams,
    KnownPair,
    RmtAttackParams,
    attack_many,
    brute_force_bound,
    build_codebook,
    regression_attack,
    write_attack_csv,
)
from .core import ConfigError, DisguiseError, Image, MixupKey, derive_seed
from .dataset import load_dataset, load_dgds, save_dgds
from .experiment import bench_disguise, load_config, run_experiment
from .figures import render_report_figures
from .keyfile import key_fingerprint, mechanism_of, read_key, write_key
from .metrics import (
    attack_success_rate,
    distance_preservation,
    knn_examiner,
    reconstruction_error,
    utility_gap,
    write_metrics_csv,
)
from .mixup import mixup_disguise
from .rmt import disguise_rmt, keygen_rmt, recover_rmt


def _seed_from(args) -> int:
    override = os.environ.get("DISGUISE_SEED")
    return int(override) if override is not None else int(args.seed)


def _cmd_keygen(args) -> int:
    seed = _seed_from(args)
    dims = (args.dims[0], args.dims[1])
    if args.mechanism == "rmt":
        from .core import NoiseSpec

        key = keygen_rmt(
            seed, dims, channels=args.channels, t=args.t,
            noise_level=NoiseSpec(level=args.noise, per_image=not args.shared_noise),
            orthogonal=not args.non_orthogonal,
        )
    elif args.mechanism == "aes":
        key = keygen_aes(
            seed, dims, channels=args.channels, t=args.t,
            salt_pepper_p=args.p, scale_factor=args.scale,
        )
    else:
        key = MixupKey(k_mix=args.k_mix, master_seed=seed, channels=args.channels, image_dims=dims)
    write_key(args.out, key)
    print(f"wrote {args.mechanism} key {key_fingerprint(key)} to {args.out}")
    return 0


def _load_images(path, fmt):
    return load_dataset(path, fmt)


def _cmd_disguise(args) -> int:
    key = read_key(args.key)
    mechanism = mechanism_of(key)
    images = _load_images(args.input, args.format)
    if args.limit:
        images = images[: args.limit]
    if mechanism == "rmt":
        disguised = [disguise_rmt(img, key, image_id=i) for i, img in enumerate(images)]
        params = {"t": key.t, "noise": key.noise.level}
    elif mechanism == "aes":
        disguised = [disguise_aes(img, key, image_id=i) for i, img in enumerate(images)]
        params = {"k": key.scale_factor, "t": key.t, "p": key.salt_pepper_p}
    else:
        disguised = []
        for i, img in enumerate(images):
            mixed, _ = mixup_disguise(img, images, key.k_mix, seed=derive_seed(key.master_seed, i))
            disguised.append(mixed)
        params = {"k_mix": key.k_mix}
    save_dgds(args.out, disguised, mechanism=mechanism, params=params)
    if args.downscaled and mechanism == "aes" and key.scale_factor > 1:
        save_dgds(
            args.downscaled,
            [downscaled_view(img, key) for img in disguised],
            mechanism=mechanism,
            params=params,
        )
    print(f"disguised {len(disguised)} images -> {args.out}")
    return 0


def _cmd_recover(args) -> int:
    key = read_key(args.key)
    mechanism = mechanism_of(key)
    images, _ = load_dgds(args.input)
    if mechanism == "rmt":
        recovered = [recover_rmt(img, key) for img in images]
        if args.dtype == "byte":
            recovered = [
                Image(
                    np.clip(np.round(img.pixels), 0, 255).astype(np.uint8),
                    dtype="byte", label=img.label,
                )
                for img in recovered
            ]
    elif mechanism == "aes":
        recovered = [downscaled_view(decrypt_with_key(img, key), key) for img in images]
    else:
        raise ConfigError("mixup disguising has no keyed inverse")
    save_dgds(args.out, recovered, mechanism="plain")
    print(f"recovered {len(recovered)} images -> {args.out}")
    return 0


def _as_byte(image: Image) -> Image:
    if image.dtype == "byte":
        return image
    px = np.clip(np.round(image.pixels), 0, 255).astype(np.uint8)
    return Image(px, dtype="byte", label=image.label)


def _cmd_attack(args) -> int:
    key = read_key(args.key)
    mechanism = mechanism_of(key)
    originals = _load_images(args.pairs_original, args.original_format)
    disguised = load_dgds(args.pairs_disguised)[0]
    if len(originals) != len(disguised):
        raise ConfigError("pair files differ in length")
    n_pairs = args.pairs if args.pairs is not None else len(originals)
    if n_pairs > len(originals):
        raise ConfigError(f"--pairs {n_pairs} exceeds the {len(originals)} available pairs")
    pairs = [
        KnownPair(original=o, disguised=d, image_id=i)
        for i, (o, d) in enumerate(zip(originals[:n_pairs], disguised[:n_pairs]))
    ]
    targets = load_dgds(args.targets_disguised)[0]
    row = {"mechanism": mechanism, "pairs": n_pairs, "seed": key.master_seed}
    if args.attack_kind == "codebook":
        if mechanism != "aes":
            raise ConfigError("codebook attack applies to aes-disguised data")
        book = build_codebook(pairs, AesAttackParams.from_key(key))
        result = attack_many(targets, book, miss_fill=args.miss_fill)
        reconstructions = [downscaled_view(img, key) for img in result.reconstructed]
        row["noise"] = key.salt_pepper_p
        row["hit_rate"] = result.hit_rate
        print(f"hit_rate={result.hit_rate:.6f} over {len(targets)} targets "
              f"({len(book)} codebook entries)")
    else:
        if mechanism != "rmt":
            raise ConfigError("regression attack applies to rmt-disguised data")
        result = regression_attack(pairs, RmtAttackParams.from_key(key), targets)
        reconstructions = [_as_byte(img) for img in result.reconstructions]
        row["noise"] = key.noise.level
        print(f"estimated {len(result.matrices)} block matrices, "
              f"max rms residual {result.residuals.max():.4g}")
    if args.targets_original:
        target_truth = _load_images(args.targets_original, args.original_format)
        if len(target_truth) != len(targets):
            raise ConfigError("target files differ in length")
        errors = [
            reconstruction_error(o, r) for o, r in zip(target_truth, reconstructions)
        ]
        row["mse"] = sum(e["mse"] for e in errors) / len(errors)
        examiner_train = originals[: min(args.examiner_train, len(originals))]
        labeled = [
            Image(r.pixels, dtype=r.dtype, label=t.label)
            for r, t in zip(reconstructions, target_truth)
        ]
        acc_orig = knn_examiner(examiner_train, target_truth, k=args.knn_k)
        acc_recon = knn_examiner(examiner_train, labeled, k=args.knn_k)
        row["success_rate"] = attack_success_rate(acc_recon, acc_orig)
        print(f"mse={row['mse']:.4f} success_rate={row['success_rate']:.2f}% "
              f"(examiner {acc_recon:.3f}/{acc_orig:.3f})")
    if args.recon_out:
        save_dgds(args.recon_out, reconstructions, mechanism="plain")
    if args.out:
        write_attack_csv(args.out, [row])
        if args.figures:
            render_report_figures(args.out)
    return 0


def _cmd_eval(args) -> int:
    rows = []
    if args.metric == "reconstruction":
        a = load_dgds(args.original)[0]
        b = load_dgds(args.reconstructed)[0]
        if len(a) != len(b):
            raise ConfigError("datasets differ in length")
        errors = [reconstruction_error(x, _as_byte(y)) for x, y in zip(a, b)]
        mse = sum(e["mse"] for e in errors) / len(errors)
        rows.append({"metric": "mse", "mechanism": "", "params": "", "seed": "", "value": mse})
        print(f"mse={mse:.6f}")
    elif args.metric == "knn":
        train = load_dgds(args.train)[0]
        test = load_dgds(args.test)[0]
        acc = knn_examiner(train, test, k=args.knn_k)
        rows.append({"metric": "knn_accuracy", "mechanism": "", "params": f"k={args.knn_k}",
                     "seed": "", "value": acc})
        print(f"knn_accuracy={acc:.6f}")
    elif args.metric == "distance-preservation":
        key = read_key(args.key)
        originals = load_dgds(args.original)[0]
        disguised = load_dgds(args.disguised)[0]
        deviation = distance_preservation(originals, disguised, key)
        rows.append({"metric": "distance_deviation", "mechanism": "rmt",
                     "params": f"t={key.t}", "seed": key.master_seed, "value": deviation})
        print(f"distance_deviation={deviation:.3e}")
    elif args.metric == "success-rate":
        value = attack_success_rate(args.acc_reconstructed, args.acc_original)
        rows.append({"metric": "success_rate", "mechanism": "", "params": "", "seed": "",
                     "value": value})
        print(f"success_rate={value:.4f}")
    else:
        value = utility_gap(args.acc_disguised, args.acc_baseline)
        rows.append({"metric": "utility_gap", "mechanism": "", "params": "", "seed": "",
                     "value": value})
        print(f"utility_gap={value:.6f}")
    if args.out:
        write_metrics_csv(args.out, rows)
    return 0


def _cmd_bench(args) -> int:
    seed = _seed_from(args)
    dims = (args.dims[0], args.dims[1])
    rng_img = np.random.Generator(np.random.Philox(key=seed))
    px = rng_img.integers(0, 256, size=(args.channels, *dims)).astype(np.uint8)
    image = Image(px, dtype="byte", label=0)
    if args.mechanism == "rmt":
        key = keygen_rmt(seed, dims, channels=args.channels, t=args.t, noise_level=args.noise)
    else:
        key = keygen_aes(seed, dims, channels=args.channels, t=args.t,
                         salt_pepper_p=args.p, scale_factor=args.scale)
    ms = bench_disguise(args.mechanism, image, key, warmup=args.warmup, reps=args.reps)
    print(f"median_ms={ms:.4f}")
    return 0


def _cmd_bound(args) -> int:
    print(f"2^{brute_force_bound(args.h, args.m)}")
    return 0


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config["seeds"] = [args.seed]
    if args.output_csv:
        config["output_csv"] = args.output_csv
    if args.figures is not None:
        config["figures"] = args.figures
    report = run_experiment(config)
    out = config.get("output_csv", "report.csv")
    report.write_csv(out)
    print(f"wrote {len(report.rows)} rows -> {out}")
    if config.get("figures", True):
        for path in render_report_figures(out):
            print(f"wrote figure {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imgdisguise",
        description="Image disguising, known-pair attacks, and trade-off reports.",
    )
    parser.add_argument("--version", action="version", version=f"imgdisguise {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate and store a disguising key")
    p.add_argument("--mechanism", required=True, choices=["rmt", "aes", "mixup"])
    p.add_argument("--dims", nargs=2, type=int, required=True, metavar=("L", "M"))
    p.add_argument("--channels", type=int, default=1, choices=[1, 3])
    p.add_argument("--t", type=int, default=1, help="block count")
    p.add_argument("--noise", type=float, default=0.0, help="rmt noise level")
    p.add_argument("--shared-noise", action="store_true",
                   help="draw one noise matrix per block for the whole dataset")
    p.add_argument("--non-orthogonal", action="store_true",
                   help="use random invertible instead of orthogonal matrices")
    p.add_argument("--p", type=float, default=0.0, help="aes salt-pepper probability")
    p.add_argument("--scale", type=int, default=1, help="aes scale-up factor")
    p.add_argument("--k-mix", type=int, default=4, help="mixup component count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_keygen)

    p = sub.add_parser("disguise", help="disguise a dataset under a key")
    p.add_argument("--key", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--format", default="dgds", choices=["idx", "png_dir", "dgds"])
    p.add_argument("--limit", type=int, default=0, help="use only the first N images")
    p.add_argument("--out", required=True)
    p.add_argument("--downscaled", help="also write the training-size view (aes, k>1)")
    p.set_defaults(func=_cmd_disguise)

    p = sub.add_parser("recover", help="invert a disguised dataset with its key")
    p.add_argument("--key", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dtype", default="byte", choices=["byte", "real"],
                   help="rmt output rounding")
    p.set_defaults(func=_cmd_recover)

    p = sub.add_parser("attack", help="run a known-pair attack")
    kind = p.add_subparsers(dest="attack_kind", required=True)
    for name in ("codebook", "regress"):
        q = kind.add_parser(name)
        q.add_argument("--key", required=True,
                       help="key file; only its public layout reaches the attack")
        q.add_argument("--pairs-original", required=True)
        q.add_argument("--pairs-disguised", required=True)
        q.add_argument("--targets-disguised", required=True)
        q.add_argument("--targets-original")
        q.add_argument("--original-format", default="dgds", choices=["idx", "png_dir", "dgds"])
        q.add_argument("--pairs", type=int, help="known-pair count (default: all)")
        q.add_argument("--miss-fill", default="zero", choices=["zero", "mean"])
        q.add_argument("--knn-k", type=int, default=5)
        q.add_argument("--examiner-train", type=int, default=1000)
        q.add_argument("--recon-out", help="write reconstructions to this dgds file")
        q.add_argument("--out", help="attack report CSV")
        q.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True)
        q.set_defaults(func=_cmd_attack)

    p = sub.add_parser("eval", help="compute metrics over datasets")
    p.add_argument("--metric", required=True,
                   choices=["reconstruction", "knn", "distance-preservation",
                            "success-rate", "utility-gap"])
    p.add_argument("--original")
    p.add_argument("--reconstructed")
    p.add_argument("--disguised")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--key")
    p.add_argument("--knn-k", type=int, default=5)
    p.add_argument("--acc-reconstructed", type=float)
    p.add_argument("--acc-original", type=float)
    p.add_argument("--acc-disguised", type=float)
    p.add_argument("--acc-baseline", type=float)
    p.add_argument("--out", help="metrics CSV")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("bench", help="median per-image disguise time")
    p.add_argument("--mechanism", required=True, choices=["rmt", "aes"])
    p.add_argument("--dims", nargs=2, type=int, default=[32, 32], metavar=("L", "M"))
    p.add_argument("--channels", type=int, default=3, choices=[1, 3])
    p.add_argument("--t", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--p", type=float, default=0.0)
    p.add_argument("--scale", type=int, default=1)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("bound", help="brute-force search-space exponent")
    p.add_argument("--h", type=int, required=True, help="bits per value")
    p.add_argument("--m", type=int, required=True, help="matrix dimension")
    p.set_defaults(func=_cmd_bound)

    p = sub.add_parser("run", help="run a configured experiment sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override configured seeds")
    p.add_argument("--output-csv")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=None)
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DisguiseError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
