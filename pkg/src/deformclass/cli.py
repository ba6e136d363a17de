"""Command-line interface.

Subcommands: ``gen`` writes a synthetic dataset to disk, ``align`` classifies
a query image against a dataset directory, ``cnn`` builds/trains/applies the
convolutional classifiers, ``sep`` reports separation and boundary-regularity
estimates for two templates, ``bench`` runs a full experiment from a config
file.  Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .align import align_transform, build_gallery, classify_1nn, classify_1nn_flips
from .cnn import build_filter_bank, classify_bank
from .datagen import DeformDistribution, generate_dataset
from .errors import ConfigError, DataError, DeformClassError, NumericError
from .geometry import gamma_scan, trace_boundary
from .harness import (emit_report, parse_config, parse_template_spec,
                      run_experiment)
from .io import read_dataset, read_pgm, write_dataset, write_pgm
from .model import IDENTITY, normalize_l2, rasterize
from .separation import SearchConfig, estimate_separation
from .train import (ArchSpec, OptSpec, load_checkpoint, save_checkpoint,
                    train_least_squares)


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return float(parts[0]), float(parts[1])


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deformclass",
        description="Deformation-model image classification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a dataset directory")
    gen.add_argument("--template0", required=True, help="e.g. tent:delta=0.25")
    gen.add_argument("--template1", required=True, help="e.g. cross:arm=0.0625")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=64)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--eta-range", type=_pair, default=(1.0, 1.0))
    gen.add_argument("--xi-range", type=_pair, default=(1.0, 1.0))
    gen.add_argument("--xi-prime-range", type=_pair, default=None)
    gen.add_argument("--flip-prob", type=float, default=0.0)
    gen.add_argument("--out", required=True)

    al = sub.add_parser("align", help="1-NN classify a query against a dataset")
    al.add_argument("--gallery", required=True, help="dataset directory")
    al.add_argument("--query", required=True, help="PGM file")
    al.add_argument("--m", type=int, default=None, help="resampling resolution")
    al.add_argument("--flips", action="store_true", help="search axis reversals")

    cnn = sub.add_parser("cnn", help="convolutional classifiers")
    cnn_sub = cnn.add_subparsers(dest="cnn_command", required=True)

    bank = cnn_sub.add_parser("bank", help="classify with the explicit filter bank")
    bank.add_argument("--template0", required=True)
    bank.add_argument("--template1", required=True)
    bank.add_argument("--image", required=True, help="PGM file")
    bank.add_argument("--d", type=int, default=64)
    bank.add_argument("--xi-max", type=int, default=2)
    bank.add_argument("--beta", type=float, default=None)

    tr = cnn_sub.add_parser("train", help="train the small CNN on a dataset")
    tr.add_argument("--data", required=True, help="dataset directory")
    tr.add_argument("--out", required=True, help="checkpoint file")
    tr.add_argument("--epochs", type=int, default=20)
    tr.add_argument("--batch-size", type=int, default=16)
    tr.add_argument("--learning-rate", type=float, default=0.01)
    tr.add_argument("--n-filters", type=int, default=28)
    tr.add_argument("--filter-size", type=int, default=3)
    tr.add_argument("--beta", type=float, default=1.0)
    tr.add_argument("--seed", type=int, default=0)

    cl = cnn_sub.add_parser("classify", help="classify an image with a checkpoint")
    cl.add_argument("--checkpoint", required=True)
    cl.add_argument("--image", required=True, help="PGM file")

    sep = sub.add_parser("sep", help="separation and boundary regularity")
    sep.add_argument("--template0", required=True)
    sep.add_argument("--template1", required=True)
    sep.add_argument("--xi-max", type=float, default=2.0)
    sep.add_argument("--step", type=float, default=0.05)
    sep.add_argument("--refine-iters", type=int, default=12)
    sep.add_argument("--positive-scales", action="store_true",
                     help="skip axis-reversing candidates")
    sep.add_argument("--gamma-d", type=int, default=256,
                     help="raster resolution for the boundary scan")
    sep.add_argument("--gamma-budget", type=int, default=256)

    bench = sub.add_parser("bench", help="run an experiment from a config file")
    bench.add_argument("--config", required=True)
    bench.add_argument("--out", default=None, help="raw CSV path (default stdout)")
    bench.add_argument("--aggregate-out", default=None)
    bench.add_argument("--pretty", action="store_true",
                       help="print aligned tables instead of CSV")
    return parser


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}")


def _load_query(path: str):
    return read_pgm(_read_bytes(path))


def _cmd_gen(args) -> int:
    f0 = parse_template_spec(args.template0)
    f1 = parse_template_spec(args.template1)
    q = DeformDistribution(eta_range=args.eta_range, xi_range=args.xi_range,
                           xi_prime_range=args.xi_prime_range,
                           flip_prob=args.flip_prob, seed=args.seed)
    data = generate_dataset((f0,), (f1,), q, args.n, args.d)
    manifest = write_dataset(data, args.out)
    print(f"wrote {len(data)} images to {manifest.parent}")
    return 0


def _cmd_align(args) -> int:
    data = read_dataset(args.gallery)
    gallery = build_gallery([it.image for it in data.items],
                            [it.label for it in data.items], m=args.m)
    query = _load_query(args.query)
    if args.flips:
        label, index, dist, orientation = classify_1nn_flips(gallery, query, m=args.m)
        print(f"label={label} neighbor={index} distance={dist:.6f} "
              f"orientation={orientation}")
    else:
        label, index, dist = classify_1nn(gallery, align_transform(query, m=args.m))
        print(f"label={label} neighbor={index} distance={dist:.6f}")
    return 0


def _cmd_cnn(args) -> int:
    if args.cnn_command == "bank":
        f0 = parse_template_spec(args.template0)
        f1 = parse_template_spec(args.template1)
        img = _load_query(args.image)
        bank = build_filter_bank(f0, f1, args.xi_max, args.d)
        decision = classify_bank(bank, normalize_l2(img), beta=args.beta)
        print(f"label={decision.label} p0={decision.p0:.6f} p1={decision.p1:.6f} "
              f"z0={decision.z0:.6f} z1={decision.z1:.6f}")
        return 0
    if args.cnn_command == "train":
        data = read_dataset(args.data)
        items = tuple(replace(it, image=normalize_l2(it.image))
                      for it in data.items)
        data = replace(data, items=items)
        arch = ArchSpec(n_filters=args.n_filters, filter_size=args.filter_size,
                        beta=args.beta)
        opt = OptSpec(learning_rate=args.learning_rate, epochs=args.epochs,
                      batch_size=args.batch_size, seed=args.seed)
        net = train_least_squares(data, arch, opt)
        Path(args.out).write_bytes(save_checkpoint(net))
        print(f"final epoch loss {net.loss_history[-1]:.6f}; "
              f"checkpoint at {args.out}")
        return 0
    net = load_checkpoint(_read_bytes(args.checkpoint))
    img = normalize_l2(_load_query(args.image))
    p0, p1 = net.forward(img)
    print(f"label={int(p1 > 0.5)} p0={p0:.6f} p1={p1:.6f}")
    return 0


def _cmd_sep(args) -> int:
    f0 = parse_template_spec(args.template0)
    f1 = parse_template_spec(args.template1)
    cfg = SearchConfig(xi_max=args.xi_max, coarse_step=args.step,
                       refine_iters=args.refine_iters,
                       include_flips=not args.positive_scales)
    result = estimate_separation(f0, f1, cfg)
    print(f"separation: d_fg={result.d_fg:.6f} d_gf={result.d_gf:.6f} "
          f"D={result.d_max:.6f}")
    for name, f in (("template0", f0), ("template1", f1)):
        img = rasterize(f, IDENTITY, args.gamma_d)
        curve = trace_boundary(img.support_mask())
        scan = gamma_scan(curve, sample_budget=args.gamma_budget)
        print(f"{name}: gamma~{scan.estimate:.4f} "
              f"(boundary points {len(curve.points)}, "
              f"scan points {scan.points_used})")
    return 0


def _cmd_bench(args) -> int:
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}")
    cfg = parse_config(text)
    report = run_experiment(cfg)
    fmt = "pretty" if args.pretty else "csv"
    raw = emit_report(report, fmt=fmt, view="raw")
    if args.out:
        Path(args.out).write_bytes(raw)
        print(f"raw rows at {args.out}")
    else:
        sys.stdout.write(raw.decode("utf-8"))
    agg = emit_report(report, fmt=fmt, view="aggregate")
    if args.aggregate_out:
        Path(args.aggregate_out).write_bytes(agg)
        print(f"aggregates at {args.aggregate_out}")
    else:
        sys.stdout.write(agg.decode("utf-8"))
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"gen": _cmd_gen, "align": _cmd_align, "cnn": _cmd_cnn,
                "sep": _cmd_sep, "bench": _cmd_bench}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except DeformClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
