"""Command-line front end: train, sample, reconstruct, eval.

Dataset specs take one of three forms:

    bas:N       all distinct N x N bars-and-stripes patterns
                (with --count/--data-seed: that many drawn uniformly)
    idx:PATH    u8 images in IDX format, binarized at --threshold and
                flattened column-major (with --count/--data-seed: a
                random subset)
    file:PATH   text file of bit strings, '#' comments allowed

Masks for reconstruction are comma-separated 1-based inclusive site
ranges ("393-784" pins the right half of a 28x28 image).  Relative
output paths for *default* file names are placed under $UMPS_OUT_DIR
(default: current directory).  Exit codes: 0 success, 1 domain error,
2 usage error.
"""

import argparse
import os
import sys
from time import perf_counter

import numpy as np

from . import __version__
from .data import (
    BinaryDataset,
    bas_generate,
    binarize,
    flatten,
    is_bas_pattern,
    load_dataset_text,
    load_idx,
    load_model,
    samples_to_grid,
    save_model,
    write_pgm,
)
from .errors import UmpsError
from .mps import partition_function, random_init
from .sampling import SampleRequest, sample
from .train import TrainConfig, baseline_gd_fit, nll, umps_sd_fit

TRAINERS = {"umps-sd": umps_sd_fit, "baseline": baseline_gd_fit}


def positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def parse_mask(text, d):
    """1-based inclusive ranges -> sorted 0-based site list."""
    sites = set()
    if not text:
        return []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        lo, _, hi = part.partition("-")
        lo = int(lo)
        hi = int(hi) if hi else lo
        if not 1 <= lo <= hi <= d:
            raise ValueError(f"mask range {part!r} out of bounds 1..{d}")
        sites.update(range(lo - 1, hi))
    return sorted(sites)


def load_dataset(args):
    spec = args.data
    kind, _, arg = spec.partition(":")
    if kind == "bas" and arg:
        n = int(arg)
        if args.count is not None:
            return bas_generate(n, count=args.count, seed=args.data_seed)
        return bas_generate(n)
    if kind == "idx" and arg:
        images = load_idx(arg)
        if images.ndim != 3:
            raise ValueError(f"{arg} holds labels, not images")
        bits = np.stack([flatten(binarize(img, args.threshold)) for img in images])
        dataset = BinaryDataset(bits, source=spec)
        if args.count is not None:
            dataset = dataset.subset(args.count, seed=args.data_seed)
        return dataset
    if kind == "file" and arg:
        dataset = load_dataset_text(arg)
        if args.count is not None:
            dataset = dataset.subset(args.count, seed=args.data_seed)
        return dataset
    raise ValueError(f"unrecognized dataset spec {spec!r} (expected bas:N, idx:PATH or file:PATH)")


def out_path(name, explicit=None):
    if explicit is not None:
        return explicit
    return os.path.join(os.environ.get("UMPS_OUT_DIR", "."), name)


def header_lines(args, extra=()):
    echo = " ".join(f"{k}={v}" for k, v in sorted(vars(args).items()) if k != "func" and v is not None)
    return [f"umps {__version__}", f"config: {echo}", *extra]


def add_dataset_args(p):
    p.add_argument("--data", required=True, help="dataset spec: bas:N | idx:PATH | file:PATH")
    p.add_argument("--count", type=positive_int, help="subset / sample size for the dataset")
    p.add_argument("--data-seed", type=int, default=0, help="seed for dataset subsetting")
    p.add_argument("--threshold", type=float, default=0.5, help="binarization threshold for idx data")


def cmd_train(args):
    dataset = load_dataset(args)
    config = TrainConfig(
        r_max=args.r_max,
        theta=args.theta,
        l_max=args.l_max,
        omega=args.omega,
        seed=args.seed,
        log_every=args.log_every,
    )
    init = random_init(dataset.d, config.r_max, config.seed)
    t0 = perf_counter()
    model, trace = TRAINERS[args.trainer](init, dataset, config)
    elapsed = perf_counter() - t0
    model_path = out_path("model.umps", args.model_out)
    save_model(model, model_path)
    trace_path = out_path("trace.csv", args.trace_out)
    with open(trace_path, "w") as fh:
        trace.write_csv(fh, comments=header_lines(args, [f"seed: {args.seed}"]))
    last = trace.rows[-1]
    print(f"trained {args.trainer} on {dataset.source or args.data}: |T|={len(dataset)} d={dataset.d}")
    print(f"final nll: {last.nll:.6f}")
    print(f"elapsed_s: {elapsed:.3f}")
    print(f"r_mean: {last.r_mean:.4f}")
    print(f"r_max: {last.r_max}")
    print(f"z: {last.z:.9f}")
    print(f"model: {model_path}")
    print(f"trace: {trace_path}")
    return 0


def cmd_sample(args):
    model = load_model(args.model)
    req = SampleRequest(count=args.count or 1, seed=args.seed)
    bits = sample(model, req)
    path = out_path("samples.txt", args.out)
    with open(path, "w") as fh:
        for line in header_lines(args, [f"seed: {args.seed}"]):
            fh.write(f"# {line}\n")
        for row in bits:
            fh.write("".join(map(str, row)) + "\n")
    if args.pgm_out or (args.width and args.height):
        _write_grid(args, bits, model.d)
    if args.bas_check:
        n = int(round(model.d**0.5))
        if n * n != model.d:
            raise ValueError(f"--bas-check needs a square image, model length is {model.d}")
        valid = sum(is_bas_pattern(row, n) for row in bits)
        print(f"valid_bas: {valid}/{len(bits)}")
    print(f"samples: {path}")
    return 0


def _write_grid(args, bits, d):
    if not (args.width and args.height):
        raise ValueError("--pgm-out needs --width and --height")
    if args.width * args.height != d:
        raise ValueError(f"--width*--height = {args.width * args.height} != model length {d}")
    grid = samples_to_grid(bits, args.width, args.height)
    pgm_path = out_path("samples.pgm", args.pgm_out)
    write_pgm(pgm_path, grid, comments=header_lines(args))
    print(f"pgm: {pgm_path}")


def cmd_reconstruct(args):
    model = load_model(args.model)
    dataset = load_dataset(args)
    if dataset.d != model.d:
        raise ValueError(f"dataset length {dataset.d} != model length {model.d}")
    known_sites = parse_mask(args.mask, model.d)
    out = np.empty_like(dataset.bits)
    for i, row in enumerate(dataset.bits):
        seed = None if args.seed is None else args.seed + i
        req = SampleRequest(
            count=1, seed=seed, condition={s: int(row[s]) for s in known_sites}
        )
        out[i] = sample(model, req)[0]
    path = out_path("reconstructed.txt", args.out)
    with open(path, "w") as fh:
        for line in header_lines(args, [f"seed: {args.seed}", f"mask: {args.mask or '(empty)'}"]):
            fh.write(f"# {line}\n")
        for row in out:
            fh.write("".join(map(str, row)) + "\n")
    if args.pgm_out or (args.width and args.height):
        _write_grid(args, out, model.d)
    print(f"reconstructed: {path}")
    return 0


def cmd_eval(args):
    model = load_model(args.model)
    dataset = load_dataset(args)
    value = nll(model, dataset)
    z = partition_function(model)
    print(f"nll: {value:.9f}")
    print(f"z: {z:.9f}")
    print(f"bond_dims: {','.join(map(str, model.bond_dims))}")
    print(f"r_mean: {model.r_mean:.4f}")
    print(f"r_max: {model.r_max}")
    if args.sweep:
        sizes = [int(s) for s in args.sweep.split(",") if s.strip()]
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError(f"--sweep must list positive sizes, got {args.sweep!r}")
        path = out_path("nll_sweep.csv", args.sweep_out)
        with open(path, "w") as fh:
            for line in header_lines(args):
                fh.write(f"# {line}\n")
            fh.write("size,nll\n")
            for size in sizes:
                subset = dataset.subset(size, seed=args.data_seed)
                fh.write(f"{size},{nll(model, subset):.12g}\n")
        print(f"sweep: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="umps", description="unit-norm MPS generative modeling"
    )
    parser.add_argument("--version", action="version", version=f"umps {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model and write model + trace files")
    add_dataset_args(p)
    p.add_argument("--r-max", type=positive_int, default=8)
    p.add_argument("--theta", type=positive_float, default=0.01)
    p.add_argument("--l-max", type=positive_int, default=10)
    p.add_argument("--omega", type=positive_float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log-every", type=positive_int, default=1)
    p.add_argument("--trainer", choices=sorted(TRAINERS), default="umps-sd")
    p.add_argument("--model-out")
    p.add_argument("--trace-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", help="draw samples from a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=positive_int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--pgm-out")
    p.add_argument("--width", type=positive_int)
    p.add_argument("--height", type=positive_int)
    p.add_argument("--bas-check", action="store_true", help="report how many samples are valid bars/stripes")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("reconstruct", help="complete masked strings with a trained model")
    p.add_argument("--model", required=True)
    add_dataset_args(p)
    p.add_argument("--mask", default="", help="1-based inclusive ranges of GIVEN sites, e.g. 393-784")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--pgm-out")
    p.add_argument("--width", type=positive_int)
    p.add_argument("--height", type=positive_int)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="report NLL / Z / bond dimensions of a model")
    p.add_argument("--model", required=True)
    add_dataset_args(p)
    p.add_argument("--sweep", help="comma-separated |T| values for an NLL-vs-size CSV")
    p.add_argument("--sweep-out")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UmpsError, OSError, ValueError, FloatingPointError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
