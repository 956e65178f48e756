"""``dgfilter`` command line: synth, train, deblur, eval, config.

Exit codes: 0 ok, 2 usage, 3 empty dataset, 4 training abort,
5 checkpoint mismatch, 6 eval pairing failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__, imageio, metrics
from .blur import EmptyDatasetError, make_dataset, thread_count
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, RunConfig

EXIT_OK, EXIT_USAGE, EXIT_EMPTY, EXIT_ABORT, EXIT_CHECKPOINT, EXIT_PAIRING = 0, 2, 3, 4, 5, 6

log = logging.getLogger("dgfilter")


class UsageError(Exception):
    pass


def _load_run(path) -> RunConfig:
    return RunConfig.load(path) if path else RunConfig()


# -- synth ------------------------------------------------------------------

def cmd_synth(args) -> int:
    run = _load_run(args.config)
    try:
        manifest = make_dataset(args.src, args.out, args.count, args.size, run.blur, args.seed,
                                workers=args.workers)
    except EmptyDatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    path = Path(args.out) / "manifest.json"
    print(f"{path}: {manifest['count']} pair(s) of {args.size}x{args.size}, seed {args.seed}")
    return EXIT_OK


# -- train ------------------------------------------------------------------

_TRAIN_OVERRIDES = {  # flag dest -> (section, field)
    "chr": ("generator", "chr"), "num_blocks": ("generator", "num_blocks"),
    "variant": ("generator", "variant"), "dropout": ("generator", "dropout_rate"),
    "iterations": ("train", "iterations"), "seed": ("train", "seed"),
    "batch_size": ("train", "batch_size"), "lr": ("train", "lr"),
    "k1": ("train", "k1"), "k2": ("train", "k2"), "gan_weight": ("train", "gan_weight"),
    "extractor": ("train", "extractor"), "extractor_path": ("train", "extractor_path"),
    "checkpoint_every": ("train", "checkpoint_every"), "eval_every": ("train", "eval_every"),
    "sgd_after": ("train", "sgd_after"), "data": ("train", "data"),
}


def cmd_train(args) -> int:
    from .checkpoint import ShapeMismatchError
    from .trainer import TrainingAborted, train_loop

    doc = _load_run(args.config).to_dict()
    for dest, (section, key) in _TRAIN_OVERRIDES.items():
        value = getattr(args, dest, None)
        if value is not None:
            doc[section][key] = value
    run = RunConfig.from_dict(doc)
    if not run.train.data:
        raise UsageError("train needs --data or train.data in the config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.json").write_text(run.to_json())
    log_path = Path(args.log) if args.log else out / "train.ndjson"
    try:
        trainer = train_loop(run, out, log_path, args.resume)
    except TrainingAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"diagnostic: {exc.diagnostic_path}", file=sys.stderr)
        return EXIT_ABORT
    except (ShapeMismatchError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if "non-empty" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_EMPTY
        raise
    print(f"trained to iteration {trainer.iteration}; checkpoints in {out}, log {log_path}")
    return EXIT_OK


# -- deblur -----------------------------------------------------------------

def cmd_deblur(args) -> int:
    from .trainer import generator_from_checkpoint

    try:
        gen = generator_from_checkpoint(load_checkpoint(args.ckpt))
    except (CheckpointError, ValueError, TypeError) as exc:
        print(f"error: {args.ckpt}: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    src = Path(args.input)
    if src.is_dir():
        inputs = imageio.list_images(src)
        out_dir = Path(args.out)
        targets = [out_dir / (p.stem + ".png") for p in inputs]
    else:
        inputs, targets = [src], [Path(args.out)]

    def job(pair):
        inp, target = pair
        x = imageio.bytes_to_unit(imageio.read_rgb(inp))[None]
        start = time.perf_counter()
        y = gen.infer(x)[0]
        elapsed = time.perf_counter() - start
        imageio.write_png(target, imageio.unit_to_bytes(y))
        return inp, target, elapsed

    try:
        with ThreadPoolExecutor(min(thread_count(), max(len(inputs), 1))) as pool:
            for inp, target, elapsed in pool.map(job, zip(inputs, targets)):
                print(f"{inp} -> {target}: {elapsed:.3f} s")
    except ValueError as exc:  # e.g. image smaller than the receptive field
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


# -- eval -------------------------------------------------------------------

def cmd_eval(args) -> int:
    pred = {p.name: p for p in imageio.list_images(args.pred)}
    ref = {p.name: p for p in imageio.list_images(args.ref)}
    unpaired = sorted(set(pred) ^ set(ref))
    if unpaired:
        for name in unpaired:
            side = "pred" if name in pred else "ref"
            print(f"unpaired ({side} only): {name}", file=sys.stderr)
        return EXIT_PAIRING
    names = sorted(pred)
    if not names:
        print("error: no images to evaluate", file=sys.stderr)
        return EXIT_PAIRING
    wanted = args.metrics.split(",") if args.metrics else _load_run(args.config).metrics.enabled()
    bad = [m for m in wanted if m not in metrics.METRICS]
    if bad:
        raise UsageError(f"unknown metric(s) {bad}; choose from {list(metrics.METRICS)}")

    def job(name):
        a, b = imageio.read_rgb(pred[name]), imageio.read_rgb(ref[name])
        if a.shape != b.shape:
            return name, None, f"{a.shape[1]}x{a.shape[0]} vs {b.shape[1]}x{b.shape[0]}"
        return name, metrics.evaluate_pair(a, b, wanted), None

    with ThreadPoolExecutor(thread_count()) as pool:
        results = list(pool.map(job, names))
    mismatched = [(n, why) for n, _, why in results if why]
    if mismatched:
        for n, why in mismatched:
            print(f"size mismatch: {n} ({why})", file=sys.stderr)
        return EXIT_PAIRING
    report = metrics.MetricReport()
    for name, scores, _ in results:
        report.add(name, scores)
    doc = json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(doc)
    else:
        sys.stdout.write(doc)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    summary = ", ".join(f"{m} {metrics._jsonable(report.mean(m))}" for m in wanted)
    print(f"{report.count} image(s): {summary}", file=sys.stderr)
    return EXIT_OK


# -- config -----------------------------------------------------------------

def cmd_config(args) -> int:
    if args.emit_defaults:
        sys.stdout.write(RunConfig().to_json())
        return EXIT_OK
    if args.check:
        run = RunConfig.load(args.check)
        sys.stdout.write(run.to_json())
        return EXIT_OK
    raise UsageError("config needs --emit-defaults or --check FILE")


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgfilter", description="Dense-generator blind motion deblurring.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="synthesize blurred/sharp training pairs")
    s.add_argument("--src", required=True, help="directory of sharp source images")
    s.add_argument("--out", required=True, help="dataset directory to write")
    s.add_argument("--count", type=int, required=True, help="number of pairs")
    s.add_argument("--size", type=int, default=64, help="crop side in pixels (default 64)")
    s.add_argument("--seed", type=int, default=0, help="dataset seed (default 0)")
    s.add_argument("--config", help="run config JSON; its blur section is used")
    s.add_argument("--workers", type=int, help="worker threads (default DGF_THREADS or 1)")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train generator and discriminator")
    t.add_argument("--config", help="run config JSON (defaults otherwise)")
    t.add_argument("--data", help="dataset directory written by synth")
    t.add_argument("--out", required=True, help="checkpoint directory")
    t.add_argument("--log", help="NDJSON log path (default OUT/train.ndjson)")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--iterations", type=int, help="total iterations to reach")
    t.add_argument("--seed", type=int, help="training seed")
    t.add_argument("--batch-size", type=int, help="pairs per iteration")
    t.add_argument("--lr", type=float, help="learning rate")
    t.add_argument("--k1", type=float, help="perceptual weight")
    t.add_argument("--k2", type=float, help="l1 weight")
    t.add_argument("--gan-weight", type=float, help="adversarial weight (0 disables the discriminator)")
    t.add_argument("--extractor", choices=["identity", "random", "external"], help="perceptual features")
    t.add_argument("--extractor-path", help="checkpoint with extractor.layer* weights")
    t.add_argument("--chr", type=int, help="channel rate")
    t.add_argument("--num-blocks", type=int, help="dense blocks (even)")
    t.add_argument("--variant", choices=["dense", "variant_a", "variant_b"], help="generator layout")
    t.add_argument("--dropout", type=float, help="dropout rate in the dense field")
    t.add_argument("--checkpoint-every", type=int, help="checkpoint cadence in iterations (0: end only)")
    t.add_argument("--eval-every", type=int, help="train-set PSNR cadence (0: never)")
    t.add_argument("--sgd-after", type=int, help="switch to plain SGD from this iteration")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("deblur", help="run a trained generator on PNG images")
    d.add_argument("--ckpt", required=True, help="checkpoint file")
    d.add_argument("--in", dest="input", required=True, help="PNG file or directory")
    d.add_argument("--out", required=True, help="output PNG (file input) or directory")
    d.set_defaults(func=cmd_deblur)

    e = sub.add_parser("eval", help="score predictions against references (paired by filename)")
    e.add_argument("--pred", required=True, help="directory of predicted images")
    e.add_argument("--ref", required=True, help="directory of reference images")
    e.add_argument("--out", help="JSON report path (stdout if omitted)")
    e.add_argument("--csv", help="optional CSV report path")
    e.add_argument("--metrics", help="comma list from psnr,ssim,ms_ssim,uiqi (default: config toggles)")
    e.add_argument("--config", help="run config JSON; its metrics section picks the defaults")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("config", help="print or validate run configuration")
    c.add_argument("--emit-defaults", action="store_true", help="print the default run config")
    c.add_argument("--check", metavar="FILE", help="validate FILE and print it with defaults filled in")
    c.set_defaults(func=cmd_config)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
