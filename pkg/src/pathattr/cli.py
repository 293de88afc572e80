"""Command-line driver.

Subcommands: make-toy, saliency, bench, sweep, stability, render.
Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .attribution import idgi_attribution, riemann_attribution, save_attribution
from .bench import (
    BenchmarkConfig,
    config_from_mapping,
    make_toy_suite,
    read_config_file,
    render_saliency,
    run_benchmark,
    run_stability,
    sweep_steps,
)
from .errors import BenchmarkError, InvalidArgumentError, ParseError
from .image import read_pnm
from .methods import METHOD_TAGS, build_path, parse_method
from .models import load_model


def _comma_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _bench_config(args) -> BenchmarkConfig:
    values: dict = {}
    if args.config:
        values.update(read_config_file(args.config))
    if args.manifest:
        values["manifest"] = args.manifest
    if args.model:
        values["models"] = args.model
    if args.out:
        values["out"] = args.out
    if args.methods:
        values["methods"] = _comma_list(args.methods)
    if args.metrics:
        values["metrics"] = _comma_list(args.metrics)
    if args.steps:
        values["steps"] = _comma_list(args.steps)
    for key in ("seed", "workers", "quality"):
        value = getattr(args, key, None)
        if value is not None:
            values[key] = value
    return config_from_mapping(values)


def _add_bench_flags(sub, steps_default=False):
    sub.add_argument("--config", help="flat key=value config file; flags override it")
    sub.add_argument("--manifest", help="dataset manifest (path,label per line)")
    sub.add_argument("--model", action="append", help="model file; repeatable")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--methods", help="comma list, e.g. IG,IG+IDGI,BlurIG")
    sub.add_argument("--metrics", help="comma list, e.g. insertion-prob,sic-msssim")
    sub.add_argument("--steps", help="comma list of step counts, e.g. 8,16,32,64,128")
    sub.add_argument("--seed", type=int, default=None)
    sub.add_argument("--workers", type=int, default=None)
    sub.add_argument("--quality", type=int, default=None, help="compression quality 1..100")


def cmd_make_toy(args) -> int:
    suite = make_toy_suite(seed=args.seed, out_dir=args.out, train_count=args.train_count,
                           test_count=args.test_count, epochs=args.epochs,
                           learning_rate=args.learning_rate)
    print(f"wrote {suite.manifest.parent}: train accuracy {suite.train_accuracy:.3f}, "
          f"test accuracy {suite.test_accuracy:.3f}")
    return 0


def cmd_saliency(args) -> int:
    model = load_model(args.model)
    img = read_pnm(args.image)
    c = args.class_index
    if c is None:
        c = int(model.predict(img).argmax())
    spec = parse_method(args.method)
    path = build_path(spec, model, c, img, args.steps)
    attr = idgi_attribution(model, c, path) if spec.use_idgi else riemann_attribution(model, c, path)
    save_attribution(attr, args.out)
    if args.render:
        render_saliency(args.out, args.render)
    print(f"{spec.tag} attribution for class {c}: sum {attr.total():.6g}, "
          f"f. {attr.f_start:.6g} -> {attr.f_end:.6g}")
    return 0


def cmd_bench(args) -> int:
    rows = run_benchmark(_bench_config(args))
    print(f"wrote {len(rows)} result rows")
    return 0


def cmd_sweep(args) -> int:
    rows, deltas = sweep_steps(_bench_config(args))
    print(f"wrote {len(rows)} result rows and {len(deltas)} deltas")
    return 0


def cmd_stability(args) -> int:
    config = _bench_config(args)
    reports = run_stability(config, steps=args.attr_steps)
    for report in reports:
        print(f"{report.method}: median -log MSE {report.median_neg_log_mse:.3f}")
    return 0


def cmd_render(args) -> int:
    render_saliency(args.attr, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathattr",
                                     description="path-based gradient attribution toolkit")
    subs = parser.add_subparsers(dest="command", required=True)

    toy = subs.add_parser("make-toy", help="generate the toy dataset and train its model")
    toy.add_argument("--out", required=True)
    toy.add_argument("--seed", type=int, default=0)
    toy.add_argument("--train-count", type=int, default=300)
    toy.add_argument("--test-count", type=int, default=100)
    toy.add_argument("--epochs", type=int, default=150)
    toy.add_argument("--learning-rate", type=float, default=0.2)
    toy.set_defaults(func=cmd_make_toy)

    sal = subs.add_parser("saliency", help="compute one attribution map")
    sal.add_argument("--model", required=True)
    sal.add_argument("--image", required=True, help="PGM/PPM input")
    sal.add_argument("--method", required=True, help=f"one of {', '.join(METHOD_TAGS)}")
    sal.add_argument("--steps", type=int, default=32)
    sal.add_argument("--class-index", type=int, default=None,
                     help="target class; defaults to the model's prediction")
    sal.add_argument("--out", required=True, help="attribution file to write")
    sal.add_argument("--render", help="also write a PGM rendering here")
    sal.set_defaults(func=cmd_saliency)

    bench = subs.add_parser("bench", help="run the benchmark grid")
    _add_bench_flags(bench)
    bench.set_defaults(func=cmd_bench)

    sweep = subs.add_parser("sweep", help="step-size sweep with a delta table")
    _add_bench_flags(sweep)
    sweep.set_defaults(func=cmd_sweep)

    stab = subs.add_parser("stability", help="compression-stability experiment")
    _add_bench_flags(stab)
    stab.add_argument("--attr-steps", type=int, default=32,
                      help="path steps used for each attribution")
    stab.set_defaults(func=cmd_stability)

    render = subs.add_parser("render", help="render an attribution file to PGM")
    render.add_argument("--attr", required=True)
    render.add_argument("--out", required=True)
    render.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exit_:  # argparse exits with 2 on usage errors
        code = exit_.code
        return 0 if code in (0, None) else 1
    try:
        return args.func(args)
    except (InvalidArgumentError, ParseError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except BenchmarkError as err:
        print(f"run error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"runtime error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
