"""``gunsr`` command line: train, sr, eval, schedule, flops, curriculum-stats.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""
import argparse
import contextlib
import logging
import os
import sys

from threadpoolctl import threadpool_limits

from . import config as config_mod
from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError
from .data import DataError, curriculum_table, read_png, write_png
from .metrics import write_reports_csv
from .network import flops_estimate, resolution_schedule
from .training import NumericError

log = logging.getLogger("gunsr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text):
    """``H``, ``HxW`` or ``H,W`` -> (h, w)."""
    parts = text.lower().replace(",", "x").split("x")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}") from None
    if len(vals) == 1:
        vals *= 2
    if len(vals) != 2 or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"bad size {text!r}")
    return tuple(vals)


def _key_value(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v


def _shared(p, checkpoint_help, out_help):
    p.add_argument("--config", metavar="PATH", help="flat 'key = value' config file")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--scale", type=int, choices=(2, 3, 4), help="magnification factor")
    p.add_argument("--checkpoint", metavar="PATH", help=checkpoint_help)
    p.add_argument("--out", metavar="PATH", help=out_help)
    p.add_argument("--set", dest="overrides", action="append", type=_key_value, default=[],
                   metavar="KEY=VALUE", help="override any config key (repeatable)")
    p.add_argument("--dump-config", metavar="PATH", help="write the effective config here")


def build_parser():
    parser = _Parser(prog="gunsr", description="Gradual upsampling super-resolution.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train a model with the staged curriculum")
    _shared(p, "where to write the trained model", "CSV loss log")
    p.add_argument("--train-dir", metavar="DIR")
    p.add_argument("--val-dir", metavar="DIR")
    p.add_argument("--lambdas", metavar="L1,L2,...", help="strictly decreasing stage thresholds")
    p.add_argument("--epochs", type=int, metavar="N", help="epochs per stage")
    p.add_argument("--max-iterations", type=int, metavar="N")

    p = sub.add_parser("sr", help="super-resolve one PNG")
    _shared(p, "trained model", "output PNG")
    p.add_argument("input", metavar="INPUT.png")

    p = sub.add_parser("eval", help="PSNR/SSIM report over a folder of HR images")
    _shared(p, "trained model (omit for bicubic only)", "CSV report (default stdout)")
    p.add_argument("--test-dir", metavar="DIR")
    p.add_argument("--with-reference", action="store_true",
                   help="also score each HR image against itself")
    p.add_argument("--quantized", action="store_true",
                   help="round reconstructions to 8 bits before scoring")

    p = sub.add_parser("schedule", help="print the per-step resolution schedule")
    _shared(p, "unused", "write the schedule here instead of stdout")
    p.add_argument("lr_size", type=_size, metavar="LR", help="H, HxW")
    p.add_argument("hr_size", type=_size, metavar="HR", help="H, HxW")
    p.add_argument("steps", type=int, nargs="?", metavar="N",
                   help="number of steps (default: per-scale default)")

    p = sub.add_parser("flops", help="multiply-accumulate estimate vs a direct-HR network")
    _shared(p, "take the topology from this model", "write the estimate here")
    p.add_argument("--lr-size", type=_size, default=(64, 64), metavar="HxW")

    p = sub.add_parser("curriculum-stats", help="print the per-lambda stage sizes")
    _shared(p, "unused", "write the table here")
    p.add_argument("--train-dir", metavar="DIR")
    p.add_argument("--lambdas", metavar="L1,L2,...")
    return parser


def resolve_config(args):
    pairs = dict(args.overrides)
    cmd = {"seed": args.seed, "scale": args.scale}
    for name in ("train_dir", "val_dir", "test_dir", "lambdas", "max_iterations"):
        cmd[name] = getattr(args, name, None)
    cmd["epochs_per_stage"] = getattr(args, "epochs", None)
    if args.command == "train":
        cmd["checkpoint"], cmd["log_path"] = args.checkpoint, args.out
    elif args.command in ("sr", "eval", "flops"):
        cmd["checkpoint"] = args.checkpoint
    values = config_mod.parse_overrides(pairs)
    if cmd.get("lambdas") is not None:
        values.update(config_mod.parse_overrides({"lambdas": cmd.pop("lambdas")}))
    values.update({k: v for k, v in cmd.items() if v is not None})
    cfg = config_mod.load(args.config, values)
    if args.dump_config:
        with open(args.dump_config, "w", encoding="utf-8") as fh:
            fh.write(cfg.dumps())
    return cfg


def _emit(text, path):
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_model(cfg):
    model = load_checkpoint(cfg.checkpoint)
    if model.topology.scale != cfg.scale:
        raise UsageError(f"checkpoint was trained for scale {model.topology.scale} "
                         f"but scale {cfg.scale} was requested")
    return model


def cmd_train(cfg, args):
    from .pipeline import train
    if not cfg.train_dir:
        raise UsageError("train needs --train-dir (or train_dir in the config)")
    log.info("effective config:\n%s", cfg.dumps())
    if cfg.checkpoint:
        with open(cfg.checkpoint + ".cfg", "w", encoding="utf-8") as fh:
            fh.write(cfg.dumps())
    if cfg.log_path and os.path.exists(cfg.log_path):
        os.unlink(cfg.log_path)
    result = train(cfg)
    print(f"trained {len(result.plan.stages)} stage(s), {result.report.iterations} iterations "
          f"on {result.n_images} image(s)")
    print(result.report.table())
    if cfg.checkpoint:
        print(f"checkpoint written to {cfg.checkpoint}")


def cmd_sr(cfg, args):
    from .pipeline import super_resolve
    if not cfg.checkpoint:
        raise UsageError("sr needs --checkpoint")
    if not args.out:
        raise UsageError("sr needs --out")
    model = _load_model(cfg)
    out = super_resolve(model, read_png(args.input), cfg.scale)
    write_png(args.out, out)
    log.info("wrote %s (%dx%d)", args.out, out.shape[1], out.shape[0])


def cmd_eval(cfg, args):
    from .pipeline import evaluate
    if not cfg.test_dir:
        raise UsageError("eval needs --test-dir (or test_dir in the config)")
    model = _load_model(cfg) if cfg.checkpoint else None
    reports = evaluate(cfg.test_dir, cfg.scale, model, cfg.border, args.with_reference,
                       cfg.quantized_metrics or args.quantized)
    if args.out:
        write_reports_csv(args.out, reports)
    else:
        write_reports_csv(sys.stdout, reports)


def cmd_schedule(cfg, args):
    n = args.steps if args.steps is not None else cfg.n_steps
    sched = resolution_schedule(args.lr_size, args.hr_size, n)
    lines = [f"step {i}: {h}x{w}" for i, (h, w) in enumerate(sched.sizes())]
    _emit("\n".join(lines), args.out)


def cmd_flops(cfg, args):
    topo = load_checkpoint(cfg.checkpoint).topology if cfg.checkpoint else cfg.topology()
    lr = args.lr_size
    hr = topo.hr_for(lr)
    gun = flops_estimate(topo, lr, hr)
    direct = flops_estimate(topo, lr, hr, direct=True)
    _emit(f"lr {lr[0]}x{lr[1]} -> hr {hr[0]}x{hr[1]}, {topo.steps} steps\n"
          f"gun     {gun:.6g} MACs\n"
          f"direct  {direct:.6g} MACs\n"
          f"ratio   {gun / direct:.4f}", args.out)


def cmd_curriculum_stats(cfg, args):
    from .pipeline import curriculum_for
    if not cfg.train_dir:
        raise UsageError("curriculum-stats needs --train-dir (or train_dir in the config)")
    _emit(curriculum_table(curriculum_for(cfg)), args.out)


COMMANDS = {"train": cmd_train, "sr": cmd_sr, "eval": cmd_eval, "schedule": cmd_schedule,
            "flops": cmd_flops, "curriculum-stats": cmd_curriculum_stats}


def _thread_limit():
    n = os.environ.get("GUN_THREADS")
    if not n:
        return contextlib.nullcontext()
    try:
        return threadpool_limits(max(int(n), 1))
    except ValueError:
        raise UsageError(f"GUN_THREADS must be an integer, got {n!r}") from None


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        with _thread_limit():
            COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError) as exc:
        print(f"gunsr {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"gunsr {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"gunsr {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
